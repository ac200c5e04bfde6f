"""End-to-end acceptance gate.

Each test covers one acceptance criterion and prints a single
``ACCEPTANCE <id> <label>: PASS`` / ``FAIL`` line directly to the
terminal (bypassing capture) so the gate can be read off any pytest run.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from axorelax.ibvp_solver import (
    SchemeConfig,
    GridState,
    decay_time,
    diagnostics,
    make_grid,
    run,
)
from axorelax.errors import NumericalError
from axorelax.relaxation_analysis import (
    certify,
    detailed_balance_check,
    kernel_vector,
    schur_reduction,
    spectrum_report,
)
from axorelax.steady_state import steady_profile, steady_residual
from axorelax.system_model import InitialData, catalog, scaled_rates

RUN_GRID = dict(n_cells=2000, x_max=20.0)
RUN_CONFIG = dict(cfl=0.9, scheme="imex", t_end=40.0, output_stride=50)


@contextmanager
def gate(capsys, label):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"\nACCEPTANCE {label}: FAIL")
        raise
    with capsys.disabled():
        print(f"\nACCEPTANCE {label}: PASS")


def closed_form_two_state(xs):
    xs = np.asarray(xs, dtype=float)
    decay = np.exp(-1.5 * xs)
    return np.column_stack(
        [1.0 / 3.0 + (2.0 / 3.0) * decay, 1.0 / 3.0 - (1.0 / 3.0) * decay]
    )


# --- shared heavy fixtures -------------------------------------------------


@pytest.fixture(scope="module")
def certified_population():
    """Counterexample plus 500 randomized valid systems, all certified."""
    pairs = [(catalog("counterexample_4x4"), certify(catalog("counterexample_4x4")))]
    for i in range(500):
        spec = catalog("random_valid", r=2 + (i % 7), seed=i)
        pairs.append((spec, certify(spec)))
    return pairs


@pytest.fixture(scope="module")
def bump_runs():
    """The two reference perturbation runs at the stated desk scale."""
    out = {}
    for key, name in (("2x2", "two_state"), ("4x4", "counterexample_4x4")):
        spec = catalog(name)
        cert = certify(spec)
        b0 = np.zeros(spec.r)
        b0[0] = 1.0
        profile = steady_profile(spec, b0)
        grid = make_grid(spec=spec, **RUN_GRID)
        config = SchemeConfig(**RUN_CONFIG)

        direction = np.zeros(spec.r)
        direction[0] = 1.0
        u0 = _bump_data(spec, profile, direction)
        t0 = time.monotonic()
        series, final = run(spec, u0, grid, config, cert, profile)
        elapsed = time.monotonic() - t0
        out[key] = (spec, cert, profile, grid, series, final, elapsed)
    return out


def _bump_data(spec, profile, direction, amp=0.1, x0=2.0, sigma=0.5):
    direction = np.asarray(direction, dtype=float)

    def bump(xs):
        xs = np.atleast_1d(xs)
        return amp * xs**2 * np.exp(-(((xs - x0) / sigma) ** 2))

    def dbump(xs):
        xs = np.atleast_1d(xs)
        g = np.exp(-(((xs - x0) / sigma) ** 2))
        return amp * g * (2.0 * xs - xs**2 * 2.0 * (xs - x0) / sigma**2)

    return InitialData.from_callable(
        spec.r,
        fn=lambda xs: profile(np.atleast_1d(xs))
        + bump(xs)[:, None] * direction[None, :],
        dfn=lambda xs: profile.derivative(np.atleast_1d(xs))
        + dbump(xs)[:, None] * direction[None, :],
    )


@pytest.fixture(scope="module")
def stiff_runs():
    """Relaxation runs at decreasing epsilon.

    The boundary value is the equilibrium direction xi, so the continuous
    and the discrete steady state coincide exactly (the march fixes
    constant kernel states) and the decay clock measures pure relaxation.
    The bump perturbation is carried by the mass-free direction (1, -1),
    whose decay is governed by the reaction rate 1/epsilon.
    """
    out = {}
    for eps in (1.0, 0.1, 0.01):
        spec = catalog("two_state", epsilon=eps)
        cert = certify(spec)
        xi = cert.xi
        profile = steady_profile(spec, xi)
        grid = make_grid(spec=spec, **RUN_GRID)
        config = SchemeConfig(**RUN_CONFIG)
        u0 = _bump_data(spec, profile, direction=[1.0, -1.0])
        series, final = run(spec, u0, grid, config, cert, profile)
        out[eps] = (spec, cert, grid, series, final)
    return out


@pytest.fixture(scope="module")
def consistency_runs():
    """Steady-start marches on four nested grids, erred against the
    closed-form layer."""
    spec = catalog("two_state")
    cert = certify(spec)
    profile = steady_profile(spec, np.array([1.0, 0.0]))
    u0 = InitialData.from_callable(2, fn=profile, dfn=profile.derivative)
    runs = []
    for n in (250, 500, 1000, 2000):
        grid = make_grid(20.0, n, spec=spec)
        config = SchemeConfig(**RUN_CONFIG)
        series, final = run(spec, u0, grid, config, cert, profile)
        err = float(
            np.max(
                np.sqrt(
                    np.sum((np.asarray(final.u) - closed_form_two_state(grid.xs)) ** 2, axis=1)
                )
            )
        )
        runs.append((grid, series, err))
    return runs


# --- criteria ---------------------------------------------------------------


def test_c01_certificate_identities(certified_population, capsys):
    with gate(capsys, "C1 certificate-identities"):
        assert len(certified_population) == 501
        assert {spec.r for spec, _ in certified_population} == set(range(2, 9))
        for spec, cert in certified_population:
            k = cert.k_eff
            scale = np.max(np.abs(k))
            a0 = cert.symmetrizer.a0
            p, s = cert.split.p, cert.split.s

            sym = a0[:, None] * k + (a0[:, None] * k).T
            recon = sym + p.T @ np.diag(np.concatenate([[0.0], s])) @ p
            assert np.max(np.abs(recon)) <= 1e-10 * scale

            assert np.max(np.abs(p @ p.T - np.eye(spec.r))) <= 1e-12
            assert np.max(np.abs(k @ cert.xi)) <= 1e-10 * scale
            assert np.all(cert.xi > 0.0)


def test_c02_compensating_margin(certified_population, capsys):
    with gate(capsys, "C2 compensating-margin"):
        for spec, cert in certified_population:
            lam = np.asarray(spec.lam.diag)
            h = cert.compensating.h
            c = cert.c
            assert c > 0.0
            q = cert.split.kernel_complement_projector()
            m = h * lam[None, :] - lam[:, None] * h - c * np.eye(spec.r) + q
            m = 0.5 * (m + m.T)
            assert np.linalg.eigvalsh(m)[0] >= -1e-10

        two = certify(catalog("two_state"))
        assert two.c >= 0.45


def test_c03_weighted_rate_symmetry(counterexample_spec, capsys):
    # KNOWN RED. The r = 2 half of the claim is a theorem and holds below;
    # the 4x4 asymmetry value holds as well.  The r = 3 half is false: KD
    # is symmetric exactly when the cycle condition
    # k12*k23*k31 == k21*k32*k13 holds, which a generic irreducible draw
    # violates (e.g. a one-way three-state cycle).  The assertion is kept
    # as stated rather than weakened; the failure message carries the
    # measured evidence.
    with gate(capsys, "C3 weighted-rate-symmetry"):
        asymmetric = []
        n_checked = 0
        for i in range(500):
            spec = catalog("random_valid", r=2 + (i % 2), seed=10_000 + i)
            k = spec.rates.entries
            xi = kernel_vector(k).xi
            balance = detailed_balance_check(k, xi)
            n_checked += 1
            if spec.r == 2:
                # two-state exchange is always reversible
                assert balance.symmetric and balance.max_asymmetry <= 1e-12
                continue
            if not balance.symmetric:
                cycle_gap = abs(
                    k[0, 1] * k[1, 2] * k[2, 0] - k[1, 0] * k[2, 1] * k[0, 2]
                )
                asymmetric.append((10_000 + i, balance.max_asymmetry, cycle_gap))
        assert n_checked == 500

        # the 4x4 system breaks detailed balance with asymmetry exactly 1
        # in the unnormalized weights (1/2, 1, 1, 2)
        d = np.array([0.5, 1.0, 1.0, 2.0])
        balance = detailed_balance_check(counterexample_spec.rates.entries, d)
        assert not balance.symmetric
        assert balance.max_asymmetry == pytest.approx(1.0, abs=1e-12)

        worst = max((a for _, a, _ in asymmetric), default=0.0)
        assert not asymmetric, (
            f"{len(asymmetric)}/250 random three-state systems have KD "
            f"asymmetric (worst {worst:.3f}); every violation has unequal "
            "directed-cycle products k12*k23*k31 != k21*k32*k13, so the "
            "claimed r <= 3 symmetry holds only for reversible rates"
        )


def test_c04_zero_mode_cross_check(certified_population, capsys):
    with gate(capsys, "C4 zero-mode-cross-check"):
        def schur_verdict(k):
            r = k.shape[0]
            scale = max(float(np.max(np.abs(k))), 1.0)
            try:
                red = schur_reduction(k)
            except NumericalError:
                return False
            return bool(abs(red.det_k2) > 1e-8 * scale ** (r - 1))

        def spectrum_verdict(k):
            rep = spectrum_report(k)
            return bool(rep.n_zero == 1 and rep.passed)

        for spec, _ in certified_population:
            k = scaled_rates(spec).entries
            assert schur_verdict(k) == spectrum_verdict(k) == True  # noqa: E712

        # doubled system with a two-dimensional kernel: both routes say no
        k2 = np.array([[-1.0, 1.0], [1.0, -1.0]])
        doubled = np.zeros((4, 4))
        doubled[:2, :2] = k2
        doubled[2:, 2:] = k2
        assert schur_verdict(doubled) == spectrum_verdict(doubled) == False  # noqa: E712


def test_c05_steady_profile_oracles(rk4_oracle, capsys):
    with gate(capsys, "C5 steady-profile-oracles"):
        # closed form on [0, 10]
        spec2 = catalog("two_state")
        profile2 = steady_profile(spec2, np.array([1.0, 0.0]))
        xs10 = np.linspace(0.0, 10.0, 201)
        assert np.max(np.abs(profile2(xs10) - closed_form_two_state(xs10))) <= 1e-10

        xs = np.linspace(0.0, 8.0, 81)
        systems = [
            catalog("two_state"),
            catalog(
                "three_state", k12=0.0, k13=1.0, k21=1.0, k23=0.0, k31=0.0, k32=1.0
            ),
            catalog("counterexample_4x4"),
            catalog("random_valid", r=5, seed=7),
        ]
        for spec in systems:
            b0 = np.zeros(spec.r)
            b0[0] = 1.0
            profile = steady_profile(spec, b0)
            # residual of the layer equation
            assert steady_residual(profile, xs) <= 1e-10
            # exact flux transport
            flux = profile(xs) @ spec.lam.diag
            assert np.max(np.abs(flux - flux[0])) <= 1e-12 * abs(flux[0])

        # independent integrator agreement
        for spec, b0 in [
            (catalog("counterexample_4x4"), np.array([0.3, 0.1, 0.4, 0.2])),
            (
                catalog(
                    "three_state", k12=0.5, k13=1.0, k21=1.0, k23=0.25, k31=0.5, k32=1.0
                ),
                np.array([1.0, 0.0, 0.0]),
            ),
        ]:
            xs6 = np.linspace(0.0, 6.0, 25)
            profile = steady_profile(spec, b0)
            assert np.max(np.abs(profile(xs6) - rk4_oracle(spec, b0, xs6))) <= 1e-8


def test_c06_desk_scale_decay(bump_runs, capsys):
    with gate(capsys, "C6 desk-scale-decay"):
        for key in ("2x2", "4x4"):
            spec, cert, profile, grid, series, final, elapsed = bump_runs[key]
            initial_sup = series.samples[0].sup
            final_sup = series.samples[-1].sup
            assert initial_sup > 0.1, key
            bound = max(1e-6 * initial_sup, 2.0 * series.steady_floor)
            assert final_sup <= bound, (key, final_sup, bound)
            assert elapsed < 60.0, (key, elapsed)


def test_c07_energy_monotonicity(bump_runs, stiff_runs, capsys):
    with gate(capsys, "C7 energy-monotonicity"):
        perturbation_runs = [
            (key, bump_runs[key][1], bump_runs[key][4]) for key in ("2x2", "4x4")
        ] + [(eps, stiff_runs[eps][1], stiff_runs[eps][3]) for eps in stiff_runs]
        for key, cert, series in perturbation_runs:
            assert series.energy_violations == 0, key
            assert series.energy_violations_discrete == 0, key
            e = np.array([s.energy for s in series.samples])
            cum = np.array([s.cum_diss for s in series.samples])
            kappa = cert.dissipation_ratio
            assert np.all(e + kappa * cum <= (1.0 + 1e-6) * e[0]), key


def test_c08_interpolation_ratio(
    bump_runs, stiff_runs, consistency_runs, capsys
):
    with gate(capsys, "C8 interpolation-ratio"):
        all_runs = [(bump_runs[k][3], bump_runs[k][4]) for k in bump_runs]
        all_runs += [(stiff_runs[e][2], stiff_runs[e][3]) for e in stiff_runs]
        all_runs += [(grid, series) for grid, series, _ in consistency_runs]
        for grid, series in all_runs:
            bound = 1.0 + 5.0 * grid.dx
            for s in series.samples:
                assert s.gn_ratio <= bound

        # manufactured perturbation x e^{-x}: known norms and sup
        spec = catalog("two_state")
        cert = certify(spec)
        profile = steady_profile(spec, np.array([1.0, 0.0]))
        grid = make_grid(20.0, 4000, spec=spec)
        phi = grid.xs * np.exp(-grid.xs)
        u = profile(grid.xs)
        u = u + np.column_stack([phi, np.zeros_like(phi)])
        sample = diagnostics(GridState(t=0.0, u=u), cert, profile, grid)
        assert sample.l2 == pytest.approx(0.5, abs=1e-3)
        h1_part = np.sqrt(sample.h1**2 - sample.l2**2)
        assert h1_part == pytest.approx(0.5, abs=1e-3)
        assert sample.sup == pytest.approx(np.exp(-1.0), abs=1e-3)
        assert sample.gn_ratio == pytest.approx(np.sqrt(2.0) / np.e, abs=1e-3)


def test_c09_consistency_order(consistency_runs, capsys):
    with gate(capsys, "C9 consistency-order"):
        errs = [err for _, _, err in consistency_runs]
        assert len(errs) == 4
        for coarse, fine in zip(errs, errs[1:]):
            ratio = coarse / fine
            assert 1.8 <= ratio <= 2.2, errs


def test_c10_stiffness_robustness(stiff_runs, capsys):
    with gate(capsys, "C10 stiffness-robustness"):
        times = []
        for eps in (1.0, 0.1, 0.01):
            spec, cert, grid, series, final = stiff_runs[eps]
            # the advective CFL alone sets the step, independent of epsilon
            assert series.dt == pytest.approx(0.9 * grid.dx / 2.0)
            assert np.all(np.isfinite(final.u))
            assert series.sup_discrete[-1] <= 1e-3 * series.sup_discrete[0], eps
            t = decay_time(series, tol=1e-3)
            assert t is not None, eps
            times.append(t)
        assert times[0] >= times[1] >= times[2], times

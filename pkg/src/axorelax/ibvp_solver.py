"""Inflow initial-boundary-value marches and decay diagnostics.

The scheme is first-order upwind in space (every velocity is positive,
so the stencil is one-sided from the left) combined with either an
explicit or an implicit-explicit (IMEX) treatment of the conversion
term.  The inflow node ``x = 0`` is held at its initial value; no
condition is imposed at the outflow end.

Perturbation diagnostics are measured against the exact steady profile
``B``; decay and energy-monotonicity bookkeeping additionally tracks the
scheme's own fixed point ``B_h`` (the discrete steady state), because a
first-order scheme parks at ``B_h``, a distance ``O(dx)`` from ``B`` --
the *steady truncation floor* -- and only the distance to ``B_h``
contracts all the way to rounding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import CompatibilityError, NumericalError
from .relaxation_analysis import StabilityCertificate
from .steady_state import SteadyProfile, layer_width
from .system_model import InitialData, SystemSpec, scaled_rates

__all__ = [
    "DomainWarning",
    "TimeStepWarning",
    "Grid",
    "GridState",
    "SchemeConfig",
    "DiagnosticsSample",
    "DiagnosticsSeries",
    "make_grid",
    "compute_dt",
    "initialize",
    "step",
    "run",
    "diagnostics",
    "decay_time",
    "discrete_steady_state",
]


class DomainWarning(UserWarning):
    """The domain is short compared to the boundary layer."""


class TimeStepWarning(UserWarning):
    """The requested time step was reduced for stability."""


def _readonly(a) -> np.ndarray:
    out = np.array(a, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [0, x_max] with n_cells cells (n_cells + 1 nodes)."""

    x_max: float
    n_cells: int
    dx: float
    xs: np.ndarray


def make_grid(x_max: float, n_cells: int, spec: SystemSpec | None = None) -> Grid:
    """Build a uniform grid, warning when it cannot hold the layer.

    With a system attached, a :class:`DomainWarning` is emitted when
    ``x_max`` is below five layer widths, since the far field is then
    visibly truncated.
    """
    x_max = float(x_max)
    n_cells = int(n_cells)
    if not np.isfinite(x_max) or x_max <= 0.0:
        raise ValueError(f"x_max must be positive, got {x_max}")
    if n_cells < 8:
        raise ValueError(f"need at least 8 cells, got {n_cells}")
    if spec is not None:
        width = layer_width(spec)
        if x_max < 5.0 * width:
            warnings.warn(
                f"domain length {x_max:g} is below five layer widths "
                f"(layer width {width:g}); the far field will be truncated",
                DomainWarning,
                stacklevel=2,
            )
    dx = x_max / n_cells
    xs = np.linspace(0.0, x_max, n_cells + 1)
    return Grid(x_max=x_max, n_cells=n_cells, dx=dx, xs=_readonly(xs))


@dataclass(frozen=True)
class GridState:
    """Solution values on the grid nodes at one time."""

    t: float
    u: np.ndarray
    compat_residuals: tuple[float, float] | None = None


@dataclass(frozen=True)
class SchemeConfig:
    """Time-march configuration.

    ``cfl`` is the advective Courant number in (0, 1]; ``scheme`` selects
    the reaction update (``"imex"`` solves the reaction implicitly and is
    unconditionally stable in the stiff limit, ``"explicit"`` caps the
    step at the reaction time scale); samples are recorded every
    ``output_stride`` accepted steps and at the final time.
    """

    cfl: float = 0.9
    scheme: str = "imex"
    t_end: float = 40.0
    output_stride: int = 50

    def __post_init__(self):
        if not (0.0 < self.cfl <= 1.0):
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.scheme not in ("explicit", "imex"):
            raise ValueError(f"scheme must be 'explicit' or 'imex', got {self.scheme!r}")
        if not (np.isfinite(self.t_end) and self.t_end > 0.0):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if int(self.output_stride) < 1:
            raise ValueError(f"output_stride must be >= 1, got {self.output_stride}")
        object.__setattr__(self, "output_stride", int(self.output_stride))


def compute_dt(spec: SystemSpec, grid: Grid, config: SchemeConfig) -> float:
    """Stable step size: advective CFL, capped by the reaction scale.

    The advective bound is ``cfl * dx / max(lambda)``.  The explicit
    reaction update additionally requires ``dt <= epsilon / max|K_jj|``
    (so the diagonal update keeps positivity); when that cap bites, a
    :class:`TimeStepWarning` is emitted and the reduced step returned.
    The IMEX scheme has no reaction cap.
    """
    dt = config.cfl * grid.dx / float(spec.lam.diag.max())
    if config.scheme == "explicit":
        diag_max = float(np.max(np.abs(np.diag(scaled_rates(spec).entries))))
        if diag_max > 0.0 and dt > 1.0 / diag_max:
            warnings.warn(
                f"explicit reaction update caps dt at {1.0 / diag_max:.3e} "
                f"(advective step was {dt:.3e})",
                TimeStepWarning,
                stacklevel=2,
            )
            dt = 1.0 / diag_max
    return dt


def _make_stepper(spec: SystemSpec, grid: Grid, config: SchemeConfig, dt: float):
    """Return advance(u) -> u_new for one step of size dt.

    Advection is first-order upwind on nodes 1..n; the inflow node 0 is
    left untouched.  The reaction acts on the post-advection state.
    """
    lam = spec.lam.diag
    k_eff = scaled_rates(spec).entries
    r = spec.r
    c = lam * (dt / grid.dx)
    if config.scheme == "explicit":
        amp = np.eye(r) + dt * k_eff

        def advance(u: np.ndarray) -> np.ndarray:
            unew = u.copy()
            unew[1:] = u[1:] - (u[1:] - u[:-1]) * c[None, :]
            unew[1:] = unew[1:] @ amp.T
            return unew

    else:
        lu = scipy.linalg.lu_factor(np.eye(r) - dt * k_eff)

        def advance(u: np.ndarray) -> np.ndarray:
            unew = u.copy()
            unew[1:] = u[1:] - (u[1:] - u[:-1]) * c[None, :]
            unew[1:] = scipy.linalg.lu_solve(lu, unew[1:].T).T
            return unew

    return advance


def initialize(
    spec: SystemSpec,
    u0: InitialData,
    grid: Grid,
    profile: SteadyProfile,
    strict: bool = True,
    tol: float = 1e-8,
) -> GridState:
    """Sample the initial data and check corner compatibility.

    The perturbation ``phi = u0 - B`` must vanish at the inflow corner:
    its value at ``x = 0`` and its one-sided slope there (second-order,
    first three nodes) are both recorded; in strict mode either residual
    above ``tol`` raises :class:`CompatibilityError`, in permissive mode
    the march proceeds (useful for deliberately incompatible data, at
    the price of a persistent corner layer).
    """
    us = u0.sample(grid.xs)
    if us.shape[1] != spec.r:
        raise ValueError(f"initial data has {us.shape[1]} components, system has {spec.r}")
    phi = us[:3] - profile(grid.xs[:3])
    value_res = float(np.max(np.abs(phi[0])))
    slope = (-3.0 * phi[0] + 4.0 * phi[1] - phi[2]) / (2.0 * grid.dx)
    slope_res = float(np.max(np.abs(slope)))
    if strict and (value_res > tol or slope_res > tol):
        raise CompatibilityError(
            f"initial data is incompatible with the inflow: corner value "
            f"residual {value_res:.3e}, slope residual {slope_res:.3e} "
            f"(tol {tol:g})",
            value_residual=value_res,
            slope_residual=slope_res,
        )
    return GridState(t=0.0, u=_readonly(us), compat_residuals=(value_res, slope_res))


def step(
    state: GridState,
    spec: SystemSpec,
    grid: Grid,
    config: SchemeConfig,
    dt: float | None = None,
) -> GridState:
    """Advance one time step, returning a fresh state."""
    if dt is None:
        dt = compute_dt(spec, grid, config)
    advance = _make_stepper(spec, grid, config, dt)
    unew = advance(np.asarray(state.u))
    if not np.all(np.isfinite(unew)):
        raise NumericalError(f"non-finite value after step from t = {state.t:g}")
    return GridState(t=state.t + dt, u=_readonly(unew), compat_residuals=None)


def discrete_steady_state(
    spec: SystemSpec, grid: Grid, config: SchemeConfig, inflow
) -> np.ndarray:
    """Fixed point B_h of the scheme with the given inflow value.

    Setting the update to the identity turns the scheme into a spatial
    recursion ``B_h[j] = T B_h[j-1]``: for IMEX, ``T = (C - dt K)^(-1) C``
    (independent of dt); for the explicit split,
    ``T = (I - (I + dt K)(I - C))^(-1) (I + dt K) C`` with
    ``C = diag(lambda dt / dx)``.  The recursion conserves the discrete
    flux exactly, so ``B_h`` shares the exact far field with the steady
    profile while differing by the O(dx) truncation floor inside the
    layer.
    """
    inflow = np.asarray(inflow, dtype=float).reshape(-1)
    dt = compute_dt(spec, grid, config)
    k_eff = scaled_rates(spec).entries
    r = spec.r
    c = np.diag(spec.lam.diag * (dt / grid.dx))
    if config.scheme == "imex":
        t_x = np.linalg.solve(c - dt * k_eff, c)
    else:
        amp = np.eye(r) + dt * k_eff
        a = np.eye(r) - amp @ (np.eye(r) - c)
        t_x = np.linalg.solve(a, amp @ c)
    out = np.empty((grid.n_cells + 1, r))
    out[0] = inflow
    for j in range(1, grid.n_cells + 1):
        out[j] = t_x @ out[j - 1]
    if not np.all(np.isfinite(out)):
        raise NumericalError("discrete steady recursion diverged")
    return out


@dataclass(frozen=True)
class DiagnosticsSample:
    """Norms of the perturbation phi = u - B at one time.

    ``sup`` is the largest nodal Euclidean norm; ``energy`` is the
    weighted square norm ``sum w_j phi^T A0 phi``; ``diss_rate`` is the
    squared size of the dissipative part (the projection of phi off the
    kernel direction); ``cum_diss`` its time integral up to ``t``;
    ``gn_ratio`` the interpolation-inequality quotient
    ``sup / (sqrt(2) ||phi||^(1/2) ||phi_x||^(1/2))``, at most 1 up to
    discretization error.
    """

    t: float
    l2: float
    h1: float
    h2: float
    sup: float
    energy: float
    diss_rate: float
    cum_diss: float
    gn_ratio: float


@dataclass(frozen=True)
class DiagnosticsSeries:
    """Per-sample and per-step records of one march.

    Sample-aligned arrays track the distance ``sup_discrete`` to the
    scheme's own fixed point and the energy measured against it
    (``sample_energy_discrete``); ``steady_floor`` is the sup distance
    between the exact and discrete steady states (the contraction target
    of the scheme); ``decade_times`` maps each whole decade of
    ``sup_discrete`` reduction to the first sample time at which it held.
    Step-aligned arrays record the energies and cumulative dissipation
    after every accepted step.
    """

    samples: tuple[DiagnosticsSample, ...]
    sup_discrete: np.ndarray
    sample_energy_discrete: np.ndarray
    sample_cum_diss_discrete: np.ndarray
    steady_floor: float
    energy_violations: int
    energy_violations_discrete: int
    decade_times: dict[int, float]
    dt: float
    n_steps: int
    step_times: np.ndarray
    step_energy: np.ndarray
    step_energy_discrete: np.ndarray
    step_cum_diss: np.ndarray
    step_cum_diss_discrete: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])


def _derivative(arr: np.ndarray, dx: float) -> np.ndarray:
    """First derivative, central inside, second-order one-sided at ends."""
    out = np.empty_like(arr)
    out[1:-1] = (arr[2:] - arr[:-2]) / (2.0 * dx)
    out[0] = (-3.0 * arr[0] + 4.0 * arr[1] - arr[2]) / (2.0 * dx)
    out[-1] = (3.0 * arr[-1] - 4.0 * arr[-2] + arr[-3]) / (2.0 * dx)
    return out


def _second_derivative(arr: np.ndarray, dx: float) -> np.ndarray:
    """Second derivative, central inside, second-order one-sided at ends."""
    out = np.empty_like(arr)
    dx2 = dx * dx
    out[1:-1] = (arr[2:] - 2.0 * arr[1:-1] + arr[:-2]) / dx2
    out[0] = (2.0 * arr[0] - 5.0 * arr[1] + 4.0 * arr[2] - arr[3]) / dx2
    out[-1] = (2.0 * arr[-1] - 5.0 * arr[-2] + 4.0 * arr[-3] - arr[-4]) / dx2
    return out


def _trapezoid_weights(n_nodes: int, dx: float) -> np.ndarray:
    w = np.full(n_nodes, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


def diagnostics(
    state: GridState,
    cert: StabilityCertificate,
    profile: SteadyProfile,
    grid: Grid,
    cum_diss: float = 0.0,
    b_nodes: np.ndarray | None = None,
) -> DiagnosticsSample:
    """Measure the perturbation phi = u - B at one state.

    All integrals use the trapezoid rule; derivatives use central
    differences with second-order one-sided stencils at the boundary.
    ``cum_diss`` is carried through unchanged (a single state knows only
    the instantaneous rate).
    """
    if b_nodes is None:
        b_nodes = profile(grid.xs)
    phi = np.asarray(state.u) - b_nodes
    w = _trapezoid_weights(phi.shape[0], grid.dx)
    phix = _derivative(phi, grid.dx)
    phixx = _second_derivative(phi, grid.dx)
    l2_sq = float(np.sum(w * np.sum(phi * phi, axis=1)))
    dx1_sq = float(np.sum(w * np.sum(phix * phix, axis=1)))
    dx2_sq = float(np.sum(w * np.sum(phixx * phixx, axis=1)))
    l2 = np.sqrt(l2_sq)
    h1 = np.sqrt(l2_sq + dx1_sq)
    h2 = np.sqrt(l2_sq + dx1_sq + dx2_sq)
    sup = float(np.max(np.sqrt(np.sum(phi * phi, axis=1))))
    a0 = cert.symmetrizer.a0
    energy = float(np.sum(w * np.sum(phi * phi * a0[None, :], axis=1)))
    v_tail = phi @ cert.split.p[1:].T
    diss_rate = float(np.sum(w * np.sum(v_tail * v_tail, axis=1)))
    denom = np.sqrt(2.0) * np.sqrt(l2) * np.sqrt(np.sqrt(dx1_sq))
    gn_ratio = sup / denom if denom > 0.0 else 0.0
    return DiagnosticsSample(
        t=state.t,
        l2=l2,
        h1=h1,
        h2=h2,
        sup=sup,
        energy=energy,
        diss_rate=diss_rate,
        cum_diss=cum_diss,
        gn_ratio=gn_ratio,
    )


def run(
    spec: SystemSpec,
    u0: InitialData,
    grid: Grid,
    config: SchemeConfig,
    cert: StabilityCertificate,
    profile: SteadyProfile,
    strict: bool = True,
    compat_tol: float = 1e-8,
) -> tuple[DiagnosticsSeries, GridState]:
    """March to t_end, recording diagnostics.

    Samples are taken at t = 0, every ``output_stride`` steps, and at the
    final time (the last step is shortened to land on ``t_end`` exactly).
    Cumulative dissipation is accumulated every step with the rate
    evaluated at the post-step state.  A non-finite value aborts the
    march with :class:`NumericalError`; the partial series is attached to
    the exception.
    """
    state = initialize(spec, u0, grid, profile, strict=strict, tol=compat_tol)
    b_nodes = profile(grid.xs)
    b_h = discrete_steady_state(spec, grid, config, inflow=state.u[0])
    floor = float(np.max(np.sqrt(np.sum((b_h - b_nodes) ** 2, axis=1))))

    a0 = cert.symmetrizer.a0
    p_tail = cert.split.p[1:].T
    w = _trapezoid_weights(grid.n_cells + 1, grid.dx)

    def energy_of(phi: np.ndarray) -> float:
        return float(np.sum(w * np.sum(phi * phi * a0[None, :], axis=1)))

    def diss_of(phi: np.ndarray) -> float:
        v = phi @ p_tail
        return float(np.sum(w * np.sum(v * v, axis=1)))

    def sup_of(phi: np.ndarray) -> float:
        return float(np.max(np.sqrt(np.sum(phi * phi, axis=1))))

    dt_main = compute_dt(spec, grid, config)
    advance = _make_stepper(spec, grid, config, dt_main)

    u = np.array(state.u, copy=True)
    t = 0.0
    cum = 0.0
    cum_h = 0.0
    n_steps = 0

    samples = [diagnostics(state, cert, profile, grid, cum_diss=0.0, b_nodes=b_nodes)]
    sup_d = [sup_of(u - b_h)]
    sample_e_h = [energy_of(u - b_h)]
    sample_cum_h = [0.0]
    step_times = [0.0]
    step_e = [samples[0].energy]
    step_e_h = [sample_e_h[0]]
    step_cum = [0.0]
    step_cum_h = [0.0]

    def build_series() -> DiagnosticsSeries:
        return DiagnosticsSeries(
            samples=tuple(samples),
            sup_discrete=_readonly(sup_d),
            sample_energy_discrete=_readonly(sample_e_h),
            sample_cum_diss_discrete=_readonly(sample_cum_h),
            steady_floor=floor,
            energy_violations=_count_violations([s.energy for s in samples]),
            energy_violations_discrete=_count_violations(sample_e_h),
            decade_times=_decades([s.t for s in samples], sup_d),
            dt=dt_main,
            n_steps=n_steps,
            step_times=_readonly(step_times),
            step_energy=_readonly(step_e),
            step_energy_discrete=_readonly(step_e_h),
            step_cum_diss=_readonly(step_cum),
            step_cum_diss_discrete=_readonly(step_cum_h),
        )

    t_end = config.t_end
    t_tol = 1e-12 * max(t_end, 1.0)
    while t < t_end - t_tol:
        dt = min(dt_main, t_end - t)
        if dt < dt_main:
            advance_step = _make_stepper(spec, grid, config, dt)
        else:
            advance_step = advance
        u = advance_step(u)
        t += dt
        n_steps += 1
        if not np.all(np.isfinite(u)):
            raise NumericalError(
                f"non-finite value at step {n_steps} (t = {t:g})",
                partial_series=build_series(),
            )
        phi = u - b_nodes
        phi_h = u - b_h
        cum += dt * diss_of(phi)
        cum_h += dt * diss_of(phi_h)
        step_times.append(t)
        step_e.append(energy_of(phi))
        step_e_h.append(energy_of(phi_h))
        step_cum.append(cum)
        step_cum_h.append(cum_h)
        if n_steps % config.output_stride == 0 or t >= t_end - t_tol:
            snap = GridState(t=t, u=u, compat_residuals=None)
            samples.append(
                diagnostics(snap, cert, profile, grid, cum_diss=cum, b_nodes=b_nodes)
            )
            sup_d.append(sup_of(phi_h))
            sample_e_h.append(step_e_h[-1])
            sample_cum_h.append(cum_h)

    final = GridState(t=t, u=_readonly(u), compat_residuals=state.compat_residuals)
    return build_series(), final


def _count_violations(energies, rel_slack: float = 1e-12) -> int:
    e = np.asarray(energies, dtype=float)
    slack = rel_slack * (e[0] if e.size and e[0] > 0.0 else 1.0)
    return int(np.sum(e[1:] > e[:-1] + slack))


def _decades(times, sups) -> dict[int, float]:
    sups = np.asarray(sups, dtype=float)
    times = np.asarray(times, dtype=float)
    if sups.size == 0 or sups[0] <= 0.0:
        return {}
    out: dict[int, float] = {}
    ratios = sups / sups[0]
    decade = 1
    while True:
        hit = np.nonzero(ratios <= 10.0 ** (-decade))[0]
        if hit.size == 0:
            break
        out[decade] = float(times[hit[0]])
        decade += 1
    return out


def decay_time(series: DiagnosticsSeries, tol: float) -> float | None:
    """First sample time with sup-distance to the discrete steady state
    at or below ``tol`` times its initial value; None when never reached.

    A run started exactly at the discrete steady state reports 0.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    sups = series.sup_discrete
    times = series.times
    s0 = sups[0]
    if s0 == 0.0:
        return float(times[0])
    hit = np.nonzero(sups <= tol * s0)[0]
    if hit.size == 0:
        return None
    return float(times[hit[0]])

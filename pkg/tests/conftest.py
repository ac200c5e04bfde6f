import numpy as np
import pytest

from axorelax.system_model import InitialData, catalog


@pytest.fixture(scope="session")
def two_state_spec():
    return catalog("two_state")


@pytest.fixture(scope="session")
def counterexample_spec():
    return catalog("counterexample_4x4")


@pytest.fixture(scope="session")
def bump_ic():
    """Factory for steady-profile-plus-bump initial data.

    The bump A x^2 exp(-((x-x0)/sigma)^2) vanishes to second order at the
    inflow, so the data stays compatible in strict mode for any direction.
    """

    def make(spec, profile, direction, amp=0.1, x0=2.0, sigma=0.5):
        v = np.asarray(direction, dtype=float).reshape(-1)

        def bump(xs):
            xs = np.atleast_1d(xs)
            return amp * xs**2 * np.exp(-(((xs - x0) / sigma) ** 2))

        def dbump(xs):
            xs = np.atleast_1d(xs)
            g = np.exp(-(((xs - x0) / sigma) ** 2))
            return amp * g * (2.0 * xs - xs**2 * 2.0 * (xs - x0) / sigma**2)

        return InitialData.from_callable(
            spec.r,
            fn=lambda xs: profile(np.atleast_1d(xs)) + bump(xs)[:, None] * v[None, :],
            dfn=lambda xs: profile.derivative(np.atleast_1d(xs))
            + dbump(xs)[:, None] * v[None, :],
        )

    return make


@pytest.fixture(scope="session")
def rk4_oracle():
    """Independent fixed-step RK4 integrator for Lambda B' = K B.

    Integrates B' = diag(1/lambda) K B from x = 0 with enough substeps
    that a step-doubling check agrees to 1e-10, and returns the values at
    the requested positions.
    """

    def integrate(spec, b0, xs, tol=1e-10):
        lam = spec.lam.diag
        a = (spec.rates.entries / spec.epsilon) / lam[:, None]
        rate = float(np.max(np.abs(a)))
        xs = np.asarray(xs, dtype=float)

        def march(n_per_unit):
            out = np.empty((xs.size, spec.r))
            b = np.array(b0, dtype=float)
            x = 0.0
            for i, target in enumerate(xs):
                n = max(int(np.ceil((target - x) * n_per_unit)), 1) if target > x else 0
                h = (target - x) / n if n else 0.0
                for _ in range(n):
                    k1 = a @ b
                    k2 = a @ (b + 0.5 * h * k1)
                    k3 = a @ (b + 0.5 * h * k2)
                    k4 = a @ (b + h * k3)
                    b = b + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                x = target
                out[i] = b
            return out

        n_per_unit = max(100.0 * rate, 100.0)
        coarse = march(n_per_unit)
        fine = march(2.0 * n_per_unit)
        assert np.max(np.abs(fine - coarse)) <= tol, "RK4 oracle not converged"
        return fine

    return integrate

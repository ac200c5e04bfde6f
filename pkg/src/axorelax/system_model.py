"""Model data for linear reaction-hyperbolic transport systems.

A system couples constant-velocity advection of ``r`` subpopulations with
linear first-order conversion between them,

    u_t + Lambda u_x = (1/epsilon) K u,        x >= 0, t >= 0,

where ``Lambda = diag(lambda_1, ..., lambda_r)`` holds the transport
velocities and ``K`` holds the conversion rates.  The structural
assumptions H1-H5 (entrywise sign structure, zero column sums,
irreducibility of the conversion graph, at least two distinct velocities,
strictly positive velocities) are what every downstream construction
relies on; :func:`validate_assumptions` checks them with explicit
witnesses.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, ConfigError

__all__ = [
    "RateMatrix",
    "VelocityMatrix",
    "SystemSpec",
    "AssumptionCheck",
    "AssumptionReport",
    "CompatibilityReport",
    "InitialData",
    "validate_assumptions",
    "scaled_rates",
    "catalog",
    "check_initial_compatibility",
]


def _as_readonly(a, dtype=float):
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RateMatrix:
    """Square conversion-rate matrix K.

    Entry ``(i, j)`` is the rate at which species ``j`` converts into
    species ``i``; diagonal entries carry the total outflow of each
    species.  Construction only enforces shape and finiteness -- the sign
    structure is the business of :func:`validate_assumptions`.
    """

    entries: np.ndarray

    def __post_init__(self):
        k = np.array(self.entries, dtype=float, copy=True)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError(f"rate matrix must be square, got shape {k.shape}")
        if k.shape[0] < 1:
            raise ValueError("rate matrix must be at least 1x1")
        if not np.all(np.isfinite(k)):
            raise ValueError("rate matrix entries must be finite")
        k.setflags(write=False)
        object.__setattr__(self, "entries", k)

    @property
    def r(self) -> int:
        return self.entries.shape[0]

    def column_sums(self) -> np.ndarray:
        return self.entries.sum(axis=0)


@dataclass(frozen=True)
class VelocityMatrix:
    """Diagonal velocity matrix Lambda, stored as its diagonal."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.array(self.diag, dtype=float, copy=True).reshape(-1)
        if d.size < 1:
            raise ValueError("velocity matrix needs at least one entry")
        if not np.all(np.isfinite(d)):
            raise ValueError("velocities must be finite")
        d.setflags(write=False)
        object.__setattr__(self, "diag", d)

    @property
    def r(self) -> int:
        return self.diag.size

    def as_matrix(self) -> np.ndarray:
        return np.diag(self.diag)


@dataclass(frozen=True)
class SystemSpec:
    """A complete system: velocities, rates and the relaxation scale.

    ``epsilon`` is the relaxation parameter; all dynamics use the scaled
    rates ``K/epsilon`` (see :func:`scaled_rates`).
    """

    lam: VelocityMatrix
    rates: RateMatrix
    epsilon: float = 1.0

    def __post_init__(self):
        if self.lam.r != self.rates.r:
            raise ValueError(
                f"dimension mismatch: {self.lam.r} velocities vs "
                f"{self.rates.r}x{self.rates.r} rate matrix"
            )
        eps = float(self.epsilon)
        if not np.isfinite(eps) or eps <= 0.0:
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon}")
        object.__setattr__(self, "epsilon", eps)

    @property
    def r(self) -> int:
        return self.rates.r


@dataclass(frozen=True)
class AssumptionCheck:
    """Result of a single structural check, with a witness on failure."""

    name: str
    passed: bool
    witness: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the five structural checks H1-H5, in order."""

    checks: tuple[AssumptionCheck, ...]
    tol: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.checks if not c.passed)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else f"FAIL ({c.witness})"
            lines.append(f"{c.name}: {status}")
        verdict = "all assumptions hold" if self.passed else "assumptions violated"
        lines.append(verdict)
        return "\n".join(lines)


def _strongly_connected(adj: np.ndarray) -> tuple[bool, tuple[int, int] | None]:
    """Check strong connectivity of a boolean adjacency matrix.

    Returns ``(True, None)`` or ``(False, (u, v))`` with an ordered pair
    such that no directed path leads from ``u`` to ``v``.
    """
    n = adj.shape[0]
    for start in range(n):
        seen = np.zeros(n, dtype=bool)
        seen[start] = True
        stack = [start]
        while stack:
            u = stack.pop()
            for v in np.nonzero(adj[u])[0]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        if not seen.all():
            v = int(np.nonzero(~seen)[0][0])
            return False, (start, v)
    return True, None


def validate_assumptions(
    spec: SystemSpec, tol: float = 0.0, raise_on_failure: bool = False
) -> AssumptionReport:
    """Check the structural assumptions H1-H5 and report witnesses.

    ``tol`` is used for the zero-column-sum test (``|sum| <= tol``), for
    the entrywise sign tests (an off-diagonal entry fails H1 when it is
    below ``-tol``) and for the strict-positivity/distinctness tests in
    H3-H5 (an edge exists when the rate exceeds ``tol``; velocities are
    positive/distinct when they exceed ``tol``).  The default ``tol = 0``
    demands exact sign structure.  With ``raise_on_failure`` the report
    is converted into an :class:`AssumptionError` naming every failed
    assumption.
    """
    if tol < 0.0:
        raise ValueError("tol must be nonnegative")
    k = spec.rates.entries
    lam = spec.lam.diag
    r = spec.r

    # H1: off-diagonal rates are nonnegative.
    off = k.copy()
    np.fill_diagonal(off, 0.0)
    h1_ok = True
    h1_witness = ""
    bad = np.argwhere(off < -tol)
    if bad.size:
        i, j = bad[0]
        h1_ok = False
        h1_witness = f"k[{i},{j}] = {k[i, j]:g} is negative"

    # H2: every column of K sums to zero.
    sums = k.sum(axis=0)
    h2_ok = True
    h2_witness = ""
    worst = int(np.argmax(np.abs(sums)))
    if abs(sums[worst]) > tol:
        h2_ok = False
        h2_witness = f"column {worst} sums to {sums[worst]:g}"

    # H3: the conversion digraph (edge u -> v when k[u,v] > tol) is
    # strongly connected.
    adj = off > tol
    h3_ok, pair = _strongly_connected(adj)
    h3_witness = "" if h3_ok else f"no directed path from {pair[0]} to {pair[1]}"

    # H4: not all velocities coincide.
    h4_ok = bool(np.ptp(lam) > tol)
    h4_witness = "" if h4_ok else f"all velocities equal {lam[0]:g}"

    # H5: all velocities are strictly positive.
    h5_ok = True
    h5_witness = ""
    nonpos = np.nonzero(lam <= tol)[0]
    if nonpos.size:
        i = int(nonpos[0])
        h5_ok = False
        h5_witness = f"lambda[{i}] = {lam[i]:g} is not positive"

    checks = (
        AssumptionCheck("H1", h1_ok, h1_witness),
        AssumptionCheck("H2", h2_ok, h2_witness),
        AssumptionCheck("H3", h3_ok, h3_witness),
        AssumptionCheck("H4", h4_ok, h4_witness),
        AssumptionCheck("H5", h5_ok, h5_witness),
    )
    report = AssumptionReport(checks=checks, tol=float(tol))
    if raise_on_failure and not report.passed:
        failed = report.failed_names
        raise AssumptionError(
            failed, f"{failed[0]}: {report[failed[0]].witness}"
        )
    return report


def scaled_rates(spec: SystemSpec) -> RateMatrix:
    """Return the effective rate matrix K/epsilon driving the dynamics."""
    return RateMatrix(spec.rates.entries / spec.epsilon)


# --- catalog -----------------------------------------------------------

_COUNTEREXAMPLE_4X4_K = np.array(
    [
        [-4.0, 1.0, 1.0, 0.0],
        [2.0, -3.0, 0.0, 1.0],
        [2.0, 1.0, -2.0, 0.0],
        [0.0, 1.0, 1.0, -1.0],
    ]
)


def _catalog_counterexample_4x4(epsilon: float) -> SystemSpec:
    lam = VelocityMatrix(np.array([1.0, 2.0, 3.0, 4.0]))
    return SystemSpec(lam, RateMatrix(_COUNTEREXAMPLE_4X4_K), epsilon)


def _catalog_two_state(a: float, b: float, epsilon: float) -> SystemSpec:
    if a <= 0.0 or b <= 0.0:
        raise ConfigError(f"two_state rates must be positive, got a={a}, b={b}")
    k = np.array([[-a, b], [a, -b]])
    lam = VelocityMatrix(np.array([1.0, 2.0]))
    return SystemSpec(lam, RateMatrix(k), epsilon)


def _catalog_three_state(k12, k13, k21, k23, k31, k32, epsilon: float) -> SystemSpec:
    off = np.array(
        [
            [0.0, k12, k13],
            [k21, 0.0, k23],
            [k31, k32, 0.0],
        ],
        dtype=float,
    )
    if np.any(off < 0.0):
        raise ConfigError("three_state rates must be nonnegative")
    k = off.copy()
    np.fill_diagonal(k, -off.sum(axis=0))
    lam = VelocityMatrix(np.array([1.0, 2.0, 3.0]))
    return SystemSpec(lam, RateMatrix(k), epsilon)


def _catalog_random_valid(r: int, seed: int, epsilon: float) -> SystemSpec:
    if r < 2:
        raise ConfigError(f"random_valid needs r >= 2, got r={r}")
    rng = np.random.default_rng(seed)
    for _ in range(64):
        mask = rng.random((r, r)) < 0.6
        np.fill_diagonal(mask, False)
        # Rates are rounded to multiples of 2^-20 so that every column sum
        # is a short dyadic rational: the diagonal then cancels the
        # off-diagonal entries exactly, in any summation order, and the
        # generated systems satisfy H2 with zero tolerance.
        draws = np.round(rng.uniform(0.2, 2.0, (r, r)) * 2.0**20) / 2.0**20
        off = np.where(mask, draws, 0.0)
        if not _strongly_connected(off > 0.0)[0]:
            continue
        k = off.copy()
        np.fill_diagonal(k, -off.sum(axis=0))
        lam = 0.5 + np.cumsum(rng.uniform(0.1, 1.0, r))
        return SystemSpec(VelocityMatrix(lam), RateMatrix(k), epsilon)
    raise ConfigError(f"random_valid could not draw an irreducible system for r={r}")


def catalog(name: str, epsilon: float = 1.0, **params) -> SystemSpec:
    """Build a named reference system.

    Known names:

    ``counterexample_4x4``
        The four-species system whose weighted rate matrix is not
        symmetric (no parameters).
    ``two_state(a, b)``
        Two species exchanging at rates ``a`` (1 -> 2) and ``b``
        (2 -> 1), velocities (1, 2).  Defaults ``a = b = 1``.
    ``three_state(k12, k13, k21, k23, k31, k32)``
        Three species with explicit off-diagonal rates ``kij`` (rate from
        species j into species i), velocities (1, 2, 3).
    ``random_valid(r, seed)``
        A seeded random system guaranteed to satisfy H1-H5: sparse
        positive off-diagonal rates redrawn until the conversion graph is
        strongly connected, ascending distinct positive velocities.

    All entries accept an ``epsilon`` keyword (default 1).
    """
    builders = {
        "counterexample_4x4": (_catalog_counterexample_4x4, ()),
        "two_state": (_catalog_two_state, ("a", "b")),
        "three_state": (
            _catalog_three_state,
            ("k12", "k13", "k21", "k23", "k31", "k32"),
        ),
        "random_valid": (_catalog_random_valid, ("r", "seed")),
    }
    if name not in builders:
        known = ", ".join(sorted(builders))
        raise ConfigError(f"unknown catalog entry {name!r} (known: {known})")
    builder, keys = builders[name]
    defaults = {"a": 1.0, "b": 1.0}
    args = []
    for key in keys:
        if key in params:
            args.append(params.pop(key))
        elif key in defaults:
            args.append(defaults[key])
        else:
            raise ConfigError(f"catalog entry {name!r} needs parameter {key!r}")
    if params:
        extra = ", ".join(sorted(params))
        raise ConfigError(f"unknown parameters for catalog entry {name!r}: {extra}")
    if name == "random_valid":
        args[0] = int(args[0])
        args[1] = int(args[1])
    return builder(*args, epsilon=float(epsilon))


# --- initial data ------------------------------------------------------


@dataclass(frozen=True)
class InitialData:
    """Initial profile U0 on x >= 0.

    Either closed form (a vectorized callable mapping an ``(n,)`` array of
    positions to an ``(n, r)`` array of states, optionally with its exact
    derivative) or sampled (positions plus values; evaluation linearly
    interpolates).
    """

    r: int
    fn: Callable[[np.ndarray], np.ndarray] | None = None
    dfn: Callable[[np.ndarray], np.ndarray] | None = None
    xs: np.ndarray | None = None
    values: np.ndarray | None = None

    @classmethod
    def from_callable(cls, r: int, fn, dfn=None) -> "InitialData":
        return cls(r=int(r), fn=fn, dfn=dfn)

    @classmethod
    def from_samples(cls, xs, values) -> "InitialData":
        xs = np.array(xs, dtype=float, copy=True).reshape(-1)
        values = np.array(values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != xs.size:
            raise ValueError(
                f"{xs.size} sample positions but {values.shape[0]} sample rows"
            )
        if xs.size < 3:
            raise ValueError("sampled initial data needs at least 3 samples")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(values))):
            raise ValueError("initial data samples must be finite")
        if np.any(np.diff(xs) <= 0.0):
            raise ValueError("sample positions must be strictly increasing")
        if xs[0] != 0.0:
            raise ValueError(f"samples must start at x = 0, got x[0] = {xs[0]:g}")
        xs.setflags(write=False)
        values.setflags(write=False)
        return cls(r=values.shape[1], xs=xs, values=values)

    def __post_init__(self):
        closed = self.fn is not None
        sampled = self.xs is not None and self.values is not None
        if closed == sampled:
            raise ValueError("initial data is either closed form or sampled")

    def sample(self, xs) -> np.ndarray:
        """Evaluate U0 at the given positions, returning an (n, r) array."""
        xs = np.asarray(xs, dtype=float).reshape(-1)
        if np.any(xs < 0.0):
            raise ValueError("initial data is defined on x >= 0 only")
        if self.fn is not None:
            out = np.asarray(self.fn(xs), dtype=float)
            if out.shape != (xs.size, self.r):
                raise ValueError(
                    f"initial-data callable returned shape {out.shape}, "
                    f"expected {(xs.size, self.r)}"
                )
        else:
            if xs.size and xs[-1] > self.xs[-1]:
                raise ValueError(
                    f"requested x = {xs[-1]:g} beyond sampled range "
                    f"[0, {self.xs[-1]:g}]"
                )
            out = np.empty((xs.size, self.r))
            for i in range(self.r):
                out[:, i] = np.interp(xs, self.xs, self.values[:, i])
        if not np.all(np.isfinite(out)):
            raise ValueError("initial data evaluated to non-finite values")
        return out

    def value_at_origin(self) -> np.ndarray:
        return self.sample(np.array([0.0]))[0]

    def derivative_at_origin(self, h: float = 1e-6) -> np.ndarray:
        """One-sided derivative of U0 at x = 0.

        Uses the exact derivative callable when available, otherwise a
        second-order one-sided difference (on the first three samples in
        sampled form).
        """
        if self.dfn is not None:
            d = np.asarray(self.dfn(np.array([0.0])), dtype=float)
            return d.reshape(-1) if d.size == self.r else d[0]
        if self.fn is not None:
            u = self.sample(np.array([0.0, h, 2.0 * h]))
            return (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
        if self.xs.size < 3:
            raise ValueError("need 3 samples near x = 0 for the boundary slope")
        x0, x1, x2 = self.xs[:3]
        u0, u1, u2 = self.values[0], self.values[1], self.values[2]
        # Three-point nonuniform one-sided difference at x0.
        d01, d02, d12 = x1 - x0, x2 - x0, x2 - x1
        return (
            -u0 * (d01 + d02) / (d01 * d02)
            + u1 * d02 / (d01 * d12)
            - u2 * d01 / (d02 * d12)
        )


@dataclass(frozen=True)
class CompatibilityReport:
    """Residual of the inflow compatibility condition at the corner.

    The condition is ``Lambda U0'(0) = (K/epsilon) U0(0)``; the stated
    residual is the max-norm of the difference.
    """

    residual: float
    per_component: np.ndarray
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol


def check_initial_compatibility(
    spec: SystemSpec, u0: InitialData, tol: float = 1e-8
) -> CompatibilityReport:
    """Check the corner compatibility of initial data with the inflow.

    Compatibility holds when the first-order balance
    ``Lambda U0'(0) = (K/epsilon) U0(0)`` is met; the report carries the
    per-component residual and its max-norm.
    """
    if u0.r != spec.r:
        raise ValueError(f"initial data has {u0.r} components, system has {spec.r}")
    k_eff = scaled_rates(spec).entries
    value = u0.value_at_origin()
    slope = u0.derivative_at_origin()
    resid = spec.lam.diag * slope - k_eff @ value
    per = np.abs(resid)
    per.setflags(write=False)
    return CompatibilityReport(
        residual=float(per.max()), per_component=per, tol=float(tol)
    )

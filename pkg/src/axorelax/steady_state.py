"""Steady boundary layers of the inflow problem.

A steady state of the system on the half line solves the linear ODE

    Lambda B'(x) = K B(x),       B(0) = b0,

with K the scaled rate matrix, i.e. ``B(x) = Lambda^(-1) exp(M x)
Lambda b0`` for the layer generator ``M = K Lambda^(-1)``.  Under H1-H5
the generator has a simple zero eigenvalue (spanned by ``Lambda xi``)
and the rest of its spectrum strictly in the left half plane, so every
steady state decays exponentially to a multiple of the kernel direction:
the boundary layer.  The flux ``ones @ Lambda B(x)`` is constant in x,
which pins the far-field value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import AssumptionError, NumericalError
from .system_model import SystemSpec, scaled_rates, validate_assumptions, _strongly_connected
from .relaxation_analysis import kernel_vector

__all__ = [
    "GeneratorSpectrum",
    "SteadyProfile",
    "generator",
    "steady_profile",
    "steady_residual",
    "far_field",
    "layer_width",
]

_COND_LIMIT = 1e6  # eigenvector condition number above which expm is used


def _maxabs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _readonly(a) -> np.ndarray:
    out = np.array(a, copy=True)
    out.setflags(write=False)
    return out


def _require_valid(spec: SystemSpec, tol: float = 1e-12) -> None:
    report = validate_assumptions(spec, tol=tol)
    if not report.passed:
        failed = report.failed_names
        raise AssumptionError(failed, f"{failed[0]}: {report[failed[0]].witness}")


@dataclass(frozen=True)
class GeneratorSpectrum:
    """Layer generator M = K Lambda^(-1) and its classified spectrum.

    ``zero_right`` spans ker M (it is Lambda xi, normalized to sum 1),
    ``zero_left`` is the constant row vector of ones (the conserved
    flux), ``stable_rates`` are the nonzero eigenvalues sorted by
    descending real part, and ``slowest_decay`` is the distance of the
    stable spectrum from the imaginary axis: layer tails decay like
    ``exp(-slowest_decay * x)``.
    """

    m: np.ndarray
    zero_right: np.ndarray
    zero_left: np.ndarray
    stable_rates: np.ndarray
    slowest_decay: float


def generator(spec: SystemSpec, tol: float = 1e-10) -> GeneratorSpectrum:
    """Build the layer generator and classify its spectrum.

    Verifies that M inherits the sign structure H1-H3 from the rate
    matrix (nonnegative off-diagonal entries, zero column sums within
    rounding, strongly connected sparsity), that the zero eigenvalue is
    simple and that every other eigenvalue has strictly negative real
    part.
    """
    _require_valid(spec)
    lam = spec.lam.diag
    k_eff = scaled_rates(spec).entries
    m = k_eff / lam[None, :]
    scale = max(_maxabs(m), np.finfo(float).tiny)

    off = m.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0.0):
        raise NumericalError("generator lost the nonnegative sign structure")
    if _maxabs(m.sum(axis=0)) > 1e-13 * scale:
        raise NumericalError("generator columns do not sum to zero")
    if not _strongly_connected(off > 0.0)[0]:
        raise NumericalError("generator sparsity is not strongly connected")

    xi = kernel_vector(k_eff).xi
    zero_right = lam * xi
    zero_right = zero_right / zero_right.sum()
    if _maxabs(m @ zero_right) > tol * scale:
        raise NumericalError("kernel direction of the generator failed to verify")

    eigs = np.linalg.eigvals(m)
    zero_mask = np.abs(eigs) <= tol * scale
    if int(zero_mask.sum()) != 1:
        raise NumericalError(
            f"generator has {int(zero_mask.sum())} near-zero eigenvalues, expected 1"
        )
    stable = eigs[~zero_mask]
    if stable.size and np.max(stable.real) >= -tol * scale:
        raise NumericalError(
            f"generator has a non-decaying mode (Re = {np.max(stable.real):.3e})"
        )
    order = sorted(range(stable.size), key=lambda i: (-stable[i].real, -stable[i].imag))
    stable = stable[order]
    slowest = float(-stable[0].real) if stable.size else np.inf
    return GeneratorSpectrum(
        m=_readonly(m),
        zero_right=_readonly(zero_right),
        zero_left=_readonly(np.ones(spec.r)),
        stable_rates=_readonly(stable),
        slowest_decay=slowest,
    )


@dataclass(frozen=True)
class SteadyProfile:
    """Evaluable steady state B(x) = Lambda^(-1) exp(M x) Lambda b0.

    Evaluation goes through the eigendecomposition of M when the
    eigenvector basis is well conditioned (condition number below 1e6)
    and through a scaling-and-squaring matrix exponential otherwise;
    ``mode`` records which.  Complex arithmetic is internal: values are
    exported real after checking the imaginary residue.
    """

    lam: np.ndarray
    k_eff: np.ndarray
    boundary: np.ndarray
    far_field: np.ndarray
    layer_width: float
    slowest_decay: float
    m: np.ndarray
    mode: str
    _vals: np.ndarray | None = None
    _vecs: np.ndarray | None = None
    _coeffs: np.ndarray | None = None
    _vecs_inv: np.ndarray | None = None

    @property
    def r(self) -> int:
        return self.lam.size

    def _export_real(self, w: np.ndarray) -> np.ndarray:
        scale = max(float(np.linalg.norm(self.lam * self.boundary)), 1e-300)
        imag = _maxabs(w.imag)
        if imag > 1e-12 * scale:
            raise NumericalError(
                f"steady evaluation has imaginary residue {imag:.3e}"
            )
        return w.real

    def _check_xs(self, xs) -> tuple[np.ndarray, bool]:
        scalar = np.isscalar(xs)
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        if np.any(xs < 0.0):
            raise ValueError("steady profiles are defined on x >= 0 only")
        return xs, scalar

    def _w(self, xs: np.ndarray, order: int) -> np.ndarray:
        """exp(M x) Lambda b0, with ``order`` extra factors of M."""
        if self.mode == "spectral":
            coeffs = self._coeffs * self._vals**order
            e = np.exp(np.outer(xs, self._vals))
            return (e * coeffs[None, :]) @ self._vecs.T
        w0 = self.lam * self.boundary
        out = np.empty((xs.size, self.r))
        for i, x in enumerate(xs):
            w = scipy.linalg.expm(self.m * x) @ w0
            for _ in range(order):
                w = self.m @ w
            out[i] = w
        return out

    def __call__(self, xs) -> np.ndarray:
        """Evaluate B at the given nonnegative positions."""
        xs, scalar = self._check_xs(xs)
        w = self._w(xs, order=0)
        b = self._export_real(np.asarray(w, dtype=complex)) / self.lam[None, :]
        return b[0] if scalar else b

    def derivative(self, xs) -> np.ndarray:
        """Evaluate B'(x) = Lambda^(-1) M exp(M x) Lambda b0."""
        xs, scalar = self._check_xs(xs)
        w = self._w(xs, order=1)
        db = self._export_real(np.asarray(w, dtype=complex)) / self.lam[None, :]
        return db[0] if scalar else db

    def propagator(self, x: float) -> np.ndarray:
        """Return the matrix exp(M x)."""
        if x < 0.0:
            raise ValueError("steady profiles are defined on x >= 0 only")
        if self.mode == "spectral":
            prop = (self._vecs * np.exp(self._vals * x)[None, :]) @ self._vecs_inv
            return self._export_real(prop)
        return scipy.linalg.expm(self.m * x)


def steady_profile(spec: SystemSpec, b0) -> SteadyProfile:
    """Solve the steady boundary-layer ODE for inflow data ``b0``."""
    b0 = np.asarray(b0, dtype=float).reshape(-1)
    if b0.size != spec.r:
        raise ValueError(f"boundary data has {b0.size} components, system has {spec.r}")
    if not np.all(np.isfinite(b0)):
        raise ValueError("boundary data must be finite")
    gen = generator(spec)
    lam = spec.lam.diag
    k_eff = scaled_rates(spec).entries
    xi = kernel_vector(k_eff).xi
    flux = float(np.dot(lam, b0))
    far = xi * (flux / float(np.dot(lam, xi)))
    width = 1.0 / gen.slowest_decay

    vals, vecs = np.linalg.eig(gen.m)
    cond = float(np.linalg.cond(vecs))
    if np.isfinite(cond) and cond < _COND_LIMIT:
        vecs_inv = np.linalg.inv(vecs)
        coeffs = vecs_inv @ (lam * b0).astype(complex)
        return SteadyProfile(
            lam=_readonly(lam),
            k_eff=_readonly(k_eff),
            boundary=_readonly(b0),
            far_field=_readonly(far),
            layer_width=width,
            slowest_decay=gen.slowest_decay,
            m=gen.m,
            mode="spectral",
            _vals=_readonly(vals),
            _vecs=_readonly(vecs),
            _coeffs=_readonly(coeffs),
            _vecs_inv=_readonly(vecs_inv),
        )
    return SteadyProfile(
        lam=_readonly(lam),
        k_eff=_readonly(k_eff),
        boundary=_readonly(b0),
        far_field=_readonly(far),
        layer_width=width,
        slowest_decay=gen.slowest_decay,
        m=gen.m,
        mode="expm",
    )


def steady_residual(profile: SteadyProfile, xs) -> float:
    """Max-norm residual of Lambda B' - K B over the given positions."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    b = profile(xs)
    db = profile.derivative(xs)
    resid = db * profile.lam[None, :] - b @ profile.k_eff.T
    return _maxabs(resid)


def far_field(spec: SystemSpec, b0) -> np.ndarray:
    """Far-field limit of the steady state with inflow ``b0``.

    The conserved flux forces ``B(inf) = xi * (ones @ Lambda b0) /
    (ones @ Lambda xi)``.  The formula is cross-checked against profile
    evaluation fifty layer widths out before returning.
    """
    profile = steady_profile(spec, b0)
    x_far = 50.0 / profile.slowest_decay
    tail = profile(x_far)
    scale = max(_maxabs(profile.far_field), 1.0)
    gap = _maxabs(tail - profile.far_field) / scale
    if gap > 1e-10:
        raise NumericalError(
            f"far-field formula disagrees with the profile tail by {gap:.3e}"
        )
    return profile.far_field


def layer_width(spec: SystemSpec) -> float:
    """Width 1/slowest_decay of the steady boundary layer."""
    return 1.0 / generator(spec).slowest_decay

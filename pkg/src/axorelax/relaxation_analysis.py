"""Relaxation structure of the conversion matrix.

Everything here works on the scaled rate matrix ``K`` (conversion rates
divided by the relaxation parameter) of a system satisfying H1-H5 and
builds, step by step, the objects behind the stability theory:

* the positive kernel direction ``xi`` with ``K xi = 0``,
* a similarity reduction showing the zero eigenvalue is simple and every
  other eigenvalue of ``K`` lies strictly in the left half plane,
* the diagonal symmetrizer ``A0 = diag(xi)^(-1)`` making ``A0 K`` have a
  symmetric part with a sign,
* the spectral split of that symmetric part into a one-dimensional
  kernel and a strictly dissipative complement,
* a skew compensating matrix ``H`` whose commutator with the velocity
  matrix controls the kernel direction that the symmetric part misses.

:func:`certify` chains the constructions and emits a self-contained
certificate whose identities can be re-verified from the stored matrices
alone (:func:`verify_certificate`).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import AssumptionError, NumericalError
from .system_model import SystemSpec, scaled_rates, validate_assumptions

__all__ = [
    "KernelVector",
    "SchurReduction",
    "SpectrumReport",
    "Symmetrizer",
    "SpectralSplit",
    "DetailedBalance",
    "CompensatingPair",
    "StabilityCertificate",
    "kernel_vector",
    "schur_reduction",
    "spectrum_report",
    "build_symmetrizer",
    "spectral_split",
    "detailed_balance_check",
    "compensating_matrix",
    "certify",
    "verify_certificate",
]


def _maxabs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _readonly(a) -> np.ndarray:
    out = np.array(a, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class KernelVector:
    """Strictly positive kernel direction of K, normalized to sum 1."""

    xi: np.ndarray
    residual: float


def kernel_vector(k, tol: float = 1e-12) -> KernelVector:
    """Compute the positive vector spanning ker K.

    The kernel is located by singular value decomposition.  Fails when
    the numerical kernel is not one-dimensional, when the kernel vector
    has entries of both signs (or zeros), or when the residual
    ``max|K xi|`` exceeds ``tol * max|K|``.
    """
    k = np.asarray(k, dtype=float)
    r = k.shape[0]
    scale = _maxabs(k)
    _, svals, vt = np.linalg.svd(k)
    if r < 2 or svals[-2] <= tol * scale:
        raise NumericalError(
            "numerical kernel of the rate matrix is not one-dimensional",
            stage="kernel",
        )
    xi = vt[-1]
    if xi.sum() < 0.0:
        xi = -xi
    if np.any(xi <= 0.0):
        i = int(np.argmin(xi))
        raise NumericalError(
            f"kernel vector has non-positive entry at index {i}: {xi[i]:g}",
            stage="kernel",
        )
    xi = xi / xi.sum()
    residual = _maxabs(k @ xi)
    if residual > tol * scale:
        raise NumericalError(
            f"kernel residual {residual:.3e} exceeds {tol:g} * |K| = {tol * scale:.3e}",
            stage="kernel",
        )
    return KernelVector(xi=_readonly(xi), residual=residual)


@dataclass(frozen=True)
class SchurReduction:
    """Similarity reduction exhibiting the zero eigenvalue as simple.

    ``l1`` replaces the first coordinate by the total mass; conjugating K
    by it zeroes the first row, leaving the trailing block ``k2`` whose
    spectrum is exactly the nonzero spectrum of K.
    """

    l1: np.ndarray
    k2: np.ndarray
    beta: np.ndarray
    det_k2: float
    spectral_abscissa_k2: float
    zero_row_residual: float


def schur_reduction(k, tol: float = 1e-12) -> SchurReduction:
    """Reduce K to its stable trailing block.

    With zero column sums, conjugation by the mass-coordinate change
    ``l1`` produces ``[[0, 0], [beta, k2]]`` with ``k2 = K[1:,1:] -
    beta @ ones^T`` and ``beta = K[1:,0]``.  Verifies the zero first row
    within ``tol * max|K|``, that ``k2`` is nonsingular (so the zero
    eigenvalue of K is simple) and reports its spectral abscissa.
    """
    k = np.asarray(k, dtype=float)
    r = k.shape[0]
    if r < 2:
        raise ValueError("schur reduction needs at least two species")
    scale = max(_maxabs(k), np.finfo(float).tiny)
    l1 = np.eye(r)
    l1[0, :] = 1.0
    l1_inv = np.eye(r)
    l1_inv[0, 1:] = -1.0
    conj = l1 @ k @ l1_inv
    zero_row_residual = _maxabs(conj[0, :])
    if zero_row_residual > tol * scale:
        raise NumericalError(
            f"first row of the reduced matrix is not zero "
            f"(residual {zero_row_residual:.3e}); are the column sums zero?",
            stage="schur",
        )
    beta = k[1:, 0].copy()
    k2 = k[1:, 1:] - np.outer(beta, np.ones(r - 1))
    svals = np.linalg.svd(k2, compute_uv=False)
    if svals[-1] <= tol * scale:
        raise NumericalError(
            "trailing block is numerically singular: "
            "the zero eigenvalue of the rate matrix is not simple",
            stage="schur",
        )
    det_k2 = float(np.linalg.det(k2))
    abscissa = float(np.max(np.linalg.eigvals(k2).real))
    return SchurReduction(
        l1=_readonly(l1),
        k2=_readonly(k2),
        beta=_readonly(beta),
        det_k2=det_k2,
        spectral_abscissa_k2=abscissa,
        zero_row_residual=zero_row_residual,
    )


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of K sorted by descending real part.

    ``passed`` states that exactly one eigenvalue is numerically zero and
    every other eigenvalue has strictly negative real part; the spectral
    gap is the distance of the nonzero spectrum from the imaginary axis.
    """

    eigenvalues: np.ndarray
    n_zero: int
    spectral_gap: float
    gershgorin_bound: float
    passed: bool


def spectrum_report(k, tol: float = 1e-8) -> SpectrumReport:
    """Classify the spectrum of K.

    An eigenvalue counts as zero when ``|eig| <= tol * max|K|``.  The
    Gershgorin bound is the largest column sum of diagonal-plus-absolute
    off-diagonal entries; it is nonpositive for any matrix with H1-H2
    sign structure and bounds every real part from above.
    """
    k = np.asarray(k, dtype=float)
    scale = _maxabs(k)
    thresh = tol * (scale if scale > 0.0 else 1.0)
    eigs = np.linalg.eigvals(k)
    order = sorted(range(eigs.size), key=lambda i: (-eigs[i].real, -eigs[i].imag))
    eigs = eigs[order]
    zero = np.abs(eigs) <= thresh
    n_zero = int(zero.sum())
    nonzero = eigs[~zero]
    gap = float(-np.max(nonzero.real)) if nonzero.size else np.inf
    passed = n_zero == 1 and (nonzero.size == 0 or np.all(nonzero.real < -thresh))
    off = np.abs(k).copy()
    np.fill_diagonal(off, 0.0)
    gersh = float(np.max(np.diag(k) + off.sum(axis=0)))
    return SpectrumReport(
        eigenvalues=_readonly(eigs),
        n_zero=n_zero,
        spectral_gap=gap,
        gershgorin_bound=gersh,
        passed=passed,
    )


@dataclass(frozen=True)
class Symmetrizer:
    """Diagonal weights making the symmetric part of A0 K sign-definite.

    ``d`` is the kernel vector as a diagonal weight, ``a0`` its entrywise
    inverse.  The defining identity
    ``A0 K + K^T A0 = D^(-1) (K D + D K^T) D^(-1)`` is checked at
    construction; its relative residual is stored.
    """

    d: np.ndarray
    a0: np.ndarray
    identity_residual: float

    def sym_part(self, k) -> np.ndarray:
        """Return A0 K + K^T A0 (exactly symmetric by construction)."""
        m = self.a0[:, None] * np.asarray(k, dtype=float)
        return m + m.T


def build_symmetrizer(k, xi, tol: float = 1e-12) -> Symmetrizer:
    """Build the diagonal symmetrizer from the kernel direction.

    Requires a strictly positive ``xi``.  Sets ``D = diag(xi)`` and
    ``A0 = D^(-1)`` and verifies the weighted-symmetry identity relating
    the two ways of symmetrizing K within ``tol`` relative to the result.
    """
    k = np.asarray(k, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0.0) or not np.all(np.isfinite(xi)):
        raise ValueError("symmetrizer weights must be strictly positive and finite")
    d = xi.copy()
    a0 = 1.0 / xi
    lhs = a0[:, None] * k + k.T * a0[None, :]
    kd = k * d[None, :]
    rhs = (kd + kd.T) * (a0[:, None] * a0[None, :])
    scale = max(_maxabs(lhs), np.finfo(float).tiny)
    residual = _maxabs(lhs - rhs) / scale
    if residual > tol:
        raise NumericalError(
            f"symmetrizer identity residual {residual:.3e} exceeds {tol:g}",
            stage="symmetrizer",
        )
    return Symmetrizer(d=_readonly(d), a0=_readonly(a0), identity_residual=residual)


@dataclass(frozen=True)
class SpectralSplit:
    """Orthogonal split of the symmetric part into kernel and dissipation.

    Rows of ``p`` are orthonormal eigenvectors of the symmetric part of
    ``A0 K``, ordered with the kernel direction first and then ascending
    magnitude; ``s`` holds the corresponding strictly positive decay
    rates, so that ``sym_part = -P^T diag(0, s) P``.  The first row of
    ``p`` is entrywise positive (it is the normalized kernel direction).
    """

    p: np.ndarray
    s: np.ndarray
    recon_residual: float
    orth_residual: float

    @property
    def phi(self) -> np.ndarray:
        """Unit vector spanning the kernel of the symmetric part."""
        return self.p[0]

    def kernel_complement_projector(self) -> np.ndarray:
        """Return P^T diag(0, 1, ..., 1) P, the projector onto ran(sym)."""
        return self.p[1:].T @ self.p[1:]


def spectral_split(sym_part, tol: float = 1e-10) -> SpectralSplit:
    """Diagonalize the (negative semidefinite) symmetric part.

    Fails when more than one eigenvalue is numerically zero, when any
    eigenvalue is positive beyond tolerance, or when the reconstruction
    ``sym_part + P^T diag(0, s) P`` misses by more than ``tol`` relative
    to ``max|sym_part|``.
    """
    m = np.asarray(sym_part, dtype=float)
    scale = max(_maxabs(m), np.finfo(float).tiny)
    if _maxabs(m - m.T) > 1e-13 * scale:
        raise ValueError("spectral split expects a symmetric matrix")
    w, q = np.linalg.eigh(m)
    order = np.argsort(np.abs(w), kind="stable")
    w = w[order]
    p = q[:, order].T
    n_zero = int(np.sum(np.abs(w) <= tol * scale))
    if n_zero != 1:
        raise NumericalError(
            f"symmetric part has {n_zero} near-zero eigenvalues, expected 1",
            stage="split",
        )
    if np.any(w > tol * scale):
        raise NumericalError(
            f"symmetric part has a positive eigenvalue {w.max():.3e}",
            stage="split",
        )
    # Deterministic signs: the kernel row is taken entrywise positive, the
    # others have a positive entry of largest magnitude.
    p = p.copy()
    if p[0].sum() < 0.0:
        p[0] = -p[0]
    if np.any(p[0] <= 0.0):
        raise NumericalError(
            "kernel row of the spectral split is not entrywise positive",
            stage="split",
        )
    for i in range(1, p.shape[0]):
        if p[i, np.argmax(np.abs(p[i]))] < 0.0:
            p[i] = -p[i]
    s = -w[1:]
    recon = _maxabs(m + p.T @ (np.concatenate(([0.0], s))[:, None] * p)) / scale
    if recon > tol:
        raise NumericalError(
            f"spectral reconstruction residual {recon:.3e} exceeds {tol:g}",
            stage="split",
        )
    orth = _maxabs(p @ p.T - np.eye(p.shape[0]))
    return SpectralSplit(
        p=_readonly(p), s=_readonly(s), recon_residual=recon, orth_residual=orth
    )


@dataclass(frozen=True)
class DetailedBalance:
    """Symmetry of the weighted rate matrix K D.

    ``K D`` symmetric means the conversion network is reversible with
    respect to the kernel weights.  This always holds for two or three
    species but can fail from four on; ``max_asymmetry`` is
    ``max|KD - (KD)^T|``.
    """

    symmetric: bool
    max_asymmetry: float
    kd: np.ndarray


def detailed_balance_check(k, d, tol: float = 1e-12) -> DetailedBalance:
    """Check whether K D is symmetric for the diagonal weights ``d``."""
    k = np.asarray(k, dtype=float)
    d = np.asarray(d, dtype=float).reshape(-1)
    kd = k * d[None, :]
    asym = _maxabs(kd - kd.T)
    scale = max(_maxabs(kd), 1.0)
    return DetailedBalance(
        symmetric=bool(asym <= tol * scale),
        max_asymmetry=asym,
        kd=_readonly(kd),
    )


@dataclass(frozen=True)
class CompensatingPair:
    """Skew matrix H and margin c > 0 controlling the kernel direction.

    The certified inequality is ``H Lambda - Lambda H >= c I - Q`` in the
    semidefinite order, where ``Q = P^T diag(0, I) P`` is the projector
    annihilating the kernel direction; ``min_eig_slack`` is the smallest
    eigenvalue of ``H Lambda - Lambda H + Q - c I`` (zero up to rounding).
    """

    h: np.ndarray
    c: float
    min_eig_slack: float


def _commutator(h: np.ndarray, lam: np.ndarray) -> np.ndarray:
    # Entrywise h_ij (lambda_j - lambda_i); exactly symmetric for skew h.
    return h * lam[None, :] - lam[:, None] * h


def _margin(h: np.ndarray, lam: np.ndarray, q: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(_commutator(h, lam) + q)[0])


def _skew_from_params(theta: np.ndarray, r: int) -> np.ndarray:
    h = np.zeros((r, r))
    iu = np.triu_indices(r, 1)
    h[iu] = theta
    return h - h.T


def compensating_matrix(lam, split: SpectralSplit, tol: float = 1e-10) -> CompensatingPair:
    """Search for a compensating pair (H, c) with c as large as possible.

    The margin ``c(H) = min eig(H Lambda - Lambda H + Q)`` is concave in
    H, so a one-parameter family ``H = delta (phi w^T - w phi^T)`` with
    ``w = Lambda phi`` (phi the kernel direction) is swept over signed
    log-spaced ``delta`` and refined by bounded scalar maximization; if
    that family certifies no positive margin, a derivative-free search
    over all skew matrices is attempted from several deterministic
    starting points.  Fails when no positive margin is found, reporting
    how close ``Lambda phi`` is to being parallel to ``phi`` (parallel
    means no compensating matrix can exist).
    """
    lam = np.asarray(lam, dtype=float).reshape(-1)
    r = lam.size
    phi = split.phi
    q = split.kernel_complement_projector()
    w = lam * phi

    def margin_of_delta(delta: float) -> float:
        h = delta * (np.outer(phi, w) - np.outer(w, phi))
        return _margin(h, lam, q)

    deltas = np.concatenate(
        [-np.logspace(2.0, -6.0, 33), [0.0], np.logspace(-6.0, 2.0, 33)]
    )
    margins = np.array([margin_of_delta(d) for d in deltas])
    best = int(np.argmax(margins))
    lo = deltas[max(best - 1, 0)]
    hi = deltas[min(best + 1, deltas.size - 1)]
    if hi > lo:
        res = minimize_scalar(
            lambda d: -margin_of_delta(d),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12},
        )
        best_delta, best_margin = float(res.x), float(-res.fun)
    else:
        best_delta, best_margin = float(deltas[best]), float(margins[best])
    if margins[best] > best_margin:
        best_delta, best_margin = float(deltas[best]), float(margins[best])
    h = best_delta * (np.outer(phi, w) - np.outer(w, phi))
    c = best_margin

    if c <= 0.0:
        # Fallback: derivative-free ascent over all r(r-1)/2 skew entries.
        iu_size = r * (r - 1) // 2
        rng = np.random.default_rng(0)
        h0 = np.triu(h, 1)[np.triu_indices(r, 1)]
        starts = [h0] + [rng.normal(scale=s, size=iu_size) for s in (0.1, 1.0, 10.0)]
        for theta0 in starts:
            res = minimize(
                lambda th: -_margin(_skew_from_params(th, r), lam, q),
                theta0,
                method="Nelder-Mead",
                options={"maxiter": 4000, "xatol": 1e-12, "fatol": 1e-14},
            )
            if -res.fun > c:
                c = float(-res.fun)
                h = _skew_from_params(res.x, r)

    if c <= 0.0:
        cos = abs(float(phi @ w)) / max(float(np.linalg.norm(w)), np.finfo(float).tiny)
        sin = float(np.sqrt(max(0.0, 1.0 - cos * cos)))
        raise NumericalError(
            "no compensating matrix with positive margin was found "
            f"(best margin {c:.3e}; |sin| of the angle between "
            f"Lambda phi and phi is {sin:.3e}, zero means none exists)",
            stage="compensating",
        )
    slack = float(np.linalg.eigvalsh(_commutator(h, lam) + q - c * np.eye(r))[0])
    if slack < -tol:
        raise NumericalError(
            f"compensating margin re-check failed: slack {slack:.3e} < -{tol:g}",
            stage="compensating",
        )
    return CompensatingPair(h=_readonly(h), c=c, min_eig_slack=slack)


@dataclass(frozen=True)
class StabilityCertificate:
    """Self-contained certificate for one system.

    Carries the scaled rate matrix and velocities it was issued for, every
    constructed object, and one max-norm residual per verified identity
    (relative to the scale noted in :func:`verify_certificate`).  A
    certificate is only ever emitted with all residuals within tolerance.
    """

    lam: np.ndarray
    k_eff: np.ndarray
    epsilon: float
    kernel: KernelVector
    schur: SchurReduction
    symmetrizer: Symmetrizer
    split: SpectralSplit
    balance: DetailedBalance
    compensating: CompensatingPair
    residuals: dict[str, float]
    construction_tol: float
    verification_tol: float

    @property
    def r(self) -> int:
        return self.lam.size

    @property
    def xi(self) -> np.ndarray:
        return self.kernel.xi

    @property
    def c(self) -> float:
        return self.compensating.c

    @property
    def dissipation_ratio(self) -> float:
        """min(s) / max(a0): the decay-to-energy weight ratio kappa."""
        return float(self.split.s.min() / self.symmetrizer.a0.max())


_CONSTRUCTION_KEYS = frozenset(
    {
        "kernel",
        "schur_zero_row",
        "schur_block",
        "symmetrizer_identity",
        "split_orthogonality",
    }
)
_VERIFICATION_KEYS = frozenset(
    {
        "split_reconstruction",
        "kernel_alignment",
        "split_kernel_action",
        "kawashima_slack",
    }
)


def verify_certificate(cert: StabilityCertificate) -> dict[str, float]:
    """Recompute every certified identity from the stored matrices.

    Returns the residual record; all entries are relative to the scale of
    the identity they check (``max|K|`` for the kernel/reduction/
    reconstruction identities, the symmetric part for the symmetrizer
    identity, absolute for orthogonality, alignment and the margin
    slack).  Raises nothing: callers compare against the tolerances they
    care about.
    """
    k = cert.k_eff
    lam = cert.lam
    r = cert.r
    scale = max(_maxabs(k), np.finfo(float).tiny)
    xi = cert.kernel.xi
    p, s = cert.split.p, cert.split.s
    a0 = cert.symmetrizer.a0
    d = cert.symmetrizer.d

    out: dict[str, float] = {}
    out["kernel"] = _maxabs(k @ xi) / scale

    l1 = cert.schur.l1
    l1_inv = np.eye(r)
    l1_inv[0, 1:] = -1.0
    conj = l1 @ k @ l1_inv
    out["schur_zero_row"] = _maxabs(conj[0, :]) / scale
    out["schur_block"] = _maxabs(conj[1:, 1:] - cert.schur.k2) / scale

    lhs = a0[:, None] * k + k.T * a0[None, :]
    kd = k * d[None, :]
    rhs = (kd + kd.T) * (a0[:, None] * a0[None, :])
    out["symmetrizer_identity"] = _maxabs(lhs - rhs) / max(
        _maxabs(lhs), np.finfo(float).tiny
    )

    sym = cert.symmetrizer.sym_part(k)
    out["split_reconstruction"] = (
        _maxabs(sym + p.T @ (np.concatenate(([0.0], s))[:, None] * p)) / scale
    )
    out["split_orthogonality"] = _maxabs(p @ p.T - np.eye(r))
    xi_hat = xi / np.linalg.norm(xi)
    out["kernel_alignment"] = _maxabs(p[0] - xi_hat)
    out["split_kernel_action"] = _maxabs((p @ xi)[1:]) / float(np.linalg.norm(xi))

    q = p[1:].T @ p[1:]
    slack = float(
        np.linalg.eigvalsh(
            _commutator(cert.compensating.h, lam) + q - cert.compensating.c * np.eye(r)
        )[0]
    )
    out["kawashima_slack"] = max(0.0, -slack)
    return out


def certify(
    spec: SystemSpec,
    construction_tol: float = 1e-12,
    verification_tol: float = 1e-10,
) -> StabilityCertificate:
    """Run the full certification pipeline for a system.

    Validates H1-H5 first (raising :class:`AssumptionError` with the
    failed names), then chains kernel vector, similarity reduction,
    symmetrizer, spectral split, detailed-balance check and compensating
    matrix, re-verifies every identity from the assembled certificate and
    only then returns it.  Any stage failure propagates as
    :class:`NumericalError` naming the stage; a certificate violating its
    own tolerances is never returned.
    """
    report = validate_assumptions(spec, tol=construction_tol)
    if not report.passed:
        failed = report.failed_names
        witness = report[failed[0]].witness
        raise AssumptionError(failed, f"{failed[0]}: {witness}")
    lam = spec.lam.diag
    k_eff = scaled_rates(spec).entries
    kernel = kernel_vector(k_eff, tol=construction_tol)
    schur = schur_reduction(k_eff, tol=construction_tol)
    symmetrizer = build_symmetrizer(k_eff, kernel.xi, tol=construction_tol)
    split = spectral_split(symmetrizer.sym_part(k_eff), tol=verification_tol)
    balance = detailed_balance_check(k_eff, symmetrizer.d, tol=construction_tol)
    compensating = compensating_matrix(lam, split, tol=verification_tol)

    cert = StabilityCertificate(
        lam=_readonly(lam),
        k_eff=_readonly(k_eff),
        epsilon=spec.epsilon,
        kernel=kernel,
        schur=schur,
        symmetrizer=symmetrizer,
        split=split,
        balance=balance,
        compensating=compensating,
        residuals={},
        construction_tol=float(construction_tol),
        verification_tol=float(verification_tol),
    )
    residuals = verify_certificate(cert)
    for key, value in residuals.items():
        bound = construction_tol if key in _CONSTRUCTION_KEYS else verification_tol
        if value > bound:
            raise NumericalError(
                f"certificate identity {key!r} has residual {value:.3e} > {bound:g}",
                stage=key,
            )
    return replace(cert, residuals=residuals)

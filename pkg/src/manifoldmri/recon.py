"""Manifold-regularized reconstruction of the image series.

``solve_full`` minimizes ||A(X) - B||^2 + lam tr(X L X^H) over the whole
Casorati matrix (small problems only). ``solve_truncated`` restricts X to
U V_r^H for the r smallest Laplacian eigenvectors and solves for the
coefficient images U; the penalty becomes lam sum_i sigma_i ||u_i||^2.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, SolverError

log = logging.getLogger(__name__)

FULL_SOLVE_LIMIT = 100_000


@dataclass
class TruncatedBasis:
    """r smallest eigenpairs of a Laplacian; ``vectors`` is k x r."""

    vectors: np.ndarray
    values: np.ndarray
    flags: set = field(default_factory=set)

    @property
    def rank(self):
        return self.vectors.shape[1]

    @property
    def frames(self):
        return self.vectors.shape[0]


def eigen_truncate(lap, r):
    """Basis of the r algebraically smallest eigenpairs of ``lap``.

    Eigenvalues below zero (possible when weights are negative) are
    clamped to zero and flagged.
    """
    k = lap.frames
    if not 1 <= r <= k:
        raise ValueError(f"rank must lie in 1..{k}, got {r}")
    eig = lap.eigen()
    vals = eig.values[:r].copy()
    flags = set()
    scale = max(abs(eig.values[-1]), 1.0)
    if np.any(vals < -1e-10 * scale):
        flags.add("negative-eigenvalues-clamped")
        warnings.warn("Laplacian has negative eigenvalues; clamped to zero", RuntimeWarning, stacklevel=2)
    vals = np.maximum(vals, 0.0)
    return TruncatedBasis(eig.vectors[:, :r].copy(), vals, flags)


@dataclass
class CGLog:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    converged: bool = False

    def lines(self):
        return [f"{i} {r:.10e} {e:.10e}" for i, (r, e) in enumerate(zip(self.residuals, self.energies))]


def _dot(a, b):
    return np.vdot(a, b).real


def conjugate_gradient(apply, rhs, x0=None, tol=1e-6, maxiter=100, precond=None):
    """(Preconditioned) CG for a Hermitian PSD operator under Re<.,.>.

    Records the relative residual ||b - Hx|| / ||b|| and the energy
    0.5<x,Hx> - Re<x,b> (computed as -0.5 Re<x, b + r>) at every iterate.
    ``precond`` applies a Hermitian positive definite approximate inverse.
    """
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=rhs.dtype)
    r = rhs - apply(x) if x0 is not None else rhs.copy()
    bnorm = np.linalg.norm(rhs)
    history = CGLog()
    if bnorm == 0:
        history.residuals.append(0.0)
        history.energies.append(0.0)
        history.converged = True
        return x, history
    z = r if precond is None else precond(r)
    p = z.copy()
    rz = _dot(r, z)
    for it in range(maxiter + 1):
        history.residuals.append(np.linalg.norm(r) / bnorm)
        history.energies.append(-0.5 * _dot(x, rhs + r))
        if history.residuals[-1] < tol:
            history.converged = True
            break
        if it == maxiter:
            break
        Hp = apply(p)
        pHp = _dot(p, Hp)
        if not np.isfinite(pHp):
            raise SolverError("non-finite curvature in conjugate gradient")
        if pHp <= 0:
            # exact null direction reached: residual already lies in the range
            break
        alpha = rz / pHp
        x = x + alpha * p
        r = r - alpha * Hp
        z = r if precond is None else precond(r)
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        history.iterations = it + 1
    return x, history


def nrmse(X, truth):
    """||X - truth||_F / ||truth||_F."""
    X = np.asarray(X)
    truth = np.asarray(truth)
    if X.shape != truth.shape:
        raise DimensionError(f"shape mismatch {X.shape} vs {truth.shape}")
    den = np.linalg.norm(truth)
    if den == 0:
        raise ValueError("truth is identically zero")
    return float(np.linalg.norm(X - truth) / den)


def _check_meas(B, op):
    B = np.asarray(B)
    if B.shape != op.meas_shape:
        raise DimensionError(f"measurements have shape {B.shape}, expected {op.meas_shape}")
    if not np.all(np.isfinite(B)):
        raise ValueError("measurements contain non-finite values")
    return B


def solve_full(B, op, lap, lam, tol=1e-8, maxiter=500, allow_large=False):
    """Solve A^H A X + lam X L = A^H B by conjugate gradient.

    Refuses problems with more than ``FULL_SOLVE_LIMIT`` unknowns unless
    ``allow_large`` is set.
    """
    B = _check_meas(B, op)
    n = op.n * op.n
    k = op.frames
    if n * k > FULL_SOLVE_LIMIT and not allow_large:
        raise SolverError(
            f"full solve with {n * k} unknowns exceeds the guard ({FULL_SOLVE_LIMIT}); "
            "use solve_truncated"
        )
    L = np.zeros((k, k)) if lap is None else lap.L
    if L.shape != (k, k):
        raise DimensionError("Laplacian size does not match frame count")
    rhs = op.adjoint(B)

    def apply(X):
        return op.normal(X) + lam * (X @ L)

    X, history = conjugate_gradient(apply, rhs, tol=tol, maxiter=maxiter)
    return X, history


class CompressedNormal:
    """A^H A restricted to the temporal basis: U -> (A^H A (U V^H)) V.

    Folds the per-frame point-spread spectra into r x r spectral blocks
    Q_ba(f) = sum_i V_ib conj(V_ia) psf_i(f), so each application costs
    r * coils FFT pairs regardless of the frame count.
    """

    def __init__(self, op, V):
        self.op = op
        self.V = np.asarray(V)
        k, r = self.V.shape
        psf = op.psf_spectra()
        self.grid_shape = psf.shape[1:]
        F = int(np.prod(self.grid_shape))
        pairs = self.V[:, :, None] * np.conj(self.V[:, None, :])  # (k, b, a)
        flat = psf.reshape(k, F)
        if np.iscomplexobj(pairs):
            Q = (flat.T @ pairs.real.reshape(k, r * r)) + 1j * (flat.T @ pairs.imag.reshape(k, r * r))
        else:
            Q = flat.T @ pairs.reshape(k, r * r)
        self.Q = Q.reshape(F, r, r)
        self.r = r

    def preconditioner(self, shift=None, floor=1e-3):
        """Circulant approximate inverse applied per basis image.

        Uses the diagonal blocks Q_bb(f) (floored at ``floor`` times their
        maximum) plus the per-basis penalty ``shift``, sandwiched between
        inverse square roots of the coil energy. Hermitian positive definite.
        """
        op = self.op
        n = op.n
        r = self.r
        diag = np.einsum("fbb->bf", self.Q).real
        diag = np.maximum(diag, floor * diag.max(axis=1, keepdims=True))
        energy = np.sum(np.abs(op.maps) ** 2, axis=0).ravel()
        energy = np.maximum(energy, 1e-6 * energy.max())
        if shift is not None:
            diag = diag + np.asarray(shift)[:, None] * energy.mean()
        weights = (1.0 / diag).reshape((r,) + self.grid_shape)
        scale = energy ** -0.5

        def apply(Rm):
            imgs = (Rm * scale[:, None]).T.reshape(r, n, n)
            out = op.from_grid(weights * op.to_grid(imgs))
            return out.reshape(r, n * n).T * scale[:, None]

        return apply

    def __call__(self, U):
        op = self.op
        n = op.n
        r = self.r
        imgs = op.maps[:, None] * U.T.reshape(r, n, n)[None]
        G = op.to_grid(imgs)  # (coils, r, g, g)
        coils = G.shape[0]
        F = int(np.prod(self.grid_shape))
        G = G.reshape(coils, r, F)
        if np.iscomplexobj(self.Q):
            Hf = self.Q @ np.ascontiguousarray(G.transpose(2, 1, 0))
        else:
            # real blocks: stack real and imaginary parts as extra right-hand sides
            stacked = np.concatenate([G.real, G.imag], axis=0).transpose(2, 1, 0)
            Hs = self.Q @ np.ascontiguousarray(stacked)
            Hf = Hs[..., :coils] + 1j * Hs[..., coils:]
        H = Hf.transpose(2, 1, 0).reshape((coils, r) + self.grid_shape)
        back = op.from_grid(H)  # (coils, r, n, n)
        out = np.sum(np.conj(op.maps)[:, None] * back, axis=0)
        return out.reshape(r, n * n).T


def solve_truncated(B, op, basis, lam, tol=1e-6, maxiter=100, rhs_full=None, precondition=False):
    """Coefficient images U (n x r) and series X = U V_r^H.

    ``rhs_full`` may pass a precomputed A^H B to skip the adjoint.
    Returns (U, X, log).
    """
    B = _check_meas(B, op)
    if basis.frames != op.frames:
        raise DimensionError(f"basis has {basis.frames} frames, measurements {op.frames}")
    V = basis.vectors
    AhB = op.adjoint(B) if rhs_full is None else rhs_full
    rhs = AhB @ V
    normal = CompressedNormal(op, V)
    pen = lam * np.asarray(basis.values)

    def apply(U):
        return normal(U) + U * pen[None, :]

    precond = normal.preconditioner(pen) if precondition else None
    U, history = conjugate_gradient(apply, rhs, tol=tol, maxiter=maxiter, precond=precond)
    log.debug("truncated CG: %d iterations, residual %.3e", history.iterations, history.residuals[-1])
    return U, U @ V.conj().T, history

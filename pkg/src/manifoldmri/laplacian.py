"""Graph Laplacians of the frame manifold estimated from navigator signals.

Two families are provided: exponential weights with distance-threshold or
k-nearest-neighbour selection, and the kernel low-rank IRLS estimate that
denoises the navigators while producing the Laplacian as a by-product.
"""

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .arrays import HermEig, herm_eig
from .errors import DimensionError, SolverError


class GraphWarning(UserWarning):
    pass


@dataclass
class GraphLaplacian:
    """L = D - W for a symmetric real weight matrix W."""

    W: np.ndarray
    flags: set = field(default_factory=set)
    eig: HermEig = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        if self.W.ndim != 2 or self.W.shape[0] != self.W.shape[1]:
            raise DimensionError("weight matrix must be square")

    @property
    def frames(self):
        return self.W.shape[0]

    @property
    def L(self):
        return np.diag(self.W.sum(axis=1)) - self.W

    @property
    def degrees(self):
        return self.W.sum(axis=1)

    def eigen(self):
        if self.eig is None:
            self.eig = herm_eig(self.L)
        return self.eig

    def scaled(self, factor):
        return GraphLaplacian(self.W * factor, set(self.flags))


def _real_view(Z):
    Z = np.asarray(Z)
    if np.iscomplexobj(Z):
        Z = np.concatenate([Z.real, Z.imag], axis=0)
    return Z.T


def pairwise_sq_distances(Z):
    """Squared distances between the columns of Z (Hermitian norm)."""
    pts = _real_view(Z)
    return cdist(pts, pts, "sqeuclidean")


def _connected(W):
    ncomp, _ = connected_components(np.abs(W) > 0, directed=False)
    return ncomp


def exp_weights(Z, sigma, threshold=None, knn=None):
    """Exponential weights exp(-d^2/sigma^2) on a neighbour graph.

    Give exactly one of ``threshold`` (neighbours if d < t) or ``knn``
    (kappa nearest neighbours, symmetrized with max(W, W^T)).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if (threshold is None) == (knn is None):
        raise ValueError("give exactly one of threshold or knn")
    d2 = pairwise_sq_distances(Z)
    k = d2.shape[0]
    K = np.exp(-d2 / sigma ** 2)
    if threshold is not None:
        if threshold <= 0:
            raise ValueError("threshold must be positive")
        W = np.where(d2 < threshold ** 2, K, 0.0)
    else:
        if knn < 1:
            raise ValueError("knn must be at least 1")
        dd = d2 + np.diag(np.full(k, np.inf))
        order = np.argsort(dd, axis=1, kind="stable")[:, : min(knn, k - 1)]
        W = np.zeros_like(K)
        rows = np.repeat(np.arange(k), order.shape[1])
        W[rows, order.ravel()] = K[rows, order.ravel()]
        W = np.maximum(W, W.T)
    np.fill_diagonal(W, 0.0)
    flags = set()
    if k > 1 and _connected(W) > 1:
        flags.add("disconnected")
        if not np.any(W):
            flags.add("isolated")
        warnings.warn("neighbour graph is disconnected", GraphWarning, stacklevel=2)
    return GraphLaplacian(W, flags)


def gaussian_kernel_navs(R, sigma):
    """Gaussian kernel matrix K_ij = exp(-||R_i - R_j||^2 / sigma^2) of the columns of R."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return np.exp(-pairwise_sq_distances(R) / sigma ** 2)


def auto_sigma(Z):
    """Median pairwise column distance; warns and falls back if all are zero."""
    Z = np.asarray(Z)
    if Z.shape[1] < 2:
        raise DimensionError("need at least two frames")
    d2 = pairwise_sq_distances(Z)
    d = np.sqrt(d2[np.triu_indices(d2.shape[0], 1)])
    med = float(np.median(d))
    if med > 0:
        return med
    warnings.warn("all navigator distances are zero; using fallback sigma", GraphWarning, stacklevel=2)
    return float(np.finfo(float).eps * (1.0 + np.max(np.abs(Z))))


def inv_sqrt_psd(K, gamma):
    """(K + gamma I)^(-1/2) with K's eigenvalues floored at zero."""
    eig = herm_eig(K)
    vals = np.maximum(eig.values, 0.0) + gamma
    V = eig.vectors
    return (V * vals ** -0.5) @ V.conj().T


@dataclass
class IrlsParams:
    """Parameters of the kernel low-rank IRLS.

    With ``mu_relative`` the penalty weight is ``mu * sigma**2``, which
    cancels the 1/sigma^2 of the weight matrix and makes ``mu``
    independent of navigator scale. ``gamma0=None`` selects
    100 * mean(eig(K0)) / k.
    """

    sigma: object = "median-auto"
    mu: float = 1.0
    gamma0: float = None
    eta: float = 1.5
    iterations: int = 10
    mu_relative: bool = True
    clip_negative: bool = False

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if self.gamma0 is not None and self.gamma0 <= 0:
            raise ValueError("gamma0 must be positive")
        if self.eta < 1:
            raise ValueError("eta must be >= 1")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.sigma != "median-auto" and not float(self.sigma) > 0:
            raise ValueError("sigma must be positive or 'median-auto'")


@dataclass
class IterRecord:
    n: int
    gamma: float
    cost: float
    stationarity: float


class IrlsResult(NamedTuple):
    R: np.ndarray
    laplacian: GraphLaplacian
    trace: list


def irls_weights(K, P, sigma, clip_negative=False):
    """W = -(1/sigma^2) K * P, symmetrized with a zero diagonal."""
    W = -(K * P) / sigma ** 2
    W = 0.5 * (W + W.T).real
    np.fill_diagonal(W, 0.0)
    if clip_negative:
        W = np.maximum(W, 0.0)
    return W


def solve_denoise(Z, L, mu):
    """R = Z (I + mu L)^(-1), the minimizer of ||R - Z||^2 + mu tr(R L R^H)."""
    k = L.shape[0]
    M = np.eye(k) + mu * L
    try:
        cf = sla.cho_factor(M, lower=True)
        return sla.cho_solve(cf, Z.T).T
    except np.linalg.LinAlgError:
        pass
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise SolverError(f"I + mu L is numerically singular (cond {cond:.3g})")
    return np.linalg.solve(M, Z.T).T


def denoise_cost(R, Z, L, mu):
    return float(np.linalg.norm(R - Z) ** 2 + mu * np.trace(R @ L @ R.conj().T).real)


def irls_estimate(Z, params=None):
    """Kernel low-rank navigator denoising and Laplacian estimate.

    Each outer iteration: kernel of the previous iterate, reweighting
    P = (K + gamma I)^(-1/2), weights W = -(1/sigma^2) K * P, closed-form
    update R = Z (I + mu L)^(-1), then gamma /= eta.
    """
    params = params or IrlsParams()
    Z = np.asarray(Z)
    if Z.size == 0 or Z.ndim != 2:
        raise DimensionError("navigator matrix must be a non-empty 2-D array")
    if not np.all(np.isfinite(Z)):
        raise ValueError("navigator matrix has non-finite entries")
    sigma = auto_sigma(Z) if params.sigma == "median-auto" else float(params.sigma)
    mu = params.mu * sigma ** 2 if params.mu_relative else params.mu
    k = Z.shape[1]
    R = Z.astype(np.complex128 if np.iscomplexobj(Z) else float, copy=True)
    gamma = params.gamma0
    trace = []
    W = np.zeros((k, k))
    for it in range(1, params.iterations + 1):
        K = gaussian_kernel_navs(R, sigma)
        if not np.all(np.isfinite(K)):
            raise ValueError("kernel matrix contains NaN")
        if gamma is None:
            gamma = 100.0 * np.trace(K) / k / k
        P = inv_sqrt_psd(K, gamma)
        W = irls_weights(K, P, sigma, params.clip_negative)
        lap = GraphLaplacian(W)
        L = lap.L
        R = solve_denoise(Z, L, mu)
        grad = 2 * (R - Z) + 2 * mu * R @ L
        stat = float(np.linalg.norm(grad) / max(np.linalg.norm(Z), np.finfo(float).tiny))
        trace.append(IterRecord(it, gamma, denoise_cost(R, Z, L, mu), stat))
        gamma = gamma / params.eta
    lap = GraphLaplacian(W, meta={"sigma": sigma, "mu": mu})
    return IrlsResult(R, lap, trace)


def surrogate_cost(R, Z, P, sigma, mu):
    """||R - Z||^2 + mu tr(K(R) P), the reweighted nuclear-norm surrogate."""
    K = gaussian_kernel_navs(R, sigma)
    return float(np.linalg.norm(R - Z) ** 2 + mu * np.sum(K * P).real)

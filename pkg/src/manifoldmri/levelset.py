"""Bandlimited level sets in low ambient dimension.

A potential psi(x) = sum_k c_k exp(j 2 pi k.x) with finitely many
frequencies defines a zero set. Exponential feature maps of points on that
set are annihilated by the zero-padded coefficient vector and all of its
integer shifts that stay inside the feature support, which bounds the rank
of the feature (and Gram) matrix.

Frequencies inside a support box are always enumerated lexicographically
on (k_1, ..., k_n), i.e. ``itertools.product`` order.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, SamplingError

BISECTION_TOL = 1e-10
BISECTION_MAX_ITER = 200


def box_frequencies(half_widths):
    """All integer vectors k with |k_d| <= half_widths[d], lexicographic order."""
    ranges = [range(-h, h + 1) for h in half_widths]
    return np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(-1, len(half_widths))


@dataclass
class LevelSetModel:
    """Real bandlimited potential given by its Fourier coefficients.

    ``support`` is an (m, n) integer array of frequencies, ``coeffs`` the
    matching complex coefficients.
    """

    support: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.support = np.atleast_2d(np.asarray(self.support, dtype=np.int64))
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128).ravel()
        if self.support.shape[0] != self.coeffs.size:
            raise DimensionError("support and coeffs differ in length")
        if self.ambient_dim not in (2, 3):
            raise DimensionError("ambient dimension must be 2 or 3")
        scale = np.max(np.abs(self.coeffs))
        if scale == 0:
            raise ValueError("coefficients are identically zero")
        lookup = {tuple(k): c for k, c in zip(self.support, self.coeffs)}
        if len(lookup) != len(self.coeffs):
            raise ValueError("duplicate frequencies in support")
        for k, c in lookup.items():
            mirror = lookup.get(tuple(-v for v in k))
            if mirror is None or abs(mirror - np.conj(c)) > 1e-12 * scale:
                raise ValueError(f"potential is not real: c at {k} lacks a conjugate partner")

    @property
    def ambient_dim(self):
        return self.support.shape[1]

    @property
    def half_widths(self):
        return tuple(int(h) for h in np.abs(self.support).max(axis=0))

    @classmethod
    def from_box(cls, coeff_box):
        """Model whose support is the full centered box the array ``coeff_box`` spans.

        ``coeff_box`` has odd extents; entry [h_1 + k_1, ..., h_n + k_n]
        holds c_k.
        """
        coeff_box = np.asarray(coeff_box, dtype=np.complex128)
        half = [(s - 1) // 2 for s in coeff_box.shape]
        if any(2 * h + 1 != s for h, s in zip(half, coeff_box.shape)):
            raise DimensionError("coefficient box extents must be odd")
        freqs = box_frequencies(half)
        coeffs = coeff_box[tuple((freqs + np.array(half)).T)]
        return cls(freqs, coeffs)

    @classmethod
    def random(cls, half_widths, rng, zero_mean=True):
        """Random real potential with full box support.

        With ``zero_mean`` the DC coefficient is zero, which guarantees a
        sign change and hence a non-empty zero set.
        """
        freqs = box_frequencies(half_widths)
        coeffs = rng.standard_normal(len(freqs)) + 1j * rng.standard_normal(len(freqs))
        # the box is point-symmetric: reversed lexicographic order maps k to -k
        coeffs = 0.5 * (coeffs + np.conj(coeffs[::-1]))
        if zero_mean:
            coeffs[len(freqs) // 2] = 0.0
        return cls(freqs, coeffs)


@dataclass
class FeatureSupport:
    """Centered rectangular frequency box with optional Gaussian weighting.

    ``extent`` holds the odd box side lengths, ``sigma`` switches on the
    weights exp(-pi^2 sigma^2 |k|^2).
    """

    extent: tuple
    sigma: float = None
    _freqs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.extent = tuple(int(e) for e in self.extent)
        if any(e < 1 or e % 2 == 0 for e in self.extent):
            raise DimensionError(f"box extents must be odd and positive, got {self.extent}")
        self._freqs = box_frequencies(self.half_widths)

    @property
    def half_widths(self):
        return tuple((e - 1) // 2 for e in self.extent)

    @property
    def size(self):
        return int(np.prod(self.extent))

    @property
    def frequencies(self):
        return self._freqs

    def weights(self):
        if self.sigma is None:
            return np.ones(self.size)
        return np.exp(-(np.pi * self.sigma) ** 2 * np.sum(self._freqs ** 2, axis=1))

    def contains(self, support):
        support = np.atleast_2d(support)
        return bool(np.all(np.abs(support) <= np.array(self.half_widths)))


def eval_potential(m, x):
    """Evaluate psi at one point (shape (n,)) or a batch (shape (n, count))."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(m.ambient_dim, -1)
    vals = m.coeffs @ np.exp(2j * np.pi * (m.support @ pts))
    if np.any(np.abs(vals.imag) > 1e-12 * max(1.0, np.abs(m.coeffs).sum())):
        raise ValueError("potential has a non-negligible imaginary part")
    return float(vals.real[0]) if single else vals.real


def _chord_rng(seed, chord):
    # counter-based stream per chord so results do not depend on draw order
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, chord]))


def _bisect(m, a, b, fa):
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (a + b)
        fm = eval_potential(m, mid)
        if abs(fm) < BISECTION_TOL:
            return mid
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b = mid
    return None


def sample_levelset(m, count, seed, max_chords=None):
    """Draw ``count`` points of the zero set by bisection along random chords.

    Returns an (n, count) array. Each chord joins two uniform points of
    [0, 1)^n; chords without a sign change are discarded.
    """
    n = m.ambient_dim
    if count == 0:
        return np.zeros((n, 0))
    if max_chords is None:
        max_chords = 1000 + 200 * count
    out = []
    for chord in range(max_chords):
        ends = _chord_rng(seed, chord).random((2, n))
        fa, fb = eval_potential(m, ends[0]), eval_potential(m, ends[1])
        if abs(fa) < BISECTION_TOL:
            out.append(ends[0])
        elif fa * fb < 0:
            p = _bisect(m, ends[0], ends[1], fa)
            if p is not None:
                out.append(p)
        if len(out) == count:
            return np.stack(out, axis=1)
    raise SamplingError(
        f"found only {len(out)} of {count} zero-set points in {max_chords} chords; "
        "the zero set may be empty"
    )


def grid_has_zero_crossing(m, resolution=512):
    """Sign-change scan of psi on a regular grid (zero-set existence check)."""
    axes = [np.arange(resolution) / resolution] * m.ambient_dim
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")])
    vals = eval_potential(m, grid)
    return bool(vals.min() < 0 < vals.max())


def feature_map(x, s):
    """Exponential feature vector of one point, length |Gamma|."""
    x = np.asarray(x, dtype=float).ravel()
    return np.exp(2j * np.pi * (s.frequencies @ x)) * s.weights()


def feature_matrix(X, s):
    """Feature maps of the columns of X, shape (|Gamma|, count)."""
    X = np.asarray(X, dtype=float).reshape(len(s.extent), -1)
    return np.exp(2j * np.pi * (s.frequencies @ X)) * s.weights()[:, None]


def _kernel_1d(r, half, sigma):
    if sigma is None:
        # Dirichlet kernel sin((2h+1) pi r) / sin(pi r), equal to 2h+1 at integers
        num = np.sin((2 * half + 1) * np.pi * r)
        den = np.sin(np.pi * r)
        near = np.abs(den) < 1e-8
        safe = np.where(near, 1.0, den)
        out = num / safe
        if np.any(near):
            # at integer r the sum is 2h+1; second-order series covers the neighbourhood
            d = r - np.round(r)
            ks = np.arange(-half, half + 1)
            out = np.where(near, np.cos(2 * np.pi * np.multiply.outer(d, ks)).sum(-1), out)
        return out
    ks = np.arange(-half, half + 1)
    w2 = np.exp(-2 * (np.pi * sigma) ** 2 * ks ** 2)
    return np.cos(2 * np.pi * np.multiply.outer(r, ks)) @ w2


def gram_matrix(X, s):
    """Gram matrix Phi^H Phi from the shift-invariant kernel closed form.

    Entry (i, j) is kappa(x_j - x_i); the kernel factorizes over
    dimensions because the box and the Gaussian weights are separable.
    """
    X = np.asarray(X, dtype=float).reshape(len(s.extent), -1)
    K = np.ones((X.shape[1], X.shape[1]))
    for d, half in enumerate(s.half_widths):
        diff = X[d][None, :] - X[d][:, None]
        K = K * _kernel_1d(diff, half, s.sigma)
    return K


def shift_count(support, s):
    """|Gamma : Lambda|: integer shifts of ``support`` that stay inside Gamma."""
    support = np.atleast_2d(support)
    half = np.array(s.half_widths)
    lo = -half - support.min(axis=0)
    hi = half - support.max(axis=0)
    if np.any(hi < lo):
        return 0
    return int(np.prod(hi - lo + 1))


def valid_shifts(support, s):
    support = np.atleast_2d(support)
    half = np.array(s.half_widths)
    lo = -half - support.min(axis=0)
    hi = half - support.max(axis=0)
    return [np.array(t) for t in itertools.product(*[range(a, b + 1) for a, b in zip(lo, hi)])]


def padded_filter(m, s, shift=None):
    """Coefficients of psi zero-padded into Gamma, optionally shifted by ``shift``.

    The result is a length-|Gamma| vector in the lexicographic frequency
    order of ``s``; annihilation reads ``filt @ feature_matrix(X, s) == 0``.
    """
    shift = np.zeros(m.ambient_dim, dtype=np.int64) if shift is None else np.asarray(shift)
    target = m.support + shift
    if not s.contains(target):
        raise DimensionError("shifted support leaves the feature box")
    half = np.array(s.half_widths)
    strides = np.cumprod((np.array(s.extent)[::-1]))[::-1]
    strides = np.append(strides[1:], 1)
    idx = (target + half) @ strides
    filt = np.zeros(s.size, dtype=np.complex128)
    filt[idx] = m.coeffs / s.weights()[idx]
    return filt


def gaussian_cutoff(sigma):
    """Box extent beyond which Gaussian-weighted coefficients are negligible, 6/(pi sigma)."""
    return 6.0 / (np.pi * sigma)

"""Laplacian eigenmap embedding, phase binning and agreement metrics."""

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError


class EmbeddingWarning(UserWarning):
    pass


def _sign_fix(v):
    v = v / np.linalg.norm(v)
    i = np.argmax(np.abs(v))
    return v if v[i] >= 0 else -v


def embed(lap, m, generalized=False):
    """k x m coordinates from eigenvectors 2..m+1 of the Laplacian.

    The constant (first) eigenvector is skipped. Columns have unit norm
    and are sign-fixed so their largest-magnitude entry is positive. With
    ``generalized`` the problem L f = lambda D f is solved instead.
    """
    k = lap.frames
    if m == 0:
        return np.zeros((k, 0))
    if m + 1 > k:
        raise DimensionError(f"need {m + 1} eigenpairs but the graph has {k} frames")
    if generalized:
        deg = lap.degrees
        if np.any(deg <= 0):
            raise ValueError("generalized embedding needs positive degrees")
        values, vectors = sla.eigh(lap.L, np.diag(deg))
    else:
        eig = lap.eigen()
        values, vectors = eig.values, eig.vectors
    if m + 1 < k:
        scale = max(abs(values[-1]), np.finfo(float).tiny)
        if abs(values[m + 1] - values[m]) < 1e-8 * scale:
            warnings.warn("degenerate eigenvalue at the embedding cut", EmbeddingWarning, stacklevel=2)
    coords = np.real_if_close(vectors[:, 1 : m + 1])
    return np.stack([_sign_fix(coords[:, j]) for j in range(m)], axis=1)


@dataclass
class BinAssignment:
    resp: np.ndarray
    card: np.ndarray
    resp_edges: np.ndarray
    card_edges: np.ndarray
    n_resp: int
    n_card: int

    def populations(self):
        counts = np.zeros((self.n_resp, self.n_card), dtype=int)
        np.add.at(counts, (self.resp, self.card), 1)
        return counts


def quantile_bins(values, n_bins):
    """Equal-population bins by rank; ties keep frame order.

    Edge b is the smallest value in bin b (inf when the bin is empty).
    """
    values = np.asarray(values)
    k = values.size
    order = np.argsort(values, kind="stable")
    rank = np.empty(k, dtype=int)
    rank[order] = np.arange(k)
    bins = rank * n_bins // k
    first = [(b * k + n_bins - 1) // n_bins for b in range(1, n_bins)]
    edges = np.array([values[order[i]] if i < k else np.inf for i in first], dtype=float)
    return bins, edges


def assign_bins(coords, n_resp, n_card, resp_col=0, card_col=1):
    """Respiratory and cardiac quantile bins from two embedding columns."""
    coords = np.asarray(coords)
    if coords.ndim != 2 or coords.shape[1] < 2:
        raise DimensionError("need at least two embedding coordinates")
    if n_resp < 1 or n_card < 1:
        raise ValueError("bin counts must be positive")
    resp, redges = quantile_bins(coords[:, resp_col], n_resp)
    card, cedges = quantile_bins(coords[:, card_col], n_card)
    return BinAssignment(resp, card, redges, cedges, n_resp, n_card)


def phase_agreement(coord, theta):
    """|corr| between ``coord`` and its least-squares fit a cos(theta) + b sin(theta)."""
    coord = np.asarray(coord, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if coord.shape != theta.shape:
        raise DimensionError("coordinate and phase series differ in length")
    c = coord - coord.mean()
    if np.allclose(c, 0.0, atol=1e-14 * max(1.0, np.abs(coord).max())):
        return 0.0
    H = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    H = H - H.mean(axis=0)
    coef, *_ = np.linalg.lstsq(H, c, rcond=None)
    fit = H @ coef
    if np.linalg.norm(fit) == 0:
        return 0.0
    return float(abs(np.dot(fit, c)) / (np.linalg.norm(fit) * np.linalg.norm(c)))


def best_agreement(coords, theta):
    """Largest phase agreement over the columns of ``coords`` and its column index."""
    scores = [phase_agreement(coords[:, j], theta) for j in range(coords.shape[1])]
    j = int(np.argmax(scores))
    return scores[j], j


def pair_agreement(coords, theta_r, theta_c):
    """Best (resp, card) column pair scored by the weaker of its two agreements.

    Returns (score, resp_col, card_col) over distinct column pairs.
    """
    m = coords.shape[1]
    if m < 2:
        raise DimensionError("need at least two embedding coordinates")
    ar = [phase_agreement(coords[:, j], theta_r) for j in range(m)]
    ac = [phase_agreement(coords[:, j], theta_c) for j in range(m)]
    best = max((min(ar[i], ac[j]), i, j) for i in range(m) for j in range(m) if i != j)
    return best


def match_axes(coords, theta_r, theta_c):
    """Pick (resp_col, card_col) by phase agreement; reports whether the
    default order (first column respiratory) was swapped."""
    ar = [phase_agreement(coords[:, j], theta_r) for j in range(coords.shape[1])]
    ac = [phase_agreement(coords[:, j], theta_c) for j in range(coords.shape[1])]
    resp_col = int(np.argmax(ar))
    ac_masked = [a if j != resp_col else -1 for j, a in enumerate(ac)]
    card_col = int(np.argmax(ac_masked))
    return resp_col, card_col, (resp_col, card_col) != (0, 1)


def fold_phase(theta):
    """Map a phase to [0, pi] so theta and -theta coincide."""
    return np.arccos(np.cos(theta))


def circular_spread(theta):
    """Circular standard deviation sqrt(-2 ln R) of a set of angles."""
    theta = np.asarray(theta, dtype=float)
    if theta.size == 0:
        return np.nan
    R = np.abs(np.mean(np.exp(1j * theta)))
    return float(np.sqrt(-2.0 * np.log(max(R, 1e-300))))


def cardiac_bin_spreads(bins, theta_c, fold=True):
    th = fold_phase(theta_c) if fold else np.asarray(theta_c)
    return np.array([circular_spread(th[bins.card == b]) for b in range(bins.n_card)])


def gated_export(X, bins):
    """Mean image per (resp, card) bin.

    Returns ``(images, empty)`` with images of shape (n_resp, n_card, pixels)
    (zero where the bin is empty) and a boolean mask of empty bins.
    """
    X = np.asarray(X)
    if X.shape[1] != bins.resp.size:
        raise DimensionError("series and bin assignment differ in frame count")
    images = np.zeros((bins.n_resp, bins.n_card, X.shape[0]), dtype=X.dtype)
    empty = np.ones((bins.n_resp, bins.n_card), dtype=bool)
    for r in range(bins.n_resp):
        for c in range(bins.n_card):
            sel = (bins.resp == r) & (bins.card == c)
            if np.any(sel):
                images[r, c] = X[:, sel].mean(axis=1)
                empty[r, c] = False
    return images, empty


def sharpness(img):
    """Gradient energy of a square image given flat or 2-D."""
    img = np.abs(np.asarray(img))
    if img.ndim == 1:
        n = int(round(np.sqrt(img.size)))
        img = img.reshape(n, n)
    gy, gx = np.gradient(img)
    return float(np.sum(gx ** 2 + gy ** 2))


def write_bins_csv(path, bins):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "resp_bin", "card_bin"])
        for i, (r, c) in enumerate(zip(bins.resp, bins.card)):
            w.writerow([i, int(r), int(c)])


def read_bins_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    resp = np.array([int(r["resp_bin"]) for r in rows])
    card = np.array([int(r["card_bin"]) for r in rows])
    return resp, card


def to_pgm_bytes(img, window=None):
    """8-bit binary PGM of |img|, min-max windowed unless ``window`` is given."""
    img = np.abs(np.asarray(img, dtype=complex))
    lo, hi = (float(img.min()), float(img.max())) if window is None else window
    span = hi - lo if hi > lo else 1.0
    q = np.clip(np.rint((img - lo) / span * 255.0), 0, 255).astype(np.uint8)
    h, w = q.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + q.tobytes(), (lo, hi)


def write_pgm(path, img, window=None):
    """Write a PGM preview plus a ``.window.txt`` sidecar recording the window."""
    data, (lo, hi) = to_pgm_bytes(img, window)
    with open(path, "wb") as fh:
        fh.write(data)
    with open(f"{path}.window.txt", "w") as fh:
        fh.write(f"min {lo:.17g}\nmax {hi:.17g}\n")
    return lo, hi


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)

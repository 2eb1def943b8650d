"""Navigated golden-angle multi-coil acquisition and its adjoint.

Measurements are stored as a complex array of shape
``(frames, coils, lines_per_frame, samples_per_spoke)``; the first
``nav_count`` lines of every frame are the navigator spokes.

Fourier convention (unnormalized, pixel coordinates centered on n/2)::

    b(k) = sum_{y,x} img[y, x] * exp(-2j*pi*(kx*(x - n/2) + ky*(y - n/2)) / n)

The adjoint is the conjugate sum; inner products carry no density weights.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import DimensionError, TrajectoryError

GOLDEN_ANGLE = 111.246117975
NAV_ANGLES = {1: (0.0,), 2: (0.0, 90.0), 4: (0.0, 45.0, 90.0, 135.0)}
SAMPLING_MODES = ("radial_nudft", "cartesian_mask")


def coil_maps(n, coils=4):
    """Smooth raised-cosine coil lobes centred on the image quadrants.

    Each map carries a gentle linear phase. Lobes extend past the image so
    no pixel is seen by zero coils.
    """
    if coils < 1:
        raise ValueError("need at least one coil")
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    centres = [(n / 4, n / 4), (n / 4, 3 * n / 4), (3 * n / 4, n / 4), (3 * n / 4, 3 * n / 4)]
    radius = 1.25 * n
    maps = []
    for j in range(coils):
        cy, cx = centres[j % 4]
        # extra coils beyond four are rotated copies of the first ring
        angle = 2 * np.pi * (j // 4) / max(1, (coils + 3) // 4) / 4
        cy, cx = (
            n / 2 + (cy - n / 2) * np.cos(angle) - (cx - n / 2) * np.sin(angle),
            n / 2 + (cy - n / 2) * np.sin(angle) + (cx - n / 2) * np.cos(angle),
        )
        d = np.hypot(yy - cy, xx - cx) / radius
        mag = 0.5 * (1.0 + np.cos(np.pi * np.minimum(d, 1.0)))
        phase = np.pi / 4 * ((xx - n / 2) * np.cos(j) + (yy - n / 2) * np.sin(j)) / n
        maps.append(mag * np.exp(1j * phase))
    return np.stack(maps)


@dataclass
class AcquisitionSpec:
    """Sampling pattern, coils and noise level of the navigated acquisition."""

    n: int = 64
    frames: int = 300
    lines_per_frame: int = 10
    nav_count: int = 4
    samples_per_spoke: int = None
    coils: int = 4
    noise_std: float = 0.0
    sampling_mode: str = "radial_nudft"
    first_golden_index: int = 0
    maps: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.samples_per_spoke is None:
            self.samples_per_spoke = self.n
        if self.nav_count not in NAV_ANGLES:
            raise ValueError("nav_count must be 1, 2 or 4")
        if self.lines_per_frame <= self.nav_count:
            raise ValueError("lines_per_frame must exceed nav_count")
        if self.sampling_mode not in SAMPLING_MODES:
            raise ValueError(f"sampling_mode must be one of {SAMPLING_MODES}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.maps is None:
            self.maps = coil_maps(self.n, self.coils)
        self.maps = np.asarray(self.maps, dtype=np.complex128)
        if self.maps.shape != (self.coils, self.n, self.n):
            raise DimensionError("coil maps must have shape (coils, n, n)")

    @property
    def nav_angles(self):
        return NAV_ANGLES[self.nav_count]

    @property
    def golden_per_frame(self):
        return self.lines_per_frame - self.nav_count

    def golden_angles(self):
        """(frames, golden_per_frame) spoke angles in degrees."""
        g = self.golden_per_frame
        idx = self.first_golden_index + np.arange(self.frames * g)
        return np.mod(idx * GOLDEN_ANGLE, 180.0).reshape(self.frames, g)

    def angles(self):
        """(frames, lines_per_frame) angles: navigators first, then golden spokes."""
        nav = np.broadcast_to(np.array(self.nav_angles), (self.frames, self.nav_count))
        return np.concatenate([nav, self.golden_angles()], axis=1)

    def radii(self):
        m = self.samples_per_spoke
        return (np.arange(m) - m // 2) * (self.n / m)

    def coords(self):
        """k-space sample locations (frames, lines, samples, 2) as (ky, kx)."""
        th = np.deg2rad(self.angles())[..., None]
        r = self.radii()
        kx = r * np.cos(th)
        ky = r * np.sin(th)
        return np.stack([ky, kx], axis=-1)

    def with_frames(self, frames, first_golden_index=None):
        """Same acquisition restricted to a contiguous frame budget."""
        g0 = self.first_golden_index if first_golden_index is None else first_golden_index
        return AcquisitionSpec(
            n=self.n, frames=frames, lines_per_frame=self.lines_per_frame,
            nav_count=self.nav_count, samples_per_spoke=self.samples_per_spoke,
            coils=self.coils, noise_std=self.noise_std, sampling_mode=self.sampling_mode,
            first_golden_index=g0, maps=self.maps,
        )


class Acquisition:
    """Linear operator A of the acquisition, with adjoint and normal operator.

    The normal operator A^H A is applied per frame as a convolution with the
    frame's point-spread function: exact Toeplitz embedding on a 2n grid for
    radial sampling, a circulant mask on the n grid for Cartesian sampling.
    ``coords`` overrides the trajectory from ``spec`` with explicit (ky, kx)
    sample locations of shape (frames, lines, samples, 2).
    """

    def __init__(self, spec, coords=None):
        self.spec = spec
        self.n = spec.n
        self.maps = spec.maps
        self._coords = spec.coords() if coords is None else np.asarray(coords, dtype=float)
        expect = (spec.frames, spec.lines_per_frame, spec.samples_per_spoke, 2)
        if self._coords.shape != expect:
            raise DimensionError(f"sample coordinates must have shape {expect}")
        half = self.n / 2
        if np.any(np.abs(self._coords) > half + 1e-9):
            raise TrajectoryError("spoke samples fall outside the Nyquist box")
        self._psf = None
        if spec.sampling_mode == "cartesian_mask":
            grid = np.mod(np.rint(self._coords).astype(np.int64), self.n)
            self._grid_idx = grid[..., 0] * self.n + grid[..., 1]

    @property
    def frames(self):
        return self.spec.frames

    @property
    def meas_shape(self):
        s = self.spec
        return (s.frames, s.coils, s.lines_per_frame, s.samples_per_spoke)

    def _check_series(self, X):
        X = np.asarray(X)
        if X.shape != (self.n * self.n, self.frames):
            raise DimensionError(
                f"expected Casorati matrix of shape {(self.n * self.n, self.frames)}, got {X.shape}"
            )
        return X

    def _check_meas(self, B):
        B = np.asarray(B)
        if B.shape != self.meas_shape:
            raise DimensionError(f"expected measurements of shape {self.meas_shape}, got {B.shape}")
        return B

    def _exps(self, i, sign):
        pix = np.arange(self.n) - self.n / 2
        c = self._coords[i].reshape(-1, 2)
        ey = np.exp(sign * 2j * np.pi * np.outer(c[:, 0], pix) / self.n)
        ex = np.exp(sign * 2j * np.pi * np.outer(c[:, 1], pix) / self.n)
        return ey, ex

    def forward(self, X):
        X = self._check_series(X)
        s = self.spec
        B = np.empty(self.meas_shape, dtype=np.complex128)
        for i in range(self.frames):
            imgs = self.maps * X[:, i].reshape(self.n, self.n)
            if s.sampling_mode == "radial_nudft":
                ey, ex = self._exps(i, -1)
                t = imgs @ ex.T  # (coils, y, samples)
                vals = np.einsum("sy,cys->cs", ey, t)
            else:
                g = sfft.fft2(sfft.ifftshift(imgs, axes=(-2, -1)))
                vals = g.reshape(s.coils, -1)[:, self._grid_idx[i].ravel()]
            B[i] = vals.reshape(s.coils, s.lines_per_frame, s.samples_per_spoke)
        return B

    def adjoint(self, B):
        B = self._check_meas(B)
        s = self.spec
        n = self.n
        X = np.empty((n * n, self.frames), dtype=np.complex128)
        for i in range(self.frames):
            b = B[i].reshape(s.coils, -1)
            if s.sampling_mode == "radial_nudft":
                ey, ex = self._exps(i, 1)
                imgs = (ey.T[None, :, :] * b[:, None, :]) @ ex
            else:
                grid = np.zeros((s.coils, n * n), dtype=np.complex128)
                for c in range(s.coils):
                    np.add.at(grid[c], self._grid_idx[i].ravel(), b[c])
                grid = grid.reshape(s.coils, n, n)
                imgs = sfft.fftshift(sfft.ifft2(grid) * (n * n), axes=(-2, -1))
            acc = np.zeros((n, n), dtype=np.complex128)
            for c in range(s.coils):
                acc += np.conj(self.maps[c]) * imgs[c]
            X[:, i] = acc.ravel()
        return X

    # -- normal operator -------------------------------------------------

    def psf_spectra(self):
        """Real per-frame spectra of A_i^H A_i's convolution kernel.

        Shape (frames, g, g) with g = 2n (radial) or n (Cartesian).
        """
        if self._psf is None:
            self._psf = self._compute_psf()
        return self._psf

    def _compute_psf(self):
        n = self.n
        s = self.spec
        if s.sampling_mode == "cartesian_mask":
            out = np.zeros((self.frames, n * n))
            for i in range(self.frames):
                np.add.at(out[i], self._grid_idx[i].ravel(), 1.0)
            return out.reshape(self.frames, n, n) * (n * n)
        g = 2 * n
        lag = np.arange(g)
        lag = np.where(lag >= n, lag - g, lag).astype(float)
        out = np.empty((self.frames, g, g))
        for i in range(self.frames):
            c = self._coords[i].reshape(-1, 2)
            ey = np.exp(2j * np.pi * np.outer(c[:, 0], lag) / n)
            ex = np.exp(2j * np.pi * np.outer(c[:, 1], lag) / n)
            kern = ey.T @ ex
            # lag -n is never reached by the linear convolution; zeroing it
            # keeps the kernel Hermitian so its spectrum is real
            kern[n, :] = 0
            kern[:, n] = 0
            out[i] = sfft.fft2(kern).real
        return out

    def to_grid(self, imgs):
        """FFT of images (..., n, n) onto the normal-operator grid."""
        n = self.n
        if self.spec.sampling_mode == "cartesian_mask":
            return sfft.fft2(sfft.ifftshift(imgs, axes=(-2, -1)))
        pad = np.zeros(imgs.shape[:-2] + (2 * n, 2 * n), dtype=np.complex128)
        pad[..., :n, :n] = imgs
        return sfft.fft2(pad)

    def from_grid(self, spec):
        n = self.n
        if self.spec.sampling_mode == "cartesian_mask":
            return sfft.fftshift(sfft.ifft2(spec), axes=(-2, -1))
        return sfft.ifft2(spec)[..., :n, :n]

    def normal(self, X):
        """A^H A X, frame by frame."""
        X = self._check_series(X)
        psf = self.psf_spectra()
        n = self.n
        out = np.empty_like(X, dtype=np.complex128)
        for i in range(self.frames):
            imgs = self.maps * X[:, i].reshape(n, n)
            conv = self.from_grid(psf[i] * self.to_grid(imgs))
            out[:, i] = np.sum(np.conj(self.maps) * conv, axis=0).ravel()
        return out

    def gridding_recon(self, B):
        """Density-compensated adjoint with coil combination, frame by frame.

        Radial: ramp weights pi*|r|/L per sample (1/(4L) at the centre),
        inverse DFT normalized by n^2. Cartesian: zero filling with
        averaging of repeated grid hits.
        """
        B = self._check_meas(B)
        s = self.spec
        n = self.n
        if s.sampling_mode == "radial_nudft":
            r = np.abs(self.spec.radii())
            w = np.where(r == 0, 0.25, np.pi * r) / s.lines_per_frame / (n * n)
            Bw = B * w
        else:
            hits = self.psf_spectra() / (n * n)
            Bw = np.empty_like(B)
            for i in range(self.frames):
                cnt = hits[i].ravel()[self._grid_idx[i]]
                Bw[i] = B[i] / cnt / (n * n)
        X = self.adjoint(Bw)
        norm = np.sum(np.abs(self.maps) ** 2, axis=0).ravel()
        return X / norm[:, None]


def add_noise(B, noise_std, seed):
    """Add i.i.d. circular complex Gaussian noise of std ``noise_std`` per sample."""
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    if noise_std == 0:
        return np.array(B, copy=True)
    rng = np.random.default_rng(seed)
    shape = np.shape(B)
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return B + noise * (noise_std / np.sqrt(2.0))


def noise_std_for_snr(B, snr_db):
    """Noise std giving ``snr_db`` relative to the RMS sample magnitude of B."""
    rms = np.sqrt(np.mean(np.abs(B) ** 2))
    return float(rms * 10 ** (-snr_db / 20.0))


def extract_navigators(B, spec, angles=None):
    """Navigator matrix: column i stacks frame i's navigator samples, coil-major.

    ``angles`` selects a subset of the acquired navigator angles (e.g.
    ``(0, 90)``); by default all navigators are kept.
    """
    B = np.asarray(B)
    nav = list(spec.nav_angles)
    if angles is None:
        idx = list(range(spec.nav_count))
    else:
        try:
            idx = [nav.index(float(a)) for a in angles]
        except ValueError:
            raise ValueError(f"navigator angles {angles} not among acquired {nav}") from None
    Z = B[:, :, idx, :]
    return Z.reshape(B.shape[0], -1).T.copy()

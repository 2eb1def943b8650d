"""Synthetic free-breathing cardiac phantom driven by two latent phases."""

from dataclasses import dataclass, field

import numpy as np

# frames per second implied by 1000 frames in 45 s; used to convert
# physiological rates (per minute) to cycles per 1000 frames
FRAMES_PER_SECOND = 1000 / 45.0


def per_minute_to_per_kframe(rate_per_min):
    return rate_per_min / 60.0 / FRAMES_PER_SECOND * 1000.0


@dataclass
class Episode:
    """Frames [start, stop) whose respiratory amplitude is scaled by ``multiplier``."""

    start: int
    stop: int
    multiplier: float


@dataclass
class PhantomSpec:
    """Latent parameterization of the phantom.

    Rates are in cycles per 1000 frames. When ``theta_c``/``theta_r`` are
    given they override the rate-generated phase series.
    """

    n: int = 64
    frames: int = 300
    cardiac_rate: float = per_minute_to_per_kframe(68)
    resp_rate: float = per_minute_to_per_kframe(16)
    resp_amplitude: float = 4.0  # pixels at n = 64, scaled with n
    rate_jitter: float = 0.02
    episodes: list = field(default_factory=list)
    theta_c: np.ndarray = None
    theta_r: np.ndarray = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 16 or self.frames < 10:
            raise ValueError("phantom needs n >= 16 and at least 10 frames")
        if self.n % 2:
            raise ValueError("grid size must be even")
        self.episodes = [e if isinstance(e, Episode) else Episode(*e) for e in self.episodes]
        for name in ("theta_c", "theta_r"):
            th = getattr(self, name)
            if th is not None:
                th = np.asarray(th, dtype=float)
                if th.shape != (self.frames,) or not np.all(np.isfinite(th)):
                    raise ValueError(f"{name} must be a finite series of length {self.frames}")
                setattr(self, name, th)

    def phases(self):
        """Return (theta_c, theta_r) wrapped to [0, 2 pi)."""
        rng = np.random.default_rng(self.seed)
        out = []
        for given, rate in ((self.theta_c, self.cardiac_rate), (self.theta_r, self.resp_rate)):
            offset = rng.uniform(0, 2 * np.pi)
            # slowly varying instantaneous rate (smoothed random walk)
            walk = np.cumsum(rng.standard_normal(self.frames)) / np.sqrt(self.frames)
            if given is not None:
                out.append(np.mod(given, 2 * np.pi))
                continue
            inst = rate / 1000.0 * (1.0 + self.rate_jitter * walk)
            theta = offset + 2 * np.pi * np.concatenate([[0.0], np.cumsum(inst[:-1])])
            out.append(np.mod(theta, 2 * np.pi))
        return out[0], out[1]

    def amplitude_series(self):
        mult = np.ones(self.frames)
        for e in self.episodes:
            mult[max(e.start, 0):min(e.stop, self.frames)] *= e.multiplier
        return mult

    def displacement(self, theta_r=None):
        """Vertical diaphragm displacement per frame, in pixels."""
        if theta_r is None:
            theta_r = self.phases()[1]
        scale = self.n / 64.0
        return self.resp_amplitude * scale * np.sin(theta_r) * self.amplitude_series()


def _soft_ellipse(yy, xx, cy, cx, ry, rx, edge=0.6):
    rho = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    dist = (1.0 - rho) * np.sqrt(rx * ry)
    return 0.5 * (1.0 + np.tanh(dist / edge))


def _paint(img, mask, value):
    return img * (1.0 - mask) + value * mask


def render_frame(n, theta_c, displacement):
    """One phantom image for cardiac phase ``theta_c`` and diaphragm shift."""
    s = n / 64.0
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    yy -= n / 2
    xx -= n / 2
    img = np.zeros((n, n))
    img = _paint(img, _soft_ellipse(yy, xx, 0, 0, 22 * s, 28 * s), 0.35)
    img = _paint(img, _soft_ellipse(yy, xx, -6 * s, -13 * s, 12 * s, 8 * s), 0.05)
    img = _paint(img, _soft_ellipse(yy, xx, -6 * s, 13 * s, 12 * s, 8 * s), 0.05)
    dy = displacement
    img = _paint(img, _soft_ellipse(yy, xx, 15 * s + dy, 6 * s, 7 * s, 14 * s), 0.5)
    img = _paint(img, _soft_ellipse(yy, xx, -2 * s + dy, 2 * s, 9 * s, 10 * s), 0.6)
    inner = 5.0 * s * (1.0 + 0.3 * np.cos(theta_c))
    img = _paint(img, _soft_ellipse(yy, xx, -2 * s + dy, 2 * s, inner, inner * 1.1), 1.0)
    return img


def make_phantom(spec):
    """Ground-truth Casorati matrix (n^2 x frames, complex) and phase series."""
    theta_c, theta_r = spec.phases()
    disp = spec.displacement(theta_r)
    frames = [render_frame(spec.n, tc, d).ravel() for tc, d in zip(theta_c, disp)]
    X = np.stack(frames, axis=1)
    X /= X.max()
    return X.astype(np.complex128), theta_c, theta_r


def high_motion_frames(spec, quantile=0.75):
    """Frames whose |diaphragm displacement| exceeds the given quantile."""
    d = np.abs(spec.displacement())
    return d > np.quantile(d, quantile)

import numpy as np
import pytest

from manifoldmri.phantom import (
    Episode, PhantomSpec, high_motion_frames, make_phantom, per_minute_to_per_kframe,
    render_frame,
)


def peak_frequency(series, lo, hi):
    """Frequency (cycles per 1000 frames) of the periodogram maximum in [lo, hi]."""
    x = series - series.mean()
    P = np.abs(np.fft.rfft(x * np.hanning(x.size))) ** 2
    f = np.fft.rfftfreq(x.size) * 1000
    band = (f >= lo) & (f <= hi)
    return f[band][np.argmax(P[band])]


def test_rate_conversion():
    # 1000 frames span 45 s
    assert per_minute_to_per_kframe(60) == pytest.approx(45.0)
    assert PhantomSpec().cardiac_rate == pytest.approx(68 * 45 / 60)


def test_no_motion_frames_identical():
    spec = PhantomSpec(n=32, frames=12, theta_c=np.zeros(12), theta_r=np.zeros(12))
    X, _, _ = make_phantom(spec)
    assert np.all(X == X[:, :1])


def test_equal_phases_equal_images():
    k = 20
    rng = np.random.default_rng(0)
    tc, tr = rng.uniform(0, 2 * np.pi, k), rng.uniform(0, 2 * np.pi, k)
    tc[7], tr[7] = tc[2], tr[2]
    X, _, _ = make_phantom(PhantomSpec(n=32, frames=k, theta_c=tc, theta_r=tr))
    assert np.array_equal(X[:, 2], X[:, 7])
    assert not np.array_equal(X[:, 2], X[:, 3])


def test_properties_of_default():
    spec = PhantomSpec()
    X, tc, tr = make_phantom(spec)
    assert X.shape == (64 * 64, 300)
    assert np.abs(X).max() == pytest.approx(1.0)
    assert np.all(X.imag == 0)
    for th in (tc, tr):
        assert th.shape == (300,) and np.all((th >= 0) & (th < 2 * np.pi))
    X2, _, _ = make_phantom(PhantomSpec())
    assert X.tobytes() == X2.tobytes()
    assert not np.array_equal(make_phantom(PhantomSpec(seed=1))[1], tc)


def test_difference_energy_periodic_at_both_rates():
    spec = PhantomSpec()
    X, _, _ = make_phantom(spec)
    energy = np.sum(np.abs(np.diff(X, axis=1)) ** 2, axis=0)
    fc, fr = spec.cardiac_rate, spec.resp_rate
    # motion energy is quadratic in the phase velocity, so its lines sit at twice each rate
    assert abs(peak_frequency(energy, 1.5 * fc, 2.5 * fc) - 2 * fc) < 5
    assert abs(peak_frequency(energy, 1.5 * fr, 2.5 * fr) - 2 * fr) < 5
    # the per-pixel signals carry the fundamentals
    Xr = X.real - X.real.mean(axis=1, keepdims=True)
    P = (np.abs(np.fft.rfft(Xr * np.hanning(300), axis=1)) ** 2).sum(axis=0)
    f = np.fft.rfftfreq(300) * 1000
    for rate in (fc, fr):
        band = np.abs(f - rate) < 5
        far = (np.abs(f - rate) > 8) & (np.abs(f - rate) < 20) & (f > 2)
        assert P[band].max() > 3 * np.median(P[far])


def test_heart_radius_modulation():
    n = 64
    a = render_frame(n, 0.0, 0.0)  # cos = 1, largest blood pool
    b = render_frame(n, np.pi, 0.0)
    assert np.sum(a > 0.9) > np.sum(b > 0.9)


def test_displacement_moves_heart_down():
    n = 64
    a, b = render_frame(n, 0.0, 0.0), render_frame(n, 0.0, 3.0)
    rows = np.arange(n)
    ca = np.sum(rows[:, None] * (a > 0.9)) / np.sum(a > 0.9)
    cb = np.sum(rows[:, None] * (b > 0.9)) / np.sum(b > 0.9)
    assert cb - ca == pytest.approx(3.0, abs=0.3)


def test_episodes_scale_amplitude():
    spec = PhantomSpec(frames=100, episodes=[(10, 30, 2.0), Episode(50, 60, 0.0)])
    base = PhantomSpec(frames=100)
    d, d0 = spec.displacement(), base.displacement()
    np.testing.assert_allclose(d[10:30], 2 * d0[10:30])
    np.testing.assert_allclose(d[50:60], 0)
    np.testing.assert_allclose(d[:10], d0[:10])


def test_high_motion_fraction():
    mask = high_motion_frames(PhantomSpec())
    assert mask.mean() == pytest.approx(0.25, abs=0.01)


@pytest.mark.parametrize("kwargs", [dict(n=8), dict(n=33), dict(frames=5),
                                    dict(frames=10, theta_c=np.zeros(9))])
def test_invalid_specs(kwargs):
    with pytest.raises(ValueError):
        PhantomSpec(**kwargs)

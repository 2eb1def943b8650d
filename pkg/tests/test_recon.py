import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from manifoldmri.acquisition import Acquisition, AcquisitionSpec
from manifoldmri.errors import DimensionError, SolverError
from manifoldmri.laplacian import GraphLaplacian
from manifoldmri.recon import (
    CompressedNormal, TruncatedBasis, conjugate_gradient, eigen_truncate, nrmse,
    solve_full, solve_truncated,
)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def ring_laplacian(k, rng=None):
    W = np.zeros((k, k))
    for i in range(k):
        W[i, (i + 1) % k] = W[(i + 1) % k, i] = 1.0 if rng is None else rng.uniform(0.5, 1.5)
    return GraphLaplacian(W)


def tiny_cartesian(frames=20, coils=2, n=8):
    return Acquisition(AcquisitionSpec(n=n, frames=frames, coils=coils, sampling_mode="cartesian_mask"))


def full_grid_op(frames=4, n=8):
    """Fully sampled Cartesian grid, single all-ones coil: A^H A = n^2 I."""
    spec = AcquisitionSpec(n=n, frames=frames, coils=1, lines_per_frame=n, samples_per_spoke=n,
                           sampling_mode="cartesian_mask", maps=np.ones((1, n, n)))
    g = np.arange(n) - n // 2
    coords = np.zeros((frames, n, n, 2))
    coords[..., 0] = g[None, :, None]
    coords[..., 1] = g[None, None, :]
    return Acquisition(spec, coords=coords)


def explicit_matrix(op, frame):
    """Oracle: the dense matrix of frame ``frame``'s forward operator."""
    npix = op.n * op.n
    cols = []
    for p in range(npix):
        X = np.zeros((npix, op.frames), complex)
        X[p, frame] = 1.0
        cols.append(op.forward(X)[frame].ravel())
    return np.stack(cols, axis=1)


class TestTruncate:
    def test_two_components(self):
        W = np.zeros((6, 6))
        W[0, 1] = W[1, 0] = W[1, 2] = W[2, 1] = 1
        W[3, 4] = W[4, 3] = W[4, 5] = W[5, 4] = 1
        b = eigen_truncate(GraphLaplacian(W), 3)
        np.testing.assert_allclose(b.values[:2], 0, atol=1e-12)
        assert b.values[2] > 0.1

    def test_full_rank_unitary(self, rng):
        b = eigen_truncate(ring_laplacian(9, rng), 9)
        np.testing.assert_allclose(b.vectors.conj().T @ b.vectors, np.eye(9), atol=1e-10)
        assert np.all(np.diff(b.values) >= 0)

    def test_smallest_pair_constant(self, rng):
        b = eigen_truncate(ring_laplacian(7, rng), 1)
        assert b.values[0] == pytest.approx(0, abs=1e-12)
        v = b.vectors[:, 0]
        np.testing.assert_allclose(np.abs(v), 1 / np.sqrt(7), atol=1e-10)

    def test_negative_clamped(self):
        W = np.array([[0, -1.0, 0.1], [-1.0, 0, 0.1], [0.1, 0.1, 0]])
        with pytest.warns(RuntimeWarning):
            b = eigen_truncate(GraphLaplacian(W), 3)
        assert "negative-eigenvalues-clamped" in b.flags
        assert np.all(b.values >= 0)

    def test_rank_range(self, rng):
        with pytest.raises(ValueError):
            eigen_truncate(ring_laplacian(4), 5)


class TestNrmse:
    def test_cases(self, rng):
        T = crandn(rng, 5, 3)
        assert nrmse(T, T) == 0
        assert nrmse(np.zeros_like(T), T) == pytest.approx(1)
        assert nrmse(2 * T, T) == pytest.approx(1)

    def test_errors(self):
        with pytest.raises(ValueError):
            nrmse(np.ones(3), np.zeros(3))
        with pytest.raises(DimensionError):
            nrmse(np.ones(3), np.ones(4))


class TestCG:
    def test_solves_spd(self, rng):
        A = rng.standard_normal((12, 12))
        H = A @ A.T + np.eye(12)
        b = crandn(rng, 12)
        x, log = conjugate_gradient(lambda v: H @ v, b, tol=1e-12, maxiter=200)
        np.testing.assert_allclose(H @ x, b, atol=1e-9)
        assert log.converged
        assert len(log.lines()) == len(log.residuals)

    @settings(max_examples=10)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_energy_monotone(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((15, 15))
        H = A @ A.T + 0.1 * np.eye(15)
        _, log = conjugate_gradient(lambda v: H @ v, crandn(rng, 15), tol=1e-14, maxiter=30)
        e = np.array(log.energies)
        assert np.all(np.diff(e) <= 1e-10 * np.abs(e).max())

    def test_zero_rhs(self):
        x, log = conjugate_gradient(lambda v: v, np.zeros(4, complex))
        assert not np.any(x) and log.converged


class TestSolveFull:
    def test_fully_sampled_lambda_zero(self, rng):
        op = full_grid_op()
        X = crandn(rng, 64, 4)
        Xr, log = solve_full(op.forward(X), op, None, 0.0)
        assert nrmse(Xr, X) < 1e-8

    def test_no_laplacian_is_framewise_least_squares(self, rng):
        op = tiny_cartesian(frames=3, coils=1)
        X = crandn(rng, 64, 3)
        B = op.forward(X)
        Xr, _ = solve_full(B, op, GraphLaplacian(np.zeros((3, 3))), 1.0, tol=1e-12)
        for i in range(3):
            A = explicit_matrix(op, i)
            ref = np.linalg.lstsq(A, B[i].ravel(), rcond=None)[0]  # minimum-norm solution
            np.testing.assert_allclose(Xr[:, i], ref, atol=1e-8)

    def test_large_lambda_flattens(self, rng):
        op = tiny_cartesian(frames=6)
        B = op.forward(crandn(rng, 64, 6))
        spread = []
        for lam in (0.0, 1e6):
            X, _ = solve_full(B, op, ring_laplacian(6), lam, tol=1e-12, maxiter=2000)
            spread.append(np.linalg.norm(X - X.mean(axis=1, keepdims=True)) / np.linalg.norm(X))
        assert spread[1] < 1e-3 < spread[0]

    def test_guard(self):
        op = Acquisition(AcquisitionSpec(n=64, frames=30, sampling_mode="cartesian_mask"))
        with pytest.raises(SolverError, match="solve_truncated"):
            solve_full(np.zeros(op.meas_shape, complex), op, None, 1.0)


class TestSolveTruncated:
    def test_matches_full_at_full_rank(self, rng):
        op = tiny_cartesian()
        B = op.forward(crandn(rng, 64, 20))
        lap = ring_laplacian(20, rng)
        Xf, _ = solve_full(B, op, lap, 0.3, tol=1e-12, maxiter=2000)
        _, Xt, _ = solve_truncated(B, op, eigen_truncate(lap, 20), 0.3, tol=1e-12, maxiter=2000)
        assert nrmse(Xt, Xf) < 1e-6

    def test_unpenalized_constant_coefficient(self, rng):
        op = full_grid_op(frames=5)
        X = crandn(rng, 64, 5)
        basis = eigen_truncate(ring_laplacian(5, rng), 3)
        U, _, _ = solve_truncated(op.forward(X), op, basis, 10.0, tol=1e-12)
        np.testing.assert_allclose(U[:, 0], X @ basis.vectors[:, 0].conj(), atol=1e-9)

    def test_phase_invariance(self, rng):
        op = tiny_cartesian(frames=8)
        B = op.forward(crandn(rng, 64, 8))
        basis = eigen_truncate(ring_laplacian(8, rng), 5)
        Q = np.exp(2j * np.pi * rng.random(5))
        rotated = TruncatedBasis(basis.vectors * Q, basis.values)
        _, X1, _ = solve_truncated(B, op, basis, 0.5, tol=1e-15, maxiter=3000)
        _, X2, _ = solve_truncated(B, op, rotated, 0.5, tol=1e-15, maxiter=3000)
        assert np.linalg.norm(X1 - X2) / np.linalg.norm(X1) < 1e-10

    def test_regularizer_identity(self, rng):
        lap = ring_laplacian(10, rng)
        basis = eigen_truncate(lap, 10)
        U = crandn(rng, 16, 10)
        X = U @ basis.vectors.conj().T
        direct = np.trace(X @ lap.L @ X.conj().T).real
        assert direct == pytest.approx(np.sum(basis.values * np.sum(np.abs(U) ** 2, axis=0)), rel=1e-10)

    def test_energy_monotone(self, rng):
        op = tiny_cartesian()
        B = op.forward(crandn(rng, 64, 20))
        _, _, log = solve_truncated(B, op, eigen_truncate(ring_laplacian(20), 6), 1.0, tol=1e-10)
        e = np.array(log.energies)
        assert np.all(np.diff(e) <= 1e-10 * np.abs(e).max())

    @pytest.mark.parametrize("mode", ["radial_nudft", "cartesian_mask"])
    def test_compressed_normal(self, rng, mode):
        op = Acquisition(AcquisitionSpec(n=16, frames=6, coils=2, sampling_mode=mode))
        V = eigen_truncate(ring_laplacian(6, rng), 4).vectors
        U = crandn(rng, 256, 4)
        ref = op.normal(U @ V.conj().T) @ V
        out = CompressedNormal(op, V)(U)
        assert np.linalg.norm(out - ref) / np.linalg.norm(ref) < 1e-10

    def test_preconditioned_same_answer(self, rng):
        op = tiny_cartesian()
        B = op.forward(crandn(rng, 64, 20))
        basis = eigen_truncate(ring_laplacian(20), 6)
        _, X1, _ = solve_truncated(B, op, basis, 1.0, tol=1e-12, maxiter=1000)
        _, X2, _ = solve_truncated(B, op, basis, 1.0, tol=1e-12, maxiter=1000, precondition=True)
        assert nrmse(X2, X1) < 1e-8

    def test_input_checks(self, rng):
        op = tiny_cartesian()
        basis = eigen_truncate(ring_laplacian(20), 4)
        B = np.zeros(op.meas_shape, complex)
        with pytest.raises(DimensionError):
            solve_truncated(B[:, :1], op, basis, 1.0)
        with pytest.raises(DimensionError):
            solve_truncated(B, op, eigen_truncate(ring_laplacian(10), 4), 1.0)
        B[0, 0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            solve_truncated(B, op, basis, 1.0)

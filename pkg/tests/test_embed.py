import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from manifoldmri.embed import (
    EmbeddingWarning, assign_bins, best_agreement, cardiac_bin_spreads, circular_spread,
    embed, fold_phase, gated_export, match_axes, pair_agreement, phase_agreement,
    quantile_bins,
    read_bins_csv, read_pgm, sharpness, to_pgm_bytes, write_bins_csv, write_pgm,
)
from manifoldmri.errors import DimensionError
from manifoldmri.laplacian import GraphLaplacian, auto_sigma, exp_weights, irls_estimate


def two_clusters():
    W = np.zeros((10, 10))
    W[:5, :5] = 1.0
    W[5:, 5:] = 1.0
    np.fill_diagonal(W, 0)
    W[4, 5] = W[5, 4] = 0.05  # weak bridge
    return GraphLaplacian(W)


def path_graph(k):
    W = np.zeros((k, k))
    idx = np.arange(k - 1)
    W[idx, idx + 1] = W[idx + 1, idx] = 1.0 + 0.1 * idx
    return GraphLaplacian(W)


@pytest.fixture(scope="module")
def default_laplacians(default_phantom):
    Z = default_phantom["Z"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return irls_estimate(Z).laplacian, exp_weights(Z, auto_sigma(Z), knn=2)


class TestEmbed:
    def test_spectral_bipartition(self):
        c = embed(two_clusters(), 1)[:, 0]
        assert np.all(np.sign(c[:5]) == np.sign(c[0]))
        assert np.all(np.sign(c[5:]) == -np.sign(c[0]))

    def test_constant_skipped(self):
        c = embed(path_graph(12), 4)
        np.testing.assert_allclose(c.T @ np.ones(12), 0, atol=1e-10)
        np.testing.assert_allclose(np.linalg.norm(c, axis=0), 1)

    def test_sign_fix(self):
        c = embed(path_graph(12), 3)
        for j in range(3):
            assert c[np.argmax(np.abs(c[:, j])), j] > 0

    def test_empty(self):
        assert embed(path_graph(5), 0).shape == (5, 0)

    def test_too_many(self):
        with pytest.raises(DimensionError):
            embed(path_graph(4), 4)

    def test_degenerate_cut_warns(self):
        W = np.ones((5, 5)) - np.eye(5)  # complete graph: eigenvalue 5 with multiplicity 4
        with pytest.warns(EmbeddingWarning):
            embed(GraphLaplacian(W), 2)

    @given(st.floats(1e-3, 1e3))
    def test_scale_invariance(self, c):
        lap = path_graph(9)
        np.testing.assert_allclose(embed(lap.scaled(c), 3), embed(lap, 3), atol=1e-8)

    def test_generalized(self):
        lap = path_graph(8)
        c = embed(lap, 2, generalized=True)
        D = np.diag(lap.degrees)
        # generalized eigenvectors are D-orthogonal to the constant vector
        np.testing.assert_allclose(np.ones(8) @ D @ c, 0, atol=1e-10)


class TestBins:
    def test_single_bin(self, rng):
        b = assign_bins(rng.random((7, 2)), 1, 1)
        assert np.all(b.resp == 0) and np.all(b.card == 0)
        assert b.populations().tolist() == [[7]]

    def test_quantile_example(self):
        bins, _ = quantile_bins(np.arange(8.0), 4)
        assert bins.tolist() == [0, 0, 1, 1, 2, 2, 3, 3]

    def test_more_bins_than_frames(self):
        bins, edges = quantile_bins(np.array([2.0, 1.0]), 3)
        assert bins.tolist() == [1, 0] and edges[-1] == np.inf

    def test_ties_by_frame_index(self):
        bins, _ = quantile_bins(np.zeros(6), 3)
        assert bins.tolist() == [0, 0, 1, 1, 2, 2]

    @given(st.integers(2, 60), st.integers(1, 9), st.integers(1, 9), st.integers(0, 2 ** 32 - 1))
    def test_population_balance(self, k, nr, nc, seed):
        rng = np.random.default_rng(seed)
        b = assign_bins(rng.standard_normal((k, 3)), nr, nc)
        pop = b.populations()
        assert pop.sum() == k
        for axis_pop in (pop.sum(axis=1), pop.sum(axis=0)):
            assert axis_pop.max() - axis_pop.min() <= 1
        assert b.resp.min() >= 0 and b.resp.max() < nr and b.card.max() < nc

    def test_needs_two_columns(self):
        with pytest.raises(DimensionError):
            assign_bins(np.zeros((5, 1)), 2, 2)


class TestAgreement:
    def test_cosine_is_one(self, rng):
        th = rng.uniform(0, 2 * np.pi, 100)
        assert phase_agreement(np.cos(th), th) == pytest.approx(1.0)
        assert phase_agreement(0.3 * np.cos(th) - 2 * np.sin(th) + 5, th) == pytest.approx(1.0)

    def test_constant_zero(self, rng):
        assert phase_agreement(np.full(50, 3.0), rng.random(50)) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            phase_agreement(np.ones(3), np.ones(4))

    def test_null_distribution(self):
        rng = np.random.default_rng(0)
        th = rng.uniform(0, 2 * np.pi, 300)
        coord = rng.standard_normal(300)
        null = [phase_agreement(rng.permutation(coord), th) for _ in range(1000)]
        assert max(null) < 0.3

    def test_best_and_match(self, rng):
        tr, tc = rng.uniform(0, 2 * np.pi, (2, 200))
        coords = np.stack([rng.standard_normal(200), np.sin(tc), np.cos(tr)], axis=1)
        assert best_agreement(coords, tr)[1] == 2
        rc, cc, swapped = match_axes(coords, tr, tc)
        assert (rc, cc, swapped) == (2, 1, True)

    def test_irls_beats_knn_on_default(self, default_phantom, default_laplacians):
        tr, tc = default_phantom["theta_r"], default_phantom["theta_c"]
        irls, knn = (pair_agreement(embed(lap, 4), tr, tc)[0] for lap in default_laplacians)
        assert irls > knn

    def test_pair_agreement(self, rng):
        tr, tc = rng.uniform(0, 2 * np.pi, (2, 200))
        coords = np.stack([np.cos(tc), rng.standard_normal(200), np.sin(tr)], axis=1)
        score, i, j = pair_agreement(coords, tr, tc)
        assert (i, j) == (2, 0) and score == pytest.approx(1.0)


class TestSpread:
    def test_identical_angles(self):
        assert circular_spread(np.full(5, 1.2)) == pytest.approx(0.0, abs=1e-6)
        assert np.isnan(circular_spread(np.array([])))

    def test_wraparound(self):
        assert circular_spread(np.array([0.05, 2 * np.pi - 0.05])) < 0.1

    def test_fold(self):
        np.testing.assert_allclose(fold_phase(np.array([0.5, 2 * np.pi - 0.5])), [0.5, 0.5])

    def test_bin_spreads(self):
        th = np.linspace(0, np.pi, 40, endpoint=False)
        b = assign_bins(np.stack([np.zeros(40), th], axis=1), 1, 4)
        assert np.all(cardiac_bin_spreads(b, th, fold=False) < np.pi / 8)


class TestExport:
    def test_one_frame_per_bin(self, rng):
        X = rng.standard_normal((9, 4))
        coords = np.stack([[0, 0, 1, 1], [0, 1, 0, 1]], axis=1).astype(float)
        b = assign_bins(coords, 2, 2)
        images, empty = gated_export(X, b)
        assert not empty.any()
        for i in range(4):
            np.testing.assert_array_equal(images[b.resp[i], b.card[i]], X[:, i])

    def test_identical_frames(self, rng):
        X = np.repeat(rng.standard_normal((9, 1)), 6, axis=1)
        b = assign_bins(rng.random((6, 2)), 2, 3)
        images, _ = gated_export(X, b)
        assert np.all(images == images[0, 0])

    def test_empty_flag(self):
        b = assign_bins(np.array([[0.0, 0.0], [1.0, 1.0]]), 2, 2)
        _, empty = gated_export(np.ones((4, 2)), b)
        assert empty.sum() == 2

    def test_gating_sharpens(self, default_phantom, default_laplacians):
        X = default_phantom["X"]
        coords = embed(default_laplacians[0], 4)
        rc, cc, _ = match_axes(coords, default_phantom["theta_r"], default_phantom["theta_c"])
        b = assign_bins(coords, 4, 8, rc, cc)
        images, empty = gated_export(X, b)
        gated = np.mean([sharpness(images[r, c]) for r, c in zip(*np.nonzero(~empty))])
        assert gated > sharpness(X.mean(axis=1))


class TestFiles:
    def test_csv_roundtrip(self, tmp_path, rng):
        b = assign_bins(rng.random((11, 2)), 3, 2)
        p = tmp_path / "bins.csv"
        write_bins_csv(p, b)
        resp, card = read_bins_csv(p)
        assert np.array_equal(resp, b.resp) and np.array_equal(card, b.card)
        assert p.read_text().splitlines()[0] == "frame_index,resp_bin,card_bin"

    def test_pgm(self, tmp_path):
        img = np.arange(12, dtype=float).reshape(3, 4)
        p = tmp_path / "a.pgm"
        lo, hi = write_pgm(p, img)
        q = read_pgm(p)
        assert q.shape == (3, 4) and q[0, 0] == 0 and q[-1, -1] == 255
        assert (lo, hi) == (0.0, 11.0)
        assert (tmp_path / "a.pgm.window.txt").read_text().split() == ["min", "0", "max", "11"]

    def test_pgm_fixed_window(self):
        data, win = to_pgm_bytes(np.full((2, 2), 5.0), window=(0.0, 10.0))
        assert win == (0.0, 10.0)
        assert data.endswith(bytes([128] * 4))

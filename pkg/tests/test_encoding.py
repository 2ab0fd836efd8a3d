from __future__ import annotations

import math

import numpy as np
import pytest

from avcmd.encoding import (
    CHANNEL_ORDER,
    BovwHist,
    Channel,
    Codebook,
    VladVec,
    bovw_encode,
    channel_mean_distance,
    chi2_distance,
    chi2_distance_matrix,
    combine_vlad,
    kmeans_inertia,
    multichannel_gram,
    multichannel_kernel,
    read_codebook,
    read_encoded,
    train_codebook,
    vlad_encode,
    write_codebook,
    write_encoded,
)
from avcmd.errors import (
    BadMagicError,
    DegenerateInputError,
    InvalidParameterError,
    TruncatedPayloadError,
)


class TestKmeans:
    def test_perfect_fit_when_k_equals_n(self, rng):
        x = rng.normal(size=(6, 3)) * 5.0
        cb = train_codebook(x, k=6, seed=0)
        assert kmeans_inertia(x, cb) < 1e-12
        # every point is some centroid
        for row in x:
            assert np.min(np.linalg.norm(cb.centroids.astype(float) - row, axis=1)) < 1e-5

    def test_two_blobs_recovered(self, rng):
        # oracle: closed-form blob means
        a = rng.normal(loc=(-4.0, 0.0), scale=0.05, size=(60, 2))
        b = rng.normal(loc=(5.0, 2.0), scale=0.05, size=(60, 2))
        x = np.vstack([a, b])
        cb = train_codebook(x, k=2, seed=7)
        means = sorted([a.mean(axis=0), b.mean(axis=0)], key=lambda m: m[0])
        cents = sorted(cb.centroids.tolist(), key=lambda m: m[0])
        for m, c in zip(means, cents):
            assert np.linalg.norm(np.asarray(c) - m) < 0.1

    def test_deterministic_given_seed(self, rng):
        x = rng.normal(size=(100, 4))
        cb1 = train_codebook(x, k=5, seed=42)
        cb2 = train_codebook(x, k=5, seed=42)
        assert np.array_equal(cb1.centroids, cb2.centroids)

    def test_inertia_monotone_in_iteration_count(self, rng):
        x = rng.normal(size=(200, 3))
        inertias = [
            kmeans_inertia(x, train_codebook(x, k=8, seed=3, max_iter=m)) for m in range(1, 9)
        ]
        assert all(b <= a + 1e-9 for a, b in zip(inertias, inertias[1:]))

    def test_n_below_k_rejected(self, rng):
        with pytest.raises(InvalidParameterError):
            train_codebook(rng.normal(size=(3, 2)), k=5, seed=0)

    def test_nan_rejected(self):
        x = np.zeros((10, 2))
        x[3, 1] = np.nan
        with pytest.raises(InvalidParameterError):
            train_codebook(x, k=2, seed=0)

    def test_subsample_keeps_determinism(self, rng):
        x = rng.normal(size=(5000, 2))
        cb1 = train_codebook(x, k=4, seed=1, subsample=500)
        cb2 = train_codebook(x, k=4, seed=1, subsample=500)
        assert np.array_equal(cb1.centroids, cb2.centroids)


class TestBovw:
    def _codebook(self, centroids, channel=Channel.HOG):
        return Codebook(channel=channel, centroids=np.asarray(centroids, dtype=np.float32), seed=0)

    def test_empty_descriptor_set(self):
        cb = self._codebook([[0.0, 0.0], [1.0, 1.0]])
        hist = bovw_encode(np.empty((0, 2)), cb)
        assert np.all(hist.counts == 0)

    def test_exact_centroid_match(self):
        cb = self._codebook(np.eye(8))
        x = np.tile(np.eye(8)[7], (5, 1))
        hist = bovw_encode(x, cb)
        assert hist.counts[7] == 5
        assert hist.counts.sum() == 5

    def test_matches_exhaustive_nearest_neighbor(self, rng):
        cb = self._codebook(rng.normal(size=(3, 4)))
        x = rng.normal(size=(10, 4))
        hist = bovw_encode(x, cb)
        # oracle: brute-force scan over all (point, centroid) pairs
        expected = np.zeros(3)
        for row in x:
            dists = [float(np.sum((row - c) ** 2)) for c in cb.centroids.astype(float)]
            expected[int(np.argmin(dists))] += 1
        assert np.array_equal(hist.counts, expected)

    def test_mass_conservation(self, rng):
        cb = self._codebook(rng.normal(size=(5, 6)))
        for n in (0, 1, 17, 100):
            x = rng.normal(size=(n, 6))
            assert bovw_encode(x, cb).counts.sum() == n

    def test_dim_mismatch(self, rng):
        cb = self._codebook(rng.normal(size=(3, 4)))
        with pytest.raises(InvalidParameterError):
            bovw_encode(rng.normal(size=(5, 3)), cb)


class TestVlad:
    def _codebook(self, centroids):
        return Codebook(channel=Channel.TRAJ, centroids=np.asarray(centroids, dtype=np.float32), seed=0)

    def test_descriptor_on_centroid_gives_zero(self):
        cb = self._codebook([[1.0, 2.0], [5.0, 5.0]])
        v = vlad_encode(np.array([[1.0, 2.0]]), cb)
        assert np.all(v.values == 0.0)

    def test_single_cluster_direct_formula(self):
        cb = self._codebook([[1.0, -1.0]])
        x = np.array([[3.0, 0.0]])
        v = vlad_encode(x, cb)
        resid = np.array([2.0, 1.0])
        expected = np.sign(resid) * np.sqrt(np.abs(resid))
        expected /= np.linalg.norm(expected)
        np.testing.assert_allclose(v.values, expected, atol=1e-12)

    def test_empty_set_zero_vector_flagged(self):
        cb = self._codebook([[0.0, 0.0], [1.0, 1.0]])
        v = vlad_encode(np.empty((0, 2)), cb)
        assert v.is_empty
        assert np.all(v.values == 0.0)

    def test_finalized_norm_is_zero_or_one(self, rng):
        cb = self._codebook(rng.normal(size=(4, 3)))
        for n in (0, 1, 9):
            v = vlad_encode(rng.normal(size=(n, 3)), cb)
            norm = np.linalg.norm(v.values)
            assert abs(norm) < 1e-12 or abs(norm - 1.0) < 1e-12

    def test_duplicated_descriptors_leave_vlad_unchanged(self, rng):
        cb = self._codebook(rng.normal(size=(4, 3)))
        x = rng.normal(size=(9, 3))
        v1 = vlad_encode(x, cb)
        v2 = vlad_encode(np.vstack([x, x]), cb)
        np.testing.assert_allclose(v1.values, v2.values, atol=1e-12)


class TestCombineVlad:
    def _vecs(self, k=16):
        dims = {Channel.TRAJ: 30, Channel.HOG: 96, Channel.HOF: 108, Channel.MBH: 192}
        return {
            ch: VladVec(values=np.zeros(k * d), n_descriptors=1) for ch, d in dims.items()
        }

    def test_known_length(self):
        out = combine_vlad(self._vecs(k=16))
        assert out.shape == (16 * 426,)

    def test_all_zero_channels(self):
        assert np.all(combine_vlad(self._vecs()) == 0.0)

    def test_order_is_canonical_not_arrival(self, rng):
        vecs = {}
        for i, ch in enumerate(CHANNEL_ORDER):
            vecs[ch] = VladVec(values=np.full(4, float(i)), n_descriptors=1)
        reversed_input = dict(reversed(list(vecs.items())))
        np.testing.assert_array_equal(combine_vlad(vecs), combine_vlad(reversed_input))
        np.testing.assert_array_equal(
            combine_vlad(vecs), np.repeat(np.arange(4.0), 4)
        )

    def test_missing_channel_rejected(self):
        vecs = self._vecs()
        del vecs[Channel.HOF]
        with pytest.raises(InvalidParameterError):
            combine_vlad(vecs)


class TestChi2:
    def test_identity(self, rng):
        h = rng.random(8)
        h /= h.sum()
        assert chi2_distance(h, h) == 0.0

    def test_disjoint_unit_histograms(self):
        assert chi2_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0

    def test_equal_halves(self):
        h = np.array([0.5, 0.5])
        assert chi2_distance(h, h) == 0.0

    def test_hand_evaluated_case(self):
        a = np.array([0.5, 0.25, 0.25])
        b = np.array([0.25, 0.5, 0.25])
        # 0.5*((0.25^2/0.75) + (0.25^2/0.75) + 0) = 0.0833...
        assert math.isclose(chi2_distance(a, b), 0.5 * 2 * (0.0625 / 0.75))

    def test_symmetry(self, rng):
        a, b = rng.random(16), rng.random(16)
        a /= a.sum()
        b /= b.sum()
        assert chi2_distance(a, b) == chi2_distance(b, a)

    def test_zero_denominator_bins_skipped(self):
        a = np.array([0.0, 1.0])
        b = np.array([0.0, 1.0])
        assert chi2_distance(a, b) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(InvalidParameterError):
            chi2_distance(np.ones(3), np.ones(4))

    def test_matrix_matches_pairwise_calls(self, rng):
        h = rng.random((7, 12))
        h /= h.sum(axis=1, keepdims=True)
        m = chi2_distance_matrix(h)
        for i in range(7):
            for j in range(7):
                assert math.isclose(m[i, j], chi2_distance(h[i], h[j]), abs_tol=1e-12)


class TestMultichannelKernel:
    def _hists(self, rng, n, k=6):
        out = []
        for _ in range(n):
            sample = {}
            for ch in CHANNEL_ORDER:
                c = rng.random(k) * 10
                sample[ch] = BovwHist(counts=c, channel=ch)
            out.append(sample)
        return out

    def test_self_kernel_is_one(self, rng):
        s = self._hists(rng, 1)[0]
        means = {ch: 0.5 for ch in CHANNEL_ORDER}
        assert multichannel_kernel(s, s, means) == 1.0

    def test_single_channel_at_mean_distance(self):
        a = {Channel.HOG: BovwHist(counts=np.array([1.0, 0.0]), channel=Channel.HOG)}
        b = {Channel.HOG: BovwHist(counts=np.array([0.0, 1.0]), channel=Channel.HOG)}
        # D = 1, A_c = 1 -> exp(-1)
        val = multichannel_kernel(a, b, {Channel.HOG: 1.0})
        assert math.isclose(val, math.exp(-1.0))

    def test_two_channels_halve_and_add_in_exponent(self):
        a = {
            Channel.HOG: BovwHist(counts=np.array([1.0, 0.0]), channel=Channel.HOG),
            Channel.HOF: BovwHist(counts=np.array([1.0, 0.0]), channel=Channel.HOF),
        }
        b = {
            Channel.HOG: BovwHist(counts=np.array([0.0, 1.0]), channel=Channel.HOG),
            Channel.HOF: BovwHist(counts=np.array([0.0, 1.0]), channel=Channel.HOF),
        }
        # both channels have D = 1 and A_c = 2 -> exp(-(0.5 + 0.5))
        val = multichannel_kernel(a, b, {Channel.HOG: 2.0, Channel.HOF: 2.0})
        assert math.isclose(val, math.exp(-1.0))

    def test_nonpositive_channel_mean_rejected(self):
        a = {Channel.HOG: BovwHist(counts=np.array([1.0, 0.0]), channel=Channel.HOG)}
        with pytest.raises(DegenerateInputError):
            multichannel_kernel(a, a, {Channel.HOG: 0.0})

    def test_gram_symmetric_unit_diagonal_near_psd(self, rng):
        n = 50
        dists = {}
        for ch in CHANNEL_ORDER:
            h = rng.random((n, 10))
            h /= h.sum(axis=1, keepdims=True)
            dists[ch] = chi2_distance_matrix(h)
        means = {ch: channel_mean_distance(d) for ch, d in dists.items()}
        gram = multichannel_gram(dists, means)
        assert np.array_equal(gram, gram.T)
        assert np.all(np.diag(gram) == 1.0)
        assert np.min(np.linalg.eigvalsh(gram)) >= -1e-8

    def test_channel_mean_requires_two_samples(self):
        with pytest.raises(DegenerateInputError):
            channel_mean_distance(np.zeros((1, 1)))


class TestCodebookIO:
    def test_round_trip(self, tmp_path, rng):
        cb = train_codebook(rng.normal(size=(40, 5)), k=4, seed=9, channel=Channel.MBH)
        path = tmp_path / "cb.igcb"
        write_codebook(path, cb)
        back = read_codebook(path)
        assert back.channel == cb.channel
        assert back.seed == cb.seed
        assert np.array_equal(back.centroids, cb.centroids)
        assert back.content_hash() == cb.content_hash()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "cb.igcb"
        p.write_bytes(b"ZZZZ" + b"\0" * 30)
        with pytest.raises(BadMagicError):
            read_codebook(p)

    def test_truncation(self, tmp_path, rng):
        cb = train_codebook(rng.normal(size=(40, 5)), k=4, seed=9)
        p = tmp_path / "cb.igcb"
        write_codebook(p, cb)
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(TruncatedPayloadError):
            read_codebook(p)


class TestEncodedVideoIO:
    def test_round_trip(self, tmp_path, rng):
        clips = []
        for _ in range(3):
            clips.append(
                {
                    ch: BovwHist(counts=rng.integers(0, 9, size=6).astype(float), channel=ch)
                    for ch in CHANNEL_ORDER
                }
            )
        p = tmp_path / "enc.igev"
        write_encoded(p, clips)
        back = read_encoded(p)
        assert len(back) == 3
        for a, b in zip(clips, back):
            for ch in CHANNEL_ORDER:
                assert np.array_equal(a[ch].counts, b[ch].counts)

    def test_empty(self, tmp_path):
        p = tmp_path / "enc.igev"
        write_encoded(p, [])
        assert read_encoded(p) == []

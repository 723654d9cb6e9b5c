import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthlab.dynmask import channel_mask, dynamic_mask, flatten_channel, quantile
from depthlab.photometric import LossMap


def two_channel(l1, l2):
    a = np.asarray(l1, dtype=float)
    b = np.asarray(l2, dtype=float)
    return LossMap(np.stack([a, b], axis=-1))


class TestFlatten:
    def test_row_major_order(self):
        l = two_channel([[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]])
        assert flatten_channel(l, 1).tolist() == [1.0, 2.0, 3.0, 4.0]
        assert flatten_channel(l, 2).tolist() == [5.0, 6.0, 7.0, 8.0]

    def test_single_element(self):
        l = two_channel([[0.5]], [[0.25]])
        assert flatten_channel(l, 1).tolist() == [0.5]

    def test_flatten_reshape_inverse(self):
        rng = np.random.default_rng(0)
        arr = rng.random((3, 4))
        l = two_channel(arr, arr * 2)
        assert np.array_equal(flatten_channel(l, 1).reshape(3, 4), arr)

    def test_bad_channel_rejected(self):
        l = two_channel([[0.0]], [[0.0]])
        for c in (0, 3, -1):
            with pytest.raises(ValueError):
                flatten_channel(l, c)


class TestQuantile:
    def test_interpolated_example(self):
        v = np.arange(0.1, 1.05, 0.1)  # 0.1 .. 1.0
        # h = 0.8 * 9 = 7.2 -> 0.8 + 0.2 * (0.9 - 0.8) = 0.82
        assert quantile(v, 0.8) == pytest.approx(0.82, abs=1e-12)

    def test_beta_one_is_max(self):
        rng = np.random.default_rng(1)
        v = rng.random(57)
        assert quantile(v, 1.0) == v.max()

    def test_constant_sequence(self):
        for beta in (0.01, 0.25, 0.8, 1.0):
            assert quantile(np.full(9, 3.25), beta) == 3.25

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            quantile(np.array([]), 0.5)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            quantile(np.array([1.0, np.inf]), 0.5)

    def test_bad_beta_rejected(self):
        for beta in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                quantile(np.array([1.0]), beta)

    @given(
        st.lists(st.floats(0.0, 100.0), min_size=1, max_size=60),
        st.floats(0.01, 1.0),
    )
    @settings(max_examples=80, deadline=None)
    def test_matches_exhaustive_definition(self, values, beta):
        v = np.asarray(values)
        s = np.sort(v)
        h = beta * (s.size - 1)
        lo = int(np.floor(h))
        expected = s[-1] if lo >= s.size - 1 else s[lo] + (h - lo) * (s[lo + 1] - s[lo])
        assert quantile(v, beta) == pytest.approx(expected, rel=1e-12, abs=1e-12)


class TestChannelMask:
    def test_strict_comparison(self):
        l = two_channel([[0.0, 0.0], [5.0, 0.0]], np.zeros((2, 2)))
        m = channel_mask(l, 1, 0.0)
        assert m.data.tolist() == [[0, 0], [1, 0]]

    def test_boundary_not_flagged(self):
        l = two_channel(np.full((2, 2), 0.7), np.zeros((2, 2)))
        assert not channel_mask(l, 1, 0.7).data.any()

    def test_negative_threshold_flags_all(self):
        l = two_channel(np.zeros((2, 2)), np.zeros((2, 2)))
        assert channel_mask(l, 1, -1.0).data.all()


class TestDynamicMask:
    def test_hand_traced_example(self):
        l = two_channel([[0.0, 0.0], [5.0, 0.0]], [[0.0, 0.0], [7.0, 0.0]])
        # beta=0.5: sorted [0,0,0,5] -> h=1.5 -> q=0 for both channels;
        # both channel masks flag only the high pixel, so it is dropped.
        m = dynamic_mask(l, 0.5)
        assert m.data.tolist() == [[1, 1], [0, 1]]

    def test_beta_one_masks_nothing(self):
        rng = np.random.default_rng(2)
        l = LossMap(rng.random((5, 6, 2)))
        assert dynamic_mask(l, 1.0).data.all()

    def test_single_channel_spike_is_kept(self):
        l1 = np.zeros((3, 3))
        l1[1, 1] = 9.0
        l = two_channel(l1, np.zeros((3, 3)))
        assert dynamic_mask(l, 0.5).data[1, 1] == 1

    def test_wrong_channel_count_rejected(self):
        with pytest.raises(ValueError):
            dynamic_mask(LossMap(np.zeros((2, 2, 1))), 0.8)

    def test_masked_fraction_bound(self):
        rng = np.random.default_rng(3)
        for beta in (0.5, 0.8, 0.95):
            for _ in range(10):
                l = LossMap(rng.random((16, 24, 2)))
                m = dynamic_mask(l, beta)
                zeros = 1.0 - m.data.mean()
                assert zeros <= (1.0 - beta) + 1.0 / (16 * 24) + 1e-12

    def test_monotone_rescaling_invariance(self):
        rng = np.random.default_rng(4)
        for seed in range(5):
            l = LossMap(np.random.default_rng(seed).random((12, 18, 2)))
            transformed = LossMap(3.0 * l.data + 1.0)
            assert np.array_equal(dynamic_mask(l, 0.8).data, dynamic_mask(transformed, 0.8).data)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        l = LossMap(rng.random((8, 8, 2)))
        a = dynamic_mask(l, 0.8)
        b = dynamic_mask(l, 0.8)
        assert np.array_equal(a.data, b.data)


class TestOnSyntheticScenes:
    def reprojection_channels(self, seed):
        from depthlab.optimizer import RefineConfig, reprojection_losses
        from depthlab.synth import default_dynamic_scene, generate_triplet

        triplet = generate_triplet(default_dynamic_scene(seed))
        losses, _ = reprojection_losses(triplet.gt_depth, triplet, RefineConfig())
        return triplet, losses

    def test_recall_and_static_rate(self):
        beta = 0.8
        for seed in range(5):
            triplet, losses = self.reprojection_channels(seed)
            mask = dynamic_mask(losses, beta)
            oracle = triplet.dynamic_oracle.data.astype(bool)
            masked = mask.data == 0
            recall = masked[oracle].mean()
            static_rate = masked[~oracle].mean()
            assert recall >= 0.5, f"seed {seed}: recall {recall:.3f}"
            assert static_rate <= 2 * (1 - beta), f"seed {seed}: static rate {static_rate:.3f}"

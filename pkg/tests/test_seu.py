import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthlab.core import DepthMap
from depthlab.costvolume import ProbabilityVolume
from depthlab.seu import (
    EntropyField,
    SeuParams,
    UncertaintyField,
    fft_depth_axis,
    fuse_depth,
    magnitude_probability,
    spectral_entropy,
    uncertainty_from_entropy,
)


def volume_from_rows(rows):
    """Stack per-pixel bin distributions (list of length-N lists) into a 1×k volume."""
    arr = np.asarray(rows, dtype=float).T[:, None, :]
    return ProbabilityVolume(arr)


class TestFft:
    def test_constant_sequence_is_dc_only(self):
        pv = volume_from_rows([[0.25, 0.25, 0.25, 0.25]])
        spec = fft_depth_axis(pv)
        assert np.allclose(spec[0], 1.0)  # N * c = 4 * 0.25
        assert np.allclose(spec[1:], 0.0, atol=1e-12)

    def test_one_hot_has_flat_magnitude(self):
        pv = volume_from_rows([[1.0, 0.0, 0.0, 0.0]])
        spec = fft_depth_axis(pv)
        assert np.allclose(np.abs(spec), 1.0)

    def test_linearity(self):
        rng = np.random.default_rng(0)
        a = rng.random((8, 3, 4))
        b = rng.random((8, 3, 4))
        fa = np.fft.fft(a, axis=0)
        fb = np.fft.fft(b, axis=0)
        fab = np.fft.fft(a + b, axis=0)
        assert np.allclose(fab, fa + fb, atol=1e-9)


class TestMagnitudeProbability:
    def test_dc_spectrum_to_delta(self):
        spec = np.zeros((4, 1, 1), dtype=complex)
        spec[0] = 4.0
        p = magnitude_probability(spec)
        assert np.allclose(p[:, 0, 0], [1.0, 0.0, 0.0, 0.0])

    def test_flat_spectrum_to_uniform(self):
        spec = np.ones((4, 1, 1), dtype=complex)
        assert np.allclose(magnitude_probability(spec)[:, 0, 0], 0.25)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        spec = rng.random((6, 2, 2)) + 1j * rng.random((6, 2, 2))
        p1 = magnitude_probability(spec)
        p2 = magnitude_probability(3.7 * spec)
        assert np.allclose(p1, p2, atol=1e-12)

    def test_zero_spectrum_falls_back_to_uniform(self):
        spec = np.zeros((5, 1, 1), dtype=complex)
        assert np.allclose(magnitude_probability(spec), 0.2)


class TestSpectralEntropy:
    def test_delta_distribution_near_zero(self):
        p = np.zeros((4, 1, 1))
        p[0] = 1.0
        h = spectral_entropy(p, epsilon=1e-8)
        assert abs(h.data[0, 0]) <= 1e-7

    def test_uniform_distribution_near_log_n(self):
        p = np.full((4, 1, 1), 0.25)
        h = spectral_entropy(p, epsilon=1e-8)
        assert abs(h.data[0, 0] - np.log(4)) <= 1e-6

    def test_flat_cost_distribution_gives_zero_entropy(self):
        # flat bin distribution -> DC-only spectrum -> delta -> H ~ 0
        pv = volume_from_rows([[0.125] * 8])
        h = spectral_entropy(magnitude_probability(fft_depth_axis(pv)))
        assert h.data[0, 0] <= 1e-6

    def test_peaked_cost_distribution_gives_max_entropy(self):
        pv = volume_from_rows([[0.0] * 3 + [1.0] + [0.0] * 4])
        h = spectral_entropy(magnitude_probability(fft_depth_axis(pv)))
        assert abs(h.data[0, 0] - np.log(8)) <= 1e-6

    @given(st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=32))
    @settings(max_examples=60, deadline=None)
    def test_entropy_bounds(self, weights):
        w = np.asarray(weights)
        pv = volume_from_rows([w / w.sum()])
        h = spectral_entropy(magnitude_probability(fft_depth_axis(pv)))
        n = len(weights)
        assert -1e-12 <= h.data[0, 0] <= np.log(n) + 1e-6


class TestUncertaintyMap:
    def test_confident_cost_low_uncertainty(self):
        h = EntropyField(np.full((2, 2), np.log(32)))
        u = uncertainty_from_entropy(h, SeuParams(), 32)
        assert np.allclose(u.data, 1.0 / (1.0 + np.exp(3.0)))
        assert u.data[0, 0] == pytest.approx(0.0474, abs=1e-3)

    def test_flat_cost_high_uncertainty(self):
        h = EntropyField(np.zeros((2, 2)))
        u = uncertainty_from_entropy(h, SeuParams(), 32)
        assert np.allclose(u.data, 1.0 / (1.0 + np.exp(-3.0)))
        assert u.data[0, 0] == pytest.approx(0.9526, abs=1e-3)

    def test_strictly_decreasing_in_entropy(self):
        hs = np.linspace(0.0, np.log(16), 20)
        u = uncertainty_from_entropy(EntropyField(hs[None, :]), SeuParams(), 16)
        assert np.all(np.diff(u.data[0]) < 0)

    def test_entropy_field_rejects_large_negative(self):
        with pytest.raises(ValueError):
            EntropyField(np.array([[-0.5]]))

    def test_uncertainty_range_validated(self):
        with pytest.raises(ValueError):
            UncertaintyField(np.array([[1.5]]))


class TestFusion:
    def test_endpoints_exact(self):
        rng = np.random.default_rng(2)
        multi = DepthMap(rng.uniform(1, 50, (4, 5)))
        mono = DepthMap(rng.uniform(1, 50, (4, 5)))
        u0 = UncertaintyField(np.zeros((4, 5)))
        u1 = UncertaintyField(np.ones((4, 5)))
        assert np.array_equal(fuse_depth(multi, mono, u0).data, multi.data)
        assert np.array_equal(fuse_depth(multi, mono, u1).data, mono.data)

    def test_midpoint(self):
        multi = DepthMap(np.full((1, 1), 2.0))
        mono = DepthMap(np.full((1, 1), 4.0))
        u = UncertaintyField(np.full((1, 1), 0.5))
        assert fuse_depth(multi, mono, u).data[0, 0] == 3.0

    def test_convex_bounds(self):
        rng = np.random.default_rng(3)
        multi = DepthMap(rng.uniform(1, 50, (6, 6)))
        mono = DepthMap(rng.uniform(1, 50, (6, 6)))
        u = UncertaintyField(rng.random((6, 6)))
        fused = fuse_depth(multi, mono, u).data
        lo = np.minimum(multi.data, mono.data)
        hi = np.maximum(multi.data, mono.data)
        assert np.all(fused >= lo - 1e-12) and np.all(fused <= hi + 1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            fuse_depth(
                DepthMap(np.ones((2, 2))),
                DepthMap(np.ones((2, 3))),
                UncertaintyField(np.zeros((2, 2))),
            )


class TestDirectionOnScenes:
    def test_uncertainty_higher_inside_moving_sprites(self):
        from depthlab.costvolume import DepthHypotheses, plane_sweep_depth
        from depthlab.geometry import project, sample_bilinear
        from depthlab.synth import default_dynamic_scene, generate_triplet

        hyps = DepthHypotheses.inverse_depth(3.0, 60.0, 32)
        for seed in range(3):
            spec = default_dynamic_scene(seed)
            triplet = generate_triplet(spec)
            res = plane_sweep_depth(
                triplet.target, triplet.sources[0], triplet.pose_prev, spec.cam, hyps
            )
            h = spectral_entropy(magnitude_probability(fft_depth_axis(res.prob)))
            u = uncertainty_from_entropy(h, SeuParams(), hyps.count).data
            # compare only where the true depth is observable in the source
            proj = project(triplet.gt_depth, triplet.pose_prev, spec.cam)
            _, observable = sample_bilinear(triplet.sources[0].data, proj.coords)
            oracle = triplet.dynamic_oracle.data.astype(bool)
            u_dyn = u[oracle & observable].mean()
            u_static = u[~oracle & observable].mean()
            assert u_dyn > u_static, f"seed {seed}: {u_dyn:.4f} <= {u_static:.4f}"

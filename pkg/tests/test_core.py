import numpy as np
import pytest

from depthlab.core import (
    BinaryMask,
    DepthMap,
    ImageGrid,
    PFMError,
    block_max_pool,
    elementwise,
    image_from_mask,
    load_pfm,
    read_pfm,
    save_pfm,
    save_pgm,
    write_pfm,
)


class TestContainers:
    def test_image_grid_clamps_at_construction(self):
        g = ImageGrid(np.array([[[-0.5], [0.25]], [[1.5], [1.0]]]))
        assert g.data.min() == 0.0
        assert g.data.max() == 1.0
        assert g.data[0, 1, 0] == 0.25

    def test_image_grid_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            ImageGrid(np.array([[[np.nan]]]))

    def test_image_grid_rejects_bad_channels(self):
        with pytest.raises(ValueError):
            ImageGrid(np.zeros((2, 2, 2)))

    def test_depth_map_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            DepthMap(np.array([[1.0, 0.0]]))

    def test_binary_mask_rejects_other_values(self):
        with pytest.raises(ValueError):
            BinaryMask(np.array([[0, 2]]))

    def test_containers_are_immutable(self):
        g = ImageGrid(np.zeros((2, 2, 1)))
        with pytest.raises(ValueError):
            g.data[0, 0, 0] = 1.0


class TestElementwise:
    def test_mul_identity(self):
        rng = np.random.default_rng(0)
        x = ImageGrid(rng.random((4, 5, 3)))
        ones = ImageGrid(np.ones((4, 5, 3)))
        assert np.array_equal(elementwise("mul", x, ones).data, x.data)

    def test_min_idempotent(self):
        rng = np.random.default_rng(1)
        a = ImageGrid(rng.random((3, 3, 1)))
        assert np.array_equal(elementwise("min", a, a).data, a.data)

    def test_sub_arithmetic(self):
        a = ImageGrid(np.array([[[0.5]]]))
        b = ImageGrid(np.array([[[0.2]]]))
        assert elementwise("sub", a, b).data[0, 0, 0] == pytest.approx(0.3)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            elementwise("add", ImageGrid(np.zeros((2, 2, 1))), ImageGrid(np.zeros((2, 3, 1))))

    def test_unknown_op_rejected(self):
        with pytest.raises(ValueError):
            elementwise("div", ImageGrid(np.zeros((1, 1, 1))), ImageGrid(np.zeros((1, 1, 1))))

    def test_mask_ops_stay_in_range(self):
        rng = np.random.default_rng(2)
        a = ImageGrid(rng.random((6, 6, 1)))
        m = ImageGrid(rng.integers(0, 2, (6, 6, 1)).astype(float))
        for op in ("mul", "min"):
            out = elementwise(op, a, m)
            assert out.data.min() >= 0.0 and out.data.max() <= 1.0


class TestBlockMaxPool:
    def test_all_ones(self):
        m = BinaryMask(np.ones((4, 4), dtype=np.uint8))
        assert np.array_equal(block_max_pool(m, 2).data, np.ones((2, 2), dtype=np.uint8))

    def test_single_one_top_left(self):
        arr = np.zeros((4, 4), dtype=np.uint8)
        arr[0, 0] = 1
        out = block_max_pool(BinaryMask(arr), 2).data
        expected = np.zeros((2, 2), dtype=np.uint8)
        expected[0, 0] = 1
        assert np.array_equal(out, expected)

    def test_all_zeros(self):
        m = BinaryMask(np.zeros((4, 4), dtype=np.uint8))
        assert not block_max_pool(m, 4).data.any()

    def test_bad_factor_rejected(self):
        with pytest.raises(ValueError):
            block_max_pool(BinaryMask(np.zeros((2, 2), dtype=np.uint8)), 0)

    def test_zero_padding_for_indivisible_sizes(self):
        arr = np.zeros((5, 5), dtype=np.uint8)
        arr[4, 4] = 1
        out = block_max_pool(BinaryMask(arr), 2).data
        assert out.shape == (3, 3)
        assert out[2, 2] == 1 and out.sum() == 1

    def test_output_one_iff_block_contains_one(self):
        rng = np.random.default_rng(3)
        for s in (1, 2, 3, 4):
            arr = (rng.random((8, 12)) < 0.2).astype(np.uint8)
            out = block_max_pool(BinaryMask(arr), s).data
            hh = -(-8 // s)
            ww = -(-12 // s)
            padded = np.zeros((hh * s, ww * s), dtype=np.uint8)
            padded[:8, :12] = arr
            for bi in range(hh):
                for bj in range(ww):
                    block = padded[bi * s : (bi + 1) * s, bj * s : (bj + 1) * s]
                    assert out[bi, bj] == block.max()


class TestPfm:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        values = rng.random((7, 9)).astype(np.float32).astype(np.float64) * 100 + 0.01
        d = DepthMap(values.astype(np.float32))
        p = tmp_path / "depth.pfm"
        save_pfm(d, p)
        back = load_pfm(p)
        assert np.array_equal(back.data, np.asarray(d.data, dtype=np.float32).astype(np.float64))

    def test_single_value_round_trip(self, tmp_path):
        p = tmp_path / "one.pfm"
        save_pfm(DepthMap(np.array([[80.0]])), p)
        assert load_pfm(p).data[0, 0] == 80.0

    def test_header_format(self, tmp_path):
        p = tmp_path / "hdr.pfm"
        save_pfm(DepthMap(np.full((2, 3), 1.0)), p)
        raw = p.read_bytes()
        assert raw.startswith(b"Pf\n3 2\n-1.0\n")

    def test_truncated_payload_reports_offset(self, tmp_path):
        p = tmp_path / "trunc.pfm"
        save_pfm(DepthMap(np.full((4, 4), 2.0)), p)
        raw = p.read_bytes()
        p.write_bytes(raw[:-8])
        with pytest.raises(PFMError) as exc:
            load_pfm(p)
        assert exc.value.offset > 0

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "bad.pfm"
        p.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
        with pytest.raises(PFMError):
            load_pfm(p)

    def test_bad_dimensions_rejected(self, tmp_path):
        p = tmp_path / "dims.pfm"
        p.write_bytes(b"Pf\nx 2\n-1.0\n")
        with pytest.raises(PFMError):
            load_pfm(p)

    def test_trailing_bytes_rejected(self, tmp_path):
        p = tmp_path / "extra.pfm"
        save_pfm(DepthMap(np.full((2, 2), 1.0)), p)
        p.write_bytes(p.read_bytes() + b"xx")
        with pytest.raises(PFMError):
            load_pfm(p)

    def test_array_round_trip_preserves_float32_exactly(self, tmp_path):
        rng = np.random.default_rng(5)
        arr = (rng.standard_normal((5, 6)) * rng.uniform(1e-20, 1e20)).astype(np.float32)
        p = tmp_path / "arr.pfm"
        write_pfm(arr.astype(np.float64), p)
        back = read_pfm(p)
        assert np.array_equal(back.astype(np.float32), arr)


class TestPgm:
    def test_scaling_endpoints(self, tmp_path):
        img = ImageGrid(np.array([[[0.0], [1.0]]]))
        p = tmp_path / "img.pgm"
        save_pgm(img, p)
        raw = p.read_bytes()
        assert raw.startswith(b"P5\n2 1\n65535\n")
        pixels = np.frombuffer(raw.split(b"65535\n", 1)[1], dtype=">u2")
        assert pixels.tolist() == [0, 65535]

    def test_half_value(self, tmp_path):
        p = tmp_path / "half.pgm"
        save_pgm(ImageGrid(np.array([[[0.5]]])), p)
        pixels = np.frombuffer(p.read_bytes().split(b"65535\n", 1)[1], dtype=">u2")
        assert pixels.tolist() == [32768]  # round(0.5 * 65535)

    def test_multichannel_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            save_pgm(ImageGrid(np.zeros((2, 2, 3))), tmp_path / "x.pgm")

    def test_mask_export(self, tmp_path):
        m = BinaryMask(np.array([[0, 1], [1, 0]], dtype=np.uint8))
        save_pgm(image_from_mask(m), tmp_path / "m.pgm")
        pixels = np.frombuffer((tmp_path / "m.pgm").read_bytes().split(b"65535\n", 1)[1], dtype=">u2")
        assert pixels.tolist() == [0, 65535, 65535, 0]

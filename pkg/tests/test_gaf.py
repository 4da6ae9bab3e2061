import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaf_attn.dataset import N_CHANNELS, EegSegment
from gaf_attn.errors import ArgumentError, EncodeError
from gaf_attn.gaf import (
    EncodeOptions,
    GadfImage,
    encode_channel,
    encode_trial,
    export_pgm,
    gadf_matrix,
    gasf_matrix,
    load_cache,
    paa_reduce,
    read_gafi,
    rescale,
    save_cache,
    to_pixels,
    to_polar,
    write_gafi,
)


def trig_identity_gadf(x):
    """sin(a - b) = sin a cos b - cos a sin b with cos(phi) = x."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(1.0 - x**2)
    return s[:, None] * x[None, :] - x[:, None] * s[None, :]


def random_segment(rng, k):
    return EegSegment(rng.standard_normal((N_CHANNELS, k)), subject_id=1, trial_id=2, score=40.0)


class TestRescale:
    def test_hand_case(self):
        np.testing.assert_allclose(rescale([0, 5, 10]), [-1, 0, 1], atol=1e-15)

    def test_two_points(self):
        np.testing.assert_allclose(rescale([2, 4]), [-1, 1], atol=1e-15)

    def test_constant(self):
        np.testing.assert_array_equal(rescale([7, 7, 7]), [0, 0, 0])

    @pytest.mark.parametrize("bad", [[], [1.0, np.nan], [np.inf, 1.0]])
    def test_errors(self, bad):
        with pytest.raises(EncodeError):
            rescale(bad)

    @settings(max_examples=100)
    @given(
        st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50),
        st.floats(1e-2, 1e2),
        st.floats(-1e3, 1e3),
    )
    def test_affine_invariance(self, xs, a, b):
        x = np.asarray(xs)
        if x.max() - x.min() < 1e-3:
            return
        np.testing.assert_allclose(rescale(a * x + b), rescale(x), atol=1e-9)

    def test_extremes_map_to_endpoints(self):
        x = np.random.default_rng(0).normal(size=40)
        y = rescale(x)
        assert y[np.argmin(x)] == -1.0 and y[np.argmax(x)] == 1.0


class TestPolar:
    def test_anchor_angles(self):
        np.testing.assert_allclose(to_polar([1, 0, -1]).phi, [0, math.pi / 2, math.pi])

    def test_radius(self):
        np.testing.assert_allclose(to_polar([0, 0, 0, 0]).r, [0.25, 0.5, 0.75, 1.0])

    def test_overshoot_clamped(self):
        assert to_polar([1 + 1e-13]).phi[0] == 0.0


class TestGadf:
    def test_hand_case(self):
        expected = [[0, 1, 0], [-1, 0, 1], [0, -1, 0]]
        np.testing.assert_allclose(gadf_matrix(rescale([0, 5, 10])), expected, atol=1e-12)

    def test_length_one(self):
        np.testing.assert_array_equal(gadf_matrix(rescale([3.0])), [[0.0]])

    def test_random_series_properties(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            x = rescale(rng.standard_normal(rng.integers(2, 65)))
            g = gadf_matrix(x)
            assert np.all(np.abs(np.diag(g)) <= 1e-12)
            assert np.all(np.abs(g + g.T) <= 1e-12)
            assert np.all(np.abs(g) <= 1 + 1e-12)
            assert np.all(np.abs(g - trig_identity_gadf(x)) <= 1e-9)

    def test_constant_series_gives_zero_matrix(self):
        np.testing.assert_array_equal(gadf_matrix(rescale([4.0] * 5)), np.zeros((5, 5)))


class TestGasf:
    def test_constant(self):
        np.testing.assert_allclose(gasf_matrix(rescale([7, 7, 7])), -np.ones((3, 3)), atol=1e-15)

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            g = gasf_matrix(rescale(rng.standard_normal(rng.integers(1, 40))))
            np.testing.assert_array_equal(g, g.T)
            assert np.all(np.abs(g) <= 1 + 1e-12)

    def test_length_one_value_one(self):
        np.testing.assert_allclose(gasf_matrix([1.0]), [[1.0]])


class TestPaa:
    def test_segment_means(self):
        np.testing.assert_allclose(paa_reduce([1, 2, 3, 4], 2), [1.5, 3.5])

    def test_identity(self):
        np.testing.assert_array_equal(paa_reduce([3, 1, 2], 5), [3, 1, 2])
        np.testing.assert_array_equal(paa_reduce([6], 1), [6])

    def test_error(self):
        with pytest.raises(EncodeError):
            paa_reduce([1, 2], 0)

    def test_uneven_bins(self):
        # k=5, T=2: bins [0, 2) and [2, 5)
        np.testing.assert_allclose(paa_reduce([1, 3, 5, 7, 9], 2), [2.0, 7.0])

    @given(st.integers(1, 20), st.integers(1, 10), st.integers(0, 1000))
    def test_mean_preserved(self, target, mult, seed):
        x = np.random.default_rng(seed).normal(size=target * mult)
        assert abs(paa_reduce(x, target).mean() - x.mean()) <= 1e-9


class TestEncodeTrial:
    def test_full_size(self):
        img = encode_trial(random_segment(np.random.default_rng(0), 640))
        assert img.data.shape == (14, 640, 640)
        assert (img.subject_id, img.trial_id, img.target) == (1, 2, 40.0)

    def test_paa(self):
        img = encode_trial(random_segment(np.random.default_rng(0), 640), EncodeOptions(paa_target=128))
        assert img.data.shape == (14, 128, 128)

    def test_too_short(self):
        with pytest.raises(EncodeError):
            encode_trial(random_segment(np.random.default_rng(0), 1))

    def test_bad_paa_option(self):
        with pytest.raises(EncodeError):
            EncodeOptions(paa_target=1)

    def test_channel_independent(self):
        seg = random_segment(np.random.default_rng(3), 50)
        opts = EncodeOptions(paa_target=20)
        img = encode_trial(seg, opts)
        for c in range(N_CHANNELS):
            np.testing.assert_array_equal(img.data[c], encode_channel(seg.data[c], opts))
        np.testing.assert_array_equal(img.data, encode_trial(seg, opts).data)

    def test_gasf_option(self):
        seg = random_segment(np.random.default_rng(3), 30)
        img = encode_trial(seg, EncodeOptions(encoder="gasf"))
        np.testing.assert_array_equal(img.data[0], gasf_matrix(rescale(seg.data[0])))


class TestPgm:
    def test_endpoints(self):
        np.testing.assert_array_equal(to_pixels([-1.0, 1.0, 0.0]), [0, 255, 128])

    def test_file(self, tmp_path):
        data = np.zeros((14, 64, 64))
        data[3, 0, 0] = -1.0
        data[3, 0, 1] = 1.0
        path = export_pgm(GadfImage(data), 3, tmp_path / "c3.pgm")
        raw = path.read_bytes()
        header = b"P5\n64 64\n255\n"
        assert raw.startswith(header)
        pixels = raw[len(header):]
        assert len(pixels) == 64 * 64
        assert pixels[0] == 0 and pixels[1] == 255 and pixels[2] == 128

    @pytest.mark.parametrize("channel", [-1, 14])
    def test_channel_range(self, tmp_path, channel):
        with pytest.raises(ArgumentError):
            export_pgm(GadfImage(np.zeros((14, 4, 4))), channel, tmp_path / "x.pgm")


class TestGafiCache:
    def test_header_layout(self, tmp_path):
        img = GadfImage(np.full((14, 5, 5), 0.25), target=62.5)
        raw = write_gafi(img, tmp_path / "a.gafi").read_bytes()
        assert raw[:4] == b"GAFI"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:12], "little") == 5
        assert int.from_bytes(raw[12:16], "little") == 14
        assert np.frombuffer(raw[16:24], "<f8")[0] == 62.5
        assert len(raw) == 24 + 14 * 25 * 4

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        imgs = [encode_trial(random_segment(rng, 20)) for _ in range(3)]
        imgs = [GadfImage(i.data, i.target, 1, n) for n, i in enumerate(imgs)]
        save_cache(imgs, tmp_path, {"paa_target": None})
        loaded, meta = load_cache(tmp_path)
        assert meta == {"paa_target": None}
        for a, b in zip(imgs, loaded):
            np.testing.assert_array_equal(a.data.astype(np.float32), b.data)
            assert (a.target, a.trial_id) == (b.target, b.trial_id)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.gafi").write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(EncodeError):
            read_gafi(tmp_path / "x.gafi")

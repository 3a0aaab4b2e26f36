"""Inference-engine tests: brute-force layer oracles, count algebra against the
frozen reference tables, bundle serialization and integrity checks."""

import math

import numpy as np
import pytest

from voicegate import architectures
from voicegate.nn import (
    BundleIntegrityError,
    BundleFormatError,
    BundleLayer,
    LayerShapeError,
    LayerSpec,
    WeightBundle,
    batchnorm,
    batchnorm_spec,
    conv2d,
    conv2d_spec,
    count_params,
    dense,
    dense_spec,
    flatten_spec,
    layer_table,
    load_bundle,
    maxpool2d,
    maxpool2d_spec,
    output_shape,
    run_network,
    save_bundle,
    weight_count,
)

from conftest import build_random_bundle


# --- naive reference implementations (the independent oracle side) ---------

def conv2d_reference(x, weights, bias, stride, padding):
    r, q, cin, m = weights.shape
    h, w, _ = x.shape
    if padding == "same":
        out_h = math.ceil(h / stride)
        out_w = math.ceil(w / stride)
        top = max((out_h - 1) * stride + r - h, 0) // 2
        left = max((out_w - 1) * stride + q - w, 0) // 2
    else:
        out_h = (h - r) // stride + 1
        out_w = (w - q) // stride + 1
        top = left = 0
    out = np.zeros((out_h, out_w, m), dtype=np.float64)
    for oi in range(out_h):
        for oj in range(out_w):
            for f in range(m):
                acc = float(bias[f])
                for di in range(r):
                    for dj in range(q):
                        ii = oi * stride + di - top
                        jj = oj * stride + dj - left
                        if 0 <= ii < h and 0 <= jj < w:
                            for c in range(cin):
                                acc += float(x[ii, jj, c]) * float(weights[di, dj, c, f])
                out[oi, oj, f] = acc
    return out


def maxpool2d_reference(x, ph, pw):
    h, w, c = x.shape
    out = np.zeros((h // ph, w // pw, c))
    for oi in range(h // ph):
        for oj in range(w // pw):
            for ch in range(c):
                out[oi, oj, ch] = x[oi * ph : (oi + 1) * ph, oj * pw : (oj + 1) * pw, ch].max()
    return out


def dense_reference(x, weights, bias):
    out = np.zeros(weights.shape[1])
    for j in range(weights.shape[1]):
        acc = float(bias[j])
        for i in range(len(x)):
            acc += float(x[i]) * float(weights[i, j])
        out[j] = acc
    return out


def random_conv_case(rng):
    h = int(rng.integers(2, 9))
    w = int(rng.integers(2, 9))
    cin = int(rng.integers(1, 5))
    r = int(rng.integers(1, min(h, 4) + 1))
    q = int(rng.integers(1, min(w, 4) + 1))
    m = int(rng.integers(1, 5))
    stride = int(rng.integers(1, 3))
    padding = "same" if rng.integers(2) else "valid"
    x = rng.standard_normal((h, w, cin)).astype(np.float32)
    weights = rng.standard_normal((r, q, cin, m)).astype(np.float32)
    bias = rng.standard_normal(m).astype(np.float32)
    return x, weights, bias, stride, padding


class TestConv2d:
    def test_reference_block_shape(self):
        spec = conv2d_spec(8, 20, 16, stride=2, padding="same", activation="none")
        x = np.random.default_rng(0).standard_normal((40, 49, 1)).astype(np.float32)
        weights = np.zeros((8, 20, 1, 16), np.float32)
        bias = np.zeros(16, np.float32)
        assert conv2d(x, spec, weights, bias).shape == (20, 25, 16)

    def test_identity_kernel(self):
        spec = conv2d_spec(1, 1, 1, stride=1, padding="same", activation="none")
        x = np.array([[[3.5]]], dtype=np.float32)
        out = conv2d(x, spec, np.ones((1, 1, 1, 1), np.float32), np.zeros(1, np.float32))
        assert np.array_equal(out, x)

    def test_valid_padding_against_loops(self):
        rng = np.random.default_rng(21)
        x = rng.standard_normal((5, 5, 2)).astype(np.float32)
        weights = rng.standard_normal((3, 3, 2, 4)).astype(np.float32)
        bias = rng.standard_normal(4).astype(np.float32)
        spec = conv2d_spec(3, 3, 4, stride=1, padding="valid", activation="none")
        got = conv2d(x, spec, weights, bias)
        want = conv2d_reference(x, weights, bias, 1, "valid")
        assert got.shape == (3, 3, 4)
        np.testing.assert_allclose(got, want, atol=1e-5)

    def test_random_cases_against_loops(self):
        rng = np.random.default_rng(22)
        for _ in range(60):
            x, weights, bias, stride, padding = random_conv_case(rng)
            spec = conv2d_spec(
                weights.shape[0], weights.shape[1], weights.shape[3],
                stride=stride, padding=padding, activation="none",
            )
            got = conv2d(x, spec, weights, bias)
            want = conv2d_reference(x, weights, bias, stride, padding)
            np.testing.assert_allclose(got, want, atol=1e-5)

    def test_weight_shape_mismatch(self):
        spec = conv2d_spec(3, 3, 4)
        with pytest.raises(LayerShapeError):
            conv2d(np.zeros((5, 5, 2), np.float32), spec,
                   np.zeros((3, 3, 1, 4), np.float32), np.zeros(4, np.float32))


class TestMaxPool2d:
    def test_reference_block_shape(self):
        out = maxpool2d(np.zeros((20, 25, 16), np.float32), maxpool2d_spec(2))
        assert out.shape == (10, 12, 16)

    def test_trailing_remainder_discarded(self):
        out = maxpool2d(np.zeros((40, 49, 8), np.float32), maxpool2d_spec(3))
        assert out.shape == (13, 16, 8)

    def test_constant_tensor(self):
        out = maxpool2d(np.full((6, 6, 2), 2.5, np.float32), maxpool2d_spec(2))
        assert np.array_equal(out, np.full((3, 3, 2), 2.5, np.float32))

    def test_random_cases_against_loops(self):
        rng = np.random.default_rng(23)
        for _ in range(40):
            h, w, c = rng.integers(2, 9, size=3)
            ph = int(rng.integers(1, h + 1))
            pw = int(rng.integers(1, w + 1))
            x = rng.standard_normal((h, w, c)).astype(np.float32)
            got = maxpool2d(x, maxpool2d_spec(ph, pw))
            np.testing.assert_allclose(got, maxpool2d_reference(x, ph, pw), atol=1e-6)

    def test_pool_larger_than_input(self):
        with pytest.raises(LayerShapeError):
            maxpool2d(np.zeros((2, 2, 1), np.float32), maxpool2d_spec(3))


class TestDense:
    def test_weight_count_formula(self):
        assert weight_count(dense_spec(3), (960,)) == 2883

    def test_zero_weights_yield_bias(self):
        bias = np.array([1.0, -2.0], np.float32)
        out = dense(np.ones(4, np.float32), dense_spec(2), np.zeros((4, 2), np.float32), bias)
        assert np.array_equal(out, bias)

    def test_against_loops(self):
        rng = np.random.default_rng(24)
        x = rng.standard_normal(8).astype(np.float32)
        weights = rng.standard_normal((8, 2)).astype(np.float32)
        bias = rng.standard_normal(2).astype(np.float32)
        got = dense(x, dense_spec(2), weights, bias)
        np.testing.assert_allclose(got, dense_reference(x, weights, bias), atol=1e-6)

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(25)
        out = dense(
            rng.standard_normal(5).astype(np.float32),
            dense_spec(3, activation="softmax"),
            rng.standard_normal((5, 3)).astype(np.float32),
            rng.standard_normal(3).astype(np.float32),
        )
        assert out.sum() == pytest.approx(1.0, abs=1e-5)
        assert np.all(out >= 0)


class TestBatchnorm:
    def test_near_identity(self):
        rng = np.random.default_rng(26)
        x = rng.standard_normal((4, 4, 2)).astype(np.float32)
        out = batchnorm(x, gamma=1.0, beta=0.0, mean=0.0, variance=1.0)
        np.testing.assert_allclose(out, x, atol=2e-3)

    def test_normalizes_moments(self):
        rng = np.random.default_rng(27)
        x = (rng.standard_normal((8, 8, 3)) * 3 + 5).astype(np.float32)
        out = batchnorm(x, 1.0, 0.0, float(x.mean()), float(x.var()))
        assert abs(out.mean()) < 1e-2
        assert abs(out.var() - 1.0) < 1e-2

    def test_negative_variance_rejected(self):
        with pytest.raises(LayerShapeError):
            batchnorm(np.zeros((2, 2, 1), np.float32), 1.0, 0.0, 0.0, -0.5)


class TestCountAlgebra:
    # Frozen reference tables: (layer kind, alpha, omega) per row, input first.
    KS_TABLE = [
        ("input", 1960, 0),
        ("conv2d", 8000, 2576),
        ("maxpool2d", 1920, 0),
        ("conv2d", 3840, 20512),
        ("maxpool2d", 960, 0),
        ("flatten", 960, 0),
        ("dense", 3, 2883),
    ]
    DV_TABLE = [
        ("input", 1960, 0),
        ("batchnorm", 1960, 4),
        ("conv2d", 15680, 80),
        ("maxpool2d", 1664, 0),
        ("conv2d", 3328, 1168),
        ("maxpool2d", 768, 0),
        ("conv2d", 384, 4640),
        ("conv2d", 256, 18496),
        ("flatten", 256, 0),
    ]

    def test_ks_reference_table(self):
        rows = layer_table((40, 49, 1), architectures.ks_layer_specs())
        assert [(r.name, r.alpha, r.omega) for r in rows] == self.KS_TABLE
        assert sum(r.alpha for r in rows) == 17643
        assert sum(r.omega for r in rows) == 25971

    def test_dvector_reference_table(self):
        rows = layer_table((40, 49, 1), architectures.dvector_layer_specs())
        assert [(r.name, r.alpha, r.omega) for r in rows] == self.DV_TABLE
        assert sum(r.omega for r in rows) == 24388
        # The per-layer cells above sum to 26,256 activations.
        assert sum(r.alpha for r in rows) == 26256

    def test_count_params_matches_table(self, ks_bundle, dvector_bundle):
        ks = count_params(ks_bundle)
        assert (ks.omega_total, ks.alpha_total) == (25971, 17643)
        dv = count_params(dvector_bundle)
        assert dv.omega_total == 24388

    def test_empty_bundle_counts_zero(self, stream_config):
        bundle = WeightBundle(
            name="empty", input_shape=(40, 49, 1),
            fingerprint=stream_config.fingerprint(), layers=[],
        )
        report = count_params(bundle)
        assert (report.omega_total, report.alpha_total) == (0, 0)


class TestRunNetwork:
    def test_ks_output_length(self, ks_bundle):
        x = np.random.default_rng(1).standard_normal((40, 49, 1)).astype(np.float32)
        out = run_network(ks_bundle, x)
        assert out.shape == (3,)
        assert out.sum() == pytest.approx(1.0, abs=1e-5)

    def test_dvector_output_length(self, dvector_bundle):
        x = np.random.default_rng(2).standard_normal((40, 49, 1)).astype(np.float32)
        assert run_network(dvector_bundle, x).shape == (256,)

    def test_identity_single_layer(self, stream_config):
        spec = conv2d_spec(1, 1, 1, stride=1, padding="same", activation="none")
        bundle = WeightBundle(
            name="identity", input_shape=(3, 3, 1),
            fingerprint=stream_config.fingerprint(),
            layers=[BundleLayer(spec=spec, tensors={
                "weights": np.ones((1, 1, 1, 1), np.float32),
                "bias": np.zeros(1, np.float32),
            })],
        )
        x = np.random.default_rng(3).standard_normal((3, 3, 1)).astype(np.float32)
        np.testing.assert_array_equal(run_network(bundle, x), x.reshape(-1))

    def test_deterministic(self, dvector_bundle):
        x = np.random.default_rng(4).standard_normal((40, 49, 1)).astype(np.float32)
        assert np.array_equal(run_network(dvector_bundle, x), run_network(dvector_bundle, x))

    def test_wrong_input_shape(self, ks_bundle):
        with pytest.raises(LayerShapeError):
            run_network(ks_bundle, np.zeros((40, 48, 1), np.float32))

    def test_layer_error_names_index(self, stream_config):
        # Dense weights sized for the wrong input; the error must name layer 1.
        layers = [
            BundleLayer(spec=flatten_spec(), tensors={}),
            BundleLayer(spec=dense_spec(2), tensors={
                "weights": np.zeros((9, 2), np.float32),
                "bias": np.zeros(2, np.float32),
            }),
        ]
        bundle = WeightBundle(
            name="bad", input_shape=(3, 3, 1),
            fingerprint=stream_config.fingerprint(), layers=layers,
        )
        bundle.layers[1] = BundleLayer(spec=dense_spec(3), tensors=bundle.layers[1].tensors)
        with pytest.raises(LayerShapeError, match="layer 1"):
            run_network(bundle, np.zeros((3, 3, 1), np.float32))


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path, ks_bundle):
        path = tmp_path / "keyword.twb"
        save_bundle(ks_bundle, path)
        loaded = load_bundle(path)
        assert loaded.name == ks_bundle.name
        assert loaded.input_shape == ks_bundle.input_shape
        assert loaded.fingerprint == ks_bundle.fingerprint
        assert loaded.metadata == ks_bundle.metadata
        for a, b in zip(loaded.layers, ks_bundle.layers):
            assert a.spec == b.spec
            for name in a.tensors:
                assert np.array_equal(a.tensors[name], b.tensors[name])

    def test_forward_pass_survives_round_trip(self, tmp_path, dvector_bundle):
        path = tmp_path / "dvector.twb"
        save_bundle(dvector_bundle, path)
        loaded = load_bundle(path)
        x = np.random.default_rng(5).standard_normal((40, 49, 1)).astype(np.float32)
        assert np.array_equal(run_network(loaded, x), run_network(dvector_bundle, x))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.twb"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(BundleFormatError):
            load_bundle(path)

    def test_tampered_declared_counts(self, tmp_path, ks_bundle):
        path = tmp_path / "keyword.twb"
        save_bundle(ks_bundle, path)
        raw = path.read_bytes()
        header_len = int.from_bytes(raw[4:8], "little")
        header = raw[8 : 8 + header_len].decode()
        tampered = header.replace('"omega": 2576', '"omega": 9999', 1)
        assert tampered != header
        path.write_bytes(raw[:4] + len(tampered.encode()).to_bytes(4, "little")
                         + tampered.encode() + raw[8 + header_len :])
        with pytest.raises(BundleIntegrityError, match="layer"):
            load_bundle(path)

    def test_integrity_checked_at_construction(self, stream_config):
        spec = dense_spec(3)
        with pytest.raises(BundleIntegrityError):
            WeightBundle(
                name="bad", input_shape=(4,),
                fingerprint=stream_config.fingerprint(),
                layers=[BundleLayer(spec=spec, tensors={
                    "weights": np.zeros((5, 3), np.float32),  # wrong input dim
                    "bias": np.zeros(3, np.float32),
                })],
            )


class TestSpecValidation:
    @pytest.mark.parametrize(
        "factory",
        [
            lambda: LayerSpec(kind="conv3d"),
            lambda: conv2d_spec(0, 3, 4),
            lambda: conv2d_spec(3, 3, 4, padding="reflect"),
            lambda: LayerSpec(kind="maxpool2d", pool_rows=0, pool_cols=2),
            lambda: dense_spec(0),
            lambda: LayerSpec(kind="dense", units=3, activation="tanh"),
        ],
    )
    def test_bad_specs_rejected(self, factory):
        with pytest.raises(ValueError):
            factory()

    def test_output_shape_flatten(self):
        assert output_shape(flatten_spec(), (5, 6, 32)) == (960,)

    def test_batchnorm_weight_count(self):
        assert weight_count(batchnorm_spec(), (40, 49, 1)) == 4

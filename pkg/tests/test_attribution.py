import numpy as np
import pytest

from tsxplain import attribution, ndnet
from tsxplain.attribution import (
    AttributionError,
    Explainer,
    KernelShapConfig,
    LimeConfig,
    brute_force_shapley,
    deeplift_rescale,
    explain,
    kernel_shap,
    lime_surrogate,
    lrp_epsilon,
    saliency,
)
from tsxplain.ndnet import Dense, Flatten, NetworkModel, ReLU, Softmax

from conftest import finite_diff_input, random_small_model, rel_err


def linear_model(w):
    w = np.asarray(w, dtype=float)
    return NetworkModel(
        [Dense(np.vstack([w, -w]), np.zeros(2))], (w.shape[-1],), 2
    ).validate()


class TestSaliency:
    def test_linear_model_gives_abs_w(self):
        w = np.array([[0.5, -2.0, 3.0]])
        r = saliency(linear_model(w), np.ones(3), 0)
        np.testing.assert_allclose(r, [0.5, 2.0, 3.0])

    def test_dead_relu_region_is_zero(self):
        model = NetworkModel(
            [Dense(-np.eye(3), np.zeros(3)), ReLU(), Dense(np.ones((2, 3)), np.zeros(2))],
            (3,),
            2,
        ).validate()
        r = saliency(model, np.array([1.0, 2.0, 3.0]), 0)
        np.testing.assert_array_equal(r, np.zeros(3))

    def test_matches_finite_differences(self, rng):
        for _ in range(5):
            model = random_small_model(rng)
            x = rng.normal(size=model.input_shape)
            cls = int(rng.integers(model.classes))
            r = saliency(model, x.reshape(-1), cls)
            fd = np.abs(finite_diff_input(model, x, cls)).reshape(-1)
            assert rel_err(r, fd) < 1e-4


class TestLrp:
    def test_single_dense_no_bias(self):
        w = np.array([[2.0, -1.0, 0.5]])
        t = np.array([1.0, 3.0, 4.0])
        r = lrp_epsilon(linear_model(w), t, 0, epsilon=0.0)
        np.testing.assert_allclose(r, w[0] * t)

    def test_conservation_bias_free(self, rng):
        for _ in range(20):
            model = random_small_model(rng, with_bias=False)
            x = rng.normal(size=model.input_shape)
            cls = int(rng.integers(model.classes))
            logits, _ = ndnet.forward(model, x)
            r = lrp_epsilon(model, x.reshape(-1), cls, epsilon=0.0)
            assert abs(r.sum() - logits[cls]) < 1e-6

    def test_large_epsilon_drives_relevance_to_zero(self, rng):
        model = random_small_model(rng)
        x = rng.normal(size=model.input_shape).reshape(-1)
        small = np.abs(lrp_epsilon(model, x, 0, epsilon=1e-6)).sum()
        large = np.abs(lrp_epsilon(model, x, 0, epsilon=1e9)).sum()
        assert large < 1e-6 * max(small, 1.0)

    def test_negative_epsilon_rejected(self, rng):
        model = random_small_model(rng)
        with pytest.raises(AttributionError):
            lrp_epsilon(model, np.zeros(int(np.prod(model.input_shape))), 0, epsilon=-1.0)

    def test_unsupported_layer_reported(self):
        model = NetworkModel(
            [Dense(np.eye(2), np.zeros(2)), Softmax()], (2,), 2
        ).validate()
        with pytest.raises(AttributionError, match="softmax"):
            lrp_epsilon(model, np.ones(2), 0)


class TestDeepLift:
    def test_reference_equals_sample_gives_zero(self, rng):
        model = random_small_model(rng)
        x = rng.normal(size=model.input_shape)
        r = deeplift_rescale(model, x.reshape(-1), 0, reference=x)
        np.testing.assert_allclose(r, np.zeros_like(r), atol=1e-12)

    def test_linear_model_zero_reference(self):
        w = np.array([[2.0, -1.0, 0.5]])
        t = np.array([1.0, 3.0, 4.0])
        r = deeplift_rescale(linear_model(w), t, 0)
        np.testing.assert_allclose(r, w[0] * t)

    def test_summation_to_delta(self, rng):
        for _ in range(25):
            model = random_small_model(rng)
            x = rng.normal(size=model.input_shape)
            ref = rng.normal(size=model.input_shape)
            cls = int(rng.integers(model.classes))
            fx, _ = ndnet.forward(model, x)
            fr, _ = ndnet.forward(model, ref)
            r = deeplift_rescale(model, x.reshape(-1), cls, reference=ref)
            assert abs(r.sum() - (fx[cls] - fr[cls])) < 1e-5


class TestLime:
    def test_constant_model_gives_zero(self):
        model = NetworkModel(
            [Dense(np.zeros((2, 5)), np.array([1.0, -1.0]))], (5,), 2
        ).validate()
        r = lime_surrogate(model, np.ones(5), 0, LimeConfig(num_samples=200, seed=0))
        np.testing.assert_allclose(r, np.zeros(5), atol=1e-6)

    def test_linear_model_recovers_w_times_t(self, rng):
        w = np.array([[1.5, -2.0, 0.8, 3.0]])
        t = np.array([2.0, 1.0, -1.0, 0.5])
        model = linear_model(w)
        r = lime_surrogate(model, t, 0, LimeConfig(num_samples=5000, seed=1))
        expect = w[0] * t
        assert np.max(np.abs(r - expect) / np.maximum(np.abs(expect), 1e-9)) < 0.1

    def test_deterministic_per_seed(self, rng):
        model = random_small_model(rng)
        x = rng.normal(size=int(np.prod(model.input_shape)))
        a = lime_surrogate(model, x, 0, LimeConfig(num_samples=100, seed=9))
        b = lime_surrogate(model, x, 0, LimeConfig(num_samples=100, seed=9))
        np.testing.assert_array_equal(a, b)

    def test_too_few_samples_rejected(self, rng):
        model = random_small_model(rng)
        with pytest.raises(AttributionError):
            lime_surrogate(model, np.zeros(int(np.prod(model.input_shape))), 0,
                           LimeConfig(num_samples=5))


class TestKernelShap:
    def _value_fn(self, model, x, cls, background):
        def fn(mask):
            xm = np.where(mask > 0, x, background)
            logits, _ = ndnet.forward(model, xm.reshape(model.input_shape))
            return logits[cls]

        return fn

    def test_exact_equals_brute_force(self, rng):
        for _ in range(5):
            model = random_small_model(rng, input_len=6)
            x = rng.normal(size=6)
            cls = int(rng.integers(model.classes))
            phi = kernel_shap(model, x, cls, KernelShapConfig(exact=True))
            oracle = brute_force_shapley(self._value_fn(model, x, cls, 0.0), 6)
            assert np.abs(phi - oracle).max() < 1e-6

    def test_efficiency_constraint(self, rng):
        model = random_small_model(rng, input_len=20)
        x = rng.normal(size=20)
        bg = rng.normal(size=20)
        phi = kernel_shap(
            model, x, 1, KernelShapConfig(num_coalitions=64, background=bg, seed=0)
        )
        fx, _ = ndnet.forward(model, x.reshape(model.input_shape))
        fb, _ = ndnet.forward(model, bg.reshape(model.input_shape))
        assert abs(phi.sum() - (fx[1] - fb[1])) < 1e-6

    def test_additive_model_decomposes(self):
        # f(x) = sum w_i x_i is additive, so phi_i = w_i x_i with zero background
        w = np.array([[1.0, -2.0, 0.5, 4.0]])
        t = np.array([1.0, 2.0, -1.0, 0.25])
        phi = kernel_shap(linear_model(w), t, 0, KernelShapConfig(exact=True))
        np.testing.assert_allclose(phi, w[0] * t, atol=1e-9)

    def test_symmetric_features_equal_attribution(self):
        w = np.array([[2.0, 2.0, -1.0]])
        t = np.array([1.5, 1.5, 0.5])
        phi = kernel_shap(linear_model(w), t, 0, KernelShapConfig(exact=True))
        assert abs(phi[0] - phi[1]) < 1e-6

    def test_exact_mode_cost_guard(self, rng):
        model = random_small_model(rng, input_len=30)
        with pytest.raises(AttributionError, match="exact mode"):
            kernel_shap(model, np.zeros(30), 0, KernelShapConfig(exact=True))

    def test_too_few_coalitions_rejected(self, rng):
        model = random_small_model(rng, input_len=20)
        with pytest.raises(AttributionError):
            kernel_shap(model, np.zeros(20), 0,
                        KernelShapConfig(num_coalitions=5, exact=False))

    def test_deterministic_per_seed(self, rng):
        model = random_small_model(rng, input_len=15)
        x = rng.normal(size=15)
        a = kernel_shap(model, x, 0, KernelShapConfig(num_coalitions=40, seed=4))
        b = kernel_shap(model, x, 0, KernelShapConfig(num_coalitions=40, seed=4))
        np.testing.assert_array_equal(a, b)


class TestExplainDispatch:
    @pytest.mark.parametrize("method,params", [
        ("saliency", {}),
        ("lrp", {"epsilon": 1e-6}),
        ("deeplift", {}),
        ("lime", {"num_samples": 64}),
        ("shap", {"num_coalitions": 32, "exact": False}),
    ])
    def test_every_method_yields_finite_aligned_vector(self, rng, method, params):
        model = random_small_model(rng, input_len=10)
        x = rng.normal(size=int(np.prod(model.input_shape)))
        rv = explain(Explainer(method, params), model, x, sample_index=0)
        assert rv.values.shape == (int(np.prod(model.input_shape)),)
        assert np.isfinite(rv.values).all()
        assert rv.method == method

    def test_target_defaults_to_prediction(self, rng):
        model = random_small_model(rng, input_len=8)
        x = rng.normal(size=int(np.prod(model.input_shape)))
        logits, _ = ndnet.forward(model, x.reshape(model.input_shape))
        rv = explain(Explainer("saliency"), model, x)
        assert rv.target_class == int(np.argmax(logits))

    def test_length_mismatch_rejected(self, rng):
        model = random_small_model(rng, input_len=8)
        with pytest.raises(AttributionError):
            explain(Explainer("saliency"), model, np.zeros(5))

    def test_unknown_method_rejected(self):
        with pytest.raises(AttributionError):
            Explainer("gradcam").validate()

    def test_explain_dataset_matches_per_sample(self, rng):
        from tsxplain import data

        model = random_small_model(rng, input_len=12)
        values = rng.normal(size=(6, 12))
        ds = data.Dataset(values, rng.integers(0, 2, 6), 2)
        mat, targets = attribution.explain_dataset(Explainer("lrp"), model, ds)
        for i in range(6):
            rv = explain(Explainer("lrp"), model, values[i],
                         target_class=int(targets[i]), sample_index=i)
            np.testing.assert_allclose(mat[i], rv.values)


class TestRelevanceIO:
    def test_round_trip(self, rng, tmp_path):
        mat = rng.normal(size=(4, 9))
        targets = rng.integers(0, 2, 4)
        expl = Explainer("saliency", {})
        attribution.save_relevance(mat, targets, expl, 7, str(tmp_path / "rel"))
        back, manifest = attribution.load_relevance(str(tmp_path / "rel.json"))
        np.testing.assert_array_equal(back, mat)
        assert manifest["method"] == "saliency"
        assert manifest["seed"] == 7

    def test_corrupt_matrix_detected(self, rng, tmp_path):
        mat = rng.normal(size=(4, 9))
        attribution.save_relevance(mat, [0] * 4, Explainer("lrp"), 0, str(tmp_path / "rel"))
        with open(tmp_path / "rel.bin", "ab") as fh:
            fh.write(b"\x00" * 8)
        with pytest.raises(AttributionError):
            attribution.load_relevance(str(tmp_path / "rel.json"))

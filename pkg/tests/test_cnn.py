import numpy as np
import pytest
from PIL import Image

from oracles import naive_conv2d, naive_maxpool
from usability_audit.cnn import (
    AdamConfig, AdamState, CnnConfig, CnnModel, FocalLossParams, TrainConfig, adam_step, conv2d_forward,
    evaluate_split, focal_loss, load_split, maxpool_backward, maxpool_forward, predict_cnn, softmax,
    train, train_on_arrays,
)
from usability_audit.cnn.gradcheck import (
    check_conv_layer, check_dense_linear, check_full_stack, numeric_gradient, relative_error,
)
from usability_audit.cnn.layers import Dense, Dropout, he_normal
from usability_audit.cnn.train import LabeledImages
from usability_audit.errors import EmptyDataset, ModelError, ShapeMismatch
from usability_audit.grades import UsabilityGrade

TINY = CnnConfig(input_side=16, filters=(2, 3, 4), dense_units=6)


# --- convolution and pooling -------------------------------------------------------------

def test_identity_kernel():
    x = np.random.default_rng(0).normal(size=(1, 6, 6, 3))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0] = np.eye(3)
    np.testing.assert_array_equal(conv2d_forward(x, k)[0], x)


def test_all_ones_kernel_on_constant_image():
    x = np.full((5, 5, 1), 2.5)
    out, _ = conv2d_forward(x, np.ones((3, 3, 1, 1)))
    np.testing.assert_allclose(out[1:-1, 1:-1, 0], 9 * 2.5)
    assert out[0, 0, 0] == pytest.approx(4 * 2.5)


@pytest.mark.parametrize("seed", range(3))
def test_conv_matches_direct_summation(seed):
    rng = np.random.default_rng(seed)
    x, w, b = rng.normal(size=(2, 5, 5, 2)), rng.normal(size=(3, 3, 2, 3)), rng.normal(size=3)
    np.testing.assert_allclose(conv2d_forward(x, w, b)[0], naive_conv2d(x, w, b), atol=1e-12)


def test_conv_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        conv2d_forward(np.zeros((1, 4, 4, 2)), np.zeros((3, 3, 3, 1)))


def test_pool_examples():
    out, idx = maxpool_forward(np.array([[1.0, 2.0], [3.0, 4.0]])[..., None])
    assert out.shape == (1, 1, 1) and out[0, 0, 0] == 4.0 and idx[0, 0, 0] == 3
    np.testing.assert_array_equal(maxpool_forward(np.full((1, 4, 4, 2), 7.0))[0], np.full((1, 2, 2, 2), 7.0))
    with pytest.raises(ShapeMismatch):
        maxpool_forward(np.zeros((1, 3, 4, 1)))


def test_pool_matches_window_scan_and_routes_gradient():
    x = np.random.default_rng(4).normal(size=(2, 6, 8, 3))
    out, idx = maxpool_forward(x)
    np.testing.assert_array_equal(out, naive_maxpool(x))
    d = maxpool_backward(np.ones_like(out), idx, x.shape)
    # exactly one unit per window receives the gradient, and it is the maximum
    assert d.sum() == out.size
    np.testing.assert_array_equal(np.sort(x[d == 1]), np.sort(out.ravel()))


# --- softmax and focal loss -------------------------------------------------------------

def test_softmax_properties():
    np.testing.assert_allclose(softmax(np.zeros(5)), 0.2)
    z = np.random.default_rng(0).normal(size=(10, 5))
    np.testing.assert_allclose(softmax(z + 123.4), softmax(z), atol=1e-12)
    assert softmax(np.array([50.0, 0, 0, 0, 0]))[0] > 0.999999
    assert np.all(np.isfinite(softmax(np.array([1e4, -1e4, 0, 0, 0]))))


def test_focal_closed_forms():
    p = np.array([0.5, 0.2, 0.1, 0.1, 0.1])
    assert focal_loss(p, 0)[0] == pytest.approx(0.25 * np.log(2), abs=1e-12)
    assert focal_loss(p, 0)[0] == pytest.approx(0.173287, abs=1e-6)
    assert focal_loss(np.array([1.0, 0, 0, 0, 0]), 0)[0] == 0.0
    probs = softmax(np.random.default_rng(1).normal(size=(7, 5)))
    labels = np.arange(7) % 5
    ce = -np.log(probs[np.arange(7), labels]).mean()
    assert focal_loss(probs, labels, FocalLossParams(gamma=0.0))[0] == pytest.approx(ce, abs=1e-12)


def test_focal_loss_clamps_zero_probability():
    loss, grad = focal_loss(np.array([0.0, 1.0, 0, 0, 0]), 0)
    assert loss == pytest.approx(-np.log(1e-12) * (1 - 1e-12) ** 2)
    assert np.all(np.isfinite(grad))


@pytest.mark.parametrize("gamma", [0.0, 0.5, 2.0, 3.0])
def test_focal_gradient_wrt_logits(gamma):
    rng = np.random.default_rng(int(gamma * 10))
    z = rng.normal(size=(4, 5))
    labels = rng.integers(0, 5, 4)
    params = FocalLossParams(gamma=gamma, alpha=0.7)
    analytic = focal_loss(softmax(z), labels, params)[1]
    numeric = numeric_gradient(lambda: focal_loss(softmax(z), labels, params)[0], z)
    assert relative_error(analytic, numeric) < 1e-7


def test_focal_params_validated():
    with pytest.raises(ValueError):
        FocalLossParams(gamma=-1)
    with pytest.raises(ValueError):
        FocalLossParams(alpha=0)


# --- Adam ----------------------------------------------------------------------------------

def test_adam_zero_gradient_is_a_no_op():
    w = {"w": np.array([1.0, -2.0])}
    state = AdamState()
    adam_step(w, {"w": np.zeros(2)}, state)
    np.testing.assert_array_equal(w["w"], [1.0, -2.0])
    np.testing.assert_array_equal(state.m["w"], 0)
    np.testing.assert_array_equal(state.v["w"], 0)


@pytest.mark.parametrize("g", [1e-3, 0.5, -3.0, 250.0])
def test_adam_first_step_moves_by_lr(g):
    cfg = AdamConfig()
    w = {"w": np.array([0.0])}
    adam_step(w, {"w": np.array([g])}, AdamState(), cfg)
    expected = cfg.lr * abs(g) / (np.sqrt(g * g) + cfg.eps)
    assert abs(w["w"][0]) == pytest.approx(expected, abs=1e-15)
    assert abs(abs(w["w"][0]) - cfg.lr) < 1e-6
    assert np.sign(w["w"][0]) == -np.sign(g)


def test_adam_second_step_closed_form():
    cfg = AdamConfig(lr=0.1)
    w = {"w": np.array([0.0])}
    state = AdamState()
    adam_step(w, {"w": np.array([1.0])}, state, cfg)
    adam_step(w, {"w": np.array([-2.0])}, state, cfg)
    m = 0.9 * 0.1 * 1.0 + 0.1 * -2.0
    v = 0.999 * 0.001 * 1.0 + 0.001 * 4.0
    step2 = 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    assert w["w"][0] == pytest.approx(-0.1 * 1 / (1 + 1e-8) - step2, rel=1e-12)


def _scalar_adam(lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    w = m = v = 0.0
    for t in range(1, steps + 1):
        g = 2 * (w - 3.0)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return w


def _vector_adam(lr, steps):
    w = {"w": np.array([0.0])}
    state = AdamState()
    for _ in range(steps):
        adam_step(w, {"w": 2 * (w["w"] - 3.0)}, state, AdamConfig(lr=lr))
    return w["w"][0]


def test_adam_minimizes_quadratic():
    assert abs(_vector_adam(1e-2, 5000) - 3.0) < 0.01


def test_adam_trajectory_matches_scalar_reference():
    # at lr=1e-3 each step moves at most ~1e-3, and the long second-moment
    # memory slows it further: 5000 steps end near 2.938, not within 0.01 of 3
    for lr in (1e-3, 1e-2):
        assert _vector_adam(lr, 5000) == pytest.approx(_scalar_adam(lr, 5000), abs=1e-12)


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())


# --- dropout, dense, init ----------------------------------------------------------------

def test_dropout_binomial_bound_and_inference_identity():
    layer = Dropout(0.5)
    x = np.ones(10_000)
    out = layer.forward(x, training=True, rng=np.random.default_rng(0))
    zeros = int((out == 0).sum())
    # mean 5000, sigma sqrt(10^4 * 0.25) = 50
    assert abs(zeros - 5000) <= 6 * 50
    assert set(np.unique(out)) <= {0.0, 2.0}
    np.testing.assert_array_equal(layer.forward(x, training=False), x)
    np.testing.assert_array_equal(layer.backward(np.ones(10_000)), x)


def test_dense_forward_and_linear_gradcheck():
    rng = np.random.default_rng(0)
    layer = Dense(3, 2, rng=rng)
    x = rng.normal(size=(4, 3))
    np.testing.assert_allclose(layer.forward(x), x @ layer.params["W"] + layer.params["b"])
    assert check_dense_linear(seed=1).max_error < 1e-9


def test_he_normal_scale():
    w = he_normal(np.random.default_rng(0), (200, 200), fan_in=50)
    assert w.std() == pytest.approx(np.sqrt(2 / 50), rel=0.02)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_checks_quick(seed):
    assert check_conv_layer(seed=seed).max_error < 1e-6
    assert check_full_stack(seed=seed).max_error < 1e-4


# --- model -----------------------------------------------------------------------------------

def test_default_architecture():
    m = CnnModel(CnnConfig(input_side=32))
    kinds = [layer.name for layer in m.layers]
    assert kinds == ["conv", "relu", "pool"] * 3 + ["dropout", "flatten", "dense", "relu", "dense"]
    shapes = {k: v.shape for k, v in m.named_params().items()}
    assert shapes["0.W"] == (3, 3, 3, 16) and shapes["3.W"] == (3, 3, 16, 32) and shapes["6.W"] == (3, 3, 32, 64)
    assert shapes["11.W"] == (4 * 4 * 64, 128) and shapes["13.W"] == (128, 5)
    with pytest.raises(ValueError):
        CnnConfig(input_side=20)


def test_predict_outputs_distribution_and_is_stable():
    m = CnnModel(TINY, seed=2)
    img = np.random.default_rng(0).random((16, 16, 3))
    grade, probs = predict_cnn(m, img)
    assert abs(probs.sum() - 1) < 1e-6 and np.all(probs >= 0)
    assert grade == UsabilityGrade.ordered()[int(np.argmax(probs))]
    assert probs[grade.rank] == probs.max()
    grade2, probs2 = predict_cnn(m, img)
    assert grade2 == grade and np.array_equal(probs, probs2)
    with pytest.raises(ShapeMismatch):
        predict_cnn(m, np.zeros((8, 8, 3)))


def test_save_load_round_trip(tmp_path):
    m = CnnModel(TINY, seed=3)
    m.save(tmp_path / "m.npz")
    loaded = CnnModel.load(tmp_path / "m.npz")
    x = np.random.default_rng(1).random((3, 16, 16, 3))
    np.testing.assert_array_equal(loaded.predict_proba(x), m.predict_proba(x))
    (tmp_path / "bad.npz").write_bytes(b"garbage")
    with pytest.raises(ModelError):
        CnnModel.load(tmp_path / "bad.npz")


# --- training ------------------------------------------------------------------------------

def toy_images(n_per_class=2, classes=4, side=32, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.random((n_per_class * classes, side, side, 3)).astype(np.float32)
    labels = np.repeat(np.arange(classes), n_per_class)
    return LabeledImages(images, labels, [f"img{i}" for i in range(len(labels))])


def test_training_is_seed_deterministic():
    cfg = TrainConfig(epochs=4, batch_size=4, seed=5, input_side=16, filters=(2, 2, 2), dense_units=8)
    data = toy_images(side=16)
    a = train_on_arrays(data, cfg).log
    b = train_on_arrays(data, cfg).log
    assert a == b
    c = train_on_arrays(data, TrainConfig(**{**cfg.__dict__, "seed": 6})).log
    assert c != a


@pytest.mark.xfail(strict=True, reason="Adam keeps oscillating near convergence, so tiny epoch-to-epoch "
                   "rises in the toy-set loss survive past epoch 3")
def test_overfit_loss_monotone_after_epoch_three():
    cfg = TrainConfig(epochs=200, batch_size=8, seed=1, input_side=32)
    log = train_on_arrays(toy_images(), cfg).log
    losses = [e["loss"] for e in log][3:]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_overfit_loss_trend_after_epoch_three():
    """What does hold: the loss keeps falling overall and never climbs back far."""
    cfg = TrainConfig(epochs=60, batch_size=8, seed=1, input_side=32)
    losses = np.array([e["loss"] for e in train_on_arrays(toy_images(), cfg).log])
    tail = losses[3:]
    assert tail[-1] < 0.05 * tail[0]
    running_min = np.minimum.accumulate(tail)
    assert np.all(tail <= 2 * running_min + 1e-6)


def _write_split(root, per_class=2, side=20, seed=0):
    rng = np.random.default_rng(seed)
    for part in ("train", "test"):
        for g in UsabilityGrade.ordered()[:3]:
            d = root / part / g.value
            d.mkdir(parents=True)
            for i in range(per_class):
                Image.fromarray(rng.integers(0, 256, (side, side, 3), dtype=np.uint8)).save(d / f"{i}.png")


def test_train_from_folders_skips_undecodable(tmp_path):
    _write_split(tmp_path)
    (tmp_path / "train" / "good" / "broken.png").write_bytes(b"nope")
    cfg = TrainConfig(epochs=2, batch_size=4, input_side=16, filters=(2, 2, 2), dense_units=8)
    result = train(tmp_path, cfg)
    assert result.skipped == 1 and len(result.log) == 2
    actual, predicted, skipped = evaluate_split(result.model, tmp_path / "test")
    assert len(actual) == len(predicted) == 6 and skipped == 0


def test_empty_or_missing_split(tmp_path):
    with pytest.raises(EmptyDataset):
        load_split(tmp_path / "absent", 16)
    (tmp_path / "train" / "good").mkdir(parents=True)
    with pytest.raises(EmptyDataset):
        train(tmp_path, TrainConfig(input_side=16))

import math

import numpy as np
import pytest

from codeimage import cnn
from codeimage.errors import BadMagic, RowsTooSmall, ShapeMismatch, SingleClassDataset, TruncatedFile
from codeimage.imagegen import CodeImage
from codeimage.ingest import SAFE, VULNERABLE
from gradcheck import finite_difference, relative_errors
from oracles import cross_entropy, naive_forward, naive_preactivations


def random_image(rng, rows=12, populated=None, scale=1.0):
    ch = (rng.standard_normal((3, rows, 128)) * scale).astype(np.float32)
    if populated is not None:
        ch[:, populated:] = 0
    return ch


def with_random_biases(model, rng):
    for b in model.biases:
        b[:] = rng.normal(0, 0.05, b.shape)
    model.fc_bias[:] = rng.normal(0, 0.1, 2)
    return model


def test_init_is_deterministic_and_bounded():
    a, b = cnn.init_model(3, 12), cnn.init_model(3, 12)
    for x, y in zip(a.parameters(), b.parameters()):
        assert x.tobytes() == y.tobytes()
    assert a.fc_weights.shape == (2, 320) and len(a.filters) == 10
    for m, w in zip(a.heights, a.filters):
        assert w.shape == (32, 3, m, 128)
        assert cnn.fan_in(m) == 3 * m * 128
        assert np.abs(w).max() <= math.sqrt(1 / cnn.fan_in(m))
    assert all(not b.any() for b in a.biases)
    assert cnn.init_model(4, 12).filters[0].tobytes() != a.filters[0].tobytes()


def test_rows_too_small():
    with pytest.raises(RowsTooSmall):
        cnn.init_model(0, 9)


def test_zero_image_zero_head():
    model = cnn.init_model(0, 12)
    model.fc_weights[:] = 0
    out = cnn.forward(model, np.zeros((3, 12, 128), dtype=np.float32))
    assert out.logits.tolist() == [0.0, 0.0]
    assert cnn.softmax(out.logits).tolist() == [0.5, 0.5]


def test_positive_homogeneity(rng):
    model = cnn.init_model(1, 12)
    x = random_image(rng).astype(np.float64)
    a = naive_preactivations(model.filters, model.biases, x)
    b = naive_preactivations(model.filters, model.biases, 2.5 * x)
    for pa, pb in zip(a, b):
        np.testing.assert_allclose(pb, 2.5 * pa, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(cnn.forward(model, 2.5 * x).pooled, 2.5 * cnn.forward(model, x).pooled, rtol=1e-6)


@pytest.mark.parametrize("rows,populated", [(12, None), (12, 5), (30, 17), (30, 3), (20, 0)])
def test_forward_matches_naive_oracle(rng, rows, populated):
    model = with_random_biases(cnn.init_model(2, rows), rng)
    x = random_image(rng, rows, populated)
    pooled, logits = naive_forward(model, x)
    out = cnn.forward(model, x)
    np.testing.assert_allclose(out.pooled, pooled, atol=1e-12)
    np.testing.assert_allclose(out.logits, logits, atol=1e-12)


def test_forward_shape_mismatch():
    model = cnn.init_model(0, 12)
    with pytest.raises(ShapeMismatch):
        cnn.forward(model, np.zeros((3, 13, 128), dtype=np.float32))


def test_uniform_logits_loss_is_ln2():
    model = cnn.init_model(0, 12)
    model.fc_weights[:] = 0
    loss, _ = cnn.loss_and_grad(model, [(np.zeros((3, 12, 128), dtype=np.float32), 0)])
    assert loss == pytest.approx(math.log(2), abs=1e-15)


def test_gradient_matches_finite_differences(rng):
    model = with_random_biases(cnn.init_model(5, 12), rng)
    batch = [(random_image(rng), int(rng.integers(2))) for _ in range(3)]
    loss, grads = cnn.loss_and_grad(model, batch)
    assert loss == pytest.approx(np.mean([cross_entropy(naive_forward(model, x)[1], y) for x, y in batch]), abs=1e-12)
    fd, kinks = finite_difference(model, batch)
    errs = relative_errors(grads, fd, floor=1e-10)
    worst = max(float(e[~k].max()) for e, k in zip(errs, kinks))
    assert worst <= 1e-3
    assert sum(int(k.sum()) for k in kinks) < 0.02 * sum(k.size for k in kinks)


def test_duplicated_batch_is_invariant(rng):
    model = with_random_biases(cnn.init_model(6, 12), rng)
    batch = [(random_image(rng), 0), (random_image(rng), 1)]
    l1, g1 = cnn.loss_and_grad(model, batch)
    l2, g2 = cnn.loss_and_grad(model, batch + batch)
    assert l1 == pytest.approx(l2, rel=1e-13)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-15)


def test_class_weights_reweight_the_mean(rng):
    model = cnn.init_model(6, 12)
    x0, x1 = random_image(rng), random_image(rng)
    l0, _ = cnn.loss_and_grad(model, [(x0, 0)])
    l1, _ = cnn.loss_and_grad(model, [(x1, 1)])
    lw, _ = cnn.loss_and_grad(model, [(x0, 0), (x1, 1)], class_weights=[1.0, 3.0])
    assert lw == pytest.approx((l0 + 3 * l1) / 4, rel=1e-12)


def test_adam_zero_gradient_keeps_parameters():
    model = cnn.init_model(0, 12)
    before = [p.copy() for p in model.parameters()]
    state = cnn.AdamState.zeros_like(model.parameters())
    for _ in range(5):
        cnn.adam_step(model, [np.zeros_like(p) for p in model.parameters()], state)
    for a, b in zip(before, model.parameters()):
        assert np.array_equal(a, b)


def test_adam_first_step_closed_form(rng):
    model = cnn.init_model(0, 12)
    before = [p.copy() for p in model.parameters()]
    grads = [rng.standard_normal(p.shape) for p in model.parameters()]
    state = cnn.AdamState.zeros_like(model.parameters())
    cnn.adam_step(model, grads, state, lr=0.001)
    for p0, p1, g in zip(before, model.parameters(), grads):
        # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        np.testing.assert_allclose(p0 - p1, 0.001 * g / (np.abs(g) + 1e-8), rtol=1e-9, atol=1e-18)
        assert np.all(np.abs(p0 - p1) <= 0.001 * (1 + 1e-12))


def toy_dataset(rng, n=20, rows=10):
    images = []
    for i in range(n):
        label = VULNERABLE if i % 2 else SAFE
        ch = np.zeros((3, rows, 128), dtype=np.float32)
        ch[:, :4, :64] = 1.0 if label == VULNERABLE else 0.0
        ch[:, :4, 64:] = 0.0 if label == VULNERABLE else 1.0
        ch += (0.05 * rng.standard_normal(ch.shape)).astype(np.float32) * (ch != 0)
        images.append(CodeImage(ch, 1, f"s{i}", label))
    return images


def test_separable_toy_reaches_full_accuracy(rng):
    data = toy_dataset(rng)
    model, trace = cnn.train(cnn.init_model(0, 10), data, cnn.TrainConfig(epochs=50, batch_size=8), seed=0)
    assert len(trace) == 50
    assert max(t["train_acc"] for t in trace) == 1.0
    assert trace[-1]["loss"] < trace[0]["loss"]
    classes, probs = cnn.predict_batch(model, data)
    assert list(classes) == [1 if im.label == VULNERABLE else 0 for im in data]


def test_training_is_deterministic(rng):
    data = toy_dataset(rng, n=8)
    a, ta = cnn.train(cnn.init_model(1, 10), data, cnn.TrainConfig(epochs=3, batch_size=4), seed=5)
    b, tb = cnn.train(cnn.init_model(1, 10), data, cnn.TrainConfig(epochs=3, batch_size=4), seed=5)
    assert ta == tb
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.parameters(), b.parameters()))


def test_single_class_rejected(rng):
    data = [im for im in toy_dataset(rng, n=6) if im.label == SAFE]
    with pytest.raises(SingleClassDataset):
        cnn.train(cnn.init_model(0, 10), data, cnn.TrainConfig(epochs=1))


def test_default_config_matches_table():
    c = cnn.TrainConfig()
    assert (c.batch_size, c.learning_rate, c.epochs) == (32, 0.001, 100)
    assert (c.loss, c.activation, c.optimizer, c.class_weighting) == ("cross_entropy", "relu", "adam", False)


def test_predict_example_and_shift_invariance():
    model = cnn.init_model(0, 12)
    model.fc_weights[:] = 0
    model.fc_bias[:] = [3.0, -1.0]
    x = np.zeros((3, 12, 128), dtype=np.float32)
    label, prob = cnn.predict(model, x)
    assert label == SAFE
    assert prob == pytest.approx(math.exp(3) / (math.exp(3) + math.exp(-1)), abs=1e-15)
    assert round(prob, 3) == 0.982
    model.fc_bias += 7.5
    assert cnn.predict(model, x)[0] == label
    assert cnn.predict(model, x)[1] == pytest.approx(prob, abs=1e-12)


def test_checkpoint_round_trip(tmp_path, rng):
    model = with_random_biases(cnn.init_model(9, 12), rng)
    cnn.save_model(model, tmp_path / "m.vmcnet")
    back = cnn.load_model(tmp_path / "m.vmcnet")
    assert back.rows == 12 and back.heights == model.heights and back.seed == 9
    for a, b in zip(model.parameters(), back.parameters()):
        assert np.array_equal(a.astype(np.float32), b)
    data = cnn.serialize_model(model)
    with pytest.raises(BadMagic):
        cnn.deserialize_model(b"X" * 7 + data[7:])
    with pytest.raises(TruncatedFile):
        cnn.deserialize_model(data[:-4])
    with pytest.raises(ShapeMismatch):
        cnn.deserialize_model(data + b"\0" * 4)

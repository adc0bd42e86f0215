import numpy as np

from knobcf_temporal.tuning.layers import (
    DenseStack,
    EarlyStopping,
    MomentumSGD,
    flatten,
    sigmoid,
    softmax,
    unflatten,
)


def test_softmax_rows_sum_to_one():
    p = softmax(np.array([[1000.0, 1000.0], [-5.0, 5.0]]))
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    np.testing.assert_allclose(p[0], [0.5, 0.5])


def test_sigmoid_is_stable_at_extremes():
    out = sigmoid(np.array([-800.0, 0.0, 800.0]))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [0.0, 0.5, 1.0])


def test_dense_stack_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    stack = DenseStack([4, 6, 3], prefix="t", rng=rng)
    x = rng.normal(size=(5, 4))
    target = rng.normal(size=(5, 3))

    def loss() -> float:
        out, _ = stack.forward(x)
        return 0.5 * float(np.sum((out - target) ** 2))

    out, cache = stack.forward(x)
    _, grads = stack.backward(out - target, cache)
    eps = 1e-6
    for name, param in stack.params.items():
        numeric = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            saved = param[idx]
            param[idx] = saved + eps
            up = loss()
            param[idx] = saved - eps
            down = loss()
            param[idx] = saved
            numeric[idx] = (up - down) / (2 * eps)
        np.testing.assert_allclose(grads[name], numeric, rtol=1e-4, atol=1e-7)


def test_momentum_accumulates_velocity():
    params = {"w": np.array([1.0])}
    optimizer = MomentumSGD(params, learning_rate=0.1, momentum=0.5)
    optimizer.step({"w": np.array([1.0])})
    optimizer.step({"w": np.array([1.0])})
    # v1 = -0.1, v2 = 0.5 * -0.1 - 0.1
    np.testing.assert_allclose(params["w"], [1.0 - 0.1 - 0.15])


def test_early_stopping_waits_for_patience():
    stopper = EarlyStopping(patience=3, min_delta=1e-3)
    assert not any(stopper.update(loss) for loss in [5.0, 4.0, 3.0, 2.0])
    assert not stopper.update(2.0)
    assert not stopper.update(2.0)
    assert stopper.update(2.0)


def test_flatten_is_row_major():
    a = np.arange(6.0).reshape(2, 3)
    assert flatten(a) == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
    np.testing.assert_array_equal(unflatten(flatten(a), (2, 3)), a)

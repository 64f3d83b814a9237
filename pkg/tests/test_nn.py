import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retcap.gradcheck import central_difference, relative_error
from retcap.nn import (
    Adam,
    Mlp,
    MlpSpec,
    ParamVector,
    StateError,
    adam_step,
    backward,
    categorical_head,
    load_params,
    mlp_forward,
    mlp_init,
    sample_action,
    save_params,
)


def reference_forward(values, dims, x):
    """Straight-line recomputation from the flat vector, independent of ParamVector.layers."""
    off = 0
    h = np.atleast_2d(x)
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        w = values[off:off + a * b].reshape(a, b)
        off += a * b
        bias = values[off:off + b]
        off += b
        h = h @ w + bias
        if i < len(dims) - 2:
            h = np.tanh(h)
    return h


def test_param_count():
    spec = MlpSpec(2, (4,), 3)
    assert spec.n_params == 2 * 4 + 4 + 4 * 3 + 3 == 27
    assert len(mlp_init(spec, 0)) == 27


def test_init_is_deterministic_with_zero_biases():
    spec = MlpSpec(3, (5, 4), 2)
    a, b = mlp_init(spec, 7), mlp_init(spec, 7)
    assert np.array_equal(a.values, b.values)
    for w, bias in a.layers():
        assert np.all(bias == 0)
        assert np.all(np.abs(w) <= 1 / np.sqrt(w.shape[0]))
    assert np.all(mlp_forward(a, spec, np.zeros(3)) == 0)


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec(2, (), 1)
    with pytest.raises(ValueError):
        MlpSpec(0, (3,), 1)
    with pytest.raises(ValueError):
        MlpSpec(2, (3,), 1, activation="relu")


def test_zero_params_give_zero_output():
    spec = MlpSpec(4, (6,), 3)
    pv = ParamVector(np.zeros(spec.n_params), np.zeros(spec.n_params), spec.layout)
    assert np.all(mlp_forward(pv, spec, np.ones(4)) == 0)


def test_zero_hidden_weights_output_bias():
    spec = MlpSpec(3, (3,), 3)
    pv = mlp_init(spec, 1)
    layers = list(pv.layers())
    layers[0][0][...] = 0.0
    layers[-1][1][...] = [0.5, -1.0, 2.0]
    assert np.allclose(mlp_forward(pv, spec, np.array([1.0, 2.0, 3.0])), [0.5, -1.0, 2.0])


def test_forward_matches_reference():
    rng = np.random.default_rng(3)
    spec = MlpSpec(5, (7, 6), 4)
    pv = mlp_init(spec, 3)
    pv.values[:] = rng.normal(size=pv.values.size)
    x = rng.normal(size=(9, 5))
    np.testing.assert_allclose(mlp_forward(pv, spec, x), reference_forward(pv.values, spec.dims, x), rtol=0, atol=1e-12)
    np.testing.assert_allclose(mlp_forward(pv, spec, x[0]), reference_forward(pv.values, spec.dims, x[0])[0],
                               rtol=0, atol=1e-12)


def test_forward_dimension_mismatch():
    spec = MlpSpec(3, (4,), 2)
    with pytest.raises(ValueError):
        mlp_forward(mlp_init(spec, 0), spec, np.zeros(5))


def test_backward_without_forward():
    spec = MlpSpec(3, (4,), 2)
    with pytest.raises(StateError):
        backward(mlp_init(spec, 0), np.ones(2))


def test_backward_finite_difference():
    rng = np.random.default_rng(11)
    spec = MlpSpec(3, (8, 6), 2)  # 32 + 54 + 14 = 100 parameters
    net = Mlp(spec, seed=5)
    x = rng.normal(size=(6, 3))
    target = rng.normal(size=(6, 2))

    def loss():
        return float(np.sum((net(x) - target) ** 2 * 0.5))

    out = net(x)
    net.backward(out - target)
    numeric = central_difference(loss, net.params.values, 1e-5)
    assert relative_error(net.params.grads, numeric).max() < 1e-4


def test_backward_zero_and_accumulation():
    spec = MlpSpec(3, (5,), 2)
    net = Mlp(spec, seed=2)
    x = np.array([[0.1, -0.2, 0.3]])
    net(x)
    net.backward(np.zeros((1, 2)))
    assert np.all(net.params.grads == 0)
    g = np.array([[1.0, -2.0]])
    net(x)
    net.backward(g)
    once = net.params.grads.copy()
    net(x)
    net.backward(g)
    assert np.array_equal(net.params.grads, 2 * once)


def test_categorical_head_examples():
    probs, logp = categorical_head(np.zeros(4))
    assert np.allclose(logp, np.log(0.25))
    z = np.array([0.3, -1.2, 2.0])
    assert np.allclose(categorical_head(z)[0], categorical_head(z + 123.0)[0])
    p, _ = categorical_head(np.array([10.0, 0.0]))
    e = np.exp(10.0)
    assert abs(p[0] - e / (e + 1)) < 1e-12
    assert np.allclose(p, [0.9999546, 0.0000454], atol=1e-6)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=10))
def test_categorical_head_is_a_distribution(logits):
    p, logp = categorical_head(np.array(logits))
    assert np.all(np.isfinite(p)) and np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.all(logp <= 0)


def test_sample_action():
    rng = np.random.default_rng(0)
    assert all(sample_action(np.array([1.0, 0.0, 0.0]), rng) == 0 for _ in range(200))
    draws = sample_action(np.tile([0.5, 0.5], (100_000, 1)), np.random.default_rng(1))
    assert 0.49 <= np.mean(draws == 0) <= 0.51
    p = np.array([0.2, 0.3, 0.5])
    assert sample_action(p, np.random.default_rng(9)) == sample_action(p, np.random.default_rng(9))


def test_adam_zero_grad_no_change():
    spec = MlpSpec(2, (3,), 1)
    pv = mlp_init(spec, 0)
    before = pv.values.copy()
    adam_step(pv, 1e-3)
    assert np.array_equal(before, pv.values)


def test_adam_first_step_is_signed_lr():
    pv = ParamVector(np.zeros(3), np.array([0.5, -2.0, 1e-3]), [(0, (1, 3))])
    opt = Adam(pv, lr=1e-3)
    opt.step()
    np.testing.assert_allclose(pv.values, [-1e-3, 1e-3, -1e-3], rtol=1e-4)
    assert np.all(pv.grads == 0)


def test_adam_minimizes_parabola():
    pv = ParamVector(np.array([1.0]), np.zeros(1), [(0, (1, 1))])
    opt = None
    for step in range(500):
        pv.grads[:] = 2 * pv.values
        opt = adam_step(pv, 1e-2, optimizer=opt)
        if abs(pv.values[0]) < 0.1:
            break
    assert abs(pv.values[0]) < 0.1


def scalar_adam(x, lr, steps):
    """Independent scalar recursion of bias-corrected Adam on f(x) = x^2."""
    m = v = 0.0
    for t in range(1, steps + 1):
        g = 2 * x
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x -= lr * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    return x


def test_adam_matches_scalar_recursion():
    pv = ParamVector(np.array([1.0]), np.zeros(1), [(0, (1, 1))])
    opt = Adam(pv, lr=1e-2)
    for _ in range(200):
        pv.grads[:] = 2 * pv.values
        opt.step()
    assert pv.values[0] == pytest.approx(scalar_adam(1.0, 1e-2, 200), abs=1e-12)


def test_adam_state_roundtrip():
    pv = ParamVector(np.array([1.0, 2.0]), np.array([0.3, -0.1]), [(0, (1, 2))])
    opt = Adam(pv)
    opt.step()
    state = opt.state_dict()
    pv2 = pv.copy()
    opt2 = Adam(pv2)
    opt2.load_state_dict(state)
    pv.grads[:] = pv2.grads[:] = [0.2, 0.2]
    opt.step()
    opt2.step()
    assert np.array_equal(pv.values, pv2.values)


def test_adam_rejects_non_finite():
    pv = ParamVector(np.array([1.0]), np.array([np.nan]), [(0, (1, 1))])
    with pytest.raises(FloatingPointError):
        Adam(pv).step()


def test_checkpoint_roundtrip(tmp_path):
    spec = MlpSpec(4, (64, 64), 3)
    pv = mlp_init(spec, 4)
    path = tmp_path / "policy.bin"
    save_params(path, spec, pv)
    raw = path.read_bytes()
    header, body = raw.split(b"\n", 1)
    assert header.decode() == "mlp input=4 hidden=64,64 output=3 activation=tanh"
    assert len(body) == 8 * spec.n_params
    spec2, pv2 = load_params(path)
    assert spec2 == spec
    assert np.array_equal(pv2.values, pv.values)
    assert not list(tmp_path.glob("*.tmp"))


def test_checkpoint_truncated(tmp_path):
    spec = MlpSpec(2, (3,), 1)
    path = tmp_path / "p.bin"
    save_params(path, spec, mlp_init(spec, 0))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_params(path)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_updates_are_deterministic(seed):
    spec = MlpSpec(3, (4,), 2)
    results = []
    for _ in range(2):
        net = Mlp(spec, seed=seed)
        opt = Adam(net.params)
        x = np.random.default_rng(seed).normal(size=(5, 3))
        for _ in range(3):
            net.backward(net(x))
            opt.step()
        results.append(net.params.values.copy())
    assert np.array_equal(results[0], results[1])

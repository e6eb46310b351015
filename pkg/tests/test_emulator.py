import numpy as np
import pytest

from hybridarm.dynamics import JointState
from hybridarm.emulator import (
    STATE_DIM,
    STD_FLOOR,
    EmulatorNet,
    ExpertDataset,
    Normalization,
    TrainConfig,
    TrainingDiverged,
    admissible,
    evaluate_mse,
    fit_normalization,
    forward_normalized,
    init_net,
    lmpc_step,
    load_dataset,
    load_net,
    loss_and_grads,
    mlp_forward,
    save_dataset,
    save_net,
    state_vector,
    train,
)
from hybridarm.feedback import TORQUE_BOUNDS, FeedbackController


def _linear_data(rng, n, A=None):
    S = rng.uniform(-1, 1, (n, STATE_DIM))
    A = rng.normal(size=(STATE_DIM, 6)) if A is None else A
    return ExpertDataset(S, S @ A), A


def test_state_vector_layout():
    js = JointState(np.arange(6.0) * 0.1, -np.arange(6.0) * 0.1)
    s = state_vector(js, np.ones(6), np.zeros(6), np.full(6, 7.0))
    assert s.shape == (30,)
    np.testing.assert_allclose(s[0:6], js.q)
    np.testing.assert_allclose(s[6:12], 1.0 - js.q)
    np.testing.assert_allclose(s[12:18], js.qd)
    np.testing.assert_allclose(s[18:24], -js.qd)
    np.testing.assert_allclose(s[24:30], 7.0)


def test_admissibility():
    S = np.zeros((3, 30))
    S[1, 0] = 4.0  # beyond pi
    S[2, 24] = 200.0  # feedback torque beyond the bound
    np.testing.assert_array_equal(admissible(S), [True, False, False])
    T = np.zeros((3, 6))
    T[0, 0] = 103.0
    assert not admissible(S, T)[0]
    with pytest.raises(ValueError, match="admissible"):
        ExpertDataset(S, np.zeros((3, 6)))
    with pytest.raises(ValueError):
        ExpertDataset(np.zeros((2, 30)), np.zeros((3, 6)))


def test_normalization_stats(rng):
    S = rng.standard_normal((10000, 30))
    S[:, 3] = 0.7
    norm = fit_normalization(S, rng.standard_normal((10000, 6)))
    assert norm.in_std[3] == STD_FLOOR
    assert np.all(norm.norm_in(S)[:, 3] == 0.0)
    others = np.delete(np.arange(30), 3)
    assert np.max(np.abs(norm.in_mean[others])) < 0.05
    assert np.max(np.abs(norm.in_std[others] - 1)) < 0.05
    np.testing.assert_allclose(norm.denorm_in(norm.norm_in(S)), S, atol=1e-12)
    T = rng.normal(size=(5, 6))
    np.testing.assert_allclose(norm.denorm_out(norm.norm_out(T)), T, atol=1e-12)
    with pytest.raises(ValueError):
        Normalization(np.zeros(2), np.zeros(2), np.zeros(1), np.ones(1))


def test_zero_net_outputs_mean():
    norm = Normalization(np.zeros(30), np.ones(30), np.array([1.0, -2, 3, 0, 0, 5]), np.ones(6))
    net = init_net(norm=norm)
    net = EmulatorNet(net.sizes, [np.zeros_like(W) for W in net.weights],
                      [np.zeros_like(b) for b in net.biases], norm)
    np.testing.assert_array_equal(mlp_forward(net, np.ones(30)), norm.out_mean)


def test_passthrough_layer():
    W = np.zeros((30, 6))
    W[24:30] = np.eye(6)
    net = EmulatorNet((30, 6), [W], [np.zeros(6)], Normalization.identity())
    s = np.linspace(-1, 1, 30)
    np.testing.assert_allclose(mlp_forward(net, s), s[24:30])
    big = np.zeros(30)
    big[24:30] = 500.0
    np.testing.assert_array_equal(mlp_forward(net, big), TORQUE_BOUNDS)


def test_init_is_seeded():
    a, b = init_net(seed=3), init_net(seed=3)
    for x, y in zip(a.weights, b.weights):
        np.testing.assert_array_equal(x, y)
    assert a.n_params == 30 * 128 + 128 + 128 * 128 + 128 + 128 * 6 + 6
    assert np.max(np.abs(a.weights[0])) <= 1 / np.sqrt(30)


def test_gradient_check(rng):
    for seed in range(3):
        net = init_net((5, 7, 4, 3), seed=seed)
        X = rng.normal(size=(8, 5))
        Y = rng.normal(size=(8, 3))
        _, gW, gb = loss_and_grads(net, X, Y)
        h = 1e-6
        for params, grads in ((net.weights, gW), (net.biases, gb)):
            for p, g in zip(params, grads):
                num = np.zeros_like(p)
                for idx in np.ndindex(p.shape):
                    old = p[idx]
                    p[idx] = old + h
                    lp = loss_and_grads(net, X, Y)[0]
                    p[idx] = old - h
                    lm = loss_and_grads(net, X, Y)[0]
                    p[idx] = old
                    num[idx] = (lp - lm) / (2 * h)
                rel = np.linalg.norm(num - g) / max(np.linalg.norm(num), 1e-12)
                assert rel < 1e-5


def test_linear_target_learned(rng):
    data, A = _linear_data(rng, 10000)
    val, _ = _linear_data(rng, 1000, A)
    net, hist = train(data, cfg=TrainConfig(epochs=200, seed=0), validation=val, hidden=(64, 64))
    assert hist.val[-1] < 1e-3
    assert len(hist.train) == 200
    assert evaluate_mse(net, val) == pytest.approx(hist.val[-1])


def test_zero_epochs_keeps_net(rng):
    data, _ = _linear_data(rng, 100)
    net0 = init_net((30, 8, 6), norm=fit_normalization(data))
    net, hist = train(data, net0, TrainConfig(epochs=0))
    for a, b in zip(net.weights + net.biases, net0.weights + net0.biases):
        np.testing.assert_array_equal(a, b)
    assert hist.train == []


def test_single_sample_overfit(rng):
    s = rng.uniform(-1, 1, 30)
    data = ExpertDataset(np.tile(s, (64, 1)), np.tile(rng.uniform(-5, 5, 6), (64, 1)))
    net0 = init_net((30, 32, 6), seed=1)
    _, hist = train(data, net0, TrainConfig(epochs=240, batch_size=64), validation=data)
    loss = np.array(hist.train)
    assert np.all(np.diff(loss) < 0)
    assert loss[-1] < 1e-6 * loss[0]


def test_training_is_deterministic(rng):
    data, _ = _linear_data(rng, 500)
    a, ha = train(data, cfg=TrainConfig(epochs=3, seed=5), hidden=(16,))
    b, hb = train(data, cfg=TrainConfig(epochs=3, seed=5), hidden=(16,))
    assert ha.train == hb.train
    np.testing.assert_array_equal(a.weights[0], b.weights[0])


def test_divergence_raises(rng):
    data, _ = _linear_data(rng, 64)
    net = init_net((30, 8, 6))
    net.weights[0][0, 0] = np.nan
    with pytest.raises(TrainingDiverged):
        train(data, net, TrainConfig(epochs=1))


def test_lmpc_step_pure_and_bounded(rng):
    net = init_net(seed=2, norm=Normalization(np.zeros(30), np.full(30, 0.01),
                                              np.zeros(6), np.full(6, 500.0)))
    js = JointState(rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 6))
    t1 = lmpc_step(net, js, np.zeros(6), np.zeros(6), FeedbackController("pd"), 0.005)
    t2, fb = lmpc_step(net, js, np.zeros(6), np.zeros(6), FeedbackController("pd"), 0.005,
                       return_fb=True)
    np.testing.assert_array_equal(t1, t2)
    assert np.all(np.abs(t1) <= TORQUE_BOUNDS)
    bare, _ = FeedbackController("pd")(js, np.zeros(6), np.zeros(6), 0.005)
    np.testing.assert_array_equal(fb, bare)
    with pytest.raises(ValueError, match="finite"):
        mlp_forward(net, np.full(30, np.nan))


def test_dataset_persistence(tmp_path, rng):
    data, _ = _linear_data(rng, 50)
    data = ExpertDataset(data.S, np.clip(data.tau_star, -30, 30), np.arange(50) % 3)
    path = tmp_path / "d.csv"
    save_dataset(data, path, fit_normalization(data))
    back = load_dataset(path)
    np.testing.assert_array_equal(back.S, data.S)
    np.testing.assert_array_equal(back.tau_star, data.tau_star)
    np.testing.assert_array_equal(back.region, data.region)
    header = path.read_text().splitlines()
    assert any(l.startswith("# in_std:") for l in header)
    assert len(header[-1].split(",")) == 36
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        load_dataset(tmp_path / "bad.csv")


def test_net_persistence(tmp_path, rng):
    net = init_net((30, 16, 6), seed=4, norm=fit_normalization(*_xy(rng)))
    save_net(net, tmp_path / "n.npz")
    back = load_net(tmp_path / "n.npz")
    s = rng.uniform(-1, 1, (10, 30))
    np.testing.assert_array_equal(mlp_forward(back, s), mlp_forward(net, s))
    assert back.sizes == net.sizes
    out, _ = forward_normalized(back, s)
    assert out.shape == (10, 6)


def _xy(rng):
    return rng.normal(size=(100, 30)), rng.normal(size=(100, 6))

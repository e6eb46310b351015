"""MLP torque emulator trained on expert (hybrid MPC) labels.

The network maps the 30-dimensional state ``s = (q, e, qd, ed, tau_fb)`` to a
torque.  Inputs and outputs are standardized; hidden layers use ReLU and the
output layer is linear.  Training minimizes the mean over the batch of the
squared torque error norm in standardized units, with Adam.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import JointState
from .feedback import TORQUE_BOUNDS, FeedbackController, saturate
from .mpc import QD_BOUNDS, Q_BOUNDS

__all__ = [
    "STATE_DIM",
    "TORQUE_DIM",
    "STD_FLOOR",
    "NET_FORMAT_VERSION",
    "TrainingDiverged",
    "ExpertDataset",
    "Normalization",
    "EmulatorNet",
    "TrainConfig",
    "TrainHistory",
    "state_vector",
    "admissible",
    "fit_normalization",
    "init_net",
    "mlp_forward",
    "forward_normalized",
    "loss_and_grads",
    "train",
    "evaluate_mse",
    "lmpc_step",
    "save_dataset",
    "load_dataset",
    "save_net",
    "load_net",
]

STATE_DIM = 30
TORQUE_DIM = 6
STD_FLOOR = 1e-8
NET_FORMAT_VERSION = 1
_ADMIT_TOL = 1e-9
_COLUMNS = ([f"{k}{i}" for k in ("q", "e", "qd", "ed", "taufb") for i in range(1, 7)]
            + [f"taustar{i}" for i in range(1, 7)])


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite training loss {loss} at epoch {epoch}")
        self.epoch = epoch


def state_vector(js: JointState, ref_q, ref_qd, tau_fb) -> np.ndarray:
    """Augmented state ``(q, e, qd, ed, tau_fb)``."""
    e = np.asarray(ref_q, float) - js.q
    ed = np.asarray(ref_qd, float) - js.qd
    return np.concatenate([js.q, e, js.qd, ed, np.asarray(tau_fb, float)])


def admissible(S, tau_star=None, torque_bounds=TORQUE_BOUNDS) -> np.ndarray:
    """Row mask of states (and labels) inside the admissible ranges."""
    S = np.atleast_2d(np.asarray(S, float))
    tb = np.asarray(torque_bounds, float)
    ok = np.all(np.isfinite(S), axis=1)
    ok &= np.all(np.abs(S[:, 0:6]) <= Q_BOUNDS + _ADMIT_TOL, axis=1)
    ok &= np.all(np.abs(S[:, 12:18]) <= QD_BOUNDS + _ADMIT_TOL, axis=1)
    ok &= np.all(np.abs(S[:, 24:30]) <= tb + _ADMIT_TOL, axis=1)
    if tau_star is not None:
        T = np.atleast_2d(np.asarray(tau_star, float))
        ok &= np.all(np.isfinite(T), axis=1) & np.all(np.abs(T) <= tb + _ADMIT_TOL, axis=1)
    return ok


@dataclass
class ExpertDataset:
    """Labeled states; ``region`` optionally tags each row with its time region."""

    S: np.ndarray
    tau_star: np.ndarray
    region: np.ndarray | None = None
    torque_bounds: np.ndarray = field(default_factory=lambda: TORQUE_BOUNDS.copy())

    def __post_init__(self):
        self.S = np.atleast_2d(np.asarray(self.S, float))
        self.tau_star = np.atleast_2d(np.asarray(self.tau_star, float))
        if self.S.shape[0] == 0:
            self.S = self.S.reshape(0, STATE_DIM)
            self.tau_star = self.tau_star.reshape(0, TORQUE_DIM)
        if self.S.shape[1] != STATE_DIM or self.tau_star.shape[1] != TORQUE_DIM:
            raise ValueError(f"expected (n, {STATE_DIM}) states and (n, {TORQUE_DIM}) labels")
        if self.S.shape[0] != self.tau_star.shape[0]:
            raise ValueError("states and labels differ in length")
        if self.region is not None:
            self.region = np.asarray(self.region, dtype=int)
            if self.region.shape != (len(self),):
                raise ValueError("region tags must have one entry per sample")
        bad = np.flatnonzero(~admissible(self.S, self.tau_star, self.torque_bounds))
        if bad.size:
            raise ValueError(f"{bad.size} samples outside the admissible ranges "
                             f"(first at row {bad[0]})")

    def __len__(self):
        return self.S.shape[0]

    def subset(self, idx) -> "ExpertDataset":
        idx = np.asarray(idx)
        reg = None if self.region is None else self.region[idx]
        return ExpertDataset(self.S[idx], self.tau_star[idx], reg, self.torque_bounds)


@dataclass
class Normalization:
    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray

    def __post_init__(self):
        for k in ("in_mean", "in_std", "out_mean", "out_std"):
            setattr(self, k, np.asarray(getattr(self, k), float))
        if np.any(self.in_std <= 0) or np.any(self.out_std <= 0):
            raise ValueError("normalization standard deviations must be > 0")

    @classmethod
    def identity(cls, n_in: int = STATE_DIM, n_out: int = TORQUE_DIM) -> "Normalization":
        return cls(np.zeros(n_in), np.ones(n_in), np.zeros(n_out), np.ones(n_out))

    def norm_in(self, S):
        return (np.asarray(S, float) - self.in_mean) / self.in_std

    def denorm_in(self, X):
        return np.asarray(X, float) * self.in_std + self.in_mean

    def norm_out(self, T):
        return (np.asarray(T, float) - self.out_mean) / self.out_std

    def denorm_out(self, Y):
        return np.asarray(Y, float) * self.out_std + self.out_mean


def fit_normalization(data, targets=None) -> Normalization:
    """Per-dimension mean and standard deviation (floored at ``STD_FLOOR``)."""
    if isinstance(data, ExpertDataset):
        S, T = data.S, data.tau_star
    else:
        S, T = np.atleast_2d(np.asarray(data, float)), np.atleast_2d(np.asarray(targets, float))
    if S.shape[0] == 0:
        raise ValueError("cannot fit normalization on an empty dataset")
    return Normalization(*_moments(S), *_moments(T))


def _moments(X):
    mean = X.mean(axis=0)
    # constant columns take their exact value so they normalize to exactly 0
    const = np.ptp(X, axis=0) == 0
    mean[const] = X[0, const]
    return mean, np.maximum(X.std(axis=0), STD_FLOOR)


@dataclass
class EmulatorNet:
    sizes: tuple
    weights: list
    biases: list
    norm: Normalization
    torque_bounds: np.ndarray = field(default_factory=lambda: TORQUE_BOUNDS.copy())

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or len(self.weights) != len(self.sizes) - 1:
            raise ValueError("layer sizes and weight list disagree")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.sizes[k], self.sizes[k + 1]) or b.shape != (self.sizes[k + 1],):
                raise ValueError(f"layer {k} has shape {W.shape}/{b.shape}")
        self.torque_bounds = np.asarray(self.torque_bounds, float)

    def copy(self) -> "EmulatorNet":
        return EmulatorNet(self.sizes, [W.copy() for W in self.weights],
                           [b.copy() for b in self.biases], self.norm, self.torque_bounds.copy())

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))


def init_net(sizes=(STATE_DIM, 128, 128, TORQUE_DIM), seed: int = 0,
             norm: Normalization | None = None, torque_bounds=TORQUE_BOUNDS) -> EmulatorNet:
    """Uniform ``(-1/sqrt(fan_in), 1/sqrt(fan_in))`` weights and biases from a seeded generator."""
    rng = np.random.default_rng(seed)
    Ws, bs = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(a)
        Ws.append(rng.uniform(-lim, lim, (a, b)))
        bs.append(rng.uniform(-lim, lim, b))
    norm = norm or Normalization.identity(sizes[0], sizes[-1])
    return EmulatorNet(tuple(sizes), Ws, bs, norm, np.asarray(torque_bounds, float))


def forward_normalized(net: EmulatorNet, X):
    """Standardized outputs for standardized inputs; returns ``(Y, activations)``."""
    acts = [np.atleast_2d(X)]
    h = acts[0]
    last = len(net.weights) - 1
    for k, (W, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ W + b
        if k < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def mlp_forward(net: EmulatorNet, s) -> np.ndarray:
    """Saturated physical torque for one state (N-vector) or a batch (B, N)."""
    s = np.asarray(s, float)
    if not np.all(np.isfinite(s)):
        raise ValueError("emulator input must be finite")
    Y, _ = forward_normalized(net, net.norm.norm_in(s))
    tau = net.norm.denorm_out(Y)
    if not np.all(np.isfinite(tau)):
        raise FloatingPointError("non-finite emulator output")
    tau = saturate(tau, net.torque_bounds)
    return tau[0] if s.ndim == 1 else tau


def loss_and_grads(net: EmulatorNet, X, Y):
    """Batch loss ``mean_i ||Y_i - f(X_i)||^2`` and its gradients by backpropagation."""
    out, acts = forward_normalized(net, X)
    B = out.shape[0]
    diff = out - Y
    loss = float(np.sum(diff * diff) / B)
    delta = 2.0 * diff / B
    gW = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    for k in range(len(net.weights) - 1, -1, -1):
        gW[k] = acts[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ net.weights[k].T) * (acts[k] > 0.0)
    return loss, gW, gb


@dataclass
class TrainConfig:
    batch_size: int = 256
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 300
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0 or self.eps <= 0:
            raise ValueError("learning rate and eps must be > 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam moment coefficients must lie in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")


@dataclass
class TrainHistory:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)


def evaluate_mse(net: EmulatorNet, data: ExpertDataset, normalized: bool = True) -> float:
    """Mean over samples of the squared error norm (standardized or physical units)."""
    if len(data) == 0:
        return float("nan")
    if normalized:
        out, _ = forward_normalized(net, net.norm.norm_in(data.S))
        diff = out - net.norm.norm_out(data.tau_star)
    else:
        diff = mlp_forward(net, data.S) - data.tau_star
    return float(np.mean(np.sum(diff * diff, axis=1)))


def train(dataset: ExpertDataset, net: EmulatorNet | None = None,
          cfg: TrainConfig | None = None, validation: ExpertDataset | None = None,
          hidden=(128, 128)):
    """Fit ``net`` with mini-batch Adam; returns ``(net, history)``.

    Without an explicit ``validation`` set a ``cfg.val_fraction`` share of
    ``dataset`` is held out by a seeded permutation.  A fresh network is
    initialized (with normalization fitted on the training split) when
    ``net`` is None; a given ``net`` keeps its normalization and is trained
    on a copy.
    """
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    if validation is None:
        perm = rng.permutation(len(dataset))
        n_val = int(round(cfg.val_fraction * len(dataset)))
        validation = dataset.subset(perm[:n_val])
        dataset = dataset.subset(perm[n_val:])
    if len(dataset) == 0:
        raise ValueError("empty training split")
    if net is None:
        net = init_net((STATE_DIM, *hidden, TORQUE_DIM), seed=cfg.seed,
                       norm=fit_normalization(dataset), torque_bounds=dataset.torque_bounds)
    else:
        net = net.copy()
    X = net.norm.norm_in(dataset.S)
    Y = net.norm.norm_out(dataset.tau_star)
    params = net.weights + net.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    hist = TrainHistory()
    step = 0
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, gW, gb = loss_and_grads(net, X[idx], Y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            total += loss * idx.size
            step += 1
            c1 = 1.0 - cfg.beta1**step
            c2 = 1.0 - cfg.beta2**step
            for p, g, mk, vk in zip(params, gW + gb, m, v):
                mk *= cfg.beta1
                mk += (1.0 - cfg.beta1) * g
                vk *= cfg.beta2
                vk += (1.0 - cfg.beta2) * g * g
                p -= cfg.lr * (mk / c1) / (np.sqrt(vk / c2) + cfg.eps)
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(epoch, epoch_loss)
        hist.train.append(epoch_loss)
        hist.val.append(evaluate_mse(net, validation) if len(validation) else float("nan"))
    return net, hist


def lmpc_step(net: EmulatorNet, state: JointState, ref_q, ref_qd, fb: FeedbackController,
              dt: float, return_fb: bool = False):
    """Learned hybrid controller: feedback torque into the state vector, then the network."""
    tau_fb, _ = fb(state, ref_q, ref_qd, dt)
    tau = mlp_forward(net, state_vector(state, ref_q, ref_qd, tau_fb))
    return (tau, tau_fb) if return_fb else tau


# --------------------------------------------------------------------------
# persistence

def save_dataset(data: ExpertDataset, path, norm: Normalization | None = None) -> None:
    """CSV with ``#`` header lines (layout, optional normalization) and 36 columns per row."""
    with open(path, "w", newline="") as fh:
        fh.write("# hybridarm expert dataset v1\n")
        fh.write("# layout: s = (q[6], e[6], qd[6], ed[6], tau_fb[6]); label = tau_star[6]\n")
        fh.write("# torque_bounds: " + " ".join(repr(float(x)) for x in data.torque_bounds)
                 + "\n")
        if norm is not None:
            for k in ("in_mean", "in_std", "out_mean", "out_std"):
                fh.write(f"# {k}: " + " ".join(repr(float(x)) for x in getattr(norm, k)) + "\n")
        if data.region is not None:
            fh.write("# region: " + " ".join(str(int(r)) for r in data.region) + "\n")
        w = csv.writer(fh)
        w.writerow(_COLUMNS)
        for s, t in zip(data.S, data.tau_star):
            w.writerow([repr(float(x)) for x in np.concatenate([s, t])])


def load_dataset(path) -> ExpertDataset:
    meta, rows = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
            else:
                rows.append(line)
                break
        rows.extend(fh)
    reader = csv.reader(rows)
    header = next(reader, None)
    if header != _COLUMNS:
        raise ValueError(f"{path}: unexpected dataset header")
    body = np.array([[float(x) for x in r] for r in reader if r], dtype=float)
    body = body.reshape(-1, len(_COLUMNS))
    tb = (np.array(meta["torque_bounds"].split(), float) if "torque_bounds" in meta
          else TORQUE_BOUNDS.copy())
    region = np.array(meta["region"].split(), int) if meta.get("region") else None
    return ExpertDataset(body[:, :STATE_DIM], body[:, STATE_DIM:], region, tb)


def save_net(net: EmulatorNet, path) -> None:
    arrays = {"version": np.array(NET_FORMAT_VERSION), "sizes": np.array(net.sizes),
              "torque_bounds": net.torque_bounds}
    for k in ("in_mean", "in_std", "out_mean", "out_std"):
        arrays[k] = getattr(net.norm, k)
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{i}"] = W
        arrays[f"b{i}"] = b
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_net(path) -> EmulatorNet:
    with np.load(Path(path)) as z:
        version = int(z["version"])
        if version != NET_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported network format version {version}")
        sizes = tuple(int(s) for s in z["sizes"])
        Ws = [z[f"W{i}"] for i in range(len(sizes) - 1)]
        bs = [z[f"b{i}"] for i in range(len(sizes) - 1)]
        norm = Normalization(z["in_mean"], z["in_std"], z["out_mean"], z["out_std"])
        return EmulatorNet(sizes, Ws, bs, norm, z["torque_bounds"])

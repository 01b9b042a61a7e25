"""ReLU feedforward forecaster: evaluation, gradients, training, serialization.

The network is y = W_d a_{d-1} + b_d with a_i = max(0, W_i a_{i-1} + b_i)
and a_0 = x, which makes the input-output map piecewise affine. All
arithmetic is float64 numpy; the architecture is fixed enough that
hand-written reverse mode beats pulling in an autodiff framework.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .metrics import mape


class DimensionMismatch(ValueError):
    pass


class NonfiniteLoss(ArithmeticError):
    def __init__(self, epoch: int, batch: int):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"loss became non-finite at epoch {epoch}, batch {batch}")


class SchemaMismatch(ValueError):
    pass


class CorruptFile(ValueError):
    pass


@dataclass
class Plnn:
    """Piecewise-linear network: weight matrices are (out, in)."""

    dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.dims) < 3:
            raise ValueError("need at least two affine layers (one hidden layer)")
        if self.dims[-1] != 1:
            raise ValueError("output dimension must be 1")
        if len(self.weights) != len(self.dims) - 1 or len(self.biases) != len(self.weights):
            raise SchemaMismatch("layer count does not match dims")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.dims[i + 1], self.dims[i]) or b.shape != (self.dims[i + 1],):
                raise SchemaMismatch(
                    f"layer {i} has shape {W.shape}/{b.shape}, expected "
                    f"({self.dims[i + 1]}, {self.dims[i]})/({self.dims[i + 1]},)"
                )
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise SchemaMismatch(f"layer {i} contains non-finite entries")

    @property
    def depth(self) -> int:
        """Number of affine layers."""
        return len(self.weights)

    def copy(self) -> "Plnn":
        return Plnn(
            dims=list(self.dims),
            weights=[W.copy() for W in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr0: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    cosine_horizon: int | None = None  # defaults to epochs
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr0 < 0:
            raise ValueError("epochs >= 1, batch_size >= 1, lr0 >= 0 required")


def init_network(dims, seed: int) -> Plnn:
    """Seeded uniform init, half-width sqrt(1/fan_in) per layer."""
    rng = np.random.default_rng(seed)
    dims = [int(d) for d in dims]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        s = math.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-s, s, size=fan_out))
    return Plnn(dims=dims, weights=weights, biases=biases)


def forward(model: Plnn, x) -> tuple[float, list[np.ndarray]]:
    """Evaluate one input; returns the forecast and all layer values.

    The returned list is [input, post-ReLU hidden layers..., output],
    which is what the MILP feasibility embedding needs.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dims[0],):
        raise DimensionMismatch(f"input has shape {x.shape}, expected ({model.dims[0]},)")
    acts = [x]
    a = x
    for i in range(model.depth - 1):
        a = np.maximum(0.0, model.weights[i] @ a + model.biases[i])
        acts.append(a)
    out = model.weights[-1] @ a + model.biases[-1]
    acts.append(out)
    return float(out[0]), acts


def forward_batch(model: Plnn, X: np.ndarray) -> np.ndarray:
    """Vectorized forecasts for an (N, p) matrix."""
    A = np.asarray(X, dtype=float)
    if A.ndim != 2 or A.shape[1] != model.dims[0]:
        raise DimensionMismatch(f"X has shape {A.shape}, expected (N, {model.dims[0]})")
    for i in range(model.depth - 1):
        A = np.maximum(0.0, A @ model.weights[i].T + model.biases[i])
    return (A @ model.weights[-1].T + model.biases[-1])[:, 0]


def forward_preactivations(model: Plnn, X: np.ndarray) -> list[np.ndarray]:
    """Hidden-layer preactivations for each row of X, one (N, width) array per layer."""
    A = np.asarray(X, dtype=float)
    pres = []
    for i in range(model.depth - 1):
        Z = A @ model.weights[i].T + model.biases[i]
        pres.append(Z)
        A = np.maximum(0.0, Z)
    return pres


def mse_loss(model: Plnn, X, Y) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_1d(np.asarray(Y, dtype=float))
    if len(Y) == 0:
        raise ValueError("batch must be nonempty")
    r = forward_batch(model, X) - Y
    return float(np.mean(r * r))


def grad_params(model: Plnn, X, Y) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact gradient of the batch MSE w.r.t. every weight and bias.

    The ReLU subgradient at exactly zero is taken as zero (unit inactive).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_1d(np.asarray(Y, dtype=float))
    n = len(Y)
    if n == 0:
        raise ValueError("batch must be nonempty")

    acts = [X]
    pres = []
    A = X
    for i in range(model.depth - 1):
        Z = A @ model.weights[i].T + model.biases[i]
        pres.append(Z)
        A = np.maximum(0.0, Z)
        acts.append(A)
    yhat = (A @ model.weights[-1].T + model.biases[-1])[:, 0]

    dW = [np.empty_like(W) for W in model.weights]
    db = [np.empty_like(b) for b in model.biases]
    G = (2.0 / n) * (yhat - Y)[:, None]  # d(loss)/d(output), (n, 1)
    for i in range(model.depth - 1, -1, -1):
        dW[i] = G.T @ acts[i]
        db[i] = G.sum(axis=0)
        if i > 0:
            G = (G @ model.weights[i]) * (pres[i - 1] > 0.0)
    return dW, db


def grad_input(model: Plnn, x) -> np.ndarray:
    """Gradient of the forecast w.r.t. the input, through active ReLUs only."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dims[0],):
        raise DimensionMismatch(f"input has shape {x.shape}, expected ({model.dims[0]},)")
    pres = []
    a = x
    for i in range(model.depth - 1):
        z = model.weights[i] @ a + model.biases[i]
        pres.append(z)
        a = np.maximum(0.0, z)
    g = model.weights[-1].copy()  # (1, h)
    for i in range(model.depth - 2, -1, -1):
        g = (g * (pres[i] > 0.0)) @ model.weights[i]
    return g[0]


# --- training ----------------------------------------------------------------


def cosine_lr(lr0: float, epoch: int, horizon: int) -> float:
    """Cosine annealing from lr0 at epoch 0 toward 0 at the horizon."""
    e = min(epoch, horizon)
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * e / horizon))


def param_hash(model: Plnn) -> str:
    h = hashlib.sha256()
    for W, b in zip(model.weights, model.biases):
        h.update(np.ascontiguousarray(W).tobytes())
        h.update(np.ascontiguousarray(b).tobytes())
    return h.hexdigest()


def run_training_loop(model, train, cfg, grad_fn, eval_fn):
    """Adam + cosine annealing over shuffled batches; shared by clean and
    adversarial training so that the two are bit-identical when the
    adversarial terms are switched off.

    grad_fn(model, Xb, Yb) -> ((dW, db), batch_metrics) where batch_metrics
    must contain "loss". eval_fn(model) -> epoch metrics containing "score";
    the snapshot with the lowest score is returned.
    """
    model = model.copy()
    horizon = cfg.cosine_horizon or cfg.epochs
    rng = np.random.default_rng(cfg.seed)
    n = len(train)

    mW = [np.zeros_like(W) for W in model.weights]
    vW = [np.zeros_like(W) for W in model.weights]
    mb = [np.zeros_like(b) for b in model.biases]
    vb = [np.zeros_like(b) for b in model.biases]
    t = 0

    best_score = math.inf
    best = model.copy()
    history = []

    for epoch in range(cfg.epochs):
        lr = cosine_lr(cfg.lr0, epoch, horizon)
        perm = rng.permutation(n)
        batch_sums: dict[str, float] = {}
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            (dW, db), batch_metrics = grad_fn(model, train.X[idx], train.Y[idx])
            if not math.isfinite(batch_metrics["loss"]):
                raise NonfiniteLoss(epoch, n_batches)
            t += 1
            c1 = 1.0 - cfg.beta1**t
            c2 = 1.0 - cfg.beta2**t
            for p, g, m, v in zip(
                model.weights + model.biases, dW + db, mW + mb, vW + vb
            ):
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * g * g
                p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps_adam)
            for key, value in batch_metrics.items():
                batch_sums[key] = batch_sums.get(key, 0.0) + value
            n_batches += 1

        row = {"epoch": epoch, "lr": lr}
        for key, total in batch_sums.items():
            row["train_mse" if key == "loss" else key] = total / n_batches
        row.update(eval_fn(model))
        row["param_hash"] = param_hash(model)
        history.append(row)
        if row["score"] < best_score:
            best_score = row["score"]
            best = model.copy()
    return best, history


def train(model: Plnn, train_ds: Dataset, test_ds: Dataset, cfg: TrainConfig):
    """Minimize batch MSE; keep the epoch snapshot with the best test MAPE."""
    if train_ds.X.shape[1] != model.dims[0]:
        raise DimensionMismatch("dataset feature count does not match the network")

    def grad_fn(m, Xb, Yb):
        grads = grad_params(m, Xb, Yb)
        return grads, {"loss": mse_loss(m, Xb, Yb)}

    def eval_fn(m):
        test_mape = mape(forward_batch(m, test_ds.X), test_ds.Y)
        return {"test_mape": test_mape, "score": test_mape}

    return run_training_loop(model, train_ds, cfg, grad_fn, eval_fn)


def save_history_csv(history: list[dict], path, columns: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in history:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in columns) + "\n")


# --- serialization -----------------------------------------------------------


def save(model: Plnn, path, manifest_hash: str | None = None) -> None:
    """Structured-text model file; floats round-trip exactly through repr."""
    payload = {
        "format_version": 1,
        "kind": "plnn",
        "dims": list(model.dims),
        "weights": [W.tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "manifest_hash": manifest_hash,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load(path) -> tuple[Plnn, str | None]:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from None
    if not isinstance(payload, dict) or payload.get("kind") != "plnn":
        raise SchemaMismatch(f"{path} is not a plnn model file")
    try:
        dims = [int(d) for d in payload["dims"]]
        weights = [np.array(W, dtype=float) for W in payload["weights"]]
        biases = [np.array(b, dtype=float) for b in payload["biases"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatch(f"{path}: {exc}") from None
    model = Plnn(dims=dims, weights=weights, biases=biases)  # shape checks inside
    return model, payload.get("manifest_hash")

"""Feed-forward residual network with hand-written backpropagation.

Architecture: an input layer (d_in -> m, activation sigma), l-1 residual
blocks x + sigma(Ax + b) of width m, and a linear output layer m -> 1.  When
sigma is not the identity, a batch-normalization layer follows the
activation inside the input layer and inside each block, before the
residual addition.  Training is full-batch Adam on the mean squared error,
with the learning rate divided by 10 after every floor(P/3) steps.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class ModelFormatError(ValueError):
    """Model file is malformed or inconsistent with its header."""


def _activation(name: str):
    if name == "tanh":
        return np.tanh, lambda z, a: 1.0 - a * a
    if name == "relu":
        return (lambda z: np.maximum(z, 0.0)), (lambda z, a: (z > 0.0).astype(float))
    if name == "identity":
        return (lambda z: z), (lambda z, a: np.ones_like(z))
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class LayerParams:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)
    bn: BatchNormState | None


@dataclass
class NetworkParams:
    layers: list[LayerParams]        # input layer followed by the residual blocks
    output_weight: np.ndarray        # (1, m)
    output_bias: np.ndarray          # (1,)
    activation: str
    bn_eps: float = BN_EPS
    bn_momentum: float = BN_MOMENTUM

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def width(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def depth(self) -> int:
        # the count l of trainable hidden layers: input layer plus blocks
        return len(self.layers)

    def dense_parameter_count(self) -> int:
        count = 0
        for layer in self.layers:
            count += layer.weight.size + layer.bias.size
        return count + self.output_weight.size + self.output_bias.size


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 3000             # P
    learning_rate: float = 0.01   # eta
    l: int = 6
    m: int = 20
    activation: str = "tanh"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    bn_momentum: float = BN_MOMENTUM
    seed: int = 0
    batch_size: int | None = None  # None = full batch

    def __post_init__(self) -> None:
        if self.steps < 0:
            raise ValueError("step count must be nonnegative")
        if self.l < 1 or self.m < 1:
            raise ValueError("architecture sizes must be >= 1")


def expected_dense_count(input_dim: int, l: int, m: int) -> int:
    return (input_dim + 1) * m + (l - 1) * (m + 1) * m + (m + 1)


def init_params(input_dim: int, cfg: TrainConfig) -> NetworkParams:
    """Uniform fan-in initialization (bound 1/sqrt(fan_in)), zero biases,
    batch-norm scale 1 / shift 0."""
    rng = np.random.default_rng(cfg.seed)
    use_bn = cfg.activation != "identity"

    def layer(n_out: int, n_in: int) -> LayerParams:
        bound = 1.0 / math.sqrt(n_in)
        weight = rng.uniform(-bound, bound, size=(n_out, n_in))
        bias = np.zeros(n_out)
        bn = None
        if use_bn:
            bn = BatchNormState(gamma=np.ones(n_out), beta=np.zeros(n_out),
                                running_mean=np.zeros(n_out), running_var=np.ones(n_out))
        return LayerParams(weight=weight, bias=bias, bn=bn)

    layers = [layer(cfg.m, input_dim)] + [layer(cfg.m, cfg.m) for _ in range(cfg.l - 1)]
    bound = 1.0 / math.sqrt(cfg.m)
    params = NetworkParams(
        layers=layers,
        output_weight=rng.uniform(-bound, bound, size=(1, cfg.m)),
        output_bias=np.zeros(1),
        activation=cfg.activation,
        bn_momentum=cfg.bn_momentum,
    )
    expected = expected_dense_count(input_dim, cfg.l, cfg.m)
    actual = params.dense_parameter_count()
    if actual != expected:
        raise AssertionError(f"dense parameter count {actual} != expected {expected}")
    return params


# -- forward -----------------------------------------------------------------


def _bn_forward(a: np.ndarray, bn: BatchNormState, eps: float, momentum: float,
                mode: str, update_running: bool):
    if mode == "train":
        mean = a.mean(axis=0)
        var = a.var(axis=0)
        if update_running:
            batch = a.shape[0]
            unbiased = var * batch / (batch - 1) if batch > 1 else var
            bn.running_mean *= 1.0 - momentum
            bn.running_mean += momentum * mean
            bn.running_var *= 1.0 - momentum
            bn.running_var += momentum * unbiased
    else:
        mean = bn.running_mean
        var = bn.running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    a_hat = (a - mean) * inv_std
    return bn.gamma * a_hat + bn.beta, (a_hat, inv_std)


def _forward_pass(params: NetworkParams, X: np.ndarray, mode: str,
                  update_running: bool, keep_cache: bool):
    act, _ = _activation(params.activation)
    caches = []
    h = X
    for layer in params.layers:
        z = h @ layer.weight.T + layer.bias
        a = act(z)
        if layer.bn is not None:
            out, bn_cache = _bn_forward(a, layer.bn, params.bn_eps, params.bn_momentum,
                                        mode, update_running)
        else:
            out, bn_cache = a, None
        if keep_cache:
            caches.append((h, z, a, bn_cache))
        h = out if layer is params.layers[0] else h + out
    y = (h @ params.output_weight.T + params.output_bias).ravel()
    if keep_cache:
        caches.append(h)
    return y, caches


def forward(params: NetworkParams, X: np.ndarray, mode: str = "eval") -> np.ndarray:
    """Network predictions for a batch of rows (t, x_1..x_d).

    Train mode normalizes with batch statistics and updates the running
    statistics; eval mode is a pure function of (input, params).
    """
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != params.input_dim:
        raise ValueError(f"expected input dimension {params.input_dim}, got {X.shape[1]}")
    y, _ = _forward_pass(params, X, mode, update_running=(mode == "train"), keep_cache=False)
    return y


# -- backward ----------------------------------------------------------------


@dataclass
class GradientSet:
    layers: list[tuple[np.ndarray, np.ndarray, np.ndarray | None, np.ndarray | None]]
    output_weight: np.ndarray
    output_bias: np.ndarray

    def flatten(self) -> np.ndarray:
        pieces = []
        for w, b, g, be in self.layers:
            pieces += [w.ravel(), b.ravel()]
            if g is not None:
                pieces += [g.ravel(), be.ravel()]
        pieces += [self.output_weight.ravel(), self.output_bias.ravel()]
        return np.concatenate(pieces)


def _trainable_arrays(params: NetworkParams) -> list[np.ndarray]:
    arrays = []
    for layer in params.layers:
        arrays += [layer.weight, layer.bias]
        if layer.bn is not None:
            arrays += [layer.bn.gamma, layer.bn.beta]
    arrays += [params.output_weight, params.output_bias]
    return arrays


def _gradient_arrays(grads: GradientSet) -> list[np.ndarray]:
    arrays = []
    for w, b, g, be in grads.layers:
        arrays += [w, b]
        if g is not None:
            arrays += [g, be]
    arrays += [grads.output_weight, grads.output_bias]
    return arrays


def loss_and_gradients(params: NetworkParams, X: np.ndarray, targets: np.ndarray,
                       update_running: bool = False) -> tuple[float, GradientSet]:
    """Mean squared error over the batch and its exact gradient in every
    trainable parameter (dense weights plus batch-norm scale/shift).

    Batch normalization uses batch statistics (train mode); running
    statistics are updated only when requested so the loss stays a pure
    function of (params, batch) during gradient checking.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    batch = X.shape[0]
    act, act_grad = _activation(params.activation)

    y, caches = _forward_pass(params, X, "train", update_running, keep_cache=True)
    h_last = caches[-1]
    residual = y - targets
    loss = float(residual @ residual) / batch

    dy = (2.0 / batch) * residual
    d_out_w = dy[None, :] @ h_last
    d_out_b = np.array([dy.sum()])
    dh = dy[:, None] @ params.output_weight

    layer_grads: list = [None] * len(params.layers)
    for idx in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[idx]
        h_in, z, a, bn_cache = caches[idx]
        d_block_out = dh
        if layer.bn is not None:
            a_hat, inv_std = bn_cache
            d_gamma = (d_block_out * a_hat).sum(axis=0)
            d_beta = d_block_out.sum(axis=0)
            d_hat = d_block_out * layer.bn.gamma
            # batch-statistics backward: centered and decorrelated terms
            da = inv_std * (d_hat - d_hat.mean(axis=0)
                            - a_hat * (d_hat * a_hat).mean(axis=0))
        else:
            d_gamma = d_beta = None
            da = d_block_out
        dz = da * act_grad(z, a)
        d_w = dz.T @ h_in
        d_b = dz.sum(axis=0)
        layer_grads[idx] = (d_w, d_b, d_gamma, d_beta)
        dh_through = dz @ layer.weight
        if idx == 0:
            dh = dh_through
        else:
            dh = dh + dh_through  # residual skip plus the block path
    return loss, GradientSet(layers=layer_grads, output_weight=d_out_w, output_bias=d_out_b)


# -- training ----------------------------------------------------------------


def learning_rate_at(step: int, total_steps: int, eta: float) -> float:
    """eta divided by 10 after every floor(P/3) steps, floored at eta/100."""
    if total_steps <= 0:
        return eta
    return eta / 10 ** min(2, (3 * step) // total_steps)


@dataclass
class TrainResult:
    params: NetworkParams
    losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "learning_rate"])
            for step, (loss, lr) in enumerate(zip(self.losses, self.learning_rates)):
                writer.writerow([step, repr(loss), repr(lr)])


def train(inputs: np.ndarray, targets: np.ndarray, cfg: TrainConfig,
          params: NetworkParams | None = None) -> TrainResult:
    """Fit the network to the sampled pairs by Adam on the full-batch MSE."""
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    if X.shape[0] == 0:
        raise ValueError("training set must be nonempty")
    if X.shape[0] != targets.shape[0]:
        raise ValueError("inputs and targets disagree on the batch size")
    if not np.all(np.isfinite(targets)):
        raise ValueError("targets must be finite")
    if params is None:
        params = init_params(X.shape[1], cfg)

    tensors = _trainable_arrays(params)
    m1 = [np.zeros_like(t) for t in tensors]
    m2 = [np.zeros_like(t) for t in tensors]
    result = TrainResult(params=params)
    batch_rng = np.random.default_rng((cfg.seed, 0xB) if cfg.batch_size else None)

    for step in range(cfg.steps):
        lr = learning_rate_at(step, cfg.steps, cfg.learning_rate)
        if cfg.batch_size is None or cfg.batch_size >= X.shape[0]:
            bx, bt = X, targets
        else:
            pick = batch_rng.choice(X.shape[0], size=cfg.batch_size, replace=False)
            bx, bt = X[pick], targets[pick]
        loss, grads = loss_and_gradients(params, bx, bt, update_running=True)
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss {loss} at step {step}")
        result.losses.append(loss)
        result.learning_rates.append(lr)
        t = step + 1
        for tensor, grad, v1, v2 in zip(tensors, _gradient_arrays(grads), m1, m2):
            v1 *= cfg.adam_beta1
            v1 += (1 - cfg.adam_beta1) * grad
            v2 *= cfg.adam_beta2
            v2 += (1 - cfg.adam_beta2) * grad * grad
            hat1 = v1 / (1 - cfg.adam_beta1**t)
            hat2 = v2 / (1 - cfg.adam_beta2**t)
            tensor -= lr * hat1 / (np.sqrt(hat2) + cfg.adam_eps)
    return result


def gradient_check(params: NetworkParams, X: np.ndarray, targets: np.ndarray,
                   step: float = 1e-5) -> float:
    """Max relative disagreement between the analytic gradient and central
    finite differences of the loss, over every trainable scalar."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    _, grads = loss_and_gradients(params, X, targets)
    analytic = grads.flatten()
    tensors = _trainable_arrays(params)
    numeric = np.empty_like(analytic)
    pos = 0
    for tensor in tensors:
        flat = tensor.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up, _ = loss_and_gradients(params, X, targets)
            flat[k] = orig - step
            down, _ = loss_and_gradients(params, X, targets)
            flat[k] = orig
            numeric[pos] = (up - down) / (2 * step)
            pos += 1
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))


# -- persistence ---------------------------------------------------------------

MODEL_FORMAT = "branchpde-model"
MODEL_VERSION = 1


def save(params: NetworkParams, path, provenance: dict | None = None) -> None:
    """Versioned JSON dump: architecture header, flat row-major weight arrays
    and batch-norm state.  Floats round-trip exactly."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "architecture": {
            "input_dim": params.input_dim,
            "l": params.depth,
            "m": params.width,
            "activation": params.activation,
            "bn_eps": params.bn_eps,
            "bn_momentum": params.bn_momentum,
        },
        "layers": [
            {
                "weight": layer.weight.ravel().tolist(),
                "bias": layer.bias.tolist(),
                "batch_norm": None if layer.bn is None else {
                    "gamma": layer.bn.gamma.tolist(),
                    "beta": layer.bn.beta.tolist(),
                    "running_mean": layer.bn.running_mean.tolist(),
                    "running_var": layer.bn.running_var.tolist(),
                },
            }
            for layer in params.layers
        ],
        "output": {
            "weight": params.output_weight.ravel().tolist(),
            "bias": params.output_bias.tolist(),
        },
    }
    if provenance is not None:
        doc["provenance"] = provenance
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load(path) -> NetworkParams:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    arch = doc["architecture"]
    d_in, l, m = arch["input_dim"], arch["l"], arch["m"]
    if len(doc["layers"]) != l:
        raise ModelFormatError(f"header says l={l} but file has {len(doc['layers'])} layers")
    layers = []
    for idx, entry in enumerate(doc["layers"]):
        n_in = d_in if idx == 0 else m
        weight = np.array(entry["weight"], dtype=float)
        if weight.size != m * n_in:
            raise ModelFormatError(f"layer {idx} weight size {weight.size} != {m}x{n_in}")
        bn = None
        if entry["batch_norm"] is not None:
            raw = entry["batch_norm"]
            bn = BatchNormState(
                gamma=np.array(raw["gamma"], dtype=float),
                beta=np.array(raw["beta"], dtype=float),
                running_mean=np.array(raw["running_mean"], dtype=float),
                running_var=np.array(raw["running_var"], dtype=float),
            )
            if any(arr.size != m for arr in (bn.gamma, bn.beta, bn.running_mean, bn.running_var)):
                raise ModelFormatError(f"layer {idx} batch-norm state size mismatch")
        layers.append(LayerParams(weight=weight.reshape(m, n_in),
                                  bias=np.array(entry["bias"], dtype=float), bn=bn))
        if layers[-1].bias.size != m:
            raise ModelFormatError(f"layer {idx} bias size mismatch")
    out_w = np.array(doc["output"]["weight"], dtype=float)
    if out_w.size != m:
        raise ModelFormatError("output weight size mismatch")
    return NetworkParams(
        layers=layers,
        output_weight=out_w.reshape(1, m),
        output_bias=np.array(doc["output"]["bias"], dtype=float),
        activation=arch["activation"],
        bn_eps=arch["bn_eps"],
        bn_momentum=arch["bn_momentum"],
    )

"""Dense-network engine: batched forward, reverse-mode gradients, Adam, soft updates.

Everything is float64 numpy. A net records its activations during forward and
replays them in backward; a net is owned by one caller at a time (no sharing a
net object across interleaved forward/backward pairs).

Parameter layout conventions used by checkpoints and the flat-vector helpers:
layer by layer, weight matrix (row-major) then bias vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np

from .errors import ContractError, NumericsError, UsageError

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "tanh", "sigmoid")

CHECKPOINT_FORMAT = "oris-mlp"
CHECKPOINT_VERSION = 1


@dataclass
class MlpNet:
    """A fully connected net. weights[l] has shape (layer_sizes[l+1], layer_sizes[l])."""

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "identity"
    init_seed: int = 0
    _acts: list = field(default_factory=list, repr=False)
    _pre: list = field(default_factory=list, repr=False)
    _has_cache: bool = field(default=False, repr=False)

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or any(int(s) < 1 for s in self.layer_sizes):
            raise ContractError(f"layer_sizes must be >= 2 positive entries, got {self.layer_sizes}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ContractError(f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ContractError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")
        if len(self.weights) != self.num_layers or len(self.biases) != self.num_layers:
            raise ContractError("weights/biases must have one entry per layer")
        for l in range(self.num_layers):
            want = (self.layer_sizes[l + 1], self.layer_sizes[l])
            if self.weights[l].shape != want:
                raise ContractError(f"weights[{l}] has shape {self.weights[l].shape}, want {want}")
            if self.biases[l].shape != (self.layer_sizes[l + 1],):
                raise ContractError(f"biases[{l}] has shape {self.biases[l].shape}")

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @classmethod
    def he_uniform(cls, layer_sizes, hidden_activation="relu",
                   output_activation="identity", seed=0) -> "MlpNet":
        """He-uniform weights, zero biases, from a PRNG seeded with `seed`."""
        if len(layer_sizes) < 2 or any(int(s) < 1 for s in layer_sizes):
            raise ContractError(f"layer_sizes must be >= 2 positive entries, got {layer_sizes}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(list(layer_sizes), weights, biases, hidden_activation,
                   output_activation, init_seed=int(seed))


@dataclass
class Gradients:
    """Parameter gradients matching a net's layout, plus the gradient at the input."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray

    def scaled(self, c: float) -> "Gradients":
        return Gradients([c * w for w in self.weights], [c * b for b in self.biases],
                         c * self.input)

    def add_(self, other: "Gradients") -> "Gradients":
        for a, b in zip(self.weights, other.weights):
            a += b
        for a, b in zip(self.biases, other.biases):
            a += b
        return self


def _hidden_act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _hidden_act_grad(name: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 - y * y


def _output_act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "tanh":
        return np.tanh(z)
    # sigmoid, stable for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _output_act_grad(name: str, y: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(y)
    if name == "tanh":
        return 1.0 - y * y
    return y * (1.0 - y)


def forward_batch(net: MlpNet, x: np.ndarray) -> np.ndarray:
    """Run a (n, in_dim) batch through the net, recording activations for backward."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ContractError(f"input has shape {x.shape}, want (n, {net.in_dim})")
    acts = [x]
    pre = []
    h = x
    last = net.num_layers - 1
    for l in range(net.num_layers):
        z = h @ net.weights[l].T + net.biases[l]
        pre.append(z)
        h = _output_act(net.output_activation, z) if l == last else _hidden_act(net.hidden_activation, z)
        acts.append(h)
    net._acts, net._pre, net._has_cache = acts, pre, True
    return h


def forward(net: MlpNet, x: np.ndarray) -> np.ndarray:
    """Single-vector forward; same recording semantics as forward_batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ContractError(f"expected a vector, got shape {x.shape}")
    return forward_batch(net, x[None, :])[0]


def output_preactivation(net: MlpNet) -> np.ndarray:
    """Pre-activation of the output layer from the most recent forward."""
    if not net._has_cache:
        raise UsageError("no recorded forward pass")
    return net._pre[-1]


def backward_batch(net: MlpNet, grad_out: np.ndarray, wrt_preactivation: bool = False) -> Gradients:
    """Reverse-mode pass from d(loss)/d(output) through the recorded forward.

    With wrt_preactivation=True, grad_out is d(loss)/d(output pre-activation);
    this sidesteps the output nonlinearity (used for stable sigmoid/BCE math).
    Returns parameter gradients and, in .input, d(loss)/d(input batch).
    """
    if not net._has_cache:
        raise UsageError("backward called before forward")
    grad_out = np.asarray(grad_out, dtype=np.float64)
    out_shape = (net._acts[0].shape[0], net.out_dim)
    if grad_out.shape != out_shape:
        raise ContractError(f"grad_out has shape {grad_out.shape}, want {out_shape}")
    if wrt_preactivation:
        delta = grad_out
    else:
        delta = grad_out * _output_act_grad(net.output_activation, net._acts[-1])
    g_w = [None] * net.num_layers
    g_b = [None] * net.num_layers
    for l in range(net.num_layers - 1, -1, -1):
        g_w[l] = delta.T @ net._acts[l]
        g_b[l] = delta.sum(axis=0)
        delta = delta @ net.weights[l]
        if l > 0:
            delta = delta * _hidden_act_grad(net.hidden_activation, net._pre[l - 1], net._acts[l])
    return Gradients(g_w, g_b, delta)


def backward(net: MlpNet, grad_out: np.ndarray, wrt_preactivation: bool = False) -> Gradients:
    """Vector version of backward_batch."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.ndim != 1:
        raise ContractError(f"expected a vector, got shape {grad_out.shape}")
    g = backward_batch(net, grad_out[None, :], wrt_preactivation)
    g.input = g.input[0]
    return g


@dataclass
class AdamState:
    """Adam moments for one net, with bias correction."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m_w: list[np.ndarray] = field(default_factory=list)
    v_w: list[np.ndarray] = field(default_factory=list)
    m_b: list[np.ndarray] = field(default_factory=list)
    v_b: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: MlpNet, learning_rate: float, beta1: float = 0.9,
                beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        st = cls(learning_rate, beta1, beta2, epsilon)
        st.m_w = [np.zeros_like(w) for w in net.weights]
        st.v_w = [np.zeros_like(w) for w in net.weights]
        st.m_b = [np.zeros_like(b) for b in net.biases]
        st.v_b = [np.zeros_like(b) for b in net.biases]
        return st


def _adam_update(p, g, m, v, lr, b1, b2, eps, t):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    mhat = m / (1.0 - b1 ** t)
    vhat = v / (1.0 - b2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def adam_step(net: MlpNet, grads: Gradients, opt: AdamState) -> None:
    """One Adam step, in place on net parameters and opt moments."""
    if len(grads.weights) != net.num_layers:
        raise ContractError("gradient structure does not match net")
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            raise NumericsError("non-finite gradient passed to adam_step")
    opt.step_count += 1
    t = opt.step_count
    for l in range(net.num_layers):
        _adam_update(net.weights[l], grads.weights[l], opt.m_w[l], opt.v_w[l],
                     opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon, t)
        _adam_update(net.biases[l], grads.biases[l], opt.m_b[l], opt.v_b[l],
                     opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon, t)
    for p in net.weights + net.biases:
        if not np.all(np.isfinite(p)):
            raise NumericsError("parameters became non-finite after adam_step")


@dataclass
class ScalarAdam:
    """Adam for a single scalar parameter (used for the entropy temperature)."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: float = 0.0
    v: float = 0.0

    def step(self, value: float, grad: float) -> float:
        if not np.isfinite(grad):
            raise NumericsError("non-finite scalar gradient")
        self.step_count += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.step_count)
        vhat = self.v / (1.0 - self.beta2 ** self.step_count)
        return value - self.learning_rate * mhat / (np.sqrt(vhat) + self.epsilon)


def soft_update(target: MlpNet, source: MlpNet, tau: float) -> None:
    """target <- (1 - tau) * target + tau * source, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ContractError(f"tau must be in [0, 1], got {tau}")
    if target.layer_sizes != source.layer_sizes:
        raise ContractError("architecture mismatch in soft_update")
    for tw, sw in zip(target.weights, source.weights):
        tw *= 1.0 - tau
        tw += tau * sw
    for tb, sb in zip(target.biases, source.biases):
        tb *= 1.0 - tau
        tb += tau * sb


def num_params(net: MlpNet) -> int:
    return sum(w.size for w in net.weights) + sum(b.size for b in net.biases)


def get_flat_params(net: MlpNet) -> np.ndarray:
    parts = []
    for l in range(net.num_layers):
        parts.append(net.weights[l].ravel())
        parts.append(net.biases[l].ravel())
    return np.concatenate(parts)


def set_flat_params(net: MlpNet, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (num_params(net),):
        raise ContractError(f"flat vector has shape {flat.shape}, want ({num_params(net)},)")
    i = 0
    for l in range(net.num_layers):
        n = net.weights[l].size
        net.weights[l][...] = flat[i:i + n].reshape(net.weights[l].shape)
        i += n
        n = net.biases[l].size
        net.biases[l][...] = flat[i:i + n].reshape(net.biases[l].shape)
        i += n


def flatten_grads(g: Gradients) -> np.ndarray:
    parts = []
    for w, b in zip(g.weights, g.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def clone_net(net: MlpNet) -> MlpNet:
    return MlpNet(list(net.layer_sizes), [w.copy() for w in net.weights],
                  [b.copy() for b in net.biases], net.hidden_activation,
                  net.output_activation, net.init_seed)


def save_checkpoint(net: MlpNet, path) -> None:
    """One JSON header line, then the flat float64 little-endian parameter vector."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "hidden_activation": net.hidden_activation,
        "output_activation": net.output_activation,
        "init_seed": net.init_seed,
        "param_count": num_params(net),
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8"))
        f.write(b"\n")
        f.write(get_flat_params(net).astype("<f8").tobytes())


def load_checkpoint(path) -> MlpNet:
    with open(path, "rb") as f:
        header_line = f.readline()
        blob = f.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContractError(f"bad checkpoint header in {path}: {e}") from e
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"not a {CHECKPOINT_FORMAT} checkpoint: {path}")
    if header.get("version") != CHECKPOINT_VERSION:
        raise ContractError(f"unsupported checkpoint version {header.get('version')}")
    sizes = [int(s) for s in header["layer_sizes"]]
    net = MlpNet.he_uniform(sizes, header["hidden_activation"],
                            header["output_activation"], seed=header.get("init_seed", 0))
    flat = np.frombuffer(blob, dtype="<f8")
    if flat.size != header["param_count"] or flat.size != num_params(net):
        raise ContractError(f"checkpoint parameter count mismatch in {path}")
    set_flat_params(net, flat.astype(np.float64))
    return net

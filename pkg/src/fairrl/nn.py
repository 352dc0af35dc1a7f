"""Tiny multilayer perceptrons with hand-written reverse mode and Adam.

Parameters live in one flat, read-only float64 array per network. Layer ``i``
occupies ``W_i`` (``n_in x n_out``, row-major) followed by ``b_i``.
"""

from dataclasses import dataclass, field

import numpy as np

from fairrl.errors import ContractError, NumericError

ACTIVATIONS = ("tanh", "relu")
HEADS = ("softmax_logits", "scalar")


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple
    activations: tuple = ()
    head: str = "scalar"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ContractError("a network needs at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise ContractError(f"layer sizes must be positive, got {sizes}")
        acts = self.activations
        if isinstance(acts, str):
            acts = (acts,) * (len(sizes) - 2)
        acts = tuple(acts)
        if len(acts) != len(sizes) - 2:
            raise ContractError(f"need {len(sizes) - 2} hidden activations, got {len(acts)}")
        for a in acts:
            if a not in ACTIVATIONS:
                raise ContractError(f"unknown activation {a!r}")
        object.__setattr__(self, "activations", acts)
        if self.head not in HEADS:
            raise ContractError(f"unknown output head {self.head!r}")
        if self.head == "softmax_logits" and sizes[-1] < 2:
            raise ContractError("softmax head needs at least two outputs")

    @property
    def n_params(self):
        return sum((a + 1) * b for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def slices(self):
        """(weight_slice, weight_shape, bias_slice) per layer."""
        out = []
        off = 0
        for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = slice(off, off + a * b)
            off += a * b
            bias = slice(off, off + b)
            off += b
            out.append((w, (a, b), bias))
        return out

    def header(self):
        return (
            "# fairrl-network layers=" + ",".join(map(str, self.layer_sizes))
            + " activations=" + (",".join(self.activations) or "-")
            + " head=" + self.head
        )

    @classmethod
    def from_header(cls, line):
        if not line.startswith("# fairrl-network "):
            raise ContractError("missing network header line")
        fields = dict(tok.split("=", 1) for tok in line[2:].split()[1:])
        acts = () if fields["activations"] == "-" else tuple(fields["activations"].split(","))
        return cls(tuple(int(s) for s in fields["layers"].split(",")), acts, fields["head"])


@dataclass
class ForwardTape:
    spec: NetworkSpec
    params: np.ndarray
    inputs: list = field(default_factory=list)   # input to each linear layer
    pre: list = field(default_factory=list)      # pre-activations of hidden layers
    head_out: np.ndarray = None                  # last linear layer output (logits / scalar)


def _frozen(a):
    a.flags.writeable = False
    return a


def init_params(spec, rng):
    """Glorot-uniform weights, zero biases."""
    params = np.zeros(spec.n_params)
    for w, (a, b), _ in spec.slices():
        r = np.sqrt(6.0 / (a + b))
        params[w] = rng.uniform(-r, r, size=a * b)
    return _frozen(params)


def as_params(spec, values):
    values = np.array(values, dtype=np.float64)
    if values.shape != (spec.n_params,):
        raise ContractError(f"expected {spec.n_params} parameters, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise NumericError("parameter vector contains non-finite values")
    return _frozen(values)


def _activate(kind, z):
    if kind == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activate_grad(kind, z, a):
    if kind == "tanh":
        return 1.0 - a * a
    return (z > 0.0).astype(z.dtype)


def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def forward(spec, params, inputs):
    """Run the network on a batch.

    Returns ``(outputs, tape)``. For the softmax head ``outputs`` are row-wise
    probabilities; for the scalar head they are the raw column(s).
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.layer_sizes[0]:
        raise ContractError(f"input width {x.shape[-1]} does not match layer size {spec.layer_sizes[0]}")
    if params.shape != (spec.n_params,):
        raise ContractError("parameter vector does not match network spec")
    tape = ForwardTape(spec, params)
    layers = spec.slices()
    h = x
    for i, (w, shape, b) in enumerate(layers):
        tape.inputs.append(h)
        z = h @ params[w].reshape(shape) + params[b]
        if i < len(layers) - 1:
            tape.pre.append(z)
            h = _activate(spec.activations[i], z)
        else:
            h = z
    tape.head_out = h
    if spec.head == "softmax_logits":
        out = np.exp(log_softmax(h))
    else:
        out = h
    if not np.all(np.isfinite(out)):
        raise NumericError("network produced non-finite outputs")
    return out, tape


def backward(tape, grad_head):
    """Gradient of a loss w.r.t. the flat parameters.

    ``grad_head`` is dLoss/d(last linear layer output): the logits for a softmax
    head, the scalar output otherwise.
    """
    spec = tape.spec
    if tape.head_out is None:
        raise ContractError("tape holds no forward pass")
    g = np.asarray(grad_head, dtype=np.float64)
    if g.ndim == 1 and tape.head_out.shape[1] == 1:
        g = g[:, None]
    if g.shape != tape.head_out.shape:
        raise ContractError(f"gradient shape {g.shape} does not match tape output {tape.head_out.shape}")
    grad = np.zeros(spec.n_params)
    layers = spec.slices()
    params = tape.params
    for i in range(len(layers) - 1, -1, -1):
        w, shape, b = layers[i]
        grad[w] = (tape.inputs[i].T @ g).ravel()
        grad[b] = g.sum(axis=0)
        if i > 0:
            g = g @ params[w].reshape(shape).T
            z = tape.pre[i - 1]
            g = g * _activate_grad(spec.activations[i - 1], z, tape.inputs[i])
    return grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))


def adam_step(params, gradient, state, step_size):
    """One Adam descent step. Returns ``(new_params, new_state)``; inputs are untouched."""
    if step_size <= 0:
        raise ContractError("step size must be positive")
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != params.shape:
        raise ContractError("gradient and parameters differ in shape")
    if not np.all(np.isfinite(gradient)):
        raise NumericError("non-finite gradient")
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * gradient
    v = state.beta2 * state.v + (1 - state.beta2) * gradient * gradient
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new = params - step_size * m_hat / (np.sqrt(v_hat) + state.eps)
    if not np.all(np.isfinite(new)):
        raise NumericError("Adam step produced non-finite parameters")
    return _frozen(new), AdamState(m, v, t, state.beta1, state.beta2, state.eps)


def save_params(path, spec, params):
    with open(path, "w") as fh:
        fh.write(spec.header() + "\n")
        for v in params:
            fh.write(f"{float(v)!r}\n")


def load_params(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ContractError(f"{path}: empty parameter file")
    spec = NetworkSpec.from_header(lines[0])
    return spec, as_params(spec, [float(s) for s in lines[1:] if s.strip()])

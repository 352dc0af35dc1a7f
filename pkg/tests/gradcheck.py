"""Central finite differences, shared by the nn tests and the acceptance suite."""

import numpy as np

from fairrl import nn


def random_spec(rng):
    depth = int(rng.integers(0, 3))
    sizes = [int(rng.integers(1, 5))] + [int(rng.integers(1, 5)) for _ in range(depth)]
    head = "softmax_logits" if rng.random() < 0.5 else "scalar"
    sizes.append(int(rng.integers(2, 4)) if head == "softmax_logits" else 1)
    acts = tuple(rng.choice(["tanh", "relu"]) for _ in range(depth))
    return nn.NetworkSpec(tuple(sizes), acts, head)


def loss_and_grad(spec, params, x, weights):
    """A smooth scalar loss of the network output and its analytic gradient.

    Softmax heads use sum(weights * log_softmax(logits)), scalar heads use
    sum(weights * out**2 / 2).
    """
    out, tape = nn.forward(spec, params, x)
    if spec.head == "softmax_logits":
        logp = nn.log_softmax(tape.head_out)
        probs = np.exp(logp)
        loss = float(np.sum(weights * logp))
        g = weights - probs * weights.sum(axis=1, keepdims=True)
    else:
        loss = float(np.sum(weights * out ** 2) / 2)
        g = weights * out
    return loss, nn.backward(tape, g)


def max_relative_error(spec, params, x, weights, h=1e-5, floor=1e-6):
    _, grad = loss_and_grad(spec, params, x, weights)
    fd = np.zeros_like(grad)
    base = np.array(params)
    for i in range(base.size):
        up, down = base.copy(), base.copy()
        up[i] += h
        down[i] -= h
        lu, _ = loss_and_grad(spec, nn.as_params(spec, up), x, weights)
        ld, _ = loss_and_grad(spec, nn.as_params(spec, down), x, weights)
        fd[i] = (lu - ld) / (2 * h)
    err = np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), floor)
    return float(err.max())


def relu_safe_inputs(spec, params, rng, n):
    """Inputs whose relu pre-activations stay away from the kink."""
    for _ in range(100):
        x = rng.normal(size=(n, spec.layer_sizes[0]))
        _, tape = nn.forward(spec, params, x)
        if all(np.min(np.abs(z)) > 1e-3 for z in tape.pre):
            return x
    return x

"""Plain-numpy MLP: GELU hidden layers, linear output, closed-form pullback.

Row convention throughout: activations are (batch, features), weights are
(out, in), so a layer computes a @ W.T + b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModalSubError
from .validation import as_float_array

# tanh approximation constants, fixed for reproducibility
GELU_SCALE = np.sqrt(2.0 / np.pi)
GELU_CUBIC = 0.044715


def gelu(x: np.ndarray) -> np.ndarray:
    inner = GELU_SCALE * (x + GELU_CUBIC * x ** 3)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_derivative(x: np.ndarray) -> np.ndarray:
    inner = GELU_SCALE * (x + GELU_CUBIC * x ** 3)
    t = np.tanh(inner)
    sech2 = 1.0 - t * t
    d_inner = GELU_SCALE * (1.0 + 3.0 * GELU_CUBIC * x * x)
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * d_inner


@dataclass(frozen=True)
class MlpParams:
    """Weight/bias pairs, first entry maps the network input."""

    weights: tuple
    biases: tuple

    def __post_init__(self):
        for w, b in zip(self.weights, self.biases):
            if w.shape[0] != b.shape[0]:
                raise ModalSubError("weight/bias shape mismatch")
        for wa, wb in zip(self.weights[:-1], self.weights[1:]):
            if wb.shape[1] != wa.shape[0]:
                raise ModalSubError("consecutive layer shapes do not chain")

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpParams":
        return MlpParams(
            weights=tuple(w.copy() for w in self.weights),
            biases=tuple(b.copy() for b in self.biases),
        )


def mlp_init(widths, seed: int) -> MlpParams:
    """Scaled uniform fan-in init; final layer zeroed so the net starts at 0."""
    widths = [int(w) for w in widths]
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ModalSubError(f"invalid widths {widths}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    last = len(widths) - 2
    for k, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        if k == last:
            weights.append(np.zeros((fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        else:
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights=tuple(weights), biases=tuple(biases))


def _check_input(params: MlpParams, zin) -> tuple[np.ndarray, bool]:
    zin = as_float_array(zin, "network input")
    single = zin.ndim == 1
    if single:
        zin = zin[None, :]
    if zin.ndim != 2 or zin.shape[1] != params.weights[0].shape[1]:
        raise ModalSubError(
            f"network input has width {zin.shape[-1]}, "
            f"expected {params.weights[0].shape[1]}"
        )
    return zin, single


def mlp_forward(params: MlpParams, zin) -> np.ndarray:
    """Deterministic forward pass; accepts (in,) or (batch, in)."""
    a, single = _check_input(params, zin)
    nl = params.num_layers
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ w.T + b
        if k < nl - 1:
            a = gelu(a)
    return a[0] if single else a


def mlp_forward_cached(params: MlpParams, zin):
    """Forward pass keeping layer inputs and pre-activations for the pullback."""
    a, single = _check_input(params, zin)
    inputs, preacts = [], []
    nl = params.num_layers
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        p = a @ w.T + b
        preacts.append(p)
        a = gelu(p) if k < nl - 1 else p
    return (a[0] if single else a), (inputs, preacts, single)


def mlp_backward(params: MlpParams, cache, cotangent, with_input_grad: bool = False):
    """Reverse pass: gradients of sum_batch(cotangent . y) over all parameters.

    Returns (weight_grads, bias_grads) and, when requested, the gradient with
    respect to the network input (same batch shape as the forward input).
    """
    inputs, preacts, single = cache
    delta = as_float_array(cotangent, "cotangent")
    if delta.ndim == 1:
        delta = delta[None, :]
    if delta.shape != preacts[-1].shape:
        raise ModalSubError(
            f"cotangent shape {delta.shape} does not match output {preacts[-1].shape}"
        )
    nl = params.num_layers
    w_grads = [None] * nl
    b_grads = [None] * nl
    for k in range(nl - 1, -1, -1):
        w_grads[k] = delta.T @ inputs[k]
        b_grads[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params.weights[k]) * gelu_derivative(preacts[k - 1])
    if not with_input_grad:
        return w_grads, b_grads
    input_grad = delta @ params.weights[0]
    if single:
        input_grad = input_grad[0]
    return w_grads, b_grads, input_grad


def mlp_pullback(params: MlpParams, zin, cotangent):
    """Parameter gradient of cotangent . y(zin), one forward + one reverse."""
    _, cache = mlp_forward_cached(params, zin)
    return mlp_backward(params, cache, cotangent)


def mlp_input_vjp(params: MlpParams, zin, cotangent) -> np.ndarray:
    """d(cotangent . y)/d zin, exact reverse-mode through the layers."""
    _, cache = mlp_forward_cached(params, zin)
    return mlp_backward(params, cache, cotangent, with_input_grad=True)[2]


def pack_params(params: MlpParams) -> np.ndarray:
    parts = []
    for w, b in zip(params.weights, params.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def pack_gradients(w_grads, b_grads) -> np.ndarray:
    parts = []
    for w, b in zip(w_grads, b_grads):
        parts.append(np.asarray(w).ravel())
        parts.append(np.asarray(b).ravel())
    return np.concatenate(parts)


def unpack_params(flat: np.ndarray, widths) -> MlpParams:
    widths = [int(w) for w in widths]
    weights, biases = [], []
    k = 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(flat[k:k + fan_in * fan_out].reshape(fan_out, fan_in))
        k += fan_in * fan_out
        biases.append(flat[k:k + fan_out])
        k += fan_out
    if k != flat.size:
        raise ModalSubError(
            f"flat parameter vector has {flat.size} entries, widths need {k}"
        )
    return MlpParams(weights=tuple(weights), biases=tuple(biases))

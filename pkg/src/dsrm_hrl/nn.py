"""Minimal feed-forward network machinery: parameter store, forward pass,
closed-form backward pass, Adam, and a finite-difference gradient check.

All math is float64. There is no autodiff graph: the architectures used in
this repo are small fixed MLPs, and correctness is enforced by the
finite-difference oracle rather than by a framework.
"""

from __future__ import annotations

import numpy as np

_ACTIVATIONS = ("tanh", "relu")


class ShapeError(ValueError):
    pass


def _init_scale(fan_in: int, activation: str) -> float:
    # He for relu, Xavier-ish for tanh.
    if activation == "relu":
        return np.sqrt(2.0 / fan_in)
    return np.sqrt(1.0 / fan_in)


class Mlp:
    """Fully-connected net, hidden activation tanh or relu, identity output.

    Weights W[l] have shape (n_out, n_in); forward accepts a single vector
    (n_in,) or a batch (B, n_in).
    """

    def __init__(self, layer_sizes, activation="tanh", rng=None):
        if len(layer_sizes) < 2:
            raise ShapeError("need at least input and output layer sizes")
        if any(s < 1 for s in layer_sizes):
            raise ShapeError(f"layer sizes must be positive: {layer_sizes}")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.layer_sizes = list(layer_sizes)
        self.activation = activation
        self.weights = []
        self.biases = []
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            scale = _init_scale(n_in, activation)
            self.weights.append(rng.standard_normal((n_out, n_in)) * scale)
            self.biases.append(np.zeros(n_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> dict[str, np.ndarray]:
        params = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"W{i}"] = w
            params[f"b{i}"] = b
        return params

    def set_parameters(self, params: dict[str, np.ndarray]):
        for i in range(self.n_layers):
            w, b = params[f"W{i}"], params[f"b{i}"]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ShapeError(f"parameter shape mismatch at layer {i}")
            self.weights[i] = np.asarray(w, dtype=np.float64)
            self.biases[i] = np.asarray(b, dtype=np.float64)

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def _act(self, z):
        if self.activation == "tanh":
            return np.tanh(z)
        return np.maximum(z, 0.0)

    def _act_grad(self, z):
        if self.activation == "tanh":
            t = np.tanh(z)
            return 1.0 - t * t
        return (z > 0).astype(np.float64)

    def forward(self, x):
        """Returns (y, cache); cache holds activations and pre-activations
        for backward. Accepts (n_in,) or (B, n_in)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if xb.shape[1] != self.layer_sizes[0]:
            raise ShapeError(
                f"input width {xb.shape[1]} != first layer size {self.layer_sizes[0]}"
            )
        acts = [xb]
        pre = []
        h = xb
        for i in range(self.n_layers):
            z = h @ self.weights[i].T + self.biases[i]
            pre.append(z)
            h = z if i == self.n_layers - 1 else self._act(z)
            acts.append(h)
        y = acts[-1][0] if single else acts[-1]
        return y, {"acts": acts, "pre": pre, "single": single}

    def backward(self, cache, dy):
        """Gradients of a scalar loss given dL/dy. Returns (grads, dx) where
        grads maps parameter names to arrays of matching shape."""
        dy = np.asarray(dy, dtype=np.float64)
        single = cache["single"]
        d = dy[None, :] if single else dy
        acts, pre = cache["acts"], cache["pre"]
        if d.shape != acts[-1].shape:
            raise ShapeError("dy shape does not match forward output")
        grads = {}
        for i in reversed(range(self.n_layers)):
            if i != self.n_layers - 1:
                d = d * self._act_grad(pre[i])
            grads[f"W{i}"] = d.T @ acts[i]
            grads[f"b{i}"] = d.sum(axis=0)
            d = d @ self.weights[i]
        dx = d[0] if single else d
        return grads, dx


class Adam:
    """Bias-corrected Adam over a named-parameter dict. Updates in place;
    non-finite gradients skip the update for that tensor and are counted."""

    def __init__(self, params: dict[str, np.ndarray], lr=1e-3, beta1=0.9,
                 beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.skipped = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.step_count += 1
        t = self.step_count
        for key, p in params.items():
            g = grads[key]
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape mismatch for {key}")
            if not np.all(np.isfinite(g)):
                self.skipped += 1
                continue
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def gradient_check(mlp: Mlp, loss_fn, x, h=1e-5) -> float:
    """Worst relative error between analytic and central-difference
    gradients over all parameters. loss_fn(y) -> (loss, dL/dy)."""
    y, cache = mlp.forward(x)
    _, dy = loss_fn(y)
    grads, _ = mlp.backward(cache, dy)
    params = mlp.parameters()
    worst = 0.0
    for key, p in params.items():
        flat = p.reshape(-1)
        gflat = grads[key].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            lp, _ = loss_fn(mlp.forward(x)[0])
            flat[idx] = orig - h
            lm, _ = loss_fn(mlp.forward(x)[0])
            flat[idx] = orig
            numeric = (lp - lm) / (2 * h)
            analytic = gflat[idx]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            err = abs(numeric - analytic) / denom
            if abs(numeric) < 1e-10 and abs(analytic) < 1e-10:
                err = 0.0
            worst = max(worst, err)
    return worst

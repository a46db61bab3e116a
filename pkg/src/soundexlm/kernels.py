"""Hot numeric kernels with a numba lane and a pure-numpy fallback.

The encoder's matmuls stay on BLAS; everything elementwise or row-wise that
sits inside the training loop (layer norm, softmax, GELU, Adam, per-row
cross-entropy) lives here in two interchangeable implementations.

Lane selection: the SOUNDEXLM_KERNELS environment variable, read at import.
  - "numba": require numba (ImportError if missing)
  - "numpy": force the fallback
  - unset / "auto": numba when importable, numpy otherwise
`BACKEND` reports the active lane. Both lanes compute the same quantities;
bit-level results may differ in summation order, so cross-lane comparisons
are tolerance-based while within-lane runs are deterministic.
"""

from __future__ import annotations

import math
import os

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


# ---------------------------------------------------------------------------
# numpy lane
# ---------------------------------------------------------------------------

def gelu_numpy(x):
    u = _GELU_C * (x + _GELU_A * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_backward_numpy(x, dy):
    u = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def layernorm_forward_numpy(x, gamma, beta, eps):
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mean) * rstd * gamma + beta
    return y, mean[..., 0], rstd[..., 0]


def layernorm_backward_numpy(x, gamma, mean, rstd, dy):
    xhat = (x - mean[..., None]) * rstd[..., None]
    dxhat = dy * gamma
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * rstd[..., None]
    return dx, dgamma, dbeta


def softmax_rows_numpy(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward_rows_numpy(probs, dprobs):
    inner = (probs * dprobs).sum(axis=-1, keepdims=True)
    return probs * (dprobs - inner)


def cross_entropy_rows_numpy(logits, targets):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    rows = np.arange(logits.shape[0])
    nll = -logp[rows, targets]
    dlogits = np.exp(logp)
    dlogits[rows, targets] -= 1.0
    return nll, dlogits


def adam_update_numpy(param, grad, m, v, lr, beta1, beta2, eps, step):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    mhat = m / bc1
    vhat = v / bc2
    param -= lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# numba lane
# ---------------------------------------------------------------------------

def _build_numba_lane():
    from numba import njit

    @njit(cache=True)
    def gelu(x):
        out = np.empty_like(x)
        flat_x = x.ravel()
        flat_o = out.ravel()
        for i in range(flat_x.size):
            xi = flat_x[i]
            u = _GELU_C * (xi + _GELU_A * xi * xi * xi)
            flat_o[i] = 0.5 * xi * (1.0 + math.tanh(u))
        return out

    @njit(cache=True)
    def gelu_backward(x, dy):
        out = np.empty_like(x)
        flat_x = x.ravel()
        flat_d = dy.ravel()
        flat_o = out.ravel()
        for i in range(flat_x.size):
            xi = flat_x[i]
            u = _GELU_C * (xi + _GELU_A * xi * xi * xi)
            t = math.tanh(u)
            du = _GELU_C * (1.0 + 3.0 * _GELU_A * xi * xi)
            flat_o[i] = flat_d[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du)
        return out

    @njit(cache=True)
    def layernorm_forward(x, gamma, beta, eps):
        rows, cols = x.shape
        y = np.empty_like(x)
        mean = np.empty(rows, dtype=x.dtype)
        rstd = np.empty(rows, dtype=x.dtype)
        for r in range(rows):
            acc = 0.0
            for c in range(cols):
                acc += x[r, c]
            mu = acc / cols
            acc = 0.0
            for c in range(cols):
                d = x[r, c] - mu
                acc += d * d
            rs = 1.0 / math.sqrt(acc / cols + eps)
            mean[r] = mu
            rstd[r] = rs
            for c in range(cols):
                y[r, c] = (x[r, c] - mu) * rs * gamma[c] + beta[c]
        return y, mean, rstd

    @njit(cache=True)
    def layernorm_backward(x, gamma, mean, rstd, dy):
        rows, cols = x.shape
        dx = np.empty_like(x)
        dgamma = np.zeros(cols, dtype=x.dtype)
        dbeta = np.zeros(cols, dtype=x.dtype)
        for r in range(rows):
            mu = mean[r]
            rs = rstd[r]
            s1 = 0.0
            s2 = 0.0
            for c in range(cols):
                xhat = (x[r, c] - mu) * rs
                dxh = dy[r, c] * gamma[c]
                s1 += dxh
                s2 += dxh * xhat
                dgamma[c] += dy[r, c] * xhat
                dbeta[c] += dy[r, c]
            m1 = s1 / cols
            m2 = s2 / cols
            for c in range(cols):
                xhat = (x[r, c] - mu) * rs
                dxh = dy[r, c] * gamma[c]
                dx[r, c] = (dxh - m1 - xhat * m2) * rs
        return dx, dgamma, dbeta

    @njit(cache=True)
    def softmax_rows(x):
        rows, cols = x.shape
        out = np.empty_like(x)
        for r in range(rows):
            hi = x[r, 0]
            for c in range(1, cols):
                if x[r, c] > hi:
                    hi = x[r, c]
            acc = 0.0
            for c in range(cols):
                e = math.exp(x[r, c] - hi)
                out[r, c] = e
                acc += e
            inv = 1.0 / acc
            for c in range(cols):
                out[r, c] *= inv
        return out

    @njit(cache=True)
    def softmax_backward_rows(probs, dprobs):
        rows, cols = probs.shape
        out = np.empty_like(probs)
        for r in range(rows):
            inner = 0.0
            for c in range(cols):
                inner += probs[r, c] * dprobs[r, c]
            for c in range(cols):
                out[r, c] = probs[r, c] * (dprobs[r, c] - inner)
        return out

    @njit(cache=True)
    def cross_entropy_rows(logits, targets):
        rows, cols = logits.shape
        nll = np.empty(rows, dtype=logits.dtype)
        dlogits = np.empty_like(logits)
        for r in range(rows):
            hi = logits[r, 0]
            for c in range(1, cols):
                if logits[r, c] > hi:
                    hi = logits[r, c]
            acc = 0.0
            for c in range(cols):
                e = math.exp(logits[r, c] - hi)
                dlogits[r, c] = e
                acc += e
            inv = 1.0 / acc
            for c in range(cols):
                dlogits[r, c] *= inv
            t = targets[r]
            nll[r] = math.log(acc) + hi - logits[r, t]
            dlogits[r, t] -= 1.0
        return nll, dlogits

    @njit(cache=True)
    def adam_update(param, grad, m, v, lr, beta1, beta2, eps, step):
        bc1 = 1.0 - beta1**step
        bc2 = 1.0 - beta2**step
        fp = param.ravel()
        fg = grad.ravel()
        fm = m.ravel()
        fv = v.ravel()
        for i in range(fp.size):
            g = fg[i]
            fm[i] = beta1 * fm[i] + (1.0 - beta1) * g
            fv[i] = beta2 * fv[i] + (1.0 - beta2) * g * g
            mhat = fm[i] / bc1
            vhat = fv[i] / bc2
            fp[i] -= lr * mhat / (math.sqrt(vhat) + eps)

    return {
        "gelu": gelu,
        "gelu_backward": gelu_backward,
        "layernorm_forward": layernorm_forward,
        "layernorm_backward": layernorm_backward,
        "softmax_rows": softmax_rows,
        "softmax_backward_rows": softmax_backward_rows,
        "cross_entropy_rows": cross_entropy_rows,
        "adam_update": adam_update,
    }


NUMPY_LANE = {
    "gelu": gelu_numpy,
    "gelu_backward": gelu_backward_numpy,
    "layernorm_forward": layernorm_forward_numpy,
    "layernorm_backward": layernorm_backward_numpy,
    "softmax_rows": softmax_rows_numpy,
    "softmax_backward_rows": softmax_backward_rows_numpy,
    "cross_entropy_rows": cross_entropy_rows_numpy,
    "adam_update": adam_update_numpy,
}

KERNEL_NAMES = tuple(NUMPY_LANE)


def _select_lane():
    requested = os.environ.get("SOUNDEXLM_KERNELS", "auto").lower()
    if requested not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"SOUNDEXLM_KERNELS={requested!r}: expected 'numba', 'numpy', or 'auto'"
        )
    if requested == "numpy":
        return "numpy", NUMPY_LANE
    try:
        return "numba", _build_numba_lane()
    except ImportError:
        if requested == "numba":
            raise
        return "numpy", NUMPY_LANE


BACKEND, _ACTIVE = _select_lane()

gelu = _ACTIVE["gelu"]
gelu_backward = _ACTIVE["gelu_backward"]
layernorm_forward = _ACTIVE["layernorm_forward"]
layernorm_backward = _ACTIVE["layernorm_backward"]
softmax_rows = _ACTIVE["softmax_rows"]
softmax_backward_rows = _ACTIVE["softmax_backward_rows"]
cross_entropy_rows = _ACTIVE["cross_entropy_rows"]
adam_update = _ACTIVE["adam_update"]

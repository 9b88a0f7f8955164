"""Numeric kernels for the context-window token classifier.

Every kernel exists in two interchangeable backends: a numba ``@njit``
version (default when numba is importable) and a pure-numpy version.
Selection is controlled by the ``MOMNER_BACKEND`` environment variable:

    MOMNER_BACKEND=numpy   force the pure-numpy path
    MOMNER_BACKEND=numba   require numba (error if unavailable)
    MOMNER_BACKEND=auto    numba when available, numpy otherwise (default)

Both backends compute the same quantities; ``benchmarks/bench_backends.py``
times them against each other and checks agreement.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_VAR = "MOMNER_BACKEND"

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# pure-numpy backend
# ---------------------------------------------------------------------------

def _context_ids(ids: np.ndarray, radius: int, pad_id: int) -> np.ndarray:
    """(M,) token ids -> (M, 2*radius+1) window of ids, PAD outside the sentence."""
    m = ids.shape[0]
    padded = np.full(m + 2 * radius, pad_id, dtype=ids.dtype)
    padded[radius:radius + m] = ids
    return np.lib.stride_tricks.sliding_window_view(padded, 2 * radius + 1)


def _np_sentence_forward(emb, w1, b1, w2, b2, ids, extra, radius, pad_id, sigmoid_out):
    ctx = _context_ids(ids, radius, pad_id)
    m = ids.shape[0]
    feats = emb[ctx].reshape(m, -1) + extra
    hidden = np.tanh(feats @ w1 + b1)
    logits = hidden @ w2 + b2
    if sigmoid_out:
        probs = 1.0 / (1.0 + np.exp(-logits))
    else:
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        probs = expd / expd.sum(axis=1, keepdims=True)
    return probs, hidden, feats


def _np_sentence_backward(ids, feats, hidden, dlogits, w1, w2, radius, pad_id,
                          demb, dw1, db1, dw2, db2):
    dw2 += hidden.T @ dlogits
    db2 += dlogits.sum(axis=0)
    dhidden = dlogits @ w2.T
    dpre = dhidden * (1.0 - hidden * hidden)
    dw1 += feats.T @ dpre
    db1 += dpre.sum(axis=0)
    dfeats = dpre @ w1.T
    ctx = _context_ids(ids, radius, pad_id)
    e = demb.shape[1]
    np.add.at(demb, ctx.ravel(), dfeats.reshape(-1, e))
    return dfeats.sum(axis=0)


def _np_adam_update(param, grad, m1, m2, step, lr, beta1, beta2, eps):
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    m1 *= beta1
    m1 += (1.0 - beta1) * grad
    m2 *= beta2
    m2 += (1.0 - beta2) * grad * grad
    param -= lr * (m1 / c1) / (np.sqrt(m2 / c2) + eps)


# ---------------------------------------------------------------------------
# numba backend (same contracts, loop-fused)
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_sentence_forward(emb, w1, b1, w2, b2, ids, extra, radius, pad_id, sigmoid_out):
        m = ids.shape[0]
        e = emb.shape[1]
        width = 2 * radius + 1
        k = w2.shape[1]
        feats = np.empty((m, width * e))
        for i in range(m):
            for o in range(width):
                j = i + o - radius
                tid = ids[j] if 0 <= j < m else pad_id
                base = o * e
                for q in range(e):
                    feats[i, base + q] = emb[tid, q] + extra[base + q]
        hidden = np.tanh(np.dot(feats, w1) + b1)
        logits = np.dot(hidden, w2) + b2
        probs = np.empty((m, k))
        if sigmoid_out:
            for i in range(m):
                for j in range(k):
                    probs[i, j] = 1.0 / (1.0 + np.exp(-logits[i, j]))
        else:
            for i in range(m):
                mx = logits[i, 0]
                for j in range(1, k):
                    if logits[i, j] > mx:
                        mx = logits[i, j]
                total = 0.0
                for j in range(k):
                    v = np.exp(logits[i, j] - mx)
                    probs[i, j] = v
                    total += v
                for j in range(k):
                    probs[i, j] /= total
        return probs, hidden, feats

    @njit(cache=True)
    def _nb_sentence_backward(ids, feats, hidden, dlogits, w1, w2, radius, pad_id,
                              demb, dw1, db1, dw2, db2):
        m = ids.shape[0]
        e = demb.shape[1]
        width = 2 * radius + 1
        dw2 += np.dot(np.ascontiguousarray(hidden.T), dlogits)
        db2 += dlogits.sum(axis=0)
        dhidden = np.dot(dlogits, np.ascontiguousarray(w2.T))
        dpre = dhidden * (1.0 - hidden * hidden)
        dw1 += np.dot(np.ascontiguousarray(feats.T), dpre)
        db1 += dpre.sum(axis=0)
        dfeats = np.dot(dpre, np.ascontiguousarray(w1.T))
        for i in range(m):
            for o in range(width):
                j = i + o - radius
                tid = ids[j] if 0 <= j < m else pad_id
                base = o * e
                for q in range(e):
                    demb[tid, q] += dfeats[i, base + q]
        return dfeats.sum(axis=0)

    @njit(cache=True)
    def _nb_adam_update(param, grad, m1, m2, step, lr, beta1, beta2, eps):
        c1 = 1.0 - beta1 ** step
        c2 = 1.0 - beta2 ** step
        for i in range(param.shape[0]):
            g = grad[i]
            m1[i] = beta1 * m1[i] + (1.0 - beta1) * g
            m2[i] = beta2 * m2[i] + (1.0 - beta2) * g * g
            param[i] -= lr * (m1[i] / c1) / (np.sqrt(m2[i] / c2) + eps)


_BACKENDS = {
    "numpy": (_np_sentence_forward, _np_sentence_backward, _np_adam_update),
}
if HAVE_NUMBA:
    _BACKENDS["numba"] = (_nb_sentence_forward, _nb_sentence_backward, _nb_adam_update)


def _resolve_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower() or "auto"
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_VAR} must be 'auto', 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        return "numpy"
    if HAVE_NUMBA:
        return "numba"
    if choice == "numba":
        raise RuntimeError(f"{_ENV_VAR}=numba but numba is not importable")
    return "numpy"


BACKEND = "unset"
sentence_forward = _np_sentence_forward
sentence_backward = _np_sentence_backward
adam_update = _np_adam_update


def set_backend(name: str) -> None:
    """Switch the active kernel backend ('numpy' or 'numba')."""
    global BACKEND, sentence_forward, sentence_backward, adam_update
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {sorted(_BACKENDS)}")
    sentence_forward, sentence_backward, adam_update = _BACKENDS[name]
    BACKEND = name


set_backend(_resolve_backend())

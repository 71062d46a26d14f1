"""Finite-difference verification of the BPTT gradients.

Perturbing one gate weight only adds a term to one pre-activation row, so all
``2 * n_params`` perturbed forward passes run as a single batch that shares
the unperturbed weight matrices.  Output-layer weights do not feed back into
the recurrence and are checked against the unperturbed trajectory.
"""

from __future__ import annotations

import numpy as np

from .lstm import LstmModel, forward_sequence, loss_and_grads, sigmoid

FD_STEP = 1e-4
REL_FLOOR = 1e-6


def _bce_rows(logits, y):
    # logits (..., T), y (T,): mean BCE over the last axis
    a = logits
    per = np.maximum(a, 0) - a * y + np.log1p(np.exp(-np.abs(a)))
    return per.mean(axis=-1)


def numeric_grads(model: LstmModel, X: np.ndarray, y: np.ndarray, h: float = FD_STEP,
                  chunk: int = 8192) -> dict[str, np.ndarray]:
    """Central differences of the mean BCE w.r.t. every parameter, for one sequence (T x D)."""
    m = model.astype(np.float64)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    T, D = X.shape
    H = m.hidden_dim
    G = 4 * H

    # gate parameters: (row, kind, col) with kind 0 = input weight, 1 = recurrent, 2 = bias
    rows_in, cols_in = np.divmod(np.arange(G * D), D)
    rows_h, cols_h = np.divmod(np.arange(G * H), H)
    rows = np.concatenate([rows_in, rows_h, np.arange(G)])
    kinds = np.concatenate([np.zeros(G * D, int), np.ones(G * H, int), np.full(G, 2)])
    cols = np.concatenate([cols_in, cols_h, np.zeros(G, int)])
    n_gate = len(rows)

    gate_fd = np.empty(n_gate)
    W_inT, W_hT = m.W_in.T, m.W_h.T
    w_out, b_out = m.W_out[0], m.b_out[0]
    for start in range(0, n_gate, chunk):
        sl = slice(start, min(start + chunk, n_gate))
        r = np.tile(rows[sl], 2)
        k = np.tile(kinds[sl], 2)
        c = np.tile(cols[sl], 2)
        n = len(r) // 2
        sign = np.concatenate([np.full(n, h), np.full(n, -h)])
        N = 2 * n
        hid = np.zeros((N, H))
        cell = np.zeros((N, H))
        logits = np.empty((N, T))
        idx = np.arange(N)
        for t in range(T):
            z = hid @ W_hT + (X[t] @ W_inT + m.b)
            delta = np.where(k == 0, X[t][np.where(k == 0, c, 0)],
                             np.where(k == 1, hid[idx, np.where(k == 1, c, 0)], 1.0))
            z[idx, r] += sign * delta
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = sigmoid(z[:, 3 * H:])
            cell = f * cell + i * g
            hid = o * np.tanh(cell)
            logits[:, t] = hid @ w_out + b_out
        losses = _bce_rows(logits, y)
        gate_fd[sl] = (losses[:n] - losses[n:]) / (2 * h)

    base_logits, _, cache = forward_sequence(m, X[:, None, :], keep=True)
    a = base_logits[:, 0]
    hs = cache.h[1:, 0, :]                                    # (T, H)
    plus = _bce_rows(a[None, :] + h * hs.T, y)
    minus = _bce_rows(a[None, :] - h * hs.T, y)
    w_out_fd = (plus - minus) / (2 * h)
    b_out_fd = (_bce_rows(a + h, y) - _bce_rows(a - h, y)) / (2 * h)

    return {
        "W_in": gate_fd[:G * D].reshape(G, D),
        "W_h": gate_fd[G * D:G * D + G * H].reshape(G, H),
        "b": gate_fd[G * D + G * H:],
        "W_out": w_out_fd[None, :],
        "b_out": np.array([b_out_fd]),
    }


def relative_errors(analytic: dict, numeric: dict, floor: float = REL_FLOOR) -> dict[str, float]:
    """Per parameter group: max |a - n| / max(|a|, |n|, floor)."""
    out = {}
    for name, a in analytic.items():
        n = numeric[name]
        a = np.asarray(a, dtype=np.float64)
        den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        out[name] = float(np.max(np.abs(a - n) / den))
    return out


def gradient_check(model: LstmModel, X: np.ndarray, y: np.ndarray, h: float = FD_STEP,
                   grad_fn=None) -> float:
    """Largest relative error between analytic and finite-difference gradients.

    ``grad_fn(model, X, y) -> grads`` replaces the BPTT gradients (used to
    check that a corrupted gradient is caught).
    """
    m = model.astype(np.float64)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if grad_fn is None:
        _, analytic, _ = loss_and_grads(m, X[:, None, :], y[:, None])
    else:
        analytic = grad_fn(m, X, y)
    return max(relative_errors(analytic, numeric_grads(m, X, y, h)).values())

"""Single-layer LSTM binary classifier: LSTM(55) -> linear -> sigmoid.

Gate rows are stacked in the order input, forget, cell, output.  Everything
runs in numpy; sequences are processed as ``(time, batch, features)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch
from ..features.extractors import DIMS

HIDDEN = 55
PARAM_NAMES = ("W_in", "W_h", "b", "W_out", "b_out")


def sigmoid(x):
    # split by sign so that exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _sig(x):
    if np.ndim(x) == 0:
        return float(sigmoid(np.array([x], dtype=np.float64))[0])
    return sigmoid(np.asarray(x, dtype=np.float64))


@dataclass
class LstmModel:
    kind: str
    input_dim: int
    hidden_dim: int
    W_in: np.ndarray
    W_h: np.ndarray
    b: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray
    mean: np.ndarray = None
    std: np.ndarray = None
    history: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        H, D = self.hidden_dim, self.input_dim
        if self.kind in DIMS and DIMS[self.kind] != D:
            raise DimensionMismatch(f"{self.kind} detector needs input_dim {DIMS[self.kind]}, got {D}")
        shapes = {"W_in": (4 * H, D), "W_h": (4 * H, H), "b": (4 * H,), "W_out": (1, H), "b_out": (1,)}
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name))
            if arr.shape != shape:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            setattr(self, name, arr)
        if self.mean is None:
            self.mean = np.zeros(D)
        if self.std is None:
            self.std = np.ones(D)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)

    def params(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    def with_params(self, params: dict) -> "LstmModel":
        return LstmModel(self.kind, self.input_dim, self.hidden_dim, **params,
                         mean=self.mean, std=self.std, history=list(self.history))

    def astype(self, dtype) -> "LstmModel":
        return self.with_params({n: p.astype(dtype) for n, p in self.params().items()})

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


def init_model(kind: str, input_dim: int | None = None, hidden_dim: int = HIDDEN,
               seed: int = 0, scale: float | None = None) -> LstmModel:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1."""
    D = DIMS[kind] if input_dim is None else input_dim
    H = hidden_dim
    rng = np.random.default_rng(seed)
    s = 1.0 / np.sqrt(H) if scale is None else scale
    b = np.zeros(4 * H)
    b[H:2 * H] = 1.0
    return LstmModel(kind, D, H,
                     W_in=rng.uniform(-s, s, (4 * H, D)),
                     W_h=rng.uniform(-s, s, (4 * H, H)),
                     b=b,
                     W_out=rng.uniform(-s, s, (1, H)),
                     b_out=np.zeros(1))


def zero_model(kind: str, input_dim: int | None = None, hidden_dim: int = HIDDEN) -> LstmModel:
    D = DIMS[kind] if input_dim is None else input_dim
    H = hidden_dim
    return LstmModel(kind, D, H, np.zeros((4 * H, D)), np.zeros((4 * H, H)), np.zeros(4 * H),
                     np.zeros((1, H)), np.zeros(1))


@dataclass
class LstmState:
    hidden: np.ndarray
    cell: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int = HIDDEN, batch: int | None = None) -> "LstmState":
        shape = (hidden_dim,) if batch is None else (batch, hidden_dim)
        return cls(np.zeros(shape), np.zeros(shape))

    def copy(self) -> "LstmState":
        return LstmState(self.hidden.copy(), self.cell.copy())


def forward_step(model: LstmModel, state: LstmState, x) -> tuple[LstmState, float]:
    """One frame of an already-normalised feature vector."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise DimensionMismatch(f"expected input of length {model.input_dim}, got shape {x.shape}")
    H = model.hidden_dim
    z = model.W_in @ x + model.W_h @ state.hidden + model.b
    i = _sig(z[:H])
    f = _sig(z[H:2 * H])
    g = np.tanh(z[2 * H:3 * H])
    o = _sig(z[3 * H:])
    c = f * state.cell + i * g
    h = o * np.tanh(c)
    a = float(model.W_out[0] @ h + model.b_out[0])
    return LstmState(h, c), _sig(a)


@dataclass
class _Cache:
    x: np.ndarray
    h: np.ndarray        # (T+1, B, H), h[0] = initial
    c: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tc: np.ndarray       # tanh(c_t)
    logits: np.ndarray   # (T, B)
    extra: dict = field(default_factory=dict)


def forward_sequence(model: LstmModel, X: np.ndarray, state: LstmState | None = None,
                     keep: bool = False):
    """Run ``X`` (T x B x D, normalised) through the model.

    Returns ``(logits (T x B), final state)`` and the cache when ``keep`` is set.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, None, :]
    T, B, D = X.shape
    if D != model.input_dim:
        raise DimensionMismatch(f"expected input of length {model.input_dim}, got {D}")
    H = model.hidden_dim
    if state is None:
        state = LstmState.zeros(H, B)
    h0 = np.broadcast_to(state.hidden, (B, H))
    c0 = np.broadcast_to(state.cell, (B, H))
    hs = np.empty((T + 1, B, H))
    cs = np.empty((T + 1, B, H))
    hs[0], cs[0] = h0, c0
    if keep:
        gates = np.empty((4, T, B, H))
        tcs = np.empty((T, B, H))
    W_inT, W_hT = model.W_in.T, model.W_h.T
    for t in range(T):
        # per-step projection keeps the arithmetic independent of where a sequence is split
        z = X[t] @ W_inT + hs[t] @ W_hT + model.b
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:])
        cs[t + 1] = f * cs[t] + i * g
        tc = np.tanh(cs[t + 1])
        hs[t + 1] = o * tc
        if keep:
            gates[0, t], gates[1, t], gates[2, t], gates[3, t] = i, f, g, o
            tcs[t] = tc
    logits = hs[1:] @ model.W_out[0] + model.b_out[0]
    final = LstmState(hs[T].copy(), cs[T].copy())
    if not keep:
        return logits, final
    cache = _Cache(X, hs, cs, gates[0], gates[1], gates[2], gates[3], tcs, logits)
    return logits, final, cache


def bce_with_logits(logits: np.ndarray, y: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean binary cross-entropy over (masked) frames, computed stably from logits."""
    a = np.asarray(logits, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    per = np.maximum(a, 0) - a * y + np.log1p(np.exp(-np.abs(a)))
    if mask is None:
        return float(per.mean())
    n = max(float(mask.sum()), 1.0)
    return float((per * mask).sum() / n)


def loss_and_grads(model: LstmModel, X, y, state: LstmState | None = None, mask=None,
                   per_sequence: bool = False):
    """BCE loss, gradients w.r.t. every parameter (truncated at ``state``), and the final state.

    The returned loss is always the mean over frames.  Gradients are of that
    mean, or with ``per_sequence`` of the loss summed over time and averaged
    over the batch streams.
    """
    logits, final, cache = forward_sequence(model, X, state, keep=True)
    y = np.asarray(y, dtype=np.float64).reshape(logits.shape)
    if mask is None:
        mask = np.ones_like(logits)
    else:
        mask = np.asarray(mask, dtype=np.float64).reshape(logits.shape)
    loss = bce_with_logits(logits, y, mask)
    n = max(float(mask.sum()), 1.0)
    if per_sequence:
        n = float(logits.shape[1])
    da = (sigmoid(logits) - y) * mask / n                   # (T, B)
    T, B = logits.shape
    H = model.hidden_dim

    hs = cache.h[1:]
    grads = {
        "W_out": (np.einsum("tb,tbh->h", da, hs))[None, :],
        "b_out": np.array([da.sum()]),
    }
    dh_out = da[:, :, None] * model.W_out[0]                 # (T, B, H)
    dZ = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    W_h = model.W_h
    for t in range(T - 1, -1, -1):
        i, f, g, o, tc = cache.i[t], cache.f[t], cache.g[t], cache.o[t], cache.tc[t]
        dh = dh_out[t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * cache.c[t]
        dc_next = dc * f
        dz = dZ[t]
        dz[:, :H] = di * i * (1.0 - i)
        dz[:, H:2 * H] = df * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dg * (1.0 - g * g)
        dz[:, 3 * H:] = do * o * (1.0 - o)
        dh_next = dz @ W_h
    flat = dZ.reshape(T * B, 4 * H)
    grads["W_in"] = flat.T @ cache.x.reshape(T * B, -1)
    grads["W_h"] = flat.T @ cache.h[:-1].reshape(T * B, H)
    grads["b"] = flat.sum(axis=0)
    return loss, grads, final


def predict(model: LstmModel, features: np.ndarray) -> np.ndarray:
    """Per-frame probabilities for one raw (unnormalised) feature sequence."""
    X = model.normalize(np.asarray(features, dtype=np.float64))
    if len(X) == 0:
        return np.zeros(0)
    logits, _ = forward_sequence(model, X[:, None, :])
    return sigmoid(logits[:, 0])


class StreamingDetector:
    """Per-stream wrapper: normalises raw features and carries the LSTM state."""

    def __init__(self, model: LstmModel):
        self.model = model
        self.state = LstmState.zeros(model.hidden_dim)
        self._Wt = model.W_in.T.copy()
        self._WhT = model.W_h.T.copy()

    def reset(self):
        self.state = LstmState.zeros(self.model.hidden_dim)

    def push(self, raw_features) -> float:
        x = self.model.normalize(getattr(raw_features, "values", raw_features))
        if x.shape != (self.model.input_dim,):
            raise DimensionMismatch(f"expected input of length {self.model.input_dim}, got shape {x.shape}")
        m, H = self.model, self.model.hidden_dim
        z = x @ self._Wt + self.state.hidden @ self._WhT + m.b
        s = sigmoid(z)
        i, f, o = s[:H], s[H:2 * H], s[3 * H:]
        g = np.tanh(z[2 * H:3 * H])
        c = f * self.state.cell + i * g
        h = o * np.tanh(c)
        self.state = LstmState(h, c)
        return _sig(float(m.W_out[0] @ h + m.b_out[0]))

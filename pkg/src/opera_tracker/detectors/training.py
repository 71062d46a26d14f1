"""Stateful truncated-BPTT training of the detector LSTMs."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyDataset, NonBinaryLabels
from .lstm import HIDDEN, LstmModel, LstmState, forward_sequence, init_model, loss_and_grads, sigmoid

log = logging.getLogger(__name__)

STD_FLOOR = 1e-8


@dataclass
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 50
    seed: int = 0
    chunk: int = 55          # truncated BPTT horizon: 1.1 s of 20 ms frames
    streams: int = 16        # parallel streams per update
    clip: float = 5.0
    hidden_dim: int = HIDDEN
    target_loss: float | None = None   # stop early once an epoch's mean loss falls below


def _check(sequences):
    seqs = [(np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64).ravel())
            for X, y in sequences]
    seqs = [(X, y) for X, y in seqs if len(X)]
    if not seqs:
        raise EmptyDataset("no labelled frames to train on")
    dims = {X.shape[1] for X, _ in seqs}
    if len(dims) != 1:
        raise ValueError(f"inconsistent feature dimensions {sorted(dims)}")
    for X, y in seqs:
        if len(X) != len(y):
            raise ValueError("feature and label lengths differ")
        if not np.all((y == 0) | (y == 1)):
            raise NonBinaryLabels("labels must be 0 or 1")
    return seqs, dims.pop()


def norm_stats(sequences) -> tuple[np.ndarray, np.ndarray]:
    allX = np.concatenate([X for X, _ in sequences])
    mean = allX.mean(axis=0)
    std = allX.std(axis=0)
    return mean, np.where(std > STD_FLOOR, std, 1.0)


def _layout(seqs, order, streams):
    """Concatenate sequences in ``order`` and fold into (time x streams) arrays."""
    X = np.concatenate([seqs[k][0] for k in order])
    y = np.concatenate([seqs[k][1] for k in order])
    B = max(1, min(streams, len(X)))
    L = len(X) // B
    X = X[:L * B].reshape(B, L, -1).transpose(1, 0, 2)
    y = y[:L * B].reshape(B, L).T
    return X, y


def train(kind: str, sequences, config: TrainConfig | None = None) -> LstmModel:
    """Fit a detector on ``[(features T x D, labels T), ...]`` (raw, unnormalised features).

    Returns float32 weights; per-epoch mean losses are kept in ``model.history``.
    """
    cfg = config or TrainConfig()
    seqs, D = _check(sequences)
    mean, std = norm_stats(seqs)
    seqs = [((X - mean) / std, y) for X, y in seqs]

    model = init_model(kind, D, cfg.hidden_dim, seed=cfg.seed)
    model.mean, model.std = mean, std
    params = model.params()
    velocity = {n: np.zeros_like(p) for n, p in params.items()}
    rng = np.random.default_rng(cfg.seed)
    history = []

    for epoch in range(cfg.epochs):
        X, y = _layout(seqs, rng.permutation(len(seqs)), cfg.streams)
        state = LstmState.zeros(cfg.hidden_dim, X.shape[1])
        total, count = 0.0, 0
        for t0 in range(0, len(X), cfg.chunk):
            xb, yb = X[t0:t0 + cfg.chunk], y[t0:t0 + cfg.chunk]
            current = model.with_params(params)
            loss, grads, state = loss_and_grads(current, xb, yb, state, per_sequence=True)
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            scale = cfg.clip / norm if norm > cfg.clip else 1.0
            for n in params:
                velocity[n] = cfg.momentum * velocity[n] - cfg.lr * scale * grads[n]
                params[n] = params[n] + velocity[n]
            total += loss * xb.shape[0] * xb.shape[1]
            count += xb.shape[0] * xb.shape[1]
        history.append(total / count)
        log.info("%s epoch %d loss %.5f", kind, epoch + 1, history[-1])
        if cfg.target_loss is not None and history[-1] < cfg.target_loss:
            break

    out = model.with_params({n: p.astype(np.float32) for n, p in params.items()})
    out.history = history
    return out


def frame_accuracy(model: LstmModel, sequences, threshold: float = 0.5) -> float:
    """Fraction of frames whose thresholded probability matches the label (state reset per sequence)."""
    correct, total = 0, 0
    for X, y in sequences:
        X = model.normalize(np.asarray(X, dtype=np.float64))
        if len(X) == 0:
            continue
        logits, _ = forward_sequence(model, X[:, None, :])
        pred = sigmoid(logits[:, 0]) > threshold
        correct += int(np.sum(pred == (np.asarray(y).ravel() > 0.5)))
        total += len(X)
    if total == 0:
        raise EmptyDataset("no frames to evaluate")
    return correct / total

import time
from dataclasses import dataclass

import numpy as np
import pytest

from opera_tracker.audio_io import SAMPLE_RATE, AudioStream


def tone(freq, seconds, amp=0.5, sr=SAMPLE_RATE, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return amp * np.sin(2 * np.pi * freq * t + phase)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def sine_stream():
    return AudioStream(tone(440.0, 1.0), SAMPLE_RATE)


# -- detectors trained once per session on the full synthetic corpus -----------------

CORPUS_CLIPS_PER_CLASS = 180        # 180 x 10 s = 30 min per class
CORPUS_SEED = 0
TARGET_LOSS = 0.02


@dataclass
class TrainedDetectors:
    models: dict
    held_accuracy: dict
    epochs: dict
    corpus_minutes: dict
    seconds: float


@pytest.fixture(scope="session")
def trained_detectors():
    from opera_tracker.detectors.training import TrainConfig, frame_accuracy, train
    from opera_tracker.evaluation.corpus import CLIP_S, sequences, split, synth_clips

    t0 = time.process_time()
    clips = synth_clips(CORPUS_CLIPS_PER_CLASS, seed=CORPUS_SEED)
    minutes = {}
    for c in clips:
        label = c.labels[0]
        minutes[label] = minutes.get(label, 0.0) + CLIP_S / 60.0
    train_set, held = split(clips)
    models, acc, epochs = {}, {}, {}
    for kind in ("applause", "music", "speech"):
        m = train(kind, sequences(train_set, kind), TrainConfig(epochs=50, seed=CORPUS_SEED,
                                                                target_loss=TARGET_LOSS))
        models[kind] = m
        acc[kind] = frame_accuracy(m, sequences(held, kind))
        epochs[kind] = len(m.history)
    return TrainedDetectors(models, acc, epochs, minutes, time.process_time() - t0)

"""WAV decoding, mono/rate normalisation and fixed-geometry framing."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import CorruptFile, EmptyAudio, InvalidGeometry, UnsupportedFormat

SAMPLE_RATE = 44100

# frame geometry (ms) of the two feature families
ALIGN_WINDOW_MS = 20.0
ALIGN_HOP_MS = 10.0
DETECT_WINDOW_MS = 100.0
DETECT_HOP_MS = 20.0


@dataclass
class AudioStream:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioStream holds mono samples only")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


@dataclass
class FrameBuffer:
    index: int
    start_time: float
    samples: np.ndarray
    window_ms: float
    hop_ms: float
    sample_rate: int = SAMPLE_RATE


def _check_riff(path: Path) -> None:
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12:
        raise CorruptFile(f"{path}: file too short to be a WAV file")
    if head[:4] not in (b"RIFF", b"RIFX") or head[8:12] != b"WAVE":
        raise UnsupportedFormat(f"{path}: not a RIFF/WAVE file")


def open_audio(path, sample_rate: int = SAMPLE_RATE) -> AudioStream:
    """Decode a PCM16 or float32 WAV file to a mono stream at ``sample_rate``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    _check_riff(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except wavfile.WavFileWarning as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "Unsupported" in msg:
            raise UnsupportedFormat(f"{path}: {msg}") from exc
        raise CorruptFile(f"{path}: {msg}") from exc
    except (EOFError, OSError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc

    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise UnsupportedFormat(f"{path}: sample type {data.dtype} (expected PCM16 or float32)")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise EmptyAudio(f"{path}: no samples")
    if not np.all(np.isfinite(x)):
        raise CorruptFile(f"{path}: non-finite samples")
    x = np.clip(x, -1.0, 1.0)
    return AudioStream(resample(x, rate, sample_rate), sample_rate)


def resample(x: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Polyphase windowed-sinc resampling; identity when the rates match."""
    if rate_in == rate_out:
        return np.asarray(x, dtype=np.float64)
    g = math.gcd(int(rate_in), int(rate_out))
    up, down = rate_out // g, rate_in // g
    return resample_poly(np.asarray(x, dtype=np.float64), up, down, window=("kaiser", 10.0))


def write_wav(path, stream: AudioStream, sample_format: str = "int16") -> None:
    x = np.clip(stream.samples, -1.0, 1.0)
    if sample_format == "int16":
        data = np.round(x * 32767.0).astype("<i2")
    elif sample_format == "float32":
        data = x.astype("<f4")
    else:
        raise UnsupportedFormat(f"cannot write sample format {sample_format!r}")
    wavfile.write(Path(path), stream.sample_rate, data)


def frame_geometry(window_ms: float, hop_ms: float, sample_rate: int = SAMPLE_RATE) -> tuple[int, int]:
    """Window and hop lengths in samples."""
    if hop_ms <= 0 or window_ms <= 0 or window_ms < hop_ms:
        raise InvalidGeometry(f"window {window_ms} ms / hop {hop_ms} ms")
    return int(round(window_ms / 1000.0 * sample_rate)), int(round(hop_ms / 1000.0 * sample_rate))


def frame_count(n_samples: int, hop: int) -> int:
    return n_samples // hop


def frame_stream(stream: AudioStream, window_ms: float, hop_ms: float) -> Iterator[FrameBuffer]:
    """Yield overlapping frames in time order; the trailing partial window is zero-padded.

    Frame ``k`` starts at sample ``k * hop`` and there are ``floor(len / hop)``
    frames, so no frame starts past the end of the stream.
    """
    win, hop = frame_geometry(window_ms, hop_ms, stream.sample_rate)
    x = stream.samples
    n = frame_count(len(x), hop)
    if n == 0:
        raise EmptyAudio("stream shorter than one hop")
    return _iter_frames(x, n, win, hop, window_ms, hop_ms, stream.sample_rate)


def _iter_frames(x, n, win, hop, window_ms, hop_ms, sr):
    for k in range(n):
        a = k * hop
        seg = x[a:a + win]
        if len(seg) < win:
            seg = np.concatenate([seg, np.zeros(win - len(seg))])
        else:
            seg = seg.copy()
        yield FrameBuffer(k, k * hop_ms / 1000.0, seg, window_ms, hop_ms, sr)


def frame_matrix(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    """All frames of ``x`` as rows of a matrix (same padding rule as :func:`frame_stream`)."""
    n = frame_count(len(x), hop)
    padded = np.concatenate([x, np.zeros(window)])
    idx = np.arange(n)[:, None] * hop + np.arange(window)[None, :]
    return padded[idx]

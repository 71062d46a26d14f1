"""Deterministic audio synthesis for test scenarios and the detector corpus.

Musical material is generated as a score (events in score seconds) from a
seed, then rendered at a tempo factor, so two renderings of the same
section differ only in timing.  Non-musical material (applause, audience
noise, the harpsichord-like interlude) is generated directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from ..audio_io import SAMPLE_RATE

BEATS_PER_BAR = 4
MUSIC_RMS = 0.1
SPEECH_RMS = 0.08
APPLAUSE_RMS = 0.07
ROOM_NOISE_RMS = 0.0015

# (F1, F2, F3) in Hz for a handful of vowels
VOWELS = np.array([
    (730, 1090, 2440), (270, 2290, 3010), (300, 870, 2240), (530, 1840, 2480),
    (570, 840, 2410), (440, 1020, 2240), (660, 1720, 2410), (490, 1350, 1690),
])
MAJOR = np.array([0, 2, 4, 5, 7, 9, 11])
PROGRESSION_DEGREES = np.array([0, 3, 4, 5, 1, 4, 0, 3])


def midi_hz(m):
    return 440.0 * 2.0 ** ((np.asarray(m, dtype=np.float64) - 69) / 12.0)


@dataclass(frozen=True)
class Note:
    onset: float        # score seconds from section start
    duration: float
    pitch: float        # MIDI number
    velocity: float
    timbre: int         # 0 pad, 1 melody, 2 bass, 3 pluck


@dataclass(frozen=True)
class Syllable:
    onset: float
    duration: float
    f0: float           # Hz at syllable centre
    glide: float        # relative f0 change across the syllable
    vowel: int
    fricative: float    # length (score s) of a noisy onset, 0 for none
    level: float


def _rms_normalize(x, target):
    r = np.sqrt(np.mean(x * x))
    return x * (target / r) if r > 0 else x


def _place(out, start, sig):
    if start >= len(out):
        return
    if start < 0:
        sig = sig[-start:]
        start = 0
    n = min(len(sig), len(out) - start)
    out[start:start + n] += sig[:n]


# -- scores -------------------------------------------------------------------

def music_score(rng: np.random.Generator, bars: int, bar_s: float, key: int = 60) -> list[Note]:
    """Chord pads per bar, a melody on eighths/quarters and a bass on beats 1 and 3."""
    beat = bar_s / BEATS_PER_BAR
    notes = []
    scale = key + MAJOR
    mel = int(rng.integers(0, 7))
    for b in range(bars):
        t0 = b * bar_s
        deg = int(PROGRESSION_DEGREES[(b + int(rng.integers(0, 2))) % len(PROGRESSION_DEGREES)])
        chord = [scale[(deg + k) % 7] + 12 * ((deg + k) // 7) for k in (0, 2, 4)]
        for p in chord:
            notes.append(Note(t0, bar_s * 0.98, p - 12, 0.35, 0))
        notes.append(Note(t0, beat * 1.9, chord[0] - 24, 0.6, 2))
        notes.append(Note(t0 + 2 * beat, beat * 1.9, chord[2] - 24, 0.5, 2))
        t = t0
        while t < t0 + bar_s - 1e-9:
            d = beat * float(rng.choice([0.5, 1.0, 1.0, 1.5, 2.0]))
            d = min(d, t0 + bar_s - t)
            mel = int(np.clip(mel + rng.integers(-2, 3), 0, 13))
            pitch = scale[mel % 7] + 12 * (mel // 7) + 12
            notes.append(Note(t, d * 0.92, pitch, float(rng.uniform(0.5, 0.9)), 1))
            t += d
    return notes


def recitative_score(rng: np.random.Generator, bars: int, bar_s: float,
                     key: int = 57) -> tuple[list[Syllable], list[Note]]:
    """Speech-like syllable chain starting at once, plus sparse continuo chords."""
    total = bars * bar_s
    syl = []
    t = 0.05
    base = float(rng.uniform(110, 200))
    while t < total - 0.3:
        phrase = int(rng.integers(4, 12))
        for _ in range(phrase):
            d = float(rng.uniform(0.14, 0.3))
            if t + d > total - 0.05:
                break
            fric = float(rng.uniform(0.03, 0.07)) if rng.random() < 0.35 else 0.0
            syl.append(Syllable(t, d, base * float(rng.uniform(0.8, 1.35)), float(rng.uniform(-0.25, 0.25)),
                                int(rng.integers(0, len(VOWELS))), fric, float(rng.uniform(0.6, 1.0))))
            t += d + float(rng.uniform(0.01, 0.06))
        t += float(rng.uniform(0.25, 0.6))
    chords = []
    scale = key + MAJOR
    for b in range(bars):
        if rng.random() < 0.5:
            deg = int(rng.integers(0, 7))
            for k in (0, 2, 4):
                p = scale[(deg + k) % 7] + 12 * ((deg + k) // 7) - 12
                chords.append(Note(b * bar_s, min(1.2, bar_s), p, 0.25, 3))
    return syl, chords


# -- renderers ------------------------------------------------------------------

def _tone(pitch, n, velocity, timbre, sr, phase):
    t = np.arange(n) / sr
    f0 = float(midi_hz(pitch))
    out = np.zeros(n)
    if timbre == 3:
        n_part, decay = 14, 1.0
    elif timbre == 2:
        n_part, decay = 5, 0.0
    elif timbre == 1:
        n_part, decay = 8, 0.0
    else:
        n_part, decay = 6, 0.0
    for k in range(1, n_part + 1):
        fk = f0 * k
        if fk >= sr / 2 - 1000:
            break
        amp = 1.0 / k ** (1.2 if timbre != 3 else 0.8)
        if timbre == 1 and k % 2 == 0:
            amp *= 0.5
        part = amp * np.sin(2 * np.pi * fk * t + phase * k)
        if decay:
            part *= np.exp(-t * (2.5 + 1.2 * k))
        out += part
    if timbre == 1:
        out *= 1.0 + 0.1 * np.sin(2 * np.pi * 5.0 * t)    # light tremolo
    attack = {0: 0.06, 1: 0.015, 2: 0.01, 3: 0.002}[timbre]
    env = np.minimum(1.0, t / attack)
    rel = min(int(0.03 * sr), n)
    if rel:
        env[-rel:] *= np.linspace(1.0, 0.0, rel)
    if timbre in (1, 2):
        env *= np.exp(-t * (0.8 if timbre == 1 else 1.5))
    return velocity * out * env


def render_notes(notes, duration_s: float, tempo: float = 1.0, sr: int = SAMPLE_RATE,
                 seed: int = 0) -> np.ndarray:
    """Render ``notes`` with score time divided by ``tempo`` (tempo > 1 plays faster)."""
    out = np.zeros(int(round(duration_s / tempo * sr)))
    rng = np.random.default_rng(seed)
    for note in notes:
        start = int(round(note.onset / tempo * sr))
        n = max(1, int(round(note.duration / tempo * sr)))
        _place(out, start, _tone(note.pitch, n, note.velocity, note.timbre, sr, float(rng.uniform(0, 2 * np.pi))))
    return out


def _resonator(x, freq, bw, sr):
    r = np.exp(-np.pi * bw / sr)
    theta = 2 * np.pi * freq / sr
    a = [1.0, -2 * r * np.cos(theta), r * r]
    return lfilter([1.0 - r], a, x)


def render_speech(syllables, duration_s: float, tempo: float = 1.0, sr: int = SAMPLE_RATE,
                  seed: int = 0) -> np.ndarray:
    """Glottal pulse trains with gliding, jittered f0 through three formant resonators."""
    out = np.zeros(int(round(duration_s / tempo * sr)))
    rng = np.random.default_rng(seed)
    hp = butter(4, 2500, "highpass", fs=sr, output="sos")
    for s in syllables:
        start = int(round(s.onset / tempo * sr))
        n = max(2, int(round(s.duration / tempo * sr)))
        u = np.linspace(0.0, 1.0, n)
        # rise-fall intonation with a glide and slow wobble
        f0 = s.f0 * (1.0 + s.glide * (u - 0.5)) * (1.0 + 0.06 * np.sin(np.pi * u) + 0.02 * np.sin(2 * np.pi * 6.0 * u))
        f0 *= 1.0 + 0.01 * rng.standard_normal()
        phase = np.cumsum(f0) / sr
        pulses = np.diff(np.floor(phase), prepend=0.0)
        src = lfilter([1.0], [1.0, -0.97], pulses)
        src = lfilter([1.0, -1.0], [1.0], src)
        src += 0.02 * rng.standard_normal(n)
        f1, f2, f3 = VOWELS[s.vowel] * float(rng.uniform(0.92, 1.08))
        voiced = (_resonator(src, f1, 90, sr) + 0.6 * _resonator(src, f2, 110, sr)
                  + 0.3 * _resonator(src, f3, 150, sr))
        env = np.sin(np.pi * u) ** 0.7
        voiced *= env / (np.max(np.abs(voiced)) + 1e-12)
        _place(out, start, s.level * voiced)
        if s.fricative > 0:
            m = max(2, int(round(s.fricative / tempo * sr)))
            noise = sosfilt(hp, rng.standard_normal(m + 512))[512:]
            noise *= np.hanning(m) * 0.35 / (np.max(np.abs(noise)) + 1e-12)
            _place(out, start - m // 2, s.level * noise)
    return out


def render_section(kind: str, score, duration_s: float, tempo: float = 1.0,
                   sr: int = SAMPLE_RATE, seed: int = 0) -> np.ndarray:
    if kind == "music":
        x = render_notes(score, duration_s, tempo, sr, seed)
        return _rms_normalize(x, MUSIC_RMS)
    if kind == "recitative":
        syl, chords = score
        speech = _rms_normalize(render_speech(syl, duration_s, tempo, sr, seed), SPEECH_RMS)
        cont = render_notes(chords, duration_s, tempo, sr, seed + 1)
        if np.any(cont):
            cont = _rms_normalize(cont, MUSIC_RMS * 0.25)
        return speech + cont
    raise ValueError(f"unknown section kind {kind!r}")


def applause(rng: np.random.Generator, duration_s: float, density: float = 40.0,
             sr: int = SAMPLE_RATE) -> np.ndarray:
    """Crowd clapping: many short band-passed noise bursts with a swell and fade."""
    n = int(round(duration_s * sr))
    out = np.zeros(n)
    count = rng.poisson(density * duration_s)
    onsets = rng.integers(0, max(n, 1), size=count)
    for start in onsets:
        m = int(sr * rng.uniform(0.006, 0.02))
        burst = rng.standard_normal(m) * np.exp(-np.arange(m) / (m / 4.0)) * rng.uniform(0.3, 1.0)
        _place(out, int(start), burst)
    lo = float(rng.uniform(500, 900))
    sos = butter(2, [lo, 9000.0], "bandpass", fs=sr, output="sos")
    out = sosfilt(sos, out)
    t = np.arange(n) / sr
    env = np.minimum(1.0, t / 0.6) * np.minimum(1.0, (duration_s - t) / 1.5).clip(0.0)
    out *= env
    out = 0.8 * np.tanh(_rms_normalize(out, APPLAUSE_RMS) / 0.8)
    return out + room_noise(rng, duration_s, sr)


def room_noise(rng: np.random.Generator, duration_s: float, sr: int = SAMPLE_RATE,
               rms: float = ROOM_NOISE_RMS) -> np.ndarray:
    n = int(round(duration_s * sr))
    x = lfilter([1.0], [1.0, -0.95], rng.standard_normal(n))
    return _rms_normalize(x, rms) if n else x


def audience_silence(rng: np.random.Generator, duration_s: float, cough_density: float = 0.3,
                     sr: int = SAMPLE_RATE) -> np.ndarray:
    """Low room noise with sparse 50 ms exponentially decaying band-limited coughs."""
    out = room_noise(rng, duration_s, sr)
    n = len(out)
    sos = butter(2, [300.0, 3000.0], "bandpass", fs=sr, output="sos")
    for _ in range(rng.poisson(cough_density * duration_s)):
        m = int(0.05 * sr)
        c = sosfilt(sos, rng.standard_normal(m)) * np.exp(-np.arange(m) / (0.012 * sr))
        c *= rng.uniform(0.02, 0.08) / (np.max(np.abs(c)) + 1e-12)
        _place(out, int(rng.integers(0, max(n - m, 1))), c)
    return out


def interlude(rng: np.random.Generator, duration_s: float, sr: int = SAMPLE_RATE,
              key: int | None = None) -> np.ndarray:
    """Improvised harpsichord-like arpeggios (plucked, fast-decaying partials)."""
    key = int(rng.integers(55, 67)) if key is None else key
    scale = key + MAJOR
    notes = []
    t = 0.0
    while t < duration_s:
        deg = int(rng.integers(0, 7))
        chord = [scale[(deg + k) % 7] + 12 * ((deg + k) // 7) for k in (0, 2, 4, 7)]
        step = float(rng.uniform(0.1, 0.2))
        for k, p in enumerate(chord + chord[::-1][1:]):
            if t >= duration_s:
                break
            notes.append(Note(t, min(0.6, duration_s - t), p + int(rng.choice([-12, 0, 0, 12])),
                              float(rng.uniform(0.5, 1.0)), 3))
            t += step
    x = render_notes(notes, duration_s, 1.0, sr, int(rng.integers(0, 2 ** 31)))
    return _rms_normalize(x, MUSIC_RMS) + room_noise(rng, duration_s, sr)

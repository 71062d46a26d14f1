"""Decode -> features -> control, with a bounded in-order handoff between stages.

Feature extraction runs on a producer thread and hands merged frame events
to the control loop through a bounded queue.  In realtime mode the consumer
waits until each frame would have been fully recorded on the wall clock;
pacing only changes timing, never content.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass

import numpy as np

from .audio_io import ALIGN_HOP_MS, ALIGN_WINDOW_MS, AudioStream
from .control import IntegratedTracker, Trace, detector_slot
from .features.extractors import KINDS, iter_alignment_features, iter_detector_features

log = logging.getLogger(__name__)

QUEUE_SIZE = 64
_DONE = object()


def frame_events(stream: AudioStream):
    """Yield ``(alignment feature, detector frame features or None)`` in time order."""
    detector = iter_detector_features(stream)
    for k, feat in enumerate(iter_alignment_features(stream)):
        det = None
        if detector_slot(k) is not None:
            det = next(detector, None)
        yield feat, det


class Producer:
    """Run an iterator on its own thread, delivering items through a bounded queue."""

    def __init__(self, iterable, maxsize: int = QUEUE_SIZE):
        self._queue: queue.Queue = queue.Queue(maxsize=maxsize)
        self._error: BaseException | None = None
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, args=(iterable,), daemon=True)
        self._thread.start()

    def _run(self, iterable):
        try:
            for item in iterable:
                while not self._stop.is_set():
                    try:
                        self._queue.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if self._stop.is_set():
                    return
        except BaseException as exc:     # handed to the consumer
            self._error = exc
        finally:
            self._queue.put(_DONE)

    def __iter__(self):
        try:
            while True:
                item = self._queue.get()
                if item is _DONE:
                    if self._error is not None:
                        raise self._error
                    return
                yield item
        finally:
            self._stop.set()

    def close(self):
        self._stop.set()
        self._thread.join(timeout=1.0)


@dataclass
class StreamResult:
    trace: Trace
    latencies_ms: np.ndarray

    def latency_percentiles(self, q=(50, 90, 99)) -> dict:
        if len(self.latencies_ms) == 0:
            return {p: 0.0 for p in q}
        return {p: float(np.percentile(self.latencies_ms, p)) for p in q}


def run_stream(tracker: IntegratedTracker, stream: AudioStream, realtime: bool = False,
               queue_size: int = QUEUE_SIZE) -> StreamResult:
    """Feed a whole target stream through the integrated tracker."""
    producer = Producer(frame_events(stream), queue_size)
    tt, rt, modes, probs, lat = [], [], [], [], []
    start = time.perf_counter()
    try:
        for feat, det in producer:
            if realtime:
                due = start + feat.time + ALIGN_WINDOW_MS / 1000.0
                delay = due - time.perf_counter()
                if delay > 0:
                    time.sleep(delay)
            t0 = time.perf_counter()
            pos = tracker.integrated_step(feat, detector_features=det)
            lat.append((time.perf_counter() - t0) * 1000.0)
            tt.append(pos.target_time)
            rt.append(pos.ref_time)
            modes.append(pos.mode)
            probs.append([pos.detector_probs[k] for k in KINDS])
    finally:
        producer.close()
    trace = Trace(np.array(tt), np.array(rt), modes, np.array(probs).reshape(-1, len(KINDS)))
    trace.engagements = tracker.engagements
    lat = np.array(lat)
    if realtime and len(lat):
        log.info("step latency ms: median %.2f, p99 %.2f (hop %.0f ms)",
                 np.median(lat), np.percentile(lat, 99), ALIGN_HOP_MS)
    return StreamResult(trace, lat)

"""Background estimation and foreground masks for both sensor streams."""

from __future__ import annotations

from collections import deque

import numpy as np

DEFAULT_WINDOW = 16
MIN_FRAMES = 8
VISUAL_TAU = 12.0   # gray levels
THERMAL_TAU = 1.5   # degrees C


def estimate_background(frames, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Per-pixel median over the last `window` frames (float32).

    Needs at least MIN_FRAMES frames; moving objects thinner in time than
    half the window fall out of the median.
    """
    frames = list(frames)
    if len(frames) < MIN_FRAMES:
        raise ValueError(f"background needs >= {MIN_FRAMES} frames, got {len(frames)}")
    tail = frames[-window:]
    stack = np.stack([np.asarray(f, dtype=np.float32) for f in tail], axis=0)
    return np.median(stack, axis=0).astype(np.float32)


def _dilate(mask: np.ndarray) -> np.ndarray:
    """One 3x3 dilation pass (8-connected) via shifted ORs."""
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    col = out.copy()
    out[:, 1:] |= col[:, :-1]
    out[:, :-1] |= col[:, 1:]
    return out


def foreground_mask(frame: np.ndarray, background: np.ndarray, tau: float) -> np.ndarray:
    """|frame - background| > tau, then one dilation pass."""
    if frame.shape != background.shape:
        raise ValueError(f"frame {frame.shape} vs background {background.shape} mismatch")
    diff = np.abs(frame.astype(np.float32) - background.astype(np.float32))
    return _dilate(diff > tau)


class BackgroundModel:
    """Streaming median background with sparse refresh and selective update.

    Keeps a window of recent frames and recomputes the exact per-pixel
    median every `refresh` updates (a full-resolution median is far too
    slow to run per frame at stream rate; the static scene changes slowly).
    Regions known to contain moving people can be excluded from an update:
    they are patched with the current background so the median never
    learns foreground content.
    """

    def __init__(self, window: int = DEFAULT_WINDOW, refresh: int = 16):
        self.window = window
        self.refresh = refresh
        self._buffer: deque[np.ndarray] = deque(maxlen=window)
        self._since_refresh = 0
        self._background: np.ndarray | None = None

    @property
    def ready(self) -> bool:
        return self._background is not None

    @property
    def background(self) -> np.ndarray | None:
        return self._background

    def _patched(self, frame: np.ndarray, exclude) -> np.ndarray:
        if self._background is None or not exclude:
            return frame
        frame = np.array(frame, copy=True)
        h, w = frame.shape
        for box in exclude:
            clipped = box.clipped(w, h)
            if clipped is None:
                continue
            x1, y1 = int(clipped.x), int(clipped.y)
            x2, y2 = int(np.ceil(clipped.x2)), int(np.ceil(clipped.y2))
            patch = self._background[y1:y2, x1:x2]
            if frame.dtype == np.uint8:
                patch = np.clip(np.rint(patch), 0, 255).astype(np.uint8)
            frame[y1:y2, x1:x2] = patch
        return frame

    def update(self, frame: np.ndarray, exclude=None) -> None:
        self._buffer.append(self._patched(np.asarray(frame), exclude))
        if self._background is None:
            if len(self._buffer) >= MIN_FRAMES:
                self._background = estimate_background(self._buffer, self.window)
                self._since_refresh = 0
            return
        self._since_refresh += 1
        if self._since_refresh >= self.refresh:
            self._background = estimate_background(self._buffer, self.window)
            self._since_refresh = 0

    def mask(self, frame: np.ndarray, tau: float) -> np.ndarray | None:
        if self._background is None:
            return None
        return foreground_mask(frame, self._background, tau)

"""Feedback auto-calibration against a black-body reference.

The black-body region of the thermal frame is monitored continuously;
when its reading drifts beyond a deadband from the known reference
temperature, a proportional controller adjusts a single additive
correction offset. A settling period separates consecutive control
signals so each adjustment takes effect before the next.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import BBox


@dataclass(frozen=True)
class CalibState:
    reference_temp: float = 35.0
    roi: BBox = BBox(12.0, 10.0, 26.0, 18.0)
    correction_offset: float = 0.0
    k_p: float = 0.5
    settling_period: float = 5.0
    error_threshold: float = 0.3
    last_signal_time: float = -math.inf

    def __post_init__(self):
        if self.settling_period <= 0:
            raise ValueError("settling_period must be positive")
        if not (0.0 < self.k_p < 2.0):
            raise ValueError("k_p must lie in (0, 2) for a stable loop")


@dataclass
class CalibTrace:
    """Per-step record of the loop: (time, measured, error, offset afterward)."""

    rows: list[tuple[float, float, float, float]] = field(default_factory=list)

    def append(self, t: float, measured: float, error: float, offset: float) -> None:
        if self.rows and t <= self.rows[-1][0]:
            raise ValueError("trace times must strictly increase")
        self.rows.append((t, measured, error, offset))

    def signal_times(self) -> list[float]:
        """Times at which the offset actually changed."""
        out = []
        prev = None
        for t, _, _, off in self.rows:
            if prev is not None and off != prev:
                out.append(t)
            prev = off
        return out


def monitor_black_body(thermal_frame: np.ndarray, state: CalibState) -> float:
    """Mean temperature over the black-body region, correction applied."""
    h, w = thermal_frame.shape
    roi = state.roi
    if roi.x < 0 or roi.y < 0 or roi.x2 > w or roi.y2 > h:
        raise ValueError(f"black-body ROI {roi} outside {w}x{h} thermal frame")
    x1, y1 = int(roi.x), int(roi.y)
    x2, y2 = int(math.ceil(roi.x2)), int(math.ceil(roi.y2))
    region = thermal_frame[y1:y2, x1:x2]
    return float(region.mean()) + state.correction_offset


def controller_step(state: CalibState, measured: float, now: float) -> CalibState:
    """One proportional update; inert inside the deadband or settling period."""
    error = measured - state.reference_temp
    if abs(error) <= state.error_threshold:
        return state
    if now - state.last_signal_time < state.settling_period:
        return state
    return replace(state,
                   correction_offset=state.correction_offset - state.k_p * error,
                   last_signal_time=now)


def run_calibration_loop(stream, state: CalibState) -> tuple[CalibState, CalibTrace]:
    """Drive the controller over (time, thermal_frame) pairs; returns the trace."""
    trace = CalibTrace()
    for t, frame in stream:
        measured = monitor_black_body(frame, state)
        error = measured - state.reference_temp
        state = controller_step(state, measured, t)
        trace.append(t, measured, error, state.correction_offset)
    return state, trace

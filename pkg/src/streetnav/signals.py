"""Pedestrian signal state recognition, cycle timing, and crossing gates.

State is read from small RGB crops of the signal screens by counting pixels
passing a white test (walk) versus a red test (wait). A per-signal
:class:`CycleTimer` learns walk/wait durations from observed transitions
(running average over the last 5 cycles) and answers remaining-time
queries; :func:`crossing_advisory` turns a timer snapshot into the advisory
the app speaks at the curb and mid-crossing.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kernels import count_signal_pixels


class SignalState(enum.Enum):
    WALK = "walk"
    WAIT = "wait"
    UNKNOWN = "unknown"


class AdvisoryKind(enum.Enum):
    WAIT_WITH_COUNTDOWN = "wait_with_countdown"
    BEGIN_CROSS = "begin_cross"
    CONTINUE_WITH_REMAINING = "continue_with_remaining"
    WAIT_NEXT_CYCLE = "wait_next_cycle"
    NOT_READY = "not_ready"


@dataclass(frozen=True)
class SignalThresholds:
    white_min: int = 200   # all channels at least this -> white pixel
    red_min: int = 150     # R at least this and G,B small -> red pixel
    gb_max: int = 90
    min_pixels: int = 8    # fewer than this of the winning color -> unknown


@dataclass(frozen=True)
class CrossingConfig:
    min_remaining_to_start_s: float = 15.0
    repeat_interval_s: float = 10.0
    thresholds: SignalThresholds = field(default_factory=SignalThresholds)

    def __post_init__(self):
        if self.min_remaining_to_start_s <= 0 or self.repeat_interval_s <= 0:
            raise ValueError("crossing durations must be > 0")


def classify_state(crop: np.ndarray, thresholds: SignalThresholds = SignalThresholds()) -> SignalState:
    """Classify a signal crop by comparing white and red pixel counts."""
    if crop.size == 0:
        return SignalState.UNKNOWN
    white, red = count_signal_pixels(
        crop, thresholds.white_min, thresholds.red_min, thresholds.gb_max
    )
    if white > red and white >= thresholds.min_pixels:
        return SignalState.WALK
    if red > white and red >= thresholds.min_pixels:
        return SignalState.WAIT
    return SignalState.UNKNOWN


@dataclass(frozen=True)
class Advisory:
    kind: AdvisoryKind
    signal_id: str
    remaining_s: Optional[float] = None


class CycleTimer:
    """Learns a signal's walk/wait durations by timing observed transitions.

    The phase in progress when observation starts has an unknown start time,
    so its duration is never recorded. Durations are averaged over the last
    ``window`` completed phases of each kind, which lets the timer adapt
    when an intersection is retimed. Remaining-time queries are refused
    until at least one full (walk, wait) cycle has been recorded.

    Unknown states (occluded crop, bad exposure) hold the previous state for
    up to ``hold_timeout_s``; a longer outage marks the running phase
    unreliable so a garbage duration is never learned.
    """

    def __init__(self, signal_id: str, window: int = 5, hold_timeout_s: float = 2.0):
        self.signal_id = signal_id
        self.window = window
        self.hold_timeout_s = hold_timeout_s
        self.state: SignalState = SignalState.UNKNOWN
        self.last_transition_time: Optional[float] = None
        self._durations = {
            SignalState.WALK: deque(maxlen=window),
            SignalState.WAIT: deque(maxlen=window),
        }
        self._phase_reliable = False
        self._unknown_since: Optional[float] = None
        self._last_time: Optional[float] = None

    # -- observation -------------------------------------------------------

    def observe(self, state: SignalState, t: float) -> Optional[tuple[SignalState, float]]:
        """Feed one classified observation at time t (non-decreasing).

        Returns (phase_that_ended, duration) when a transition completes a
        reliably-timed phase, else None.
        """
        if self._last_time is not None and t < self._last_time - 1e-9:
            raise ValueError(f"time went backwards: {t} < {self._last_time}")
        self._last_time = t

        if state is SignalState.UNKNOWN:
            if self._unknown_since is None:
                self._unknown_since = t
            elif t - self._unknown_since > self.hold_timeout_s:
                self._phase_reliable = False
            return None
        self._unknown_since = None

        if self.state is SignalState.UNKNOWN:
            # first sighting: phase start time is unknowable
            self.state = state
            self.last_transition_time = t
            self._phase_reliable = False
            return None

        if state is self.state:
            return None

        # transition
        ended = self.state
        duration = t - (self.last_transition_time or t)
        event = None
        if self._phase_reliable and duration > 0:
            self._durations[ended].append(duration)
            event = (ended, duration)
        self.state = state
        self.last_transition_time = t
        self._phase_reliable = True
        return event

    # -- queries -----------------------------------------------------------

    @property
    def observed_full_cycles(self) -> int:
        return min(len(self._durations[SignalState.WALK]), len(self._durations[SignalState.WAIT]))

    @property
    def ready(self) -> bool:
        return self.observed_full_cycles >= 1 and self.state is not SignalState.UNKNOWN

    def learned_duration(self, state: SignalState) -> Optional[float]:
        samples = self._durations.get(state)
        if not samples:
            return None
        return sum(samples) / len(samples)

    def remaining(self, t: float) -> Optional[float]:
        """Seconds left in the current phase, clamped at 0; None if not ready."""
        if not self.ready or self.last_transition_time is None:
            return None
        learned = self.learned_duration(self.state)
        if learned is None:
            return None
        return max(0.0, learned - (t - self.last_transition_time))


def crossing_advisory(
    timer: CycleTimer,
    config: CrossingConfig,
    t: float,
    crossing_in_progress: bool,
) -> Advisory:
    """Crossing decision for one signal at time t.

    Safety gate: begin_cross is only ever emitted during walk with at least
    ``min_remaining_to_start_s`` seconds left. Re-emission cadence (every
    ``repeat_interval_s`` while waiting or crossing) is the caller's job;
    this function is pure over a timer snapshot.
    """
    remaining = timer.remaining(t)
    if remaining is None:
        return Advisory(AdvisoryKind.NOT_READY, timer.signal_id)
    if crossing_in_progress:
        return Advisory(AdvisoryKind.CONTINUE_WITH_REMAINING, timer.signal_id, remaining)
    if timer.state is SignalState.WAIT:
        return Advisory(AdvisoryKind.WAIT_WITH_COUNTDOWN, timer.signal_id, remaining)
    if remaining >= config.min_remaining_to_start_s:
        return Advisory(AdvisoryKind.BEGIN_CROSS, timer.signal_id, remaining)
    return Advisory(AdvisoryKind.WAIT_NEXT_CYCLE, timer.signal_id, remaining)

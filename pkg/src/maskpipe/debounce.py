"""Temporal confirmation of per-frame scores into stable labels and alerts.

A lone no-mask frame in a video stream is usually a classifier blip or a
person mid-motion, not a violation. This state machine smooths the
per-frame decisions: it counts consecutive-tendency frames for each side
and only commits to a label after a side's counter passes
:data:`CONFIRM_THRESHOLD`; a one-shot alert fires when the no-mask counter
reaches exactly :data:`ALERT_COUNT`.

Each step with scores ``(p_mask, p_nomask)`` updates the state in place:

* if ``p_mask < p_nomask`` (strictly — ties count as mask): ``fn_count``
  increments; once it exceeds 2 the label becomes ``NoMask`` and
  ``tn_count`` resets; the alert flag is true exactly when ``fn_count``
  hits 4.
* otherwise ``tn_count`` increments; once it exceeds 2 the label becomes
  ``Mask`` and ``fn_count`` resets; the alert flag is false.

Counters saturate at :data:`COUNTER_CAP` instead of growing without bound;
the cap is far above 4, so alert timing is unaffected. Note the counters
are not cleared by every opposite frame — only by the other side's
confirmation — so a label can confirm without strictly consecutive frames.

A state instance belongs to a single stream (one tracked region) and must
be stepped sequentially in frame order; separate streams use separate
instances. The constants below are load-bearing: downstream alert timing
assumes (>2, ==4) exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError

LABEL_UNCONFIRMED = "Unconfirmed"
LABEL_MASK = "Mask"
LABEL_NOMASK = "NoMask"
LABELS = (LABEL_UNCONFIRMED, LABEL_MASK, LABEL_NOMASK)

CONFIRM_THRESHOLD = 2  # a label commits when its counter exceeds this
ALERT_COUNT = 4  # the alert fires when fn_count reaches exactly this
COUNTER_CAP = 1_000_000  # saturation point; must stay above ALERT_COUNT


@dataclass
class DebounceState:
    """Mutable per-stream confirmation state: two counters and the committed label."""

    fn_count: int = 0
    tn_count: int = 0
    label: str = LABEL_UNCONFIRMED


@dataclass(frozen=True)
class DecisionEvent:
    """The outcome of one step: post-step label, one-shot alert flag, raw scores."""

    frame_index: int
    label: str
    alert: bool
    scores: tuple[float, float]


def debounce_new() -> DebounceState:
    """A fresh state: both counters zero, label Unconfirmed."""
    return DebounceState()


def debounce_step(state: DebounceState, p_mask: float, p_nomask: float,
                  frame_index: int) -> DecisionEvent:
    """Fold one frame's scores into the state and report the decision.

    Mutates ``state`` in place. Non-finite scores or a negative frame index
    raise :class:`~maskpipe.errors.ParameterError` before any mutation, so
    the caller can drop the frame and continue with the state intact.
    """
    pm = float(p_mask)
    pn = float(p_nomask)
    if not (math.isfinite(pm) and math.isfinite(pn)):
        raise ParameterError(f"scores must be finite, got ({p_mask!r}, {p_nomask!r})")
    if not isinstance(frame_index, int) or frame_index < 0:
        raise ParameterError(f"frame_index must be a non-negative int, got {frame_index!r}")

    if pm < pn:
        state.fn_count = min(state.fn_count + 1, COUNTER_CAP)
        if state.fn_count > CONFIRM_THRESHOLD:
            state.label = LABEL_NOMASK
            state.tn_count = 0
        alert = state.fn_count == ALERT_COUNT
    else:
        state.tn_count = min(state.tn_count + 1, COUNTER_CAP)
        if state.tn_count > CONFIRM_THRESHOLD:
            state.label = LABEL_MASK
            state.fn_count = 0
        alert = False
    return DecisionEvent(frame_index, state.label, alert, (pm, pn))

"""Closed-form flow of the integrable system with periodic action jumps.

Between jump times the action is frozen and the angle drifts at
``omega(I)``; at ``t = m T + tau_k`` the jump ``J_k`` is added to the action.
With ``S_k = J_0 + ... + J_k`` and ``d_i = tau_{i+1} - tau_i`` the flow is::

    I(t)     = I + S_k
    theta(t) = theta + m * dtheta_T(I) + sum_{i<k} d_i omega(I + S_i)
               + (t - m T - tau_k) omega(I + S_k)

No ODE integration is involved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .model import TWO_PI, FrequencyField, PhasePoint, TransitionSchedule, as_actions

SNAP_TOL = 1e-12

# 2pi split into three pieces with trailing zero bits so k * piece is exact
# for |k| < 2**29 (Cody-Waite reduction).
_TWO_PI_1 = float(np.float32(TWO_PI))
_REST = TWO_PI - _TWO_PI_1
_TWO_PI_2 = float(np.float32(_REST))
# 2.449...e-16 is 2pi minus its double rounding
_TWO_PI_3 = (_REST - _TWO_PI_2) + 2.4492935982947064e-16


def mul_mod_two_pi(m, x) -> np.ndarray:
    """``m * x`` reduced to (-pi, pi] without losing the low bits of ``x``.

    ``x`` is split Dekker-style into a 26-bit head and a tail so that
    ``m * head`` is exact for ``m < 2**26``; the head product is then reduced
    with a three-term representation of 2pi.
    """
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    c = 134217729.0 * x
    head = c - (c - x)
    tail = x - head
    prod = m * head
    k = np.round(prod / TWO_PI)
    r = ((prod - k * _TWO_PI_1) - k * _TWO_PI_2) - k * _TWO_PI_3
    return r + m * tail


@dataclass(frozen=True)
class FlowContext:
    """Schedule plus frequency field, with cached cumulative jump sums."""

    schedule: TransitionSchedule
    field: FrequencyField

    def __post_init__(self):
        if self.schedule.n != self.field.n:
            raise ValueError("schedule and frequency field disagree on n")
        sums = self.schedule.cumulative
        sums.setflags(write=False)
        durations = self.schedule.durations
        durations.setflags(write=False)
        object.__setattr__(self, "_sums", sums)
        object.__setattr__(self, "_durations", durations)

    @property
    def n(self) -> int:
        return self.schedule.n

    @property
    def period(self) -> float:
        return self.schedule.period

    @property
    def cumulative_sums(self) -> np.ndarray:
        return self._sums

    @property
    def durations(self) -> np.ndarray:
        return self._durations


class Segment(NamedTuple):
    period_index: int
    segment: int
    elapsed: float


def locate(t: float, schedule: TransitionSchedule) -> Segment:
    """Period index, segment index and time elapsed since the segment start.

    Intervals are left-closed.  ``t mod T`` within ``1e-12 T`` of a jump time
    (or of ``T``) is snapped onto it.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    T = schedule.period
    tau = schedule.times
    m = int(np.floor(t / T))
    r = t - m * T
    if r < 0:
        m -= 1
        r += T
    tol = SNAP_TOL * T
    if r >= T or abs(r - T) < tol:
        m += 1
        r = 0.0
    k = int(np.searchsorted(tau, r, side="right")) - 1
    k = max(k, 0)
    if k + 1 < tau.size and abs(r - tau[k + 1]) < tol:
        k += 1
    if abs(r - tau[k]) < tol:
        r = tau[k]
    return Segment(m, k, float(r - tau[k]))


def segment_index(t: float, schedule: TransitionSchedule) -> tuple[int, int]:
    """``(m, k)`` with ``m = floor(t / T)`` and ``tau_k <= t mod T < tau_{k+1}``."""
    seg = locate(t, schedule)
    return seg.period_index, seg.segment


def action_at(I0, t: float, ctx: FlowContext) -> np.ndarray:
    I0 = as_actions(I0, ctx.n)
    _, k, _ = locate(t, ctx.schedule)
    return I0 + ctx.cumulative_sums[k]


def _segment_frequencies(I, ctx: FlowContext) -> np.ndarray:
    """``omega(I + S_i)`` for every segment, shape (p, ..., n)."""
    I = as_actions(I, ctx.n)
    return np.stack([ctx.field.evaluate(I + s) for s in ctx.cumulative_sums])


def period_angle_shift(I, ctx: FlowContext) -> np.ndarray:
    """Angle advance over one full period, ``sum_i d_i omega(I + S_i)``."""
    freqs = _segment_frequencies(I, ctx)
    return np.tensordot(ctx.durations, freqs, axes=(0, 0))


def average_frequency(I, ctx: FlowContext) -> np.ndarray:
    return period_angle_shift(I, ctx) / ctx.period


def period_angle_shift_gradient(I, ctx: FlowContext) -> np.ndarray:
    """Jacobian of :func:`period_angle_shift`, shape (..., n, n)."""
    I = as_actions(I, ctx.n)
    grads = np.stack([ctx.field.gradient(I + s) for s in ctx.cumulative_sums])
    return np.tensordot(ctx.durations, grads, axes=(0, 0))


def drift(I, seg: Segment, ctx: FlowContext, freqs: Optional[np.ndarray] = None) -> np.ndarray:
    """Angle increment ``theta(t) - theta`` for initial actions ``I``.

    The full-period part ``m * dtheta_T`` is reduced modulo 2pi with
    :func:`mul_mod_two_pi`; the result is otherwise unreduced.
    """
    m, k, elapsed = seg
    if freqs is None:
        freqs = _segment_frequencies(I, ctx)
    d = ctx.durations
    out = elapsed * freqs[k]
    if k:
        out = out + np.tensordot(d[:k], freqs[:k], axes=(0, 0))
    if m:
        shift = np.tensordot(d, freqs, axes=(0, 0))
        out = out + mul_mod_two_pi(m, shift)
    return out


def drift_jacobian(I, seg: Segment, ctx: FlowContext) -> np.ndarray:
    """``d drift / d I``, shape (..., n, n)."""
    m, k, elapsed = seg
    I = as_actions(I, ctx.n)
    grads = np.stack([ctx.field.gradient(I + s) for s in ctx.cumulative_sums])
    d = ctx.durations
    out = elapsed * grads[k] + m * np.tensordot(d, grads, axes=(0, 0))
    if k:
        out = out + np.tensordot(d[:k], grads[:k], axes=(0, 0))
    return out


def advance(point: PhasePoint, t: float, ctx: FlowContext) -> PhasePoint:
    """Image of ``point`` under the time-``t`` flow map."""
    seg = locate(t, ctx.schedule)
    I = point.action
    theta = point.angle + drift(I, seg, ctx)
    return PhasePoint(I + ctx.cumulative_sums[seg.segment], theta)


def invert(point: PhasePoint, t: float, ctx: FlowContext) -> PhasePoint:
    """Preimage of ``point`` under the time-``t`` flow map.

    Uses suffix sums of the jumps, ``I - (J_{i+1} + ... + J_k)``, rather than
    re-adding the cumulative sums, so it is an independent evaluation path.
    """
    m, k, elapsed = locate(t, ctx.schedule)
    jumps = ctx.schedule.jumps
    d = ctx.durations
    I = point.action
    I0 = I - jumps[: k + 1].sum(axis=0)
    theta = point.angle - elapsed * ctx.field.evaluate(I)
    for i in range(k):
        suffix = jumps[i + 1: k + 1].sum(axis=0)
        theta = theta - d[i] * ctx.field.evaluate(I - suffix)
    if m:
        theta = theta - mul_mod_two_pi(m, period_angle_shift(I0, ctx))
    return PhasePoint(I0, theta)


def twist(point: PhasePoint, t: float, field: FrequencyField) -> PhasePoint:
    """Jump-free reference flow ``(I, theta + t omega(I))``."""
    return PhasePoint(point.action, point.angle + t * field.evaluate(point.action))


def distance_to_jump(t: float, schedule: TransitionSchedule) -> float:
    """Distance from ``t mod T`` to the nearest jump time (``T`` counts as ``tau_0``)."""
    r = t - schedule.period * np.floor(t / schedule.period)
    marks = np.append(schedule.times, schedule.period)
    return float(np.min(np.abs(marks - r)))


def wrapped_difference(a, b) -> np.ndarray:
    return np.mod(np.asarray(a) - np.asarray(b) + np.pi, TWO_PI) - np.pi


def jacobian_determinant_probe(t: float, ctx: FlowContext, point: PhasePoint,
                               h: Optional[float] = None) -> float:
    """Determinant of the central-difference Jacobian of :func:`advance` at ``point``.

    Raises ``ValueError`` when ``t mod T`` lies within ``10 h`` of a jump time,
    where the map is not differentiable in ``t``-neighbourhoods used here.
    """
    n = ctx.n
    x = np.concatenate([point.action, point.angle])
    if h is None:
        h = 1e-6 * max(1.0, float(np.linalg.norm(x)))
    if distance_to_jump(t, ctx.schedule) < 10 * h:
        raise ValueError(f"t={t!r} is within 10h of a jump time")
    jac = np.empty((2 * n, 2 * n))
    for j in range(2 * n):
        e = np.zeros(2 * n)
        e[j] = h
        plus = advance(PhasePoint(x[:n] + e[:n], x[n:] + e[n:]), t, ctx)
        minus = advance(PhasePoint(x[:n] - e[:n], x[n:] - e[n:]), t, ctx)
        jac[:n, j] = (plus.action - minus.action) / (2 * h)
        jac[n:, j] = wrapped_difference(plus.angle, minus.angle) / (2 * h)
    return float(np.linalg.det(jac))

"""Sampling oracle for ensemble averages and their long-time averages.

Time averages integrate ``t -> <G>_t`` with Gauss-Legendre per smooth flow
segment ``[m T + tau_k, m T + tau_{k+1})``; the integrand only jumps at the
segment ends, so no node ever sits on a discontinuity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .flow import FlowContext, advance, mul_mod_two_pi
from .model import InitialDensity, Observable, PhasePoint
from .spectral import (ActionQuadrature, ModeSet, SegmentedExpectation, default_modes,
                       resolved_quadrature)

DEFAULT_TIME_ORDER = 8


@dataclass(frozen=True)
class SampleCloud:
    """Initial conditions drawn from ``f0``; identical ``(seed, count)`` gives identical points."""

    actions: np.ndarray
    angles: np.ndarray
    seed: int
    count: int

    @classmethod
    def draw(cls, f0: InitialDensity, count: int, seed: int) -> "SampleCloud":
        I, theta = f0.sample(count, seed)
        I.setflags(write=False)
        theta.setflags(write=False)
        return cls(I, theta, int(seed), int(count))

    @property
    def points(self) -> PhasePoint:
        return PhasePoint(self.actions, self.angles)


def mean_and_stderr(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def expectation_mc(G: Observable, cloud: SampleCloud, t: float, ctx: FlowContext) -> tuple[float, float]:
    """Sample mean and standard error of ``G`` along the flowed cloud."""
    moved = advance(cloud.points, t, ctx)
    return mean_and_stderr(G.evaluate(moved.action, moved.angle))


# ---------------------------------------------------------------------------
# time averaging
# ---------------------------------------------------------------------------

def gauss_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


class TimeAverage(NamedTuple):
    l: int
    value: float
    stderr: float
    backend: str


def _checkpoints(l_values: Iterable[int]) -> list[int]:
    ls = sorted({int(l) for l in l_values})
    if not ls or ls[0] < 1:
        raise ValueError("time averages need l >= 1")
    return ls


def _fourier_sweep(G, f0, ctx, ls, order, mode_set, quad):
    modes = mode_set or default_modes(G, f0)
    if quad is None:
        quad = resolved_quadrature(f0.support_box, ctx, ls[-1] * ctx.period, modes)
    series = SegmentedExpectation(G, f0, ctx, modes, quad)
    x, w = gauss_nodes(order)
    d = ctx.durations
    total = 0.0
    out = []
    want = set(ls)
    for m in range(ls[-1]):
        for k, dk in enumerate(d):
            vals = series.segment_values(m, k, dk * x)
            total += dk * float(np.dot(w, vals))
        if m + 1 in want:
            out.append(TimeAverage(m + 1, total / ((m + 1) * ctx.period), 0.0, "fourier"))
    return out


def _mc_sweep(G, cloud, ctx, ls, order):
    x, w = gauss_nodes(order)
    d = ctx.durations
    I0, theta0 = cloud.actions, cloud.angles
    sums = ctx.cumulative_sums
    freqs = [ctx.field.evaluate(I0 + s) for s in sums]
    partial = [np.zeros_like(theta0)]
    for k in range(1, len(d)):
        partial.append(partial[-1] + d[k - 1] * freqs[k - 1])
    shift = sum(dk * fk for dk, fk in zip(d, freqs))
    acc = np.zeros(I0.shape[0])
    out = []
    want = set(ls)
    for m in range(ls[-1]):
        rot = theta0 + (mul_mod_two_pi(m, shift) if m else 0.0)
        for k, dk in enumerate(d):
            I = I0 + sums[k]
            base = rot + partial[k]
            for xj, wj in zip(x, w):
                acc += dk * wj * G.evaluate(I, base + dk * xj * freqs[k])
        if m + 1 in want:
            mean, err = mean_and_stderr(acc / ((m + 1) * ctx.period))
            out.append(TimeAverage(m + 1, mean, err, "mc"))
    return out


def time_average_curve(G: Observable, l_values: Sequence[int], ctx: FlowContext, backend: str = "fourier",
                       f0: Optional[InitialDensity] = None, cloud: Optional[SampleCloud] = None,
                       order: int = DEFAULT_TIME_ORDER, mode_set: Optional[ModeSet] = None,
                       quad: Optional[ActionQuadrature] = None) -> list[TimeAverage]:
    """``(1/lT) int_0^{lT} <G>_t dt`` for every ``l`` in ``l_values`` from one sweep."""
    ls = _checkpoints(l_values)
    if backend == "fourier":
        if f0 is None:
            raise ValueError("fourier backend needs the initial density")
        return _fourier_sweep(G, f0, ctx, ls, order, mode_set, quad)
    if backend == "mc":
        if cloud is None:
            raise ValueError("mc backend needs a sample cloud")
        return _mc_sweep(G, cloud, ctx, ls, order)
    raise ValueError(f"unknown backend '{backend}'")


def time_average(G: Observable, l: int, ctx: FlowContext, backend: str = "fourier", **kwargs) -> TimeAverage:
    return time_average_curve(G, [l], ctx, backend, **kwargs)[0]


def doubling_ladder(l_max: int, start: int = 10) -> list[int]:
    """``start, 2 start, 4 start, ...`` below ``l_max``, then ``l_max`` itself."""
    ls = []
    l = start
    while l < l_max:
        ls.append(l)
        l *= 2
    ls.append(l_max)
    return ls


@dataclass
class ConvergenceCurve:
    backend: str
    limit: float
    rows: list[tuple[int, float, float, float]]
    exponent: Optional[float]

    @property
    def final_error(self) -> float:
        return self.rows[-1][2]

    @property
    def final_stderr(self) -> float:
        return self.rows[-1][3]

    def error_at(self, l: int) -> float:
        for row in self.rows:
            if row[0] == l:
                return row[2]
        raise KeyError(l)

    def to_rows(self) -> list[dict]:
        return [{"l": l, "time_average": v, "abs_error": e, "stderr": s} for l, v, e, s in self.rows]


def fit_decay_exponent(ls, errors) -> Optional[float]:
    """Least-squares ``p`` in ``error ~ C l^-p`` over the strictly positive errors."""
    ls = np.asarray(ls, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > 0
    if keep.sum() < 2:
        return None
    slope = np.polyfit(np.log(ls[keep]), np.log(errors[keep]), 1)[0]
    return float(-slope)


def convergence_curve(G: Observable, l_values: Sequence[int], ctx: FlowContext, limit: float,
                      backend: str = "fourier", **kwargs) -> ConvergenceCurve:
    averages = time_average_curve(G, l_values, ctx, backend, **kwargs)
    rows = [(a.l, a.value, abs(a.value - limit), a.stderr) for a in averages]
    exponent = fit_decay_exponent([r[0] for r in rows], [r[2] for r in rows])
    return ConvergenceCurve(backend, float(limit), rows, exponent)

"""Limit values and verification drivers for the time-averaged ensemble theorems."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .flow import FlowContext, mul_mod_two_pi
from .model import (ActionDomain, InitialDensity, Observable, ValidationReport,
                    validate_hypotheses, validate_schedule)
from .montecarlo import (DEFAULT_TIME_ORDER, ConvergenceCurve, SampleCloud, convergence_curve,
                         doubling_ladder, gauss_nodes)
from .spectral import (ActionQuadrature, ModeSet, angle_average, angle_grid, panels_for_phase,
                       flow_phase_slope)

PASS_TOL = 5e-3
MIN_L = 200
DIVERGENCE_SIGMAS = 5.0
DIVERGENCE_FLOOR = 1e-9


def diverges(mc: float, fourier: float, stderr: float) -> bool:
    """Backends disagree beyond ``5 sigma`` (with a rounding floor for noiseless observables)."""
    return abs(mc - fourier) > max(DIVERGENCE_SIGMAS * stderr, DIVERGENCE_FLOOR * max(1.0, abs(fourier)))


def action_marginal(f0: InitialDensity, I, angle_points: int = 64) -> np.ndarray:
    """``int f0(I, theta) dtheta``; closed form when the density provides it."""
    try:
        return f0.action_marginal(I)
    except NotImplementedError:
        theta, w = angle_grid(f0.n, angle_points)
        return f0.density(np.asarray(I)[..., None, :], theta) @ w


def theoretical_limit(G: Observable, f0: InitialDensity, ctx: FlowContext,
                      quad: Optional[ActionQuadrature] = None) -> float:
    """Duration-weighted average over segments of ``int Gbar(I + S_i) f0 dI dtheta``."""
    if quad is None:
        quad = ActionQuadrature.gauss_legendre(f0.support_box)
    rho = action_marginal(f0, quad.nodes)
    total = 0.0
    for dk, s in zip(ctx.durations, ctx.cumulative_sums):
        total += dk * float(np.sum(quad.weights * angle_average(G, quad.nodes + s) * rho))
    return total / ctx.period


@dataclass
class LimitReport:
    """Outcome of one convergence check against a closed-form limit."""

    label: str
    theoretical_limit: float
    curves: dict[str, ConvergenceCurve]
    hypothesis_report: ValidationReport
    tolerance: dict[str, float]
    converged: bool
    backend_gap: Optional[float] = None
    oracle_divergence: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def measured(self) -> dict[str, list[tuple[int, float]]]:
        return {b: [(r[0], r[1]) for r in c.rows] for b, c in self.curves.items()}

    @property
    def final_error(self) -> float:
        return max(c.final_error for c in self.curves.values())

    @property
    def passed(self) -> bool:
        return self.converged and self.hypothesis_report.ok

    @property
    def status(self) -> str:
        if self.hypothesis_report.ok:
            return "pass" if self.converged else "fail"
        return "hypotheses violated; " + ("converged anyway" if self.converged else "no convergence")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "status": self.status,
            "passed": self.passed,
            "converged": self.converged,
            "theoretical_limit": self.theoretical_limit,
            "final_error": self.final_error,
            "tolerance": self.tolerance,
            "backend_gap": self.backend_gap,
            "oracle_divergence": self.oracle_divergence,
            "hypotheses": self.hypothesis_report.to_dict(),
            "curves": {b: {"exponent": c.exponent, "rows": c.to_rows()} for b, c in self.curves.items()},
            **self.extra,
        }


def judge(curves: Mapping[str, ConvergenceCurve], min_index: float, floor: float = PASS_TOL,
          required: float = MIN_L) -> tuple[bool, dict[str, float], Optional[float], bool]:
    """Apply ``error <= max(floor, 3 sigma)`` at the last checkpoint of every backend.

    Returns ``(converged, tolerances, |mc - fourier|, divergence)``.
    """
    tolerance = {b: max(floor, 3.0 * c.final_stderr) for b, c in curves.items()}
    converged = min_index >= required and all(c.final_error <= tolerance[b] for b, c in curves.items())
    gap, divergence = None, False
    if "mc" in curves and "fourier" in curves:
        mc, fourier = curves["mc"].rows[-1][1], curves["fourier"].rows[-1][1]
        gap = abs(mc - fourier)
        divergence = diverges(mc, fourier, curves["mc"].final_stderr)
    return converged, tolerance, gap, divergence


def verify_theorem_4_1(G: Observable, f0: InitialDensity, ctx: FlowContext, l_max: int = MIN_L,
                       backends: Sequence[str] = ("fourier", "mc"), l_values: Optional[Sequence[int]] = None,
                       cloud: Optional[SampleCloud] = None, samples: int = 20000, seed: int = 0,
                       order: int = DEFAULT_TIME_ORDER, mode_set: Optional[ModeSet] = None,
                       grid_resolution: int = 21, label: Optional[str] = None,
                       domain: Optional[ActionDomain] = None) -> LimitReport:
    """Time averages against the closed-form limit on a doubling ladder of ``l``.

    Passes when the error at ``l_max >= 200`` is within ``max(5e-3, 3 sigma)``
    for every backend.  Hypothesis violations do not stop the run; the report
    is then a negative control.  The critical-point scan covers ``domain``
    (default: the support of ``f0``).
    """
    hyp = validate_schedule(ctx.schedule).merged(
        validate_hypotheses(ctx.schedule, ctx.field, domain or f0.support_box, grid_resolution))
    limit = theoretical_limit(G, f0, ctx)
    ls = list(l_values) if l_values is not None else doubling_ladder(l_max)
    curves = {}
    for backend in backends:
        if backend == "mc" and cloud is None:
            cloud = SampleCloud.draw(f0, samples, seed)
        curves[backend] = convergence_curve(G, ls, ctx, limit, backend, f0=f0, cloud=cloud,
                                            order=order, mode_set=mode_set)
    converged, tol, gap, divergence = judge(curves, max(ls))
    return LimitReport(label or G.name, limit, curves, hyp, tol, converged, gap, divergence)


@dataclass
class WeakConvergenceReport:
    reports: dict[str, LimitReport]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports.values())

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.reports.values())

    @property
    def oracle_divergence(self) -> bool:
        return any(r.oracle_divergence for r in self.reports.values())

    def to_dict(self) -> dict:
        return {"passed": self.passed, "converged": self.converged,
                "observables": {k: r.to_dict() for k, r in self.reports.items()}}


def verify_theorem_4_2(f0: InitialDensity, ctx: FlowContext, test_observables: Mapping[str, Observable],
                       l_max: int = MIN_L, **kwargs) -> WeakConvergenceReport:
    """Weak convergence of the time-averaged measures, tested observable by observable.

    For each ``g`` the right-hand side is the duration-weighted sum of
    ``int g dPbar_{tau_i}``, which equals :func:`theoretical_limit` for ``g``.
    A single sample cloud is shared by all observables.
    """
    if "mc" in kwargs.get("backends", ("fourier", "mc")) and kwargs.get("cloud") is None:
        kwargs["cloud"] = SampleCloud.draw(f0, kwargs.pop("samples", 20000), kwargs.pop("seed", 0))
    reports = {name: verify_theorem_4_1(g, f0, ctx, l_max, label=name, **kwargs)
               for name, g in test_observables.items()}
    return WeakConvergenceReport(reports)


# ---------------------------------------------------------------------------
# Riemann-Lebesgue demonstrators
# ---------------------------------------------------------------------------

@dataclass
class DecayTable:
    rows: list[tuple[float, complex]]

    @property
    def magnitudes(self) -> list[float]:
        return [abs(v) for _, v in self.rows]

    def at(self, l: float) -> complex:
        for x, v in self.rows:
            if x == l:
                return v
        raise KeyError(l)

    def ratio(self, early: float, late: float) -> float:
        """``|average(early)| / |average(late)|``."""
        late_val = abs(self.at(late))
        return np.inf if late_val == 0 else abs(self.at(early)) / late_val

    def to_rows(self) -> list[dict]:
        return [{"l": float(l), "abs_average": abs(v), "real": float(np.real(v)),
                 "imag": float(np.imag(v))} for l, v in self.rows]


def _segments_until(ctx: FlowContext, t_end: float):
    """Yield ``(m, k, start_elapsed, stop_elapsed, t_stop)`` covering ``[0, t_end)``."""
    T = ctx.period
    tau = ctx.schedule.times
    d = ctx.durations
    m = 0
    while m * T < t_end:
        for k in range(tau.size):
            start = m * T + tau[k]
            if start >= t_end:
                return
            stop = min(start + d[k], t_end)
            yield m, k, 0.0, stop - start, stop
        m += 1


def rl_time_average_demo(amplitudes: Sequence[Callable], ctx: FlowContext, l_values: Sequence[float],
                         box: ActionDomain, order: int = DEFAULT_TIME_ORDER,
                         action_order: int = 32) -> DecayTable:
    """Running averages ``(1/l) int_0^l M(t) dt`` of the oscillatory action integral.

    ``M(t) = int_box F_{k(t)}(I) exp(i Phi(I, t)) dI`` where ``F_k`` is the
    amplitude on flow segment ``k`` and ``Phi`` the angle drift of ``ctx``
    (scalar phase, so ``n = 1`` or the first component is used).
    """
    if len(amplitudes) != ctx.schedule.p:
        raise ValueError("need one amplitude per flow segment")
    ls = sorted(float(l) for l in l_values)
    slope = flow_phase_slope(ctx, box, ls[-1], 1)
    quad = ActionQuadrature.gauss_legendre(box, action_order, panels_for_phase(box, slope))
    I = quad.nodes
    sums = ctx.cumulative_sums
    freqs = [ctx.field.evaluate(I + s)[:, 0] for s in sums]
    amps = [quad.weights * np.asarray(F(I), dtype=float).reshape(-1) for F in amplitudes]
    d = ctx.durations
    partial = [np.zeros(I.shape[0])]
    for k in range(1, len(d)):
        partial.append(partial[-1] + d[k - 1] * freqs[k - 1])
    shift = sum(dk * fk for dk, fk in zip(d, freqs))
    x, w = gauss_nodes(order)
    total = 0.0 + 0.0j
    rows = []
    pending = list(ls)
    for m, k, a, b, t_stop in _segments_until(ctx, ls[-1]):
        base = partial[k] + (mul_mod_two_pi(m, shift) if m else 0.0)
        rot = amps[k] * np.exp(1j * base)
        e = a + (b - a) * x
        vals = np.exp(1j * e[:, None] * freqs[k][None, :]) @ rot
        total += (b - a) * np.dot(w, vals)
        while pending and abs(t_stop - pending[0]) < 1e-12 * max(1.0, pending[0]):
            rows.append((pending.pop(0), total / t_stop))
    if pending:
        raise ValueError(f"l values {pending} do not fall on segment boundaries")
    return DecayTable(rows)


def rl_segment_amplitudes(G: Observable, mode, f0: InitialDensity, ctx: FlowContext) -> list[Callable]:
    """``F_k(I) = G^(I + S_k, n) * rho(I)`` for every flow segment.

    With ``rho`` the action marginal of ``f0`` these are the amplitudes that
    multiply ``exp(i <n, Phi>)`` in the Fourier expansion of the ensemble
    average, up to the angular factor of the density.
    """
    from .spectral import fourier_coefficient

    def make(s):
        return lambda I: np.real(fourier_coefficient(G, I + s, mode)) * action_marginal(f0, I)

    return [make(s) for s in ctx.cumulative_sums]


def bounded_decay_average_demo(M: Callable, l_values: Sequence[float], order: int = 16,
                               panel: float = 1.0) -> DecayTable:
    """Running averages ``(1/l) int_0^l M(t) dt`` by composite Gauss-Legendre on unit panels."""
    ls = sorted(float(l) for l in l_values)
    x, w = gauss_nodes(order)
    rows = []
    total = 0.0
    t0 = 0.0
    for l in ls:
        edges = np.arange(t0, l, panel)
        edges = np.append(edges, l) if edges.size == 0 or edges[-1] < l else edges
        if edges[0] > t0:
            edges = np.insert(edges, 0, t0)
        for a, b in zip(edges[:-1], edges[1:]):
            total += (b - a) * np.dot(w, np.asarray(M(a + (b - a) * x), dtype=complex))
        t0 = l
        rows.append((l, total / l))
    return DecayTable(rows)

"""Flows driven by almost-periodic jump sequences at integer times.

Jump opportunities sit at the integers; a schedule with spacing ``h`` reduces
to this one by rescaling time by ``h``.  On ``[i, i + 1)`` the action is
``Ihat(i) = I0 + c(i)`` and the angle advances at ``omega(Ihat(i))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .model import (CRITICAL_TOL, TWO_PI, ActionDomain, Check, FrequencyField, InitialDensity, Observable,
                    PhasePoint, TransitionSchedule, ValidationReport, as_actions, reduce_angle,
                    smallest_singular_values)
from .montecarlo import (DEFAULT_TIME_ORDER, ConvergenceCurve, SampleCloud, fit_decay_exponent, gauss_nodes,
                         mean_and_stderr)
from .spectral import (IMAG_TOL, ActionQuadrature, ImaginaryResidueError, ModeSet, angle_average,
                       coefficient_matrix, default_modes, panels_for_phase)
from .theorems import LimitReport, action_marginal, judge

DEFAULT_N_VALUES = (200, 500, 1000, 2000)
DEFAULT_PROBE_N = (1, 10, 100, 1000)


@dataclass(frozen=True)
class JumpSequence:
    """Jumps ``J_i`` applied at integer times, described by their running sums.

    ``offsets(k)`` returns ``c(k) = J_0 + ... + J_k`` for an integer array
    ``k`` (shape ``k.shape + (n,)``) with ``c(0) = 0``; ``bound`` is a
    certified ``sup_k |c(k)|``.
    """

    n: int
    offsets: Callable[[np.ndarray], np.ndarray]
    bound: float
    name: str = "sequence"
    params: Optional[dict] = None

    def offset(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        if np.any(k < 0):
            raise ValueError("sequence index must be nonnegative")
        return np.asarray(self.offsets(k), dtype=float).reshape(k.shape + (self.n,))

    def jump(self, k) -> np.ndarray:
        """``J_k = c(k) - c(k - 1)``, with ``J_0 = 0``."""
        k = np.asarray(k, dtype=np.int64)
        prev = self.offset(np.maximum(k - 1, 0))
        out = self.offset(k) - prev
        return np.where((k == 0)[..., None], 0.0, out)

    def cumulative(self, k, I0) -> np.ndarray:
        """``Ihat_{I0}(k) = I0 + c(k)``."""
        I0 = as_actions(I0, self.n)
        off = self.offset(k)
        return I0 + off if off.ndim == 1 else I0[..., None, :] + off

    @classmethod
    def constant(cls, n: int) -> "JumpSequence":
        return cls(n, lambda k: np.zeros(np.shape(k) + (n,)), 0.0, "constant", {})

    @classmethod
    def from_cycle(cls, offsets_cycle) -> "JumpSequence":
        """Exactly periodic sequence repeating the running sums ``offsets_cycle``."""
        cyc = np.atleast_2d(np.asarray(offsets_cycle, dtype=float))
        if np.any(cyc[0] != 0):
            raise ValueError("the first running sum must be zero")
        r, n = cyc.shape
        cyc.setflags(write=False)
        bound = float(np.max(np.linalg.norm(cyc, axis=-1)))
        return cls(n, lambda k: cyc[np.asarray(k) % r], bound, "cycle", {"cycle": cyc.tolist()})


def quasiperiodic_generator(amplitude, rotation: float, phase: float = 0.0) -> JumpSequence:
    """Telescoping cosine sequence ``c(k) = a (cos(2 pi gamma k + phi) - cos(phi))``.

    ``phase = 0`` gives ``Ihat(k) = I0 + a (cos(2 pi gamma k) - 1)``.  For
    rational ``gamma = q / r`` the choice ``phi = -pi gamma (r - 1)`` also
    makes ``c(r - 1) = 0``, which is what a zero-net-jump periodic schedule
    with ``J_0 = 0`` needs.
    """
    a = np.atleast_1d(np.asarray(amplitude, dtype=float))
    gamma = float(rotation)
    phi = float(phase)
    if not 0.0 < gamma < 1.0:
        raise ValueError("rotation must lie in (0, 1)")
    a.setflags(write=False)
    n = a.size
    base = np.cos(phi)

    def offsets(k):
        k = np.asarray(k, dtype=float)
        # reduce gamma * k mod 1 before scaling so large k keep full accuracy
        frac = np.mod(gamma * k, 1.0)
        return (np.cos(TWO_PI * frac + phi) - base)[..., None] * a

    bound = float(np.linalg.norm(a) * (1.0 + abs(base)))
    return JumpSequence(n, offsets, bound, "quasiperiodic",
                        {"amplitude": a.tolist(), "rotation": gamma, "phase": phi})


def rational_phase(q: int, r: int) -> float:
    """Phase that closes the cycle of a rotation by ``q / r`` (see :func:`quasiperiodic_generator`)."""
    return -np.pi * (q / r) * (r - 1)


def check_boundedness(seq: JumpSequence, steps: int = 10 ** 6, chunk: int = 10 ** 5) -> float:
    """Largest ``|c(k)|`` for ``k <= steps``; compare with ``seq.bound``."""
    worst = 0.0
    for start in range(0, steps + 1, chunk):
        k = np.arange(start, min(start + chunk, steps + 1))
        worst = max(worst, float(np.max(np.linalg.norm(seq.offset(k), axis=-1))))
    return worst


# ---------------------------------------------------------------------------
# almost periods
# ---------------------------------------------------------------------------

def shift_difference(seq: JumpSequence, p: int, samples: int) -> float:
    """``max_{0 <= k <= samples} |c(k + p) - c(k)|``."""
    k = np.arange(samples + 1)
    return float(np.max(np.linalg.norm(seq.offset(k + p) - seq.offset(k), axis=-1)))


def find_almost_period(seq: JumpSequence, eps: float, window: int, samples: int = 1000) -> Optional[int]:
    """Smallest ``p`` in ``1..window`` with sampled ``sup |Ihat(k + p) - Ihat(k)| < eps``; ``None`` if absent."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    values = seq.offset(np.arange(samples + window + 1))
    base = values[: samples + 1]
    for p in range(1, window + 1):
        diff = np.max(np.linalg.norm(values[p: p + samples + 1] - base, axis=-1))
        if diff < eps:
            return p
    return None


def equivalent_schedule(seq: JumpSequence, period: int) -> TransitionSchedule:
    """Periodic schedule ``T = r``, jumps at ``0..r-1``, reproducing an ``r``-periodic sequence."""
    r = int(period)
    k = np.arange(r + 1)
    off = seq.offset(k)
    if not np.allclose(off[r], off[0], atol=1e-12, rtol=0):
        raise ValueError(f"sequence is not {r}-periodic")
    jumps = np.vstack([np.zeros((1, seq.n)), np.diff(off[:r], axis=0)])
    return TransitionSchedule(float(r), np.arange(r, dtype=float), jumps)


# ---------------------------------------------------------------------------
# flow
# ---------------------------------------------------------------------------

class APFlow:
    """Integer-step flow for fixed initial actions with cached frequency partial sums.

    ``prefix[i] = sum_{j < i} omega(Ihat(j))`` is extended on demand, so a
    sweep over ``t in [0, N]`` costs ``N`` field evaluations in total.
    """

    def __init__(self, I0, seq: JumpSequence, field: FrequencyField):
        if seq.n != field.n:
            raise ValueError("sequence and frequency field disagree on n")
        self.I0 = as_actions(I0, seq.n)
        self.seq = seq
        self.field = field
        self._prefix = [np.zeros_like(self.I0)]
        self._freqs = []

    def _extend(self, upto: int):
        while len(self._freqs) <= upto:
            i = len(self._freqs)
            w = self.field.evaluate(self.I0 + self.seq.offset(i))
            self._freqs.append(w)
            self._prefix.append(self._prefix[-1] + w)

    def action(self, k: int) -> np.ndarray:
        return self.I0 + self.seq.offset(k)

    def frequency(self, k: int) -> np.ndarray:
        self._extend(k)
        return self._freqs[k]

    def partial_sum(self, k: int) -> np.ndarray:
        """``sum_{j < k} omega(Ihat(j))``."""
        self._extend(k)
        return self._prefix[k]

    def drift(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be nonnegative")
        k = int(np.floor(t))
        return self.partial_sum(k) + (t - k) * self.frequency(k)


def advance_ap(point: PhasePoint, t: float, seq: JumpSequence, field: FrequencyField,
               flow: Optional[APFlow] = None) -> PhasePoint:
    """``(Ihat(floor t), theta0 + sum_{i < floor t} omega(Ihat(i)) + (t - floor t) omega(Ihat(floor t)))``.

    Pass a shared :class:`APFlow` built on ``point.action`` to reuse its
    partial sums across calls.
    """
    if flow is None:
        flow = APFlow(point.action, seq, field)
    k = int(np.floor(t)) if t >= 0 else -1
    theta = point.angle + flow.drift(t)
    return PhasePoint(flow.action(k), reduce_angle(theta))


def averaged_frequency_N(I, seq: JumpSequence, field: FrequencyField, N: int) -> np.ndarray:
    """``(1/N) sum_{i < N} omega(I + c(i))``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    I = as_actions(I, seq.n)
    total = np.zeros_like(I)
    for i in range(N):
        total = total + field.evaluate(I + seq.offset(i))
    return total / N


def averaged_frequency_gradient_N(I, seq: JumpSequence, field: FrequencyField, N: int) -> np.ndarray:
    I = as_actions(I, seq.n)
    total = np.zeros(I.shape + (seq.n,))
    for i in range(N):
        total = total + field.gradient(I + seq.offset(i))
    return total / N


def validate_ap_condition(seq: JumpSequence, field: FrequencyField, domain: ActionDomain,
                          probe_N: Sequence[int] = DEFAULT_PROBE_N, grid_resolution: int = 21) -> ValidationReport:
    """No critical points of ``omega_bar_N`` on ``domain`` for each probed ``N``."""
    grid = domain.grid(grid_resolution)
    checks = []
    for N in probe_N:
        sv = smallest_singular_values(averaged_frequency_gradient_N(grid, seq, field, N))
        bad = sv <= CRITICAL_TOL
        detail = f"N={N}: min singular value {sv.min():.6g} over {grid.shape[0]} grid points"
        checks.append(Check(f"no-critical-points-N{N}", not bad.any(), detail, value=float(sv.min())))
    return ValidationReport(tuple(checks))


# ---------------------------------------------------------------------------
# limits and time averages
# ---------------------------------------------------------------------------

class APLimit(NamedTuple):
    value: float
    stabilization: float
    N: int


def _partial_limits(G, f0, seq, N_max, quad):
    """Running averages ``(1/N) sum_{i<N} int Gbar(I + c(i)) rho(I) dI`` for ``N = 1..N_max``."""
    if quad is None:
        quad = ActionQuadrature.gauss_legendre(f0.support_box)
    wr = quad.weights * action_marginal(f0, quad.nodes)
    terms = np.array([float(np.sum(wr * angle_average(G, quad.nodes + seq.offset(i))))
                      for i in range(N_max)])
    return np.cumsum(terms) / np.arange(1, N_max + 1)


def theoretical_limit_ap(G: Observable, f0: InitialDensity, seq: JumpSequence, N: int,
                         quad: Optional[ActionQuadrature] = None) -> APLimit:
    """Partial Cesaro average of the angle-averaged ensemble along the sequence.

    ``stabilization = |value(N) - value(2N)|``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    running = _partial_limits(G, f0, seq, 2 * N, quad)
    return APLimit(float(running[N - 1]), float(abs(running[N - 1] - running[2 * N - 1])), int(N))


class APTimeAverage(NamedTuple):
    N: int
    value: float
    stderr: float
    backend: str


def _unit_phase_integral(x):
    """``int_0^1 exp(i s x) ds``, stable near ``x = 0``."""
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + 0.5j * x, np.expm1(1j * safe) / (1j * safe))


def _ap_quadrature(f0, seq, field, modes, N_max, order):
    box = f0.support_box
    max_mode = int(np.abs(modes.modes).max()) if len(modes) else 0
    B = seq.bound
    probes = ActionDomain(box.lower - B, box.upper + B).grid(9)
    worst = np.abs(field.gradient(probes)).sum(axis=-2).max(axis=0)
    slope = 1.25 * max_mode * N_max * worst
    return ActionQuadrature.gauss_legendre(box, order, panels_for_phase(box, slope))


def _ap_fourier_sweep(G, f0, seq, field, Ns, mode_set, quad, action_order):
    modes = mode_set or default_modes(G, f0)
    if quad is None:
        quad = _ap_quadrature(f0, seq, field, modes, Ns[-1], action_order)
    I = quad.nodes
    mf = modes.modes.astype(float)
    base = TWO_PI ** seq.n * quad.weights[:, None] * coefficient_matrix(f0, I, -modes.modes, modes.cutoff)
    phase = np.zeros((I.shape[0], len(modes)))
    total = 0.0
    want = set(Ns)
    out = []
    for i in range(Ns[-1]):
        shifted = I + seq.offset(i)
        g = coefficient_matrix(G, shifted, modes.modes, modes.cutoff)
        w = field.evaluate(shifted) @ mf.T
        z = np.sum(base * g * np.exp(1j * phase) * _unit_phase_integral(w))
        if abs(z.imag) > IMAG_TOL:
            raise ImaginaryResidueError("unit-interval average has an imaginary residue")
        total += z.real
        phase = np.mod(phase + w, TWO_PI)
        if i + 1 in want:
            out.append(APTimeAverage(i + 1, total / (i + 1), 0.0, "fourier"))
    return out


def _ap_mc_sweep(G, cloud, seq, field, Ns, order):
    x, wq = gauss_nodes(order)
    I0, theta = cloud.actions, cloud.angles
    phase = np.zeros_like(theta)
    acc = np.zeros(I0.shape[0])
    want = set(Ns)
    out = []
    for i in range(Ns[-1]):
        I = I0 + seq.offset(i)
        w = field.evaluate(I)
        for xj, wj in zip(x, wq):
            acc += wj * G.evaluate(I, theta + phase + xj * w)
        phase = np.mod(phase + w, TWO_PI)
        if i + 1 in want:
            mean, err = mean_and_stderr(acc / (i + 1))
            out.append(APTimeAverage(i + 1, mean, err, "mc"))
    return out


def ap_time_average_curve(G: Observable, N_values: Sequence[int], seq: JumpSequence, field: FrequencyField,
                          backend: str = "fourier", f0: Optional[InitialDensity] = None,
                          cloud: Optional[SampleCloud] = None, order: int = DEFAULT_TIME_ORDER,
                          mode_set: Optional[ModeSet] = None, quad: Optional[ActionQuadrature] = None,
                          action_order: int = 32) -> list[APTimeAverage]:
    """``(1/N) int_0^N <G>_t dt`` for every ``N`` from one O(N_max) sweep over unit intervals.

    The Fourier backend integrates each unit interval exactly in time; the
    sampling backend uses Gauss-Legendre of the given order per interval.
    """
    Ns = sorted({int(v) for v in N_values})
    if not Ns or Ns[0] < 1:
        raise ValueError("N values must be at least 1")
    if backend == "fourier":
        if f0 is None:
            raise ValueError("fourier backend needs the initial density")
        return _ap_fourier_sweep(G, f0, seq, field, Ns, mode_set, quad, action_order)
    if backend == "mc":
        if cloud is None:
            raise ValueError("mc backend needs a sample cloud")
        return _ap_mc_sweep(G, cloud, seq, field, Ns, order)
    raise ValueError(f"unknown backend '{backend}'")


def verify_theorem_5_1(G: Observable, f0: InitialDensity, seq: JumpSequence, field: FrequencyField,
                       N_values: Sequence[int] = DEFAULT_N_VALUES, backends: Sequence[str] = ("fourier", "mc"),
                       limit: Optional[float] = None, cloud: Optional[SampleCloud] = None,
                       samples: int = 20000, seed: int = 0, order: int = DEFAULT_TIME_ORDER,
                       mode_set: Optional[ModeSet] = None, probe_N: Sequence[int] = DEFAULT_PROBE_N,
                       grid_resolution: int = 21, label: Optional[str] = None,
                       domain: Optional[ActionDomain] = None) -> LimitReport:
    """Time averages along the sequence against the Cesaro limit.

    Errors are measured against ``limit`` when given, else against the
    partial average at matched ``N``; the matched-``N`` gaps are reported in
    either case.  Passes when the largest ``N >= 2000`` is within
    ``max(5e-3, 3 sigma)`` for every backend and the error of the
    deterministic backend shrinks from the first to the last ``N``.
    """
    Ns = sorted({int(v) for v in N_values})
    hyp = validate_ap_condition(seq, field, domain or f0.support_box, probe_N, grid_resolution)
    running = _partial_limits(G, f0, seq, Ns[-1], None)
    matched = {N: float(running[N - 1]) for N in Ns}
    curves = {}
    matched_gaps = {}
    for backend in backends:
        if backend == "mc" and cloud is None:
            cloud = SampleCloud.draw(f0, samples, seed)
        averages = ap_time_average_curve(G, Ns, seq, field, backend, f0=f0, cloud=cloud,
                                         order=order, mode_set=mode_set)
        ref = (lambda N: limit) if limit is not None else (lambda N: matched[N])
        rows = [(a.N, a.value, abs(a.value - ref(a.N)), a.stderr) for a in averages]
        curves[backend] = ConvergenceCurve(backend, float(limit if limit is not None else matched[Ns[-1]]),
                                           rows, fit_decay_exponent([r[0] for r in rows], [r[2] for r in rows]))
        matched_gaps[backend] = [(a.N, abs(a.value - matched[a.N])) for a in averages]
    converged, tol, gap, divergence = judge(curves, Ns[-1], required=2000)
    trend_backend = "fourier" if "fourier" in curves else next(iter(curves))
    first, last = curves[trend_backend].rows[0][2], curves[trend_backend].rows[-1][2]
    shrinking = len(Ns) < 2 or last < first or last <= 1e-12
    reported_limit = float(limit) if limit is not None else matched[Ns[-1]]
    extra = {"N_values": Ns, "partial_limits": matched, "matched_gaps": matched_gaps,
             "shrinking": shrinking, "trend_backend": trend_backend}
    return LimitReport(label or G.name, reported_limit, curves, hyp, tol, converged and shrinking,
                       gap, divergence, extra)

"""Torus Fourier machinery and the Fourier-series evaluation of ensemble averages.

Coefficients follow the normalisation

    G^(I, n) = (2pi)^-n  int_{T^n} G(I, theta) exp(-i <n, theta>) dtheta

so the ensemble average at time ``t`` reads

    <G>_t = (2pi)^n sum_n int_Omega G^(I + S_k, n) f0^(I, -n) exp(i <n, Phi(I, t)>) dI

with ``Phi`` the angle drift of :func:`jumpflow.flow.drift`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .flow import FlowContext, drift, locate, mul_mod_two_pi
from .model import TWO_PI, ActionDomain, InitialDensity, Observable, as_actions

DEFAULT_CUTOFF = 16
DEFAULT_ACTION_ORDER = 32
IMAG_TOL = 1e-8
# largest |phase slope| * half-panel-width handled by one 32-node panel
_PANEL_PHASE = 16.0


class ImaginaryResidueError(ArithmeticError):
    """The Fourier-series evaluation produced a non-negligible imaginary part."""


def angle_grid(n: int, points: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform tensor grid on ``T^n`` and trapezoid weights (summing to ``(2pi)^n``)."""
    axis = TWO_PI * np.arange(points) / points
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    theta = np.stack([m.ravel() for m in mesh], axis=-1)
    weights = np.full(theta.shape[0], TWO_PI ** n / theta.shape[0])
    return theta, weights


@dataclass(frozen=True)
class ModeSet:
    """Finite set of Fourier modes, closed under negation, in a fixed order."""

    cutoff: int
    modes: np.ndarray

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=int)
        if modes.ndim != 2:
            raise ValueError("modes must be a 2-D integer array")
        rows = {tuple(r) for r in modes.tolist()}
        rows |= {tuple(-v for v in r) for r in rows}
        ordered = np.array(sorted(rows), dtype=int).reshape(-1, modes.shape[1])
        ordered.setflags(write=False)
        object.__setattr__(self, "modes", ordered)

    @classmethod
    def cube(cls, n: int, cutoff: int = DEFAULT_CUTOFF) -> "ModeSet":
        axis = range(-cutoff, cutoff + 1)
        return cls(cutoff, np.array(list(itertools.product(axis, repeat=n)), dtype=int))

    @classmethod
    def from_modes(cls, modes: Sequence[Sequence[int]]) -> "ModeSet":
        modes = np.asarray(list(modes), dtype=int)
        if modes.ndim == 1:
            modes = modes[:, None]
        return cls(int(np.abs(modes).max()) if modes.size else 0, modes)

    @property
    def n(self) -> int:
        return self.modes.shape[1]

    def __len__(self) -> int:
        return self.modes.shape[0]

    def __iter__(self):
        return iter(tuple(r) for r in self.modes.tolist())

    def __contains__(self, mode) -> bool:
        return tuple(int(v) for v in np.atleast_1d(mode)) in set(self)

    def pruned(self, keep: Sequence[Sequence[int]]) -> "ModeSet":
        keep = {tuple(k) for k in keep}
        rows = [r for r in self if r in keep]
        if not rows:
            rows = [(0,) * self.n]
        return ModeSet(self.cutoff, np.array(rows, dtype=int))


@dataclass(frozen=True)
class ActionQuadrature:
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 2 or weights.shape != nodes.shape[:1]:
            raise ValueError("nodes (Q, n) and weights (Q,) required")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def gauss_legendre(cls, box: ActionDomain, order: int = DEFAULT_ACTION_ORDER,
                       panels: Union[int, Sequence[int]] = 1) -> "ActionQuadrature":
        """Composite tensor Gauss-Legendre rule over ``box``."""
        x, w = np.polynomial.legendre.leggauss(order)
        panels = np.broadcast_to(np.asarray(panels, dtype=int), (box.n,))
        axes_x, axes_w = [], []
        for lo, hi, npan in zip(box.lower, box.upper, panels):
            edges = np.linspace(lo, hi, int(npan) + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[:-1] + edges[1:])
            axes_x.append((mid[:, None] + half[:, None] * x[None, :]).ravel())
            axes_w.append((half[:, None] * w[None, :]).ravel())
        mesh_x = np.meshgrid(*axes_x, indexing="ij")
        mesh_w = np.meshgrid(*axes_w, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh_x], axis=-1)
        weights = np.prod(np.stack([m.ravel() for m in mesh_w], axis=-1), axis=-1)
        return cls(nodes, weights)

    @property
    def n(self) -> int:
        return self.nodes.shape[1]

    @property
    def size(self) -> int:
        return self.weights.size

    def integrate(self, values) -> float:
        return np.sum(self.weights * np.asarray(values), axis=-1)


def panels_for_phase(box: ActionDomain, slope) -> np.ndarray:
    """Panels per axis so a 32-node rule resolves ``exp(i phase)`` with the given ``|d phase/dI_j|``."""
    slope = np.broadcast_to(np.asarray(slope, dtype=float), (box.n,))
    return np.maximum(1, np.ceil(slope * box.widths / (2 * _PANEL_PHASE))).astype(int)


def flow_phase_slope(ctx: FlowContext, box: ActionDomain, t_max: float, max_mode: int,
                     probe_resolution: int = 9) -> np.ndarray:
    """Upper estimate of ``|d <n, Phi(I, t)> / dI_j|`` for ``t <= t_max`` and ``|n|_inf <= max_mode``."""
    probes = box.grid(probe_resolution)
    worst = np.zeros(ctx.n)
    for s in ctx.cumulative_sums:
        g = np.abs(ctx.field.gradient(probes + s)).sum(axis=-2)
        worst = np.maximum(worst, g.max(axis=0))
    return 1.25 * max_mode * t_max * worst


def resolved_quadrature(box: ActionDomain, ctx: FlowContext, t_max: float, modes: "ModeSet",
                        order: int = DEFAULT_ACTION_ORDER) -> ActionQuadrature:
    """Gauss-Legendre rule with enough panels for the phase oscillation up to ``t_max``."""
    max_mode = int(np.abs(modes.modes).max()) if len(modes) else 0
    slope = flow_phase_slope(ctx, box, t_max, max_mode)
    return ActionQuadrature.gauss_legendre(box, order, panels_for_phase(box, slope))


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

def quadrature_points(cutoff: int) -> int:
    return max(64, 8 * int(cutoff))


def _pointwise(obj):
    if isinstance(obj, InitialDensity):
        return obj.density
    return obj.evaluate


def quadrature_coefficients(func, I, modes, points: int) -> np.ndarray:
    """Trapezoid-rule torus coefficients of ``func(I, theta)``, shape (..., K)."""
    modes = np.atleast_2d(np.asarray(modes, dtype=float))
    n = modes.shape[1]
    I = as_actions(I, n)
    theta, _ = angle_grid(n, points)
    vals = func(I[..., None, :], theta)
    basis = np.exp(-1j * theta @ modes.T)
    return vals @ basis / theta.shape[0]


def coefficient_matrix(obj: Union[Observable, InitialDensity], I, modes,
                       cutoff: int = DEFAULT_CUTOFF, exact: bool = True) -> np.ndarray:
    """Coefficients at every action in ``I`` for every mode, shape (..., K)."""
    modes = np.atleast_2d(np.asarray(modes, dtype=int))
    I = as_actions(I, modes.shape[1])
    if exact and obj.exact_coefficients:
        return np.stack([np.broadcast_to(obj.fourier_coefficient(I, m), I.shape[:-1])
                         for m in modes], axis=-1)
    return quadrature_coefficients(_pointwise(obj), I, modes, quadrature_points(cutoff))


def fourier_coefficient(G: Union[Observable, InitialDensity], I, mode,
                        cutoff: int = DEFAULT_CUTOFF, exact: bool = True) -> np.ndarray:
    """Single torus coefficient; closed form when available, else trapezoid rule."""
    mode = np.atleast_1d(np.asarray(mode, dtype=int))
    return coefficient_matrix(G, I, mode[None, :], cutoff, exact)[..., 0]


def angle_average(G: Observable, I, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    c = fourier_coefficient(G, I, np.zeros(G.n, dtype=int), cutoff)
    if np.max(np.abs(np.imag(c)), initial=0.0) > 1e-12:
        raise ImaginaryResidueError("angle average of a real observable has an imaginary part")
    return np.real(c)


def parseval_residual(G: Observable, I, mode_set: ModeSet, grid: int = 256) -> np.ndarray:
    """``|mean of G^2 over the torus - sum over modes of |G^|^2|`` at each action."""
    I = as_actions(I, G.n)
    theta, _ = angle_grid(G.n, grid)
    lhs = np.mean(G.evaluate(I[..., None, :], theta) ** 2, axis=-1)
    coeffs = coefficient_matrix(G, I, mode_set.modes, mode_set.cutoff)
    rhs = np.sum(np.abs(coeffs) ** 2, axis=-1)
    return np.abs(lhs - rhs)


def default_modes(G: Observable, f0: Optional[InitialDensity] = None,
                  cutoff: int = DEFAULT_CUTOFF) -> ModeSet:
    """Declared support of ``G`` if any, else the cube ``|n|_inf <= cutoff``.

    Modes whose density partner ``f0^(., -n)`` vanishes identically (known from
    the density's declared angular support) are dropped.
    """
    if G.mode_support is not None:
        modes = ModeSet.from_modes(G.mode_support)
    else:
        modes = ModeSet.cube(G.n, cutoff)
    if f0 is not None and f0.angle_modes is not None:
        partners = {tuple(-v for v in m) for m in f0.angle_modes}
        modes = modes.pruned(partners)
    return modes


# ---------------------------------------------------------------------------
# ensemble averages
# ---------------------------------------------------------------------------

def _check_real(z: complex, what: str) -> float:
    if abs(z.imag) > IMAG_TOL:
        raise ImaginaryResidueError(f"{what}: imaginary residue {z.imag:.3e} exceeds {IMAG_TOL}")
    return float(z.real)


def expectation_fourier(G: Observable, f0: InitialDensity, t: float, ctx: FlowContext,
                        mode_set: Optional[ModeSet] = None,
                        quad: Optional[ActionQuadrature] = None) -> float:
    """``<G>_t`` from the truncated Fourier series and action quadrature."""
    modes = mode_set or default_modes(G, f0)
    if quad is None:
        quad = resolved_quadrature(f0.support_box, ctx, t, modes)
    seg = locate(t, ctx.schedule)
    I = quad.nodes
    phase = drift(I, seg, ctx) @ modes.modes.T
    g = coefficient_matrix(G, I + ctx.cumulative_sums[seg.segment], modes.modes, modes.cutoff)
    f = coefficient_matrix(f0, I, -modes.modes, modes.cutoff)
    terms = g * f * np.exp(1j * phase)
    total = TWO_PI ** ctx.n * np.sum(quad.weights * np.sum(terms, axis=-1))
    return _check_real(complex(total), "expectation_fourier")


def direct_expectation(G: Observable, f0: InitialDensity, quad: Optional[ActionQuadrature] = None,
                       angle_points: int = 64) -> float:
    """``int G f0 dI dtheta`` by tensor quadrature over the support box and the torus."""
    if quad is None:
        quad = ActionQuadrature.gauss_legendre(f0.support_box)
    theta, w_theta = angle_grid(G.n, angle_points)
    I = quad.nodes[:, None, :]
    vals = G.evaluate(I, theta[None]) * f0.density(I, theta[None])
    return float(np.sum(quad.weights * (vals @ w_theta)))


def summability_bound(G: Observable, f0: InitialDensity, mode_set: ModeSet,
                      quad: Optional[ActionQuadrature] = None, shift=None) -> float:
    """``int sum_n |G^(I + shift, n)| |f0^(I, -n)| dI`` over ``mode_set``."""
    if quad is None:
        quad = ActionQuadrature.gauss_legendre(f0.support_box)
    I = quad.nodes
    shift = np.zeros(G.n) if shift is None else as_actions(shift, G.n)
    g = coefficient_matrix(G, I + shift, mode_set.modes, mode_set.cutoff)
    f = coefficient_matrix(f0, I, -mode_set.modes, mode_set.cutoff)
    return float(np.sum(quad.weights * np.sum(np.abs(g) * np.abs(f), axis=-1)))


def truncation_tail(G: Observable, f0: InitialDensity, cutoff: int,
                    quad: Optional[ActionQuadrature] = None) -> float:
    """Change in :func:`summability_bound` from cube cutoff ``N`` to ``2N``."""
    small = summability_bound(G, f0, ModeSet.cube(G.n, cutoff), quad)
    large = summability_bound(G, f0, ModeSet.cube(G.n, 2 * cutoff), quad)
    return abs(large - small)


def continuity_modulus(G: Observable, mode, box: ActionDomain, resolution: int, shift=None) -> float:
    """Largest change of ``I -> G^(I + shift, n)`` between neighbouring grid points."""
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(box.lower, box.upper)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    shift = np.zeros(G.n) if shift is None else as_actions(shift, G.n)
    vals = fourier_coefficient(G, mesh + shift, mode)
    return float(max(np.max(np.abs(np.diff(vals, axis=j))) for j in range(G.n)))


class SegmentedExpectation:
    """Fourier evaluation of ``t -> <G>_t`` organised by flow segment.

    Everything that does not depend on the period index ``m`` is computed once
    per segment so long time integrals only pay for one complex exponential
    per node, mode and time sample.
    """

    def __init__(self, G: Observable, f0: InitialDensity, ctx: FlowContext,
                 modes: ModeSet, quad: ActionQuadrature):
        self.ctx = ctx
        self.modes = modes
        self.quad = quad
        I = quad.nodes
        n = ctx.n
        mf = modes.modes.astype(float)
        f = coefficient_matrix(f0, I, -modes.modes, modes.cutoff)
        self.amplitudes = []
        self.frequencies = []
        for s in ctx.cumulative_sums:
            g = coefficient_matrix(G, I + s, modes.modes, modes.cutoff)
            self.amplitudes.append(TWO_PI ** n * quad.weights[:, None] * g * f)
            self.frequencies.append(ctx.field.evaluate(I + s) @ mf.T)
        d = ctx.durations
        self.partial = [np.zeros_like(self.frequencies[0])]
        for k in range(1, ctx.schedule.p):
            self.partial.append(self.partial[-1] + d[k - 1] * self.frequencies[k - 1])
        self.period_phase = sum(dk * fk for dk, fk in zip(d, self.frequencies))

    def segment_values(self, m: int, k: int, elapsed: np.ndarray) -> np.ndarray:
        """``<G>_t`` at ``t = m T + tau_k + elapsed`` for an array of ``elapsed``."""
        base = self.partial[k]
        if m:
            base = base + mul_mod_two_pi(m, self.period_phase)
        rot = self.amplitudes[k] * np.exp(1j * base)
        elapsed = np.atleast_1d(np.asarray(elapsed, dtype=float))
        osc = np.exp(1j * elapsed[:, None, None] * self.frequencies[k][None])
        vals = np.sum(rot[None] * osc, axis=(1, 2))
        if np.max(np.abs(vals.imag), initial=0.0) > IMAG_TOL:
            raise ImaginaryResidueError("segment_values: imaginary residue above tolerance")
        return vals.real

    def value(self, t: float) -> float:
        seg = locate(t, self.ctx.schedule)
        return float(self.segment_values(seg.period_index, seg.segment, seg.elapsed)[0])

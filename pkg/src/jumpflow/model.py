"""Domain types shared by the flow, spectral, Monte Carlo and theorem layers.

Actions are handled as arrays whose last axis has length ``n`` (the number of
degrees of freedom); every evaluator broadcasts over the leading axes so a
single call can process a whole quadrature grid or sample cloud.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi

NET_JUMP_TOL = 1e-12
SUPPORT_MARGIN = 1e-6
CRITICAL_TOL = 1e-10


class FrequencyEvaluationError(ValueError):
    """Raised when the frequency map returns non-finite values."""


def as_actions(I, n: int) -> np.ndarray:
    """Coerce ``I`` to a float array with trailing axis ``n``."""
    arr = np.asarray(I, dtype=float)
    if arr.ndim == 0:
        if n != 1:
            raise ValueError(f"scalar action given for n={n}")
        return arr.reshape(1)
    if arr.shape[-1] != n:
        if n == 1:
            return arr[..., None]
        raise ValueError(f"action array has trailing size {arr.shape[-1]}, expected {n}")
    return arr


def reduce_angle(theta) -> np.ndarray:
    """Canonical representative of ``theta`` in [0, 2pi)."""
    out = np.mod(theta, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# validation reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""
    value: Optional[float] = None

    def to_dict(self) -> dict:
        out = {"name": self.name, "passed": bool(self.passed), "detail": self.detail}
        if self.value is not None:
            out["value"] = float(self.value)
        return out


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a validator: one :class:`Check` per invariant."""

    checks: tuple[Check, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def merged(self, other: "ValidationReport") -> "ValidationReport":
        return ValidationReport(self.checks + other.checks)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [c.to_dict() for c in self.checks]}


# ---------------------------------------------------------------------------
# action domain and schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActionDomain:
    """Open box ``(lower, upper)`` in action space."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"empty box: lower={lo}, upper={hi}")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, I, margin: float = 0.0) -> np.ndarray:
        I = as_actions(I, self.n)
        return np.all((I > self.lower + margin) & (I < self.upper - margin), axis=-1)

    def contains_box(self, other: "ActionDomain", margin: float = 0.0) -> bool:
        return bool(np.all(other.lower >= self.lower + margin)
                    and np.all(other.upper <= self.upper - margin))

    def shifted(self, offset) -> "ActionDomain":
        offset = as_actions(offset, self.n)
        return ActionDomain(self.lower + offset, self.upper + offset)

    def hull_of_shifts(self, offsets) -> "ActionDomain":
        """Bounding box of all translates ``self + offset``."""
        offsets = np.asarray(offsets, dtype=float).reshape(-1, self.n)
        return ActionDomain(self.lower + offsets.min(axis=0), self.upper + offsets.max(axis=0))

    def grid(self, resolution: int) -> np.ndarray:
        """Uniform tensor grid (endpoints included), shape (resolution**n, n)."""
        axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class TransitionSchedule:
    """Period ``T``, jump times ``tau_0 = 0 < ... < tau_{p-1} < T`` and jump vectors.

    Construction only checks shapes; :func:`validate_schedule` reports on the
    structural invariants.
    """

    period: float
    times: np.ndarray
    jumps: np.ndarray

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        jumps = np.asarray(self.jumps, dtype=float)
        if jumps.ndim == 1:
            jumps = jumps[:, None]
        if times.ndim != 1 or jumps.ndim != 2 or jumps.shape[0] != times.size:
            raise ValueError("need one jump vector per jump time")
        if times.size == 0:
            raise ValueError("a schedule needs at least tau_0")
        object.__setattr__(self, "period", float(self.period))
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "jumps", _frozen(jumps))

    @classmethod
    def jump_free(cls, n: int, period: float = 1.0) -> "TransitionSchedule":
        return cls(period, [0.0], np.zeros((1, n)))

    @property
    def p(self) -> int:
        return self.times.size

    @property
    def n(self) -> int:
        return self.jumps.shape[1]

    @property
    def durations(self) -> np.ndarray:
        """Segment lengths ``tau_{i+1} - tau_i`` with ``tau_p = T``."""
        return np.diff(np.append(self.times, self.period))

    @property
    def cumulative(self) -> np.ndarray:
        """Cumulative jump sums ``S_k``, shape (p, n)."""
        return np.cumsum(self.jumps, axis=0)


def validate_schedule(schedule: TransitionSchedule) -> ValidationReport:
    """Check ordering, origin and zero-net-jump invariants of a schedule."""
    T, tau, jumps = schedule.period, schedule.times, schedule.jumps
    checks = [Check("period-positive", T > 0, f"T={T!r}")]
    checks.append(Check("tau0-zero", bool(tau[0] == 0.0), f"tau_0={float(tau[0])!r}"))
    checks.append(Check("first-jump-zero", bool(np.all(jumps[0] == 0.0)),
                        f"jump at tau_0={jumps[0].tolist()}"))
    increasing = bool(np.all(np.diff(tau) > 0))
    checks.append(Check("strictly-increasing", increasing, f"times={tau.tolist()}"))
    in_period = bool(tau[-1] < T and tau[0] >= 0)
    checks.append(Check("times-in-period", in_period, f"last time {float(tau[-1])!r} vs T={T!r}"))
    net = float(np.linalg.norm(jumps.sum(axis=0)))
    checks.append(Check("zero-net-jump", net <= NET_JUMP_TOL,
                        f"|sum of jumps|={net:.3e}", value=net))
    return ValidationReport(tuple(checks))


# ---------------------------------------------------------------------------
# frequency fields
# ---------------------------------------------------------------------------

class FrequencyField:
    """Frequency map ``I -> omega(I)`` with gradient access.

    Without an analytic gradient the Jacobian is obtained by central finite
    differences with step ``1e-5 * max(1, |I|)``.
    """

    def __init__(self, n: int, evaluate: Callable, gradient: Optional[Callable] = None,
                 name: str = "callable", params: Optional[dict] = None):
        self.n = int(n)
        self._evaluate = evaluate
        self._gradient = gradient
        self.name = name
        self.params = dict(params or {})

    @property
    def has_analytic_gradient(self) -> bool:
        return self._gradient is not None

    def __call__(self, I) -> np.ndarray:
        return self.evaluate(I)

    def evaluate(self, I) -> np.ndarray:
        I = as_actions(I, self.n)
        out = np.asarray(self._evaluate(I), dtype=float)
        out = np.broadcast_to(out, I.shape)
        if not np.all(np.isfinite(out)):
            raise FrequencyEvaluationError(f"frequency field '{self.name}' is not finite at some actions")
        return out

    def gradient(self, I) -> np.ndarray:
        """Jacobian ``d omega_i / d I_j``, shape (..., n, n)."""
        I = as_actions(I, self.n)
        if self._gradient is not None:
            out = np.asarray(self._gradient(I), dtype=float)
            return np.broadcast_to(out, I.shape + (self.n,))
        return self.finite_difference_gradient(I)

    def finite_difference_gradient(self, I, step: float = 1e-5) -> np.ndarray:
        I = as_actions(I, self.n)
        h = step * np.maximum(1.0, np.linalg.norm(I, axis=-1))[..., None]
        cols = []
        for j in range(self.n):
            e = np.zeros(self.n)
            e[j] = 1.0
            fwd = self.evaluate(I + h * e)
            bwd = self.evaluate(I - h * e)
            cols.append((fwd - bwd) / (2.0 * h))
        return np.stack(cols, axis=-1)

    # registry -----------------------------------------------------------

    @classmethod
    def linear(cls, matrix, offset=None) -> "FrequencyField":
        """``omega(I) = A I + b``."""
        A = np.atleast_2d(np.asarray(matrix, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("linear frequency needs a square matrix")
        b = np.zeros(n) if offset is None else np.atleast_1d(np.asarray(offset, dtype=float))
        return cls(n, lambda I: I @ A.T + b, lambda I: np.broadcast_to(A, I.shape + (n,)),
                   name="linear", params={"matrix": A.tolist(), "offset": b.tolist()})

    @classmethod
    def constant(cls, value) -> "FrequencyField":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        n = v.size
        return cls(n, lambda I: np.broadcast_to(v, I.shape),
                   lambda I: np.zeros(I.shape + (n,)), name="constant",
                   params={"value": v.tolist()})

    @classmethod
    def separable_polynomial(cls, coefficients: Sequence[Sequence[float]]) -> "FrequencyField":
        """``omega_i(I) = sum_k c[i][k] * I_i**k`` (ascending powers per coordinate)."""
        coeffs = [np.asarray(c, dtype=float) for c in coefficients]
        n = len(coeffs)
        derivs = [np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(1) for c in coeffs]

        def evaluate(I):
            return np.stack([np.polynomial.polynomial.polyval(I[..., i], coeffs[i])
                             for i in range(n)], axis=-1)

        def gradient(I):
            diag = np.stack([np.polynomial.polynomial.polyval(I[..., i], derivs[i])
                             for i in range(n)], axis=-1)
            out = np.zeros(I.shape + (n,))
            idx = np.arange(n)
            out[..., idx, idx] = diag
            return out

        return cls(n, evaluate, gradient, name="separable-polynomial",
                   params={"coefficients": [c.tolist() for c in coeffs]})


# ---------------------------------------------------------------------------
# polynomials in the action variable
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Polynomial:
    """Multivariate polynomial stored as ``((powers, coef), ...)``."""

    terms: tuple[tuple[tuple[int, ...], float], ...]
    n: int

    @classmethod
    def from_spec(cls, spec, n: int) -> "Polynomial":
        """Accept ``[[powers, coef], ...]`` or, for ``n == 1``, ascending coefficients."""
        terms = []
        spec = list(spec)
        if n == 1 and all(np.isscalar(c) for c in spec):
            terms = [((k,), float(c)) for k, c in enumerate(spec) if c != 0]
        else:
            for powers, coef in spec:
                powers = tuple(int(p) for p in np.atleast_1d(powers))
                if len(powers) != n or min(powers) < 0:
                    raise ValueError(f"bad monomial powers {powers} for n={n}")
                terms.append((powers, float(coef)))
        return cls(tuple(terms), n)

    @classmethod
    def constant(cls, c: float, n: int) -> "Polynomial":
        return cls((((0,) * n, float(c)),), n)

    def __call__(self, I) -> np.ndarray:
        I = as_actions(I, self.n)
        out = np.zeros(I.shape[:-1])
        for powers, coef in self.terms:
            mono = np.full(I.shape[:-1], coef)
            for j, pw in enumerate(powers):
                if pw:
                    mono = mono * I[..., j] ** pw
            out = out + mono
        return out

    def sup_bound(self, box: ActionDomain) -> float:
        amax = np.maximum(np.abs(box.lower), np.abs(box.upper))
        return float(sum(abs(c) * np.prod(amax ** np.asarray(p)) for p, c in self.terms))

    def to_spec(self) -> list:
        return [[list(p), c] for p, c in self.terms]


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

class Observable:
    """Bounded continuous observable ``G(I, theta)``.

    Subclasses with closed-form torus Fourier coefficients set
    ``exact_coefficients = True``; everything else falls back to quadrature in
    :mod:`jumpflow.spectral`.
    """

    exact_coefficients = False
    mode_support: Optional[tuple[tuple[int, ...], ...]] = None

    def __init__(self, n: int, evaluate: Callable, bound: Optional[float] = None,
                 name: str = "callable"):
        self.n = int(n)
        self._evaluate = evaluate
        self.bound = bound
        self.name = name

    def evaluate(self, I, theta) -> np.ndarray:
        I = as_actions(I, self.n)
        theta = as_actions(theta, self.n)
        return np.asarray(self._evaluate(I, theta), dtype=float)

    __call__ = evaluate

    def sup_bound(self, box: ActionDomain) -> float:
        if self.bound is None:
            raise ValueError(f"observable '{self.name}' has no declared bound")
        return float(self.bound)

    def fourier_coefficient(self, I, mode) -> np.ndarray:
        raise NotImplementedError("no closed-form coefficients; use spectral.fourier_coefficient")


class TrigPolynomial(Observable):
    """``G(I, theta) = sum_k A_k(I) cos<n_k, theta> + B_k(I) sin<n_k, theta>``.

    Parameters
    ----------
    n : int
        Degrees of freedom.
    terms : iterable of (mode, cos_poly, sin_poly)
        ``mode`` is an integer vector; the polynomials are :class:`Polynomial`
        instances or ``None``.
    """

    exact_coefficients = True

    def __init__(self, n: int, terms: Iterable, name: str = "trigpoly"):
        parsed = []
        for mode, cpoly, spoly in terms:
            mode = tuple(int(m) for m in np.atleast_1d(mode))
            if len(mode) != n:
                raise ValueError(f"mode {mode} does not match n={n}")
            parsed.append((mode, cpoly, spoly))
        self.terms = tuple(parsed)
        support = set()
        for mode, cpoly, spoly in self.terms:
            if any(mode):
                support.add(mode)
                support.add(tuple(-m for m in mode))
            else:
                support.add(mode)
        self.mode_support = tuple(sorted(support))
        super().__init__(n, self._eval, bound=None, name=name)

    @classmethod
    def from_spec(cls, terms_spec, n: int, name: str = "trigpoly") -> "TrigPolynomial":
        terms = []
        for t in terms_spec:
            cpoly = Polynomial.from_spec(t["cos"], n) if t.get("cos") else None
            spoly = Polynomial.from_spec(t["sin"], n) if t.get("sin") else None
            terms.append((t["mode"], cpoly, spoly))
        return cls(n, terms, name=name)

    def to_spec(self) -> list:
        out = []
        for mode, cpoly, spoly in self.terms:
            d = {"mode": list(mode)}
            if cpoly is not None:
                d["cos"] = cpoly.to_spec()
            if spoly is not None:
                d["sin"] = spoly.to_spec()
            out.append(d)
        return out

    def _eval(self, I, theta):
        out = np.zeros(np.broadcast_shapes(I.shape, theta.shape)[:-1])
        for mode, cpoly, spoly in self.terms:
            phase = theta @ np.asarray(mode, dtype=float)
            if cpoly is not None:
                out = out + cpoly(I) * np.cos(phase)
            if spoly is not None and any(mode):
                out = out + spoly(I) * np.sin(phase)
        return out

    def fourier_coefficient(self, I, mode) -> np.ndarray:
        I = as_actions(I, self.n)
        mode = tuple(int(m) for m in np.atleast_1d(mode))
        neg = tuple(-m for m in mode)
        zero = not any(mode)
        out = np.zeros(I.shape[:-1], dtype=complex)
        for tmode, cpoly, spoly in self.terms:
            a = cpoly(I) if cpoly is not None else 0.0
            b = spoly(I) if spoly is not None else 0.0
            if zero:
                if tmode == mode:
                    out = out + a
                continue
            # cos = (e+ + e-)/2, sin = (e+ - e-)/(2i)
            if tmode == mode:
                out = out + (a - 1j * b) / 2.0
            if tmode == neg:
                out = out + (a + 1j * b) / 2.0
        return out

    def sup_bound(self, box: ActionDomain) -> float:
        total = 0.0
        for mode, cpoly, spoly in self.terms:
            if cpoly is not None:
                total += cpoly.sup_bound(box)
            if spoly is not None and any(mode):
                total += spoly.sup_bound(box)
        return total

    def angle_averaged(self) -> "TrigPolynomial":
        """The theta-independent observable ``I -> Gbar(I)``."""
        kept = [(m, c, None) for m, c, s in self.terms if not any(m)]
        if not kept:
            kept = [((0,) * self.n, Polynomial.constant(0.0, self.n), None)]
        return TrigPolynomial(self.n, kept, name=f"{self.name}-averaged")


def trig_observable(n: int, terms: Sequence, name: str = "trigpoly") -> TrigPolynomial:
    """Shorthand: ``terms`` of ``(mode, cos_coeffs, sin_coeffs)`` in :meth:`Polynomial.from_spec` form."""
    parsed = []
    for mode, c, s in terms:
        parsed.append((mode,
                       Polynomial.from_spec(c, n) if c is not None else None,
                       Polynomial.from_spec(s, n) if s is not None else None))
    return TrigPolynomial(n, parsed, name=name)


# ---------------------------------------------------------------------------
# initial densities
# ---------------------------------------------------------------------------

def fork_seed(root: int, index: int) -> np.random.SeedSequence:
    """Independent stream ``index`` derived from ``root``: ``SeedSequence([root, index])``."""
    return np.random.SeedSequence([int(root), int(index)])


class InitialDensity:
    """Joint density ``f0(I, theta)`` on ``Omega x T^n``."""

    exact_coefficients = False
    angle_modes: Optional[tuple[tuple[int, ...], ...]] = None

    def __init__(self, n: int, density: Callable, support_box: ActionDomain,
                 sampler: Optional[Callable] = None, name: str = "callable"):
        self.n = int(n)
        self._density = density
        self.support_box = support_box
        self._sampler = sampler
        self.name = name

    def density(self, I, theta) -> np.ndarray:
        I = as_actions(I, self.n)
        theta = as_actions(theta, self.n)
        return np.asarray(self._density(I, theta), dtype=float)

    __call__ = density

    def sample(self, count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``count`` pairs; returns actions (count, n) and angles (count, n) in [0, 2pi)."""
        if self._sampler is None:
            raise NotImplementedError(f"density '{self.name}' has no sampler")
        rng = np.random.default_rng(seed)
        I, theta = self._sampler(rng, int(count))
        return np.asarray(I, dtype=float), reduce_angle(np.asarray(theta, dtype=float))

    def action_marginal(self, I) -> np.ndarray:
        raise NotImplementedError

    def fourier_coefficient(self, I, mode) -> np.ndarray:
        raise NotImplementedError


def _truncnorm_ppf(u, mean, std, lo, hi):
    from scipy.stats import truncnorm
    a, b = (lo - mean) / std, (hi - mean) / std
    return truncnorm.ppf(u, a, b, loc=mean, scale=std)


class ProductDensity(InitialDensity):
    """``f0(I, theta) = rho(I) * prod_j (1 + kappa_j cos(theta_j - mu_j)) / (2pi)^n``.

    ``rho`` is a product of per-coordinate uniform or truncated Gaussian
    marginals on ``support_box``.  With all ``kappa_j = 0`` the angles are
    uniform.  Sampling is inverse-CDF per coordinate.
    """

    exact_coefficients = True

    def __init__(self, support_box: ActionDomain, kind: str = "uniform",
                 mean=None, std=None, kappa=None, mu=None, name: Optional[str] = None):
        n = support_box.n
        if kind not in ("uniform", "truncated-gaussian"):
            raise ValueError(f"unknown action marginal '{kind}'")
        self.kind = kind
        self.mean = None if mean is None else np.broadcast_to(np.asarray(mean, float), (n,)).copy()
        self.std = None if std is None else np.broadcast_to(np.asarray(std, float), (n,)).copy()
        if kind == "truncated-gaussian" and (self.mean is None or self.std is None or np.any(self.std <= 0)):
            raise ValueError("truncated-gaussian needs mean and positive std")
        self.kappa = np.zeros(n) if kappa is None else np.broadcast_to(np.asarray(kappa, float), (n,)).copy()
        self.mu = np.zeros(n) if mu is None else np.broadcast_to(np.asarray(mu, float), (n,)).copy()
        if np.any(np.abs(self.kappa) > 1):
            raise ValueError("angle modulation needs |kappa| <= 1 for a nonnegative density")
        modes_1d = [(-1, 0, 1) if k != 0 else (0,) for k in self.kappa]
        grids = np.meshgrid(*modes_1d, indexing="ij")
        self.angle_modes = tuple(sorted(tuple(int(v) for v in row)
                                        for row in np.stack([g.ravel() for g in grids], axis=-1)))
        if kind == "truncated-gaussian":
            from scipy.stats import norm
            lo, hi = support_box.lower, support_box.upper
            self._norm_mass = norm.cdf((hi - self.mean) / self.std) - norm.cdf((lo - self.mean) / self.std)
        super().__init__(n, self._joint, support_box, self._draw,
                         name=name or (kind + ("-modulated" if np.any(self.kappa) else "")))

    def shifted(self, offset) -> "ProductDensity":
        """Same law with the action variable translated by ``offset``."""
        offset = as_actions(offset, self.n)
        return ProductDensity(self.support_box.shifted(offset), self.kind,
                              None if self.mean is None else self.mean + offset, self.std,
                              self.kappa, self.mu)

    def with_uniform_angles(self) -> "ProductDensity":
        return ProductDensity(self.support_box, self.kind, self.mean, self.std)

    def action_marginal(self, I) -> np.ndarray:
        I = as_actions(I, self.n)
        lo, hi = self.support_box.lower, self.support_box.upper
        inside = np.all((I >= lo) & (I <= hi), axis=-1)
        if self.kind == "uniform":
            vals = np.full(I.shape[:-1], 1.0 / self.support_box.volume)
        else:
            z = (I - self.mean) / self.std
            per = np.exp(-0.5 * z ** 2) / (np.sqrt(TWO_PI) * self.std * self._norm_mass)
            vals = np.prod(per, axis=-1)
        return np.where(inside, vals, 0.0)

    def angle_factor(self, theta) -> np.ndarray:
        theta = as_actions(theta, self.n)
        return np.prod((1.0 + self.kappa * np.cos(theta - self.mu)) / TWO_PI, axis=-1)

    def _joint(self, I, theta):
        return self.action_marginal(I) * self.angle_factor(theta)

    def fourier_coefficient(self, I, mode) -> np.ndarray:
        mode = np.atleast_1d(np.asarray(mode, dtype=int))
        coef = 1.0 + 0.0j
        for j, m in enumerate(mode):
            if m == 0:
                c = 1.0 / TWO_PI
            elif abs(m) == 1:
                c = self.kappa[j] * np.exp(-1j * m * self.mu[j]) / (2.0 * TWO_PI)
            else:
                c = 0.0
            coef = coef * c
        return self.action_marginal(I) * coef

    def _draw(self, rng, count):
        u = rng.random((count, 2 * self.n))
        lo, hi = self.support_box.lower, self.support_box.upper
        if self.kind == "uniform":
            I = lo + u[:, : self.n] * (hi - lo)
        else:
            I = np.column_stack([_truncnorm_ppf(u[:, j], self.mean[j], self.std[j], lo[j], hi[j])
                                 for j in range(self.n)])
        theta = np.column_stack([_cardioid_ppf(u[:, self.n + j], self.kappa[j], self.mu[j])
                                 for j in range(self.n)])
        return I, theta


def _cardioid_ppf(u, kappa, mu, iterations: int = 64):
    """Inverse CDF of ``(1 + kappa cos(theta - mu)) / 2pi`` on [0, 2pi) by bisection."""
    target = u * TWO_PI
    if kappa == 0:
        return target
    lo = np.zeros_like(target)
    hi = np.full_like(target, TWO_PI)
    offset = kappa * np.sin(-mu)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        cdf = mid + kappa * np.sin(mid - mu) - offset
        below = cdf < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def check_normalization(f0: InitialDensity, action_order: int = 32, angle_points: int = 64) -> float:
    """``|integral of f0 - 1|`` by Gauss-Legendre in I and trapezoid in theta."""
    from .spectral import ActionQuadrature, angle_grid
    quad = ActionQuadrature.gauss_legendre(f0.support_box, action_order)
    theta, w_theta = angle_grid(f0.n, angle_points)
    vals = f0.density(quad.nodes[:, None, :], theta[None, :, :])
    total = float(np.sum(quad.weights[:, None] * w_theta[None, :] * vals))
    return abs(total - 1.0)


# ---------------------------------------------------------------------------
# phase points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhasePoint:
    """State ``(I, theta)``; angles are stored reduced to [0, 2pi).

    Both arrays may carry leading batch axes.
    """

    action: np.ndarray
    angle: np.ndarray = field(default=None)

    def __post_init__(self):
        action = np.atleast_1d(np.asarray(self.action, dtype=float))
        angle = np.zeros_like(action) if self.angle is None else np.asarray(self.angle, dtype=float)
        angle = np.broadcast_to(angle, action.shape) if angle.ndim < action.ndim else angle
        if angle.shape != action.shape:
            raise ValueError("action and angle shapes differ")
        object.__setattr__(self, "action", action)
        object.__setattr__(self, "angle", reduce_angle(angle))

    @property
    def n(self) -> int:
        return self.action.shape[-1]


# ---------------------------------------------------------------------------
# hypotheses
# ---------------------------------------------------------------------------

def smallest_singular_values(jac: np.ndarray) -> np.ndarray:
    return np.linalg.svd(jac, compute_uv=False)[..., -1]


def validate_hypotheses(schedule: TransitionSchedule, field: FrequencyField,
                        domain: ActionDomain, grid_resolution: int = 21) -> ValidationReport:
    """Check that the per-period average frequency has no critical points on ``domain``.

    The gradient of ``omega_bar_T`` is sampled on a uniform grid; grid points
    whose smallest singular value is ``<= 1e-10`` are flagged.
    """
    from .flow import FlowContext, period_angle_shift_gradient

    ctx = FlowContext(schedule, field)
    grid = domain.grid(grid_resolution)
    jac = period_angle_shift_gradient(grid, ctx) / schedule.period
    sv = smallest_singular_values(jac)
    bad = sv <= CRITICAL_TOL
    detail = f"min singular value {sv.min():.6g} over {grid.shape[0]} grid points"
    if bad.any():
        detail += f"; {int(bad.sum())} critical points, first at {grid[bad][0].tolist()}"
    return ValidationReport((Check("no-critical-points", not bad.any(), detail, value=float(sv.min())),))

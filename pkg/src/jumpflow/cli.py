"""Command line entry point: ``validate``, ``simulate`` and ``verify``.

Exit codes: 0 pass, 1 criterion or validation failure, 2 configuration
error, 3 disagreement between the Fourier and sampling backends.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from .almostperiodic import check_boundedness, validate_ap_condition, verify_theorem_5_1
from .config import ConfigError, RunConfig, load_config
from .flow import FlowContext
from .model import SUPPORT_MARGIN, Check, ValidationReport, check_normalization, validate_hypotheses, validate_schedule
from .montecarlo import SampleCloud, doubling_ladder, expectation_mc
from .spectral import default_modes, expectation_fourier, resolved_quadrature
from .theorems import (LimitReport, WeakConvergenceReport, rl_segment_amplitudes,
                       rl_time_average_demo, diverges, verify_theorem_4_1,
                       verify_theorem_4_2)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 1, 2, 3
BOUNDEDNESS_STEPS = 10 ** 5


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _plain(obj):
    """Convert numpy scalars and containers to JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_plain(obj.real), _plain(obj.imag)]
    return obj


def to_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def _num(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    v = float(x)
    if not math.isfinite(v):
        raise ValueError(f"refusing to write non-finite value {v!r}")
    return repr(v)


def to_csv(header: str, rows) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join("" if v is None else _num(v) for v in row))
    return "\n".join(lines) + "\n"


def _table(headers, rows) -> str:
    cells = [list(headers)] + [["" if v is None else (f"{v:.6g}" if isinstance(v, float) else str(v)) for v in r]
                               for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(headers))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells) + "\n"


class Emitter:
    """Writes named artifacts to ``out`` or, without a directory, the JSON report to stdout."""

    def __init__(self, out: Optional[str], stdout=None):
        self.out = out
        self.stdout = stdout or sys.stdout
        if out:
            os.makedirs(out, exist_ok=True)

    def write(self, name: str, text: str):
        if self.out:
            with open(os.path.join(self.out, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)

    def report(self, name: str, payload: dict, human: str):
        self.write(name + ".json", to_json(payload))
        if self.out:
            self.write(name + ".txt", human)
            self.stdout.write(human)
        else:
            self.stdout.write(to_json(payload))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _context(cfg: RunConfig) -> FlowContext:
    if cfg.schedule is None:
        raise ConfigError("$.schedule", "this command needs a periodic schedule")
    return FlowContext(cfg.schedule, cfg.field)


def validation_report(cfg: RunConfig) -> ValidationReport:
    res = cfg.numerics["grid_resolution"]
    norm = check_normalization(cfg.density)
    box = cfg.density.support_box
    checks = ValidationReport((
        Check("density-normalized", norm <= 1e-8, f"|mass - 1| = {norm:.3e}", norm),
        Check("support-inside-domain", cfg.domain.contains_box(box, SUPPORT_MARGIN),
              f"support [{box.lower.tolist()}, {box.upper.tolist()}] with margin {SUPPORT_MARGIN}"),
    ))
    if cfg.schedule is not None:
        report = validate_schedule(cfg.schedule)
        if report["period-positive"].passed and report["strictly-increasing"].passed:
            report = report.merged(validate_hypotheses(cfg.schedule, cfg.field, cfg.domain, res))
        return report.merged(checks)
    seq = cfg.sequence
    worst = check_boundedness(seq, BOUNDEDNESS_STEPS)
    bounded = Check("bounded-sequence", worst <= seq.bound + 1e-12,
                    f"max |c(k)| = {worst:.6g} for k <= {BOUNDEDNESS_STEPS}, bound {seq.bound:.6g}", worst)
    report = ValidationReport((bounded,)).merged(
        validate_ap_condition(seq, cfg.field, cfg.domain, cfg.numerics["probe_N"], res))
    return report.merged(checks)


def cmd_validate(cfg: RunConfig, args, emit: Emitter) -> int:
    report = validation_report(cfg)
    rows = [(c.name, "pass" if c.passed else "FAIL", c.detail) for c in report.checks]
    emit.report("validate", {"ok": report.ok, **report.to_dict()}, _table(("check", "result", "detail"), rows))
    return EXIT_PASS if report.ok else EXIT_FAIL


def simulate_rows(cfg: RunConfig) -> tuple[list, bool]:
    """Rows ``(t, mc, mc_stderr, fourier)`` and whether the backends diverge beyond 5 sigma."""
    ctx = _context(cfg)
    G = next(iter(cfg.observables.values()))
    grid = cfg.numerics["t_grid"]
    ts = np.linspace(grid["start"], grid["stop"], grid["count"])
    backends = cfg.backends
    fourier = mc = None
    if "fourier" in backends:
        modes = default_modes(G, cfg.density, cfg.numerics["cutoff"])
        quad = resolved_quadrature(cfg.density.support_box, ctx, float(ts.max()), modes)
        fourier = [expectation_fourier(G, cfg.density, float(t), ctx, modes, quad) for t in ts]
    if "mc" in backends:
        cloud = SampleCloud.draw(cfg.density, cfg.numerics["samples"], cfg.numerics["seed"])
        mc = [expectation_mc(G, cloud, float(t), ctx) for t in ts]
    rows, diverged = [], False
    for i, t in enumerate(ts):
        m, s = mc[i] if mc else (None, None)
        f = fourier[i] if fourier else None
        if m is not None and f is not None:
            diverged |= diverges(m, f, s)
        rows.append((float(t), m, s, f))
    return rows, diverged


def cmd_simulate(cfg: RunConfig, args, emit: Emitter) -> int:
    if not validation_report(cfg).ok:
        sys.stderr.write("validation failed; run 'validate' for details\n")
        return EXIT_FAIL
    rows, diverged = simulate_rows(cfg)
    text = to_csv("t,mc,mc_stderr,fourier", rows)
    if emit.out:
        emit.write("simulate.csv", text)
    else:
        emit.stdout.write(text)
    if diverged:
        sys.stderr.write("oracle divergence: backends disagree beyond 5 sigma\n")
        return EXIT_DIVERGENCE
    return EXIT_PASS


def _limit_text(report: LimitReport) -> str:
    rows = []
    for b, c in report.curves.items():
        rows += [(b, r[0], float(r[1]), float(r[2]), float(r[3])) for r in c.rows]
    head = (f"{report.label}: {report.status}  limit={report.theoretical_limit:.10g}  "
            f"final_error={report.final_error:.3e}\n")
    return head + _table(("backend", "l", "time_average", "abs_error", "stderr"), rows)


def _emit_curves(emit: Emitter, stem: str, report: LimitReport):
    for b, c in report.curves.items():
        emit.write(f"{stem}-{b}.csv", to_csv("l,time_average,abs_error", [(r[0], r[1], r[2]) for r in c.rows]))


def _finish(passed: bool, diverged: bool, negative: bool) -> tuple[int, str]:
    if diverged:
        return EXIT_DIVERGENCE, "oracle divergence"
    if negative:
        return (EXIT_PASS, "expected-fail confirmed") if not passed else (EXIT_FAIL, "negative control converged")
    return (EXIT_PASS, "pass") if passed else (EXIT_FAIL, "fail")


def cmd_verify(cfg: RunConfig, args, emit: Emitter) -> int:
    num = cfg.numerics
    which = args.which
    negative = args.negative_control
    common = dict(backends=cfg.backends, samples=num["samples"], seed=num["seed"], order=num["time_order"],
                  grid_resolution=num["grid_resolution"], domain=cfg.domain)
    if which in ("4.1", "4.2"):
        ctx = _context(cfg)
        l_values = num.get("l_values") or doubling_ladder(num["l_max"])
        if which == "4.1":
            name, G = next(iter(cfg.observables.items()))
            report = verify_theorem_4_1(G, cfg.density, ctx, max(l_values), l_values=l_values, label=name,
                                        **common)
            # the negative control is judged on convergence alone
            passed = report.converged if negative else report.passed
            code, status = _finish(passed, report.oracle_divergence, negative)
            _emit_curves(emit, "curve-4.1", report)
            emit.report("verify-4.1", {"which": which, "result": status, **report.to_dict()},
                        f"verify 4.1: {status}\n" + _limit_text(report))
            return code
        weak: WeakConvergenceReport = verify_theorem_4_2(cfg.density, ctx, cfg.observables, max(l_values),
                                                         l_values=l_values, **common)
        passed = weak.converged if negative else weak.passed
        code, status = _finish(passed, weak.oracle_divergence, negative)
        for name, rep in weak.reports.items():
            _emit_curves(emit, f"curve-4.2-{name}", rep)
        emit.report("verify-4.2", {"which": which, "result": status, **weak.to_dict()},
                    f"verify 4.2: {status}\n" + "".join(_limit_text(r) for r in weak.reports.values()))
        return code
    if which == "5.1":
        if cfg.sequence is None:
            raise ConfigError("$.almost_periodic", "verify 5.1 needs an almost-periodic sequence")
        name, G = next(iter(cfg.observables.items()))
        report = verify_theorem_5_1(G, cfg.density, cfg.sequence, cfg.field, num["N_values"], limit=cfg.limit,
                                    probe_N=num["probe_N"], label=name, **common)
        passed = report.converged if negative else report.passed
        code, status = _finish(passed, report.oracle_divergence, negative)
        _emit_curves(emit, "curve-5.1", report)
        emit.report("verify-5.1", {"which": which, "result": status, **report.to_dict()},
                    f"verify 5.1: {status}\n" + _limit_text(report))
        return code
    # rl
    ctx = _context(cfg)
    G = next(iter(cfg.observables.values()))
    mode = num.get("rl_mode") or [1] + [0] * (cfg.n - 1)
    amps = rl_segment_amplitudes(G, mode, cfg.density, ctx)
    table = rl_time_average_demo(amps, ctx, num["rl_l_values"], cfg.density.support_box, num["time_order"])
    ls = [r[0] for r in table.rows]
    ratio = table.ratio(ls[0], ls[-1])
    decayed = ratio >= num["rl_factor"]
    code, status = _finish(decayed, False, negative)
    mags = table.magnitudes
    rows = [(int(l) if float(l).is_integer() else l, m, m) for l, m in zip(ls, mags)]
    emit.write("curve-rl.csv", to_csv("l,time_average,abs_error", rows))
    payload = {"which": "rl", "result": status, "decay_ratio": ratio, "required_ratio": num["rl_factor"],
               "mode": list(mode), "rows": table.to_rows()}
    emit.report("verify-rl", payload, f"verify rl: {status}  ratio={ratio:.6g}\n"
                + _table(("l", "abs_average"), [(l, float(m)) for l, m in zip(ls, mags)]))
    return code


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jumpflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--backend", choices=("mc", "fourier", "both"), help="override the configured backend")
        p.add_argument("--seed", type=int, help="override the sampling seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory; without it the JSON report goes to stdout")
        p.add_argument("--negative-control", action="store_true",
                       help="expect the convergence criterion to fail")
        return p

    common(sub.add_parser("validate", help="check schedule, density and frequency hypotheses"))
    common(sub.add_parser("simulate", help="ensemble average on the configured time grid"))
    v = common(sub.add_parser("verify", help="run a convergence driver"))
    v.add_argument("which", choices=("4.1", "4.2", "5.1", "rl"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.backend:
            cfg.backend = args.backend
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed", "seed must be an unsigned 64-bit integer")
            cfg.numerics["seed"] = args.seed
        emit = Emitter(args.out or cfg.output_dir)
        handler = {"validate": cmd_validate, "simulate": cmd_simulate, "verify": cmd_verify}[args.command]
        return handler(cfg, args, emit)
    except ConfigError as exc:
        sys.stderr.write(f"config error at {exc.location}: {exc.message}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Usage::

    python -m polydecay <command> --config exp.ini [--out DIR] [--seed N] [--quiet]

Commands: validate, rays, simulate, decay-fit, packets-verify, lemma-check,
observability.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure, 4 a check reported by the command failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .decay import (
    DecayError,
    EnergyTrace,
    LemmaError,
    LemmaParams,
    ObservabilityError,
    classify_halving,
    fit_power_law,
    lemma_b_verify,
    observability_ratio,
    synthetic_lemma_family,
)
from .experiments import random_smooth, simulate
from .fdtd import FdtdError, InstabilityError
from .geometry import GeometryError
from .packets import PacketError, identity_suite
from .rays import RayError, gcc_check
from .spectral import ModalState, SpectralError, build_basis
from .svgplot import PlotError, emit_plot

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4
COMMANDS = ("validate", "rays", "simulate", "decay-fit", "packets-verify", "lemma-check",
            "observability")


class CheckFailed(RuntimeError):
    def __init__(self, message: str, payload: dict):
        super().__init__(message)
        self.payload = payload


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def dump_json(data) -> str:
    return json.dumps(_plain(data), sort_keys=True, indent=2) + "\n"


def _envelope(command: str, cfg: ExperimentConfig | None, result) -> dict:
    return {
        "schema": f"polydecay.{command}/1",
        "version": __version__,
        "config_hash": cfg.digest() if cfg is not None else None,
        "seed": cfg.run.seed if cfg is not None else None,
        "result": result,
    }


def _write(out_dir: str, name: str, text: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                    for v in row])
    return buf.getvalue()


def trace_csv(trace: EnergyTrace) -> str:
    """Columns ``t, energy, dissipation`` (dissipation empty when absent)."""
    rows = [(t, e, None if math.isnan(d) else d) for t, e, d in trace.rows()]
    return _csv_text(["t", "energy", "dissipation"], rows)


def read_trace_csv(path) -> EnergyTrace:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DecayError(f"trace file {path} has no rows")
    try:
        t = [float(r["t"]) for r in rows]
        e = [float(r["energy"]) for r in rows]
        d = [r.get("dissipation", "") for r in rows]
        diss = None if any(v in ("", None) for v in d) else [float(v) for v in d]
    except (KeyError, TypeError, ValueError) as exc:
        raise DecayError(f"trace file {path}: bad column or value ({exc})") from exc
    return EnergyTrace(np.array(t), np.array(e), None if diss is None else np.array(diss))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(cfg, args):
    spec = cfg.domain_spec()
    result = {
        "dim": spec.dim, "half_sizes": list(spec.half_sizes), "collar": spec.collar,
        "h_o": spec.h_o, "diameter": spec.diameter, "volume": spec.volume,
        "omega0": [list(b) for b in spec.omega0_box()],
        "damping": {"profile": cfg.damping.profile, "alpha_max": cfg.damping.alpha_max,
                    "support": cfg.damping.support},
        "solver": cfg.solver.kind, "horizon": cfg.horizon(),
    }
    return {"validate.json": dump_json(_envelope("validate", cfg, result))}, result


def cmd_rays(cfg, args):
    spec = cfg.domain_spec()
    a = cfg.analysis
    T = cfg.horizon()
    report = gcc_check(spec, a.region, T, a.positions, a.directions, cfg.run.seed)
    trapped = gcc_check(spec, "omega", 1e4, min(a.positions, 100), 0, cfg.run.seed,
                        within="omega0")
    dim = spec.dim
    header = [f"x{i + 1}" for i in range(dim)] + [f"d{i + 1}" for i in range(dim)] + \
        ["first_hit_time", "reflections"]
    rows = [tuple(p) + tuple(d) + (hit, refl) for p, d, hit, refl in report.records]
    result = {"region": a.region, "T_max": T, **report.to_dict(),
              "vertical_from_omega0_into_omega": {"sample_count": trapped.sample_count,
                                                  "controlled_fraction": trapped.controlled_fraction,
                                                  "T_max": 1e4}}
    return {"rays.csv": _csv_text(header, rows),
            "rays.json": dump_json(_envelope("rays", cfg, result))}, result


def cmd_simulate(cfg, args):
    trace = simulate(cfg)
    result = {"kind": cfg.solver.kind, "records": len(trace), "E0": trace.energies[0],
              "E_final": trace.energies[-1],
              "max_balance_residual": float(np.max(np.abs(trace.balance_residual())))}
    return {"trace.csv": trace_csv(trace),
            "simulate.json": dump_json(_envelope("simulate", cfg, result)),
            "trace.svg": emit_plot(trace, title="energy")}, result


def cmd_decay_fit(cfg, args):
    trace = read_trace_csv(args.trace) if args.trace else simulate(cfg)
    fit = fit_power_law(trace, cfg.analysis.fit_window)
    halving = classify_halving(trace, after=cfg.analysis.transient)
    result = {"fit": fit.to_dict(), "halving": halving.to_dict(),
              "envelope_bounds_window": bool(np.all(
                  fit.envelope(trace.times[(trace.times >= fit.window[0]) & (trace.times <= fit.window[1])])
                  >= trace.energies[(trace.times >= fit.window[0]) & (trace.times <= fit.window[1])]))}
    files = {"fit.json": dump_json(_envelope("decay-fit", cfg, result)),
             "fit.svg": emit_plot(trace, fit, log_log=True, title="power-law fit")}
    if not args.trace:
        files["trace.csv"] = trace_csv(trace)
    return files, result


def cmd_packets_verify(cfg, args):
    suite = identity_suite(cfg.run.seed)
    payload = {"identities": suite, "all_passed": all(v["passed"] for v in suite.values())}
    files = {"packets.json": dump_json(_envelope("packets-verify", cfg, payload))}
    if not payload["all_passed"]:
        raise CheckFailed("packet identity suite failed", files)
    return files, payload


def lemma_suite(seed: int, count: int = 20):
    rng = np.random.default_rng(seed)
    grid = np.concatenate([np.linspace(0, 4, 401), np.geomspace(4.01, 1e7, 6000)])
    t_grid = np.linspace(2, 100, 197)
    cases = []
    for _ in range(count):
        k = float(rng.uniform(0.2, 3))
        p = float(rng.uniform(0.3, 2))
        c2 = float(rng.uniform(0.2, 2))
        beta = float(rng.uniform(0.2, 3))
        F, params = synthetic_lemma_family(k, p, c2, beta)
        rep = lemma_b_verify(F, params, grid, t_grid)
        cases.append({"k": k, "p": p,
                      "params": {"c1": params.c1, "c2": params.c2, "beta": params.beta,
                                 "gamma": params.gamma},
                      "report": rep.to_dict()})
    const = lemma_b_verify(np.ones_like, LemmaParams(2.0, 1.0, 1.0, 1.0), grid, t_grid)
    ok = all(c["report"]["hypothesis_holds"] and c["report"]["conclusion_violations"] == 0
             and c["report"]["conclusion_checked"] > 0 for c in cases)
    counter_ok = (not const.hypothesis_holds) and not const.conclusion_asserted
    return {"synthetic": cases, "constant_fixture": const.to_dict(),
            "synthetic_ok": ok, "constant_flagged": counter_ok}


def cmd_lemma_check(cfg, args):
    payload = lemma_suite(cfg.run.seed)
    files = {"lemma.json": dump_json(_envelope("lemma-check", cfg, payload))}
    if not (payload["synthetic_ok"] and payload["constant_flagged"]):
        raise CheckFailed("lemma check failed", files)
    return files, payload


def cmd_observability(cfg, args):
    spec = cfg.domain_spec()
    basis = build_basis(spec, cfg.solver.N)
    mu1 = float(basis.eigenvalues[0])
    T1 = 2 * math.pi / math.sqrt(mu1)
    single = observability_ratio(ModalState.unit(basis, 0), "box", T1)
    expected = math.sqrt(mu1) / math.pi
    T = cfg.horizon()
    rng = np.random.default_rng(cfg.run.seed)
    seeds = rng.integers(0, 2**63 - 1, size=cfg.analysis.family_size)
    ratios = [observability_ratio(random_smooth(basis, int(s), cfg.initial.modes),
                                  cfg.analysis.region, T) for s in seeds]
    ratios = np.asarray(ratios)
    median = float(np.median(ratios))
    payload = {"single_mode": {"ratio": single, "expected": expected,
                               "relative_error": abs(single - expected) / expected},
               "family": {"region": cfg.analysis.region, "T": T, "size": len(ratios),
                          "median": median, "max": float(ratios.max()), "min": float(ratios.min()),
                          "ratios": ratios}}
    ok = (payload["single_mode"]["relative_error"] <= 1e-6 and np.all(np.isfinite(ratios))
          and float(ratios.max()) <= 10 * median)
    payload["passed"] = bool(ok)
    files = {"observability.json": dump_json(_envelope("observability", cfg, payload))}
    if not ok:
        raise CheckFailed("observability check failed", files)
    return files, payload


HANDLERS = {
    "validate": cmd_validate,
    "rays": cmd_rays,
    "simulate": cmd_simulate,
    "decay-fit": cmd_decay_fit,
    "packets-verify": cmd_packets_verify,
    "lemma-check": cmd_lemma_check,
    "observability": cmd_observability,
}

CONFIG_ERRORS = (ConfigError, GeometryError, FdtdError, OSError)
NUMERICAL_ERRORS = (SpectralError, InstabilityError, DecayError, ObservabilityError, LemmaError,
                    PacketError, RayError, PlotError, ArithmeticError, np.linalg.LinAlgError)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polydecay", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.add_argument("--quiet", action="store_true", help="no summary on stdout")
    p.add_argument("--trace", default=None, help="decay-fit: read this trace CSV instead of simulating")
    return p


def _error_record(command, code, exc, cfg=None):
    rec = {"schema": "polydecay.error/1", "version": __version__, "command": command,
           "exit_code": code, "error_type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        rec["errors"] = [{"path": p, "message": m} for p, m in exc.errors]
    if cfg is not None:
        rec["config_hash"] = cfg.digest()
    return rec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = None
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError([("--seed", "must be an unsigned 64-bit integer")])
            cfg = cfg.with_seed(args.seed)
        files, summary = HANDLERS[args.command](cfg, args)
        code = EXIT_OK
    except CheckFailed as exc:
        files, summary, code = exc.payload, {"failed": str(exc)}, EXIT_CHECK
    except CONFIG_ERRORS as exc:
        files, summary, code = {}, None, EXIT_CONFIG
        err = _error_record(args.command, code, exc, cfg)
    except NUMERICAL_ERRORS as exc:
        files, summary, code = {}, None, EXIT_NUMERICAL
        err = _error_record(args.command, code, exc, cfg)
    if summary is None:
        text = dump_json(err)
        _write(args.out, "error.json", text)
        sys.stderr.write(text)
        return code
    for name, text in sorted(files.items()):
        _write(args.out, name, text)
    if not args.quiet:
        brief = {k: v for k, v in _plain(summary).items() if not isinstance(v, (list, dict))} \
            if isinstance(summary, dict) else summary
        sys.stdout.write(json.dumps({"command": args.command, "exit_code": code, "outputs": sorted(files),
                                     "summary": brief}, sort_keys=True) + "\n")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

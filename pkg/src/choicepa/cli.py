"""``choicepa simulate | predict | verify | sweep``.

Exit codes: 0 success (all verdicts pass), 1 verification failure,
2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from . import config as cfgmod
from .config import ConfigError
from .harness import (EnsembleSpec, aggregate, cross_validate_samplers, json_safe,
                      params_to_dict, persist, regime_verdicts, run_traces)
from .model import validate
from .theory import classify_regime, predict

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("choicepa")


def _dump(doc: dict) -> str:
    return json.dumps(json_safe(doc), sort_keys=True, indent=2, ensure_ascii=False,
                      allow_nan=False) + "\n"


def _checked_params(cfg: dict):
    params = cfgmod.params_from(cfg)
    report = validate(params)
    if not report.valid:
        raise ConfigError("; ".join(report.violations))
    for w in report.warnings:
        log.warning(w)
    return params


def do_simulate(cfg: dict, out: Path, jobs: int) -> int:
    _checked_params(cfg)
    spec = cfgmod.spec_from(cfg, jobs)
    report = aggregate(run_traces(spec), spec)
    run_dir = persist(report, out, cfg)
    summary = {
        "config": cfg, "version": __version__, "seed": spec.params.seed,
        "params": params_to_dict(spec.params), "prediction": report.prediction,
        "final": [t.final() for t in report.traces], "deltas": report.deltas,
        "regression": report.regression, "failures": report.failures,
    }
    (run_dir / "summary.json").write_text(_dump(summary))
    log.info("wrote %s", run_dir)
    return EXIT_RUNTIME if report.partial else EXIT_OK


def do_predict(cfg: dict, out: Path | None) -> int:
    params = _checked_params(cfg)
    doc = {"config": cfg, "version": __version__, "prediction": predict(params).to_dict()}
    text = _dump(doc)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "prediction.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def do_verify(cfg: dict, out: Path, jobs: int) -> int:
    params = _checked_params(cfg)
    tol = cfgmod.tolerances_from(cfg)
    spec = cfgmod.spec_from(cfg, jobs)
    report = aggregate(run_traces(spec), spec)
    if report.checkpoints:
        report.verdicts.extend(regime_verdicts(report, spec, tol))
    v = cfg["verify"]
    if v["cross_validate"]:
        report.verdicts.extend(cross_validate_samplers(
            params, min(v["cv_horizon"], params.horizon), v["cv_replicates"], v["cv_draws"],
            tol, jobs=jobs))
    run_dir = persist(report, out, cfg)
    for verdict in report.verdicts:
        log.info(verdict.line())
    log.info("wrote %s", run_dir)
    if report.partial:
        return EXIT_RUNTIME
    return EXIT_OK if report.passed else EXIT_FAIL


def do_sweep(cfg: dict, out: Path, jobs: int) -> int:
    points = cfgmod.sweep_points(cfg)
    action = cfg["sweep"]["action"]
    if action not in ("simulate", "verify"):
        raise ConfigError(f"sweep.action must be simulate or verify, got {action!r}")
    if action == "verify" and "verify" not in cfg:
        raise ConfigError("sweep.action = verify needs a [verify] section")
    index = {"config": cfg, "version": __version__, "points": []}
    worst = EXIT_OK
    for point in points:
        entry = {"alpha": point["model"]["alpha"], "gamma": point["model"]["gamma"],
                 "c_d": point["model"]["c_d"], "m_dist": point["m_dist"]}
        try:
            entry["regime"] = classify_regime(point["model"]["alpha"], point["model"]["gamma"]).value
            spec = cfgmod.spec_from(point, jobs)
            entry["path"] = spec.content_hash()
            code = (do_verify if action == "verify" else do_simulate)(point, out, jobs)
        except ConfigError as exc:
            code, entry["error"] = EXIT_CONFIG, exc.message
        except Exception as exc:  # noqa: BLE001 - one bad point must not stop the sweep
            code, entry["error"] = EXIT_RUNTIME, f"{type(exc).__name__}: {exc}"
        entry["exit_code"] = code
        index["points"].append(entry)
        if code != EXIT_OK:
            worst = code if worst == EXIT_OK else max(worst, code)
    out.mkdir(parents=True, exist_ok=True)
    (out / "index.json").write_text(_dump(index))
    return worst


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="choicepa", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "predict", "verify", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None if name == "predict" else Path("out"))
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    need = ("verify",) if args.command == "verify" else ()
    try:
        cfg = cfgmod.load(args.config, args.overrides, need)
        if args.command == "simulate":
            return do_simulate(cfg, args.out, args.jobs)
        if args.command == "predict":
            return do_predict(cfg, args.out)
        if args.command == "verify":
            return do_verify(cfg, args.out, args.jobs)
        return do_sweep(cfg, args.out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MemoryError, RuntimeError, OSError) as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


__all__ = ["main", "build_parser", "EnsembleSpec"]

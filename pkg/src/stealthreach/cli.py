"""Command line entry point: ``stealthreach {reach,validate,risk} --config FILE``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import records
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DivergenceError
from .estimator import DetectorConfig
from .experiments import containment, risk_series
from .reach import run_sra
from .scenario import sample_stealth_attacks

LOG_ENV = "STEALTHREACH_LOG_LEVEL"
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 2, 3

log = logging.getLogger("stealthreach")


def _suffix(fmt: str) -> str:
    return ".jsonl" if fmt == "records" else ".csv"


def cmd_reach(cfg: ExperimentConfig, out: Path, fmt: str) -> Path:
    fp = run_sra(cfg.x0, cfg.P0, cfg.model, cfg.reach)
    text = records.flowpipe_records(fp) if fmt == "records" else records.flowpipe_csv(fp)
    return records.write_text(out / f"flowpipe{_suffix(fmt)}", text)


def cmd_validate(cfg: ExperimentConfig, out: Path, fmt: str) -> Path:
    fp = run_sra(cfg.x0, cfg.P0, cfg.model, cfg.reach)
    traces = sample_stealth_attacks(
        cfg.simulation.traces, cfg.reach.horizon, cfg.simulation.seed, cfg.model, cfg.x0, cfg.P0,
        _detector(cfg),
    )
    rep = containment(fp, traces)
    rows = [{"k": s.k, "t": float(s.t), "fraction": float(f)} for s, f in zip(fp.segments, rep.per_step)]
    log.info("containment %.4f over %d traces (%d alarms)", rep.trajectory_fraction, rep.traces, rep.alarms)
    meta = {"containment": rep.trajectory_fraction, "traces": rep.traces, "alarms": rep.alarms}
    text = records.table_records("validation", rows, meta) if fmt == "records" else records.table_csv(rows)
    return records.write_text(out / f"validation{_suffix(fmt)}", text)


def _detector(cfg: ExperimentConfig) -> DetectorConfig:
    return DetectorConfig(cfg.model.n_y, cfg.estimator.detector_confidence, cfg.reach.detector_threshold)


def cmd_risk(cfg: ExperimentConfig, out: Path, fmt: str, jobs: int = 1) -> Path:
    series = risk_series(
        cfg.model, cfg.x0, cfg.P0, cfg.reach, cfg.field_, cfg.risk.duration, cfg.risk.lookahead,
        cfg.simulation.seed, jobs=jobs,
    )
    rows = []
    for variant, reports in (("attacked", series.attacked), ("attack_free", series.attack_free)):
        for t, r in zip(series.times, reports):
            rows.append({
                "variant": variant, "t": float(t), "total": r.total,
                "zeta": [float(v) for v in r.zeta], "matched_level": [int(v) for v in r.matched_level],
            })
    meta = {"attack_free_threshold": series.attack_free_threshold}
    text = records.table_records("risk", rows, meta) if fmt == "records" else records.table_csv(rows)
    return records.write_text(out / f"risk{_suffix(fmt)}", text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stealthreach", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("reach", "compute the flowpipe"),
        ("validate", "Monte-Carlo containment check of the flowpipe"),
        ("risk", "risk time series along a simulated run"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="YAML or JSON experiment file")
        sp.add_argument("--seed", type=int, help="override simulation.seed")
        sp.add_argument("--out", help="override output.directory")
        sp.add_argument("--format", choices=("records", "csv"), help="override output.format")
        if name == "risk":
            sp.add_argument("--jobs", type=int, default=1, help="worker processes for the per-step flowpipes")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=os.environ.get(LOG_ENV, "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("simulation.seed", "must be >= 0")
            cfg = replace(cfg, simulation=replace(cfg.simulation, seed=args.seed))
        out = Path(args.out or cfg.output.directory)
        fmt = args.format or cfg.output.format
        if args.command == "reach":
            path = cmd_reach(cfg, out, fmt)
        elif args.command == "validate":
            path = cmd_validate(cfg, out, fmt)
        else:
            path = cmd_risk(cfg, out, fmt, max(1, args.jobs))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc} (last valid step {exc.last_valid_step})", file=sys.stderr)
        return EXIT_DIVERGENCE
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

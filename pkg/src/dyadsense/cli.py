"""Command line entry point: ``dyadsense <command> ...``."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from .config import ConfigError, EngineConfig, load_config
from .engine import Engine, run_engine
from .forecast.features import SIGNALS
from .forecast.modelio import ModelFormatError, load_model, model_filename, save_model
from .forecast.train import evaluate_models, history_from_records, train_models
from .records import Annotation, RAW_KINDS, from_record
from .session import (
    LogFormatError,
    compute_metrics,
    metrics_table,
    prepost_analysis,
    prepost_table,
    read_log,
    replay,
    write_log,
)
from .simulator import generate_dyad_streams, load_scenario, random_scenario

log = logging.getLogger("dyadsense")
LOG_LEVEL_ENV = "DYADSENSE_LOG_LEVEL"


class CliError(Exception):
    pass


def load_models(directory: str | os.PathLike) -> dict:
    d = Path(directory)
    models = {}
    for target in SIGNALS:
        path = d / model_filename(target)
        try:
            models[target] = load_model(path)
        except FileNotFoundError:
            raise CliError(f"missing model file {path}") from None
        except ModelFormatError as exc:
            raise CliError(f"cannot load {path}: {exc}") from None
    return models


def _config(args) -> EngineConfig:
    return load_config(args.config) if args.config else EngineConfig.from_flat()


def _models(args, required: bool = False):
    if getattr(args, "no_forecast", False):
        return None
    if args.models:
        return load_models(args.models)
    if required:
        raise CliError("give --models <dir> with four model files, or --no-forecast")
    return None


def _read(path: str):
    try:
        return read_log(path)
    except FileNotFoundError:
        raise CliError(f"no such log: {path}") from None


def cmd_simulate(args) -> int:
    cfg, models = _config(args), _models(args)
    specs = []
    if args.scenario:
        specs.append(load_scenario(args.scenario, args.seed))
    else:
        first = 0 if args.seed is None else args.seed
        specs = [random_scenario(first + k, n_segments=args.segments) for k in range(args.count)]
    out = Path(args.out)
    if len(specs) > 1:
        out.mkdir(parents=True, exist_ok=True)
    for spec in specs:
        path = out / f"session_{spec.seed}.jsonl" if len(specs) > 1 else out
        sim = generate_dyad_streams(spec)
        write_log(run_engine(sim.messages(), cfg, models, f"sim-{spec.seed}"), path)
        truth_path = Path(str(path) + ".truth.jsonl") if args.truth is None or len(specs) > 1 else Path(args.truth)
        truth_path.write_text("".join(json.dumps(g, separators=(",", ":")) + "\n" for g in sim.truth))
        print(f"wrote {path} ({spec.duration_s:.0f} s scored, seed {spec.seed})")
    return 0


def cmd_calibrate(args) -> int:
    session = _read(args.log)
    cfg = _config(args)
    items = [from_record(r) for r in session.records if r["kind"] in RAW_KINDS]
    if args.until is not None:
        end = int(round(args.until * 1000))
        items = [i for i in items if not (isinstance(i, Annotation) and i.label == "calibration_end")]
        items.append(Annotation(end, "calibration_end"))
        items.sort(key=lambda i: i.t)
    out = []

    def keep(rec: dict) -> None:
        if rec["kind"] == "baseline" or (rec["kind"] == "error" and rec.get("source") == "calibration"):
            out.append(rec)

    eng = Engine(cfg, None, keep, session.header.get("session_id", "session"))
    for item in items:
        eng.feed(item)
        if out:
            break
    if out and out[0]["kind"] == "error":
        raise CliError(out[0]["message"])
    if not out:
        raise CliError("no calibration_end marker reached; pass --until SECONDS")
    text = json.dumps(out[0]["entries"], indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    paths = sorted(args.logs)
    if len(paths) < 2:
        raise CliError("need at least two session logs (one is held out)")
    histories = [history_from_records(_read(p).records, cfg.ms("forecast.cadence_s")) for p in paths]
    n_test = max(1, int(round(len(histories) * args.holdout)))
    train, test = histories[:-n_test], histories[-n_test:]
    models = train_models(train, rounds=cfg["forecast.rounds"], learning_rate=cfg["forecast.learning_rate"],
                          max_depth=cfg["forecast.max_depth"], min_samples_leaf=cfg["forecast.min_samples_leaf"],
                          horizon_s=cfg["forecast.horizon_s"], lags=cfg["forecast.lags"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for target, model in models.items():
        save_model(model, out / model_filename(target))
    print(f"trained on {len(train)} sessions, held out {len(test)}")
    print("target,n,mse,persistence_mse,ratio")
    for s in evaluate_models(models, test, cfg["forecast.lags"]).values():
        print(f"{s.target},{s.n},{s.mse:.6f},{s.persistence_mse:.6f},{s.ratio:.3f}")
    return 0


def cmd_replay(args) -> int:
    session = _read(args.log)
    cfg = load_config(args.config) if args.config else None
    result = replay(session, cfg, _models(args))
    print(f"compared {result.compared} records; {len(result.divergences)} divergence(s)"
          + ("; config differs from the log" if result.config_mismatch else "")
          + ("; models differ from the log" if result.models_mismatch else "")
          + (f"; log truncated, {result.unverified} trailing record(s) unverified" if result.unverified else ""))
    for i, orig, new in result.divergences:
        print(f"#{i}\n  logged:   {orig}\n  replayed: {new}")
    return 0 if result.identical else 1


def cmd_analyze(args) -> int:
    chunks = []
    for path in args.logs:
        session = _read(path)
        metrics = compute_metrics(session)
        for w in metrics.warnings:
            print(f"warning: {path}: {w}", file=sys.stderr)
        chunks.append(f"# {path}\n" + metrics_table(metrics, args.delimiter))
        for ind in (["JVA", "JME"] if args.indicator == "both" else [args.indicator]):
            chunks.append(prepost_table(prepost_analysis(session, ind), args.delimiter))
    text = "\n".join(chunks)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_serve(args) -> int:
    from .server import DyadServer

    cfg, models = _config(args), _models(args, required=True)
    host, _, port = args.listen.rpartition(":")
    if not port.isdigit():
        raise CliError(f"--listen expects host:port, got {args.listen!r}")

    async def run():
        server = DyadServer(cfg, models, args.out)
        await server.start(host or "127.0.0.1", int(port))
        await server.serve_forever()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dyadsense", description="Dyad collaboration sensing and feedback engine.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, models=True):
        sp.add_argument("--config", help="flat key=value config file")
        if models:
            sp.add_argument("--models", help="directory with the four .ppgb model files")
            sp.add_argument("--no-forecast", action="store_true", help="policy consumes observed states")

    sp = sub.add_parser("simulate", help="generate synthetic sessions")
    common(sp)
    sp.add_argument("--scenario", help="scenario file (JSON lines); default: random scenarios")
    sp.add_argument("--seed", type=int, help="seed override")
    sp.add_argument("--count", type=int, default=1, help="random scenarios to generate (--out is then a directory)")
    sp.add_argument("--segments", type=int, default=6, help="segments per random scenario")
    sp.add_argument("--truth", help="ground-truth output path (default: <out>.truth.jsonl)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("calibrate", help="compute resting baselines from a session log")
    common(sp, models=False)
    sp.add_argument("log")
    sp.add_argument("--until", type=float, help="end of the resting period in seconds (overrides the marker)")
    sp.add_argument("--out", help="write the baseline profile JSON here")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("train", help="train the four forecasters from session logs")
    common(sp, models=False)
    sp.add_argument("logs", nargs="+")
    sp.add_argument("--holdout", type=float, default=0.25, help="fraction of sessions held out (last by name)")
    sp.add_argument("--out", required=True, help="model directory")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("replay", help="re-run a log through the engine and diff the output")
    common(sp)
    sp.add_argument("log")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("analyze", help="session metrics and pre/post tables")
    sp.add_argument("logs", nargs="+")
    sp.add_argument("--indicator", choices=("JVA", "JME", "both"), default="both")
    sp.add_argument("--delimiter", default=",")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("serve", help="run the streaming service")
    common(sp)
    sp.add_argument("--listen", default="127.0.0.1:7878", help="host:port")
    sp.add_argument("--out", default="sessions", help="directory for session logs")
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_LEVEL_ENV, "WARNING").upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, LogFormatError, ValueError, OSError) as exc:
        print(f"dyadsense {args.command}: error: {exc}", file=sys.stderr)
        return 1

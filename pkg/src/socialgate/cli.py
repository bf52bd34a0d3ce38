"""Command line entry point: ``socialgate <group> <command>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import gbdt, pipeline, sim
from .features import FEATURE_NAMES, FeatureError, dump_traces, window_signals
from .gate import GateConfig, overlay_sidecar, run_stage_one, write_trigger_report
from .ingest import EpisodeFormatError, load_episode

logger = logging.getLogger("socialgate")


# ------------------------------------------------------------- feature files

def save_features(data: gbdt.LabeledSet, path: str | Path) -> None:
    """CSV with a header row: ``label`` then the 21 feature names."""
    table = np.column_stack([data.y, data.X])
    np.savetxt(path, table, delimiter=",", header=",".join(("label",) + FEATURE_NAMES),
               comments="", fmt=["%d"] + ["%.17g"] * len(FEATURE_NAMES))


def load_features(path: str | Path) -> gbdt.LabeledSet:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if tuple(header[1:]) != FEATURE_NAMES or header[0] != "label":
        raise ValueError(f"{path}: unexpected feature header")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return gbdt.LabeledSet(table[:, 1:], table[:, 0].astype(int))


def _gate_config(path: str | None) -> GateConfig:
    if path is None:
        return GateConfig()
    with open(path) as fh:
        obj = json.load(fh)
    return GateConfig(**obj.get("gate", obj))


# ------------------------------------------------------------------ commands

def cmd_sim_gen(args) -> int:
    suite = sim.load_suite(args.suite)
    paths = sim.write_suite(suite, args.out, args.dissent, args.critique, args.k)
    print(f"wrote {len(paths)} episodes and mock scripts to {args.out}")
    return 0


def cmd_gbdt_features(args) -> int:
    if args.suite:
        data = sim.build_training_set(sim.load_suite(args.suite))
    else:
        eps = [load_episode(p) for p in pipeline.episode_paths(args.episodes)]
        data = sim.labeled_windows(eps)
    save_features(data, args.out)
    print(f"wrote {len(data.y)} rows ({int(data.y.sum())} positive) to {args.out}")
    return 0


def cmd_gbdt_train(args) -> int:
    data = load_features(args.features)
    config = gbdt.TrainConfig(args.lr, args.depth, args.rounds, args.min_leaf, args.bins, args.seed)
    if args.cv:
        grid = [gbdt.TrainConfig(args.lr, d, r, args.min_leaf, args.bins, args.seed)
                for d in (3, 5, args.depth) for r in (50, args.rounds)]
        result = gbdt.cross_validate(data, grid, args.cv, args.seed)
        config = result.best
        logger.info("cross-validation picked depth=%d rounds=%d (mean F1 %.3f)",
                    config.max_depth, config.n_iterations, result.mean_f1(config))
    model = gbdt.fit(data, config)
    gbdt.save_model(model, args.out)
    print(f"trained {len(model.trees)} trees on {len(data.y)} rows -> {args.out}")
    return 0


def cmd_gbdt_eval(args) -> int:
    model = gbdt.load_model(args.model)
    m = gbdt.evaluate(model, load_features(args.features), args.threshold)
    out = {"accuracy": m.accuracy, "precision": m.precision, "recall": m.recall,
           "f1": m.f1, "roc_auc": m.roc_auc, "confusion": [list(r) for r in m.confusion]}
    print(json.dumps(out, indent=2))
    return 0


def cmd_gate_run(args) -> int:
    episode = load_episode(args.episode)
    model = gbdt.load_model(args.model)
    config = _gate_config(args.config)
    sink = None
    traces = open(args.dump_traces, "w") if args.dump_traces else None
    if traces is not None:
        first = [True]

        def _dump(window):
            try:
                dump_traces(window_signals(window), traces, header=first[0])
                first[0] = False
            except FeatureError as exc:
                logger.debug("no trace for %s at %.2f: %s", window.track_id, window.start, exc)
        sink = _dump
    try:
        result = run_stage_one(episode, model, config, trace_sink=sink)
    finally:
        if traces is not None:
            traces.close()
    if args.out:
        with open(args.out, "w") as fh:
            write_trigger_report(result, fh)
    else:
        write_trigger_report(result, sys.stdout)
    if args.overlay:
        with open(args.overlay, "w") as fh:
            json.dump(overlay_sidecar(result.all_events), fh)
    return 0


def _overrides(args) -> dict:
    pairs = {"stage_two.strategy": args.strategy, "stage_two.eta": args.eta,
             "stage_two.k": args.k, "stage_two.temperature": args.temperature,
             "backend": args.backend, "mock_root": args.mock_root, "model": args.model}
    return {k: v for k, v in pairs.items() if v is not None}


def cmd_pipeline_run(args) -> int:
    config = pipeline.RunConfig.load(args.config, _overrides(args))
    report, decisions = pipeline.run_pipeline(config)
    text = pipeline.report_text(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(pipeline.report_json(report))
        (out / "report.txt").write_text(text)
        with open(out / "decisions.jsonl", "w") as fh:
            pipeline.write_decisions(decisions, fh)
    print(text, end="")
    return 0


def cmd_pipeline_compare(args) -> int:
    reports = [pipeline.parse_report(Path(p).read_text()) for p in args.reports]
    rows = [
        ("strategy", lambda r: r.strategy),
        ("vlm_calls", lambda r: r.vlm_calls["total"]),
        ("exhaustive_calls", lambda r: r.budget["exhaustive_calls"]),
        ("vlm_requests", lambda r: r.vlm_requests),
        ("two_stage_on_time", lambda r: r.comparison["two_stage"]["on_time"]),
        ("baseline_on_time", lambda r: r.comparison["distance_only"]["on_time"]),
        ("action_accuracy", lambda r: f"{r.action['accuracy']:.3f}"),
    ] + [(f"defer_{p}", (lambda p: lambda r: r.deferrals.get(p, 0))(p))
         for p in ("UncertaintyDeferral", "CritiqueInconclusive")]
    names = [Path(p).parent.name or Path(p).name for p in args.reports]
    width = max(12, *(len(n) for n in names))
    print(f"{'':<28}" + "".join(f"{n:>{width + 2}}" for n in names))
    for label, get in rows:
        print(f"{label:<28}" + "".join(f"{str(get(r)):>{width + 2}}" for r in reports))
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="socialgate", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    # also accept -v after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    groups = p.add_subparsers(dest="group", required=True)

    sim_p = groups.add_parser("sim", help="synthetic scenarios").add_subparsers(dest="cmd", required=True)
    g = sim_p.add_parser("gen", parents=[common], help="write episodes, label sidecars and mock scripts")
    g.add_argument("--suite", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--dissent", type=int, default=0, help="dissenting samples per track")
    g.add_argument("--critique", choices=("resolve", "inconclusive"), default="resolve")
    g.add_argument("--k", type=int, default=5)
    g.set_defaults(func=cmd_sim_gen)

    gb = groups.add_parser("gbdt", help="gaze-shift classifier").add_subparsers(dest="cmd", required=True)
    f = gb.add_parser("features", parents=[common], help="labeled window features as CSV")
    src = f.add_mutually_exclusive_group(required=True)
    src.add_argument("--suite")
    src.add_argument("--episodes", nargs="+")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_gbdt_features)
    t = gb.add_parser("train", parents=[common])
    t.add_argument("--features", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--depth", type=int, default=7)
    t.add_argument("--rounds", type=int, default=100)
    t.add_argument("--min-leaf", type=int, default=8)
    t.add_argument("--bins", type=int, default=64)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--cv", type=int, default=0, metavar="K", help="pick depth/rounds by K-fold CV")
    t.set_defaults(func=cmd_gbdt_train)
    e = gb.add_parser("eval", parents=[common])
    e.add_argument("--features", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--threshold", type=float, default=0.5)
    e.set_defaults(func=cmd_gbdt_eval)

    gate_p = groups.add_parser("gate", help="Stage I replay").add_subparsers(dest="cmd", required=True)
    r = gate_p.add_parser("run", parents=[common])
    r.add_argument("--episode", required=True)
    r.add_argument("--model", required=True)
    r.add_argument("--config", help="JSON with gate settings (a run config works too)")
    r.add_argument("--out", help="trigger report path (default: stdout)")
    r.add_argument("--overlay", help="write the overlay sidecar here")
    r.add_argument("--dump-traces", metavar="CSV", help="per-window signal and velocity traces")
    r.set_defaults(func=cmd_gate_run)

    pl = groups.add_parser("pipeline", help="two-stage replay").add_subparsers(dest="cmd", required=True)
    run = pl.add_parser("run", parents=[common])
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="directory for report.json, report.txt, decisions.jsonl")
    run.add_argument("--strategy", choices=("SelfConsistency", "SelfCritique"))
    run.add_argument("--eta", type=float)
    run.add_argument("--k", type=int)
    run.add_argument("--temperature", type=float)
    run.add_argument("--backend", choices=("mock", "http"))
    run.add_argument("--mock-root")
    run.add_argument("--model")
    run.set_defaults(func=cmd_pipeline_run)
    cmp = pl.add_parser("compare", parents=[common], help="side-by-side table of saved reports")
    cmp.add_argument("reports", nargs="+")
    cmp.set_defaults(func=cmd_pipeline_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except pipeline.ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (EpisodeFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

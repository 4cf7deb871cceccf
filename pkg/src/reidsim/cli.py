"""Command-line front end: generate -> train -> query/bench -> report.

Every subcommand is a pure function of (input files, flags, seed); resolved
configuration is echoed to stderr so runs are reproducible from their logs.
Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import graph as graph_mod
from . import predict as predict_mod
from . import rnn as rnn_mod
from . import search as search_mod
from . import trajgen as trajgen_mod

USAGE_EXIT = 1
DATA_EXIT = 2

DATA_ERRORS = (
    graph_mod.GraphError,
    trajgen_mod.GenerationError,
    predict_mod.ModelError,
    rnn_mod.CheckpointError,
    rnn_mod.TrainingError,
    search_mod.SearchError,
    bench_mod.BenchError,
    OSError,
)

PRESET_ALIASES = {
    "town05": "town05-like",
    "town07": "town07-like",
    "town05-like": "town05-like",
    "town07-like": "town07-like",
    "grid": "grid",
    "geometric": "geometric",
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1 on usage errors, not argparse's 2
        raise _UsageError(message)


def _echo_config(command: str, resolved: dict) -> None:
    printable = {k: v for k, v in sorted(resolved.items()) if not k.startswith("_")}
    print(f"[reidsim] {command} config: {json.dumps(printable, sort_keys=True, default=str)}", file=sys.stderr)


def _resolve(args: argparse.Namespace, defaults: dict, config: dict) -> dict:
    """Merge builtin defaults, config-file values, and explicit flags."""
    resolved = dict(defaults)
    for key in defaults:
        if key in config:
            resolved[key] = config[key]
    for key, value in vars(args).items():
        if key in defaults and value is not None:
            resolved[key] = value
    return resolved


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise trajgen_mod.GenerationError(f"config file {path} must contain an object")
    return payload


def _add_seed(p: argparse.ArgumentParser) -> None:
    # SUPPRESS keeps an absent subcommand flag from clobbering the global
    # --seed value already parsed into the namespace
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed for this subcommand")


def build_parser() -> _Parser:
    parser = _Parser(prog="reidsim", description=__doc__)
    parser.add_argument("--config", help="JSON file of default flag values (flags override)")
    parser.add_argument("--seed", type=int, help="default seed for the subcommand")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="generate a camera graph file")
    p.add_argument("--preset", choices=sorted(PRESET_ALIASES), required=True)
    p.add_argument("--cameras", type=int)
    p.add_argument("--degree", type=float)
    _add_seed(p)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("gen-traj", help="generate ground-truth trajectories")
    p.add_argument("--graph", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--skew", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--dwell-min", type=int, dest="dwell_min")
    p.add_argument("--dwell-max", type=int, dest="dwell_max")
    p.add_argument("--travel-min", type=int, dest="travel_min")
    p.add_argument("--travel-max", type=int, dest="travel_max")
    p.add_argument("--min-path-len", type=int, dest="min_path_len")
    _add_seed(p)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("train", help="fit a predictor model")
    p.add_argument("--model", choices=("mle", "ngram", "rnn"), required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--order", type=int)
    p.add_argument("--smoothing", type=float)
    p.add_argument("--hidden-size", type=int, dest="hidden_size")
    p.add_argument("--embed-size", type=int, dest="embed_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--clip-norm", type=float, dest="clip_norm")
    _add_seed(p)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("eval-predictor", help="top-1 next-camera accuracy on a trajectory file")
    p.add_argument("--graph", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--model-path", dest="model_path", help="fitted model file (omit for uniform)")

    p = sub.add_parser("query", help="run one query with one executor")
    p.add_argument("--graph", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--executor", choices=search_mod.EXECUTOR_NAMES, required=True)
    p.add_argument("--object-id", type=int, dest="object_id", required=True)
    p.add_argument("--window", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--mle-model", dest="mle_model")
    p.add_argument("--rnn-model", dest="rnn_model")
    _add_seed(p)

    p = sub.add_parser("bench", help="run the executor comparison benchmark")
    p.add_argument("--graph", required=True)
    p.add_argument("--traj", required=True, help="test-split trajectory file (query objects)")
    p.add_argument("--executors", help="comma-separated subset of " + ",".join(search_mod.EXECUTOR_NAMES))
    p.add_argument("--queries", type=int, dest="queries")
    p.add_argument("--repeats", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--mle-model", dest="mle_model")
    p.add_argument("--rnn-model", dest="rnn_model")
    p.add_argument("--detector-cost", type=float, dest="detector_cost")
    p.add_argument("--reid-cost", type=float, dest="reid_cost")
    p.add_argument("--occupancy", type=float)
    p.add_argument("--predictor-cost", type=float, dest="predictor_cost")
    p.add_argument("--format", choices=("csv", "jsonl"), dest="fmt")
    p.add_argument("--jobs", type=int)
    _add_seed(p)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("sweep", help="skew or network-size sweep")
    p.add_argument("--kind", choices=("skew", "size"), required=True)
    p.add_argument("--graph", help="graph file (skew sweep)")
    p.add_argument("--skews", help="comma-separated skew values")
    p.add_argument("--sizes", help="comma-separated camera counts")
    p.add_argument("--degree", type=float, help="degree target (size sweep)")
    p.add_argument("--count", type=int, help="trajectories per sweep point")
    p.add_argument("--horizon", type=int)
    p.add_argument("--min-path-len", type=int, dest="min_path_len")
    p.add_argument("--executors")
    p.add_argument("--queries", type=int, dest="queries")
    p.add_argument("--repeats", type=int)
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--jobs", type=int)
    _add_seed(p)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("validate", help="check a data file against its invariants")
    p.add_argument("--kind", choices=("graph", "traj", "model", "report"), required=True)
    p.add_argument("path")
    p.add_argument("--graph", help="graph file for traj/model checks")
    p.add_argument("--horizon", type=int)

    return parser


def _cmd_gen_graph(args, config) -> int:
    defaults = {"preset": None, "cameras": None, "degree": None, "seed": 0, "output": None}
    r = _resolve(args, defaults, config)
    _echo_config("gen-graph", r)
    preset = graph_mod.make_preset(PRESET_ALIASES[r["preset"]], r["cameras"], r["degree"], seed=r["seed"])
    g = graph_mod.build_graph(preset)
    graph_mod.save_graph(g, r["output"])
    print(f"wrote {r['output']}: {g.num_cameras} cameras, {len(g.edges)} edges, avg degree {g.avg_degree:.2f}")
    return 0


def _cmd_gen_traj(args, config) -> int:
    base = trajgen_mod.TrajGenConfig(count=1)
    defaults = {
        "graph": None,
        "count": 1000,
        "skew": base.skew,
        "horizon": base.horizon,
        "dwell_min": base.dwell_min,
        "dwell_max": base.dwell_max,
        "travel_min": base.travel_min,
        "travel_max": base.travel_max,
        "min_path_len": base.min_path_len,
        "seed": 0,
        "output": None,
    }
    r = _resolve(args, defaults, config)
    _echo_config("gen-traj", r)
    g = graph_mod.load_graph(r["graph"])
    cfg = trajgen_mod.TrajGenConfig(
        count=r["count"],
        skew=r["skew"],
        horizon=r["horizon"],
        dwell_min=r["dwell_min"],
        dwell_max=r["dwell_max"],
        travel_min=r["travel_min"],
        travel_max=r["travel_max"],
        min_path_len=r["min_path_len"],
        seed=r["seed"],
    )
    trajs = trajgen_mod.generate_trajectories(g, cfg)
    trajgen_mod.save_trajectories(trajs, r["output"])
    print(
        f"wrote {r['output']}: {len(trajs)} trajectories, "
        f"mean visits {trajgen_mod.mean_visit_count(trajs):.2f}"
    )
    return 0


def _cmd_train(args, config) -> int:
    rnn_base = rnn_mod.RnnConfig()
    defaults = {
        "model": None,
        "graph": None,
        "traj": None,
        "order": predict_mod.DEFAULT_NGRAM_ORDER,
        "smoothing": predict_mod.DEFAULT_SMOOTHING,
        "hidden_size": rnn_base.hidden_size,
        "embed_size": rnn_base.embed_size,
        "learning_rate": rnn_base.learning_rate,
        "batch_size": rnn_base.batch_size,
        "max_epochs": rnn_base.max_epochs,
        "patience": rnn_base.patience,
        "clip_norm": rnn_base.clip_norm,
        "seed": 0,
        "output": None,
    }
    r = _resolve(args, defaults, config)
    _echo_config("train", r)
    g = graph_mod.load_graph(r["graph"])
    trajs = trajgen_mod.load_trajectories(r["traj"])
    trajgen_mod.validate_trajectories(trajs, g)
    if r["model"] == "mle":
        predict_mod.save_model(predict_mod.MlePredictor.fit(g, trajs, smoothing=r["smoothing"]), r["output"])
    elif r["model"] == "ngram":
        predictor = predict_mod.NgramPredictor.fit(g, trajs, order=r["order"], smoothing=r["smoothing"])
        predict_mod.save_model(predictor, r["output"])
    else:
        cfg = rnn_mod.RnnConfig(
            hidden_size=r["hidden_size"],
            embed_size=r["embed_size"],
            learning_rate=r["learning_rate"],
            batch_size=r["batch_size"],
            max_epochs=r["max_epochs"],
            patience=r["patience"],
            clip_norm=r["clip_norm"],
            seed=r["seed"],
        )
        model, report = rnn_mod.train(trajs, g, cfg)
        rnn_mod.save_rnn(model, r["output"], graph_mod.graph_checksum(g))
        print(
            f"trained {report.epochs_run} epochs, best epoch {report.best_epoch}, "
            f"best val accuracy {max(report.val_accuracies):.4f}",
            file=sys.stderr,
        )
    print(f"wrote {r['output']}")
    return 0


def _load_predictor(path: str | None, g):
    if path is None:
        return predict_mod.UniformPredictor(g)
    with open(path, "rb") as fh:
        first_line = fh.readline()
    try:
        header = json.loads(first_line.decode("utf-8"))
        fmt = header.get("format") if isinstance(header, dict) else None
    except (UnicodeDecodeError, json.JSONDecodeError):
        fmt = None
    if fmt == rnn_mod.CHECKPOINT_FORMAT:
        return rnn_mod.RnnPredictor(g, rnn_mod.load_rnn(path, g))
    return predict_mod.load_model(path, g)


def _cmd_eval_predictor(args, config) -> int:
    defaults = {"graph": None, "traj": None, "model_path": None}
    r = _resolve(args, defaults, config)
    _echo_config("eval-predictor", r)
    g = graph_mod.load_graph(r["graph"])
    trajs = trajgen_mod.load_trajectories(r["traj"])
    trajgen_mod.validate_trajectories(trajs, g)
    predictor = _load_predictor(r["model_path"], g)
    acc = predict_mod.predictor_accuracy(predictor, trajs)
    hops = sum(len(t.visits) - 1 for t in trajs)
    print(json.dumps({"accuracy": acc, "hops": hops}, sort_keys=True))
    return 0


def _cmd_query(args, config) -> int:
    defaults = {
        "graph": None,
        "traj": None,
        "executor": None,
        "object_id": None,
        "window": None,
        "alpha": 0.75,
        "horizon": None,
        "mle_model": None,
        "rnn_model": None,
        "seed": 0,
    }
    r = _resolve(args, defaults, config)
    _echo_config("query", r)
    g = graph_mod.load_graph(r["graph"])
    trajs = trajgen_mod.load_trajectories(r["traj"])
    trajgen_mod.validate_trajectories(trajs, g)
    index = search_mod.index_trajectories(trajs)
    traj = index.get(r["object_id"])
    if traj is None:
        raise search_mod.SearchError(f"unknown object id {r['object_id']}")
    horizon = r["horizon"] if r["horizon"] is not None else max(t.visits[-1].exit for t in trajs) + 1
    window = r["window"] if r["window"] is not None else bench_mod.default_window(trajs)
    cfg = search_mod.SearchConfig(window=window, horizon=horizon, alpha=r["alpha"])
    query = search_mod.Query(
        object_id=traj.id, source_camera=traj.visits[0].camera, source_frame=traj.visits[0].entry
    )
    rng = np.random.default_rng(np.random.SeedSequence(r["seed"]))
    executor = r["executor"]
    if executor == "naive":
        result = search_mod.run_query_naive(index, g.num_cameras, query, cfg)
    elif executor == "oracle":
        result = search_mod.run_query_oracle(index, query, cfg)
    else:
        if executor == "graph-search":
            predictor = predict_mod.UniformPredictor(g)
        elif executor == "spatula":
            if r["mle_model"] is None:
                raise bench_mod.BenchError("spatula requires --mle-model")
            predictor = predict_mod.load_model(r["mle_model"], g)
        else:
            if r["rnn_model"] is None:
                raise bench_mod.BenchError("tracer requires --rnn-model")
            predictor = rnn_mod.RnnPredictor(g, rnn_mod.load_rnn(r["rnn_model"], g))
        result = search_mod.run_query_adaptive(
            index, g, query, predictor, cfg, rng,
            static_probs=executor in bench_mod.STATIC_PROB_EXECUTORS,
        )
    print(
        json.dumps(
            {
                "executor": executor,
                "object_id": query.object_id,
                "source_camera": query.source_camera,
                "source_frame": query.source_frame,
                "sightings": [{"camera": s.camera, "frame": s.frame} for s in result.sightings],
                "frames_examined": result.frames_examined,
                "oracle_calls": result.oracle_calls,
                "sampling_rounds": result.sampling_rounds,
                "modeled_latency_s": result.modeled_latency,
                "recall": result.recall,
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_bench(args, config) -> int:
    cost_base = search_mod.CostModel()
    defaults = {
        "graph": None,
        "traj": None,
        "executors": "naive,graph-search,spatula,tracer,oracle",
        "queries": 50,
        "repeats": 20,
        "window": None,
        "alpha": 0.75,
        "horizon": None,
        "mle_model": None,
        "rnn_model": None,
        "detector_cost": cost_base.detector_cost,
        "reid_cost": cost_base.reid_cost,
        "occupancy": cost_base.occupancy,
        "predictor_cost": cost_base.predictor_cost,
        "fmt": "csv",
        "jobs": 1,
        "seed": 0,
        "output": None,
    }
    r = _resolve(args, defaults, config)
    _echo_config("bench", r)
    executors = tuple(e.strip() for e in r["executors"].split(",") if e.strip())
    trajs = trajgen_mod.load_trajectories(r["traj"])
    horizon = r["horizon"] if r["horizon"] is not None else max(t.visits[-1].exit for t in trajs) + 1
    cfg = bench_mod.BenchConfig(
        graph_path=r["graph"],
        dataset_path=r["traj"],
        executors=executors,
        num_queries=r["queries"],
        repeats=r["repeats"],
        master_seed=r["seed"],
        window=r["window"],
        alpha=r["alpha"],
        horizon=horizon,
        cost=search_mod.CostModel(
            detector_cost=r["detector_cost"],
            reid_cost=r["reid_cost"],
            occupancy=r["occupancy"],
            predictor_cost=r["predictor_cost"],
        ),
        mle_model_path=r["mle_model"],
        rnn_model_path=r["rnn_model"],
        jobs=r["jobs"],
    )
    report = bench_mod.run_bench(cfg)
    bench_mod.emit_report(report, r["fmt"], r["output"])
    for row in report.aggregate_rows:
        print(
            f"{row.executor}: mean frames {row.frames_examined:.1f}, "
            f"mean latency {row.modeled_latency_s:.3f}s, recall {row.recall:.2f}"
        )
    print(f"wrote {r['output']}")
    return 0


def _cmd_sweep(args, config) -> int:
    defaults = {
        "kind": None,
        "graph": None,
        "skews": "0.0,0.6,1.1,1.6",
        "sizes": "20,40,80",
        "degree": 4.0,
        "count": 1500,
        "horizon": 2048,
        "min_path_len": 4,
        "executors": "graph-search,tracer,oracle",
        "queries": 30,
        "repeats": 10,
        "max_epochs": 15,
        "jobs": 1,
        "seed": 0,
        "output": None,
    }
    r = _resolve(args, defaults, config)
    _echo_config("sweep", r)
    spec = bench_mod.SweepSpec(
        trajgen=trajgen_mod.TrajGenConfig(
            count=r["count"], horizon=r["horizon"], min_path_len=r["min_path_len"]
        ),
        rnn=rnn_mod.RnnConfig(max_epochs=r["max_epochs"]),
        executors=tuple(e.strip() for e in r["executors"].split(",") if e.strip()),
        num_queries=r["queries"],
        repeats=r["repeats"],
        master_seed=r["seed"],
        jobs=r["jobs"],
    )
    lines = ["kind,x,series,value"]
    if r["kind"] == "skew":
        if r["graph"] is None:
            raise bench_mod.BenchError("skew sweep requires --graph")
        g = graph_mod.load_graph(r["graph"])
        skews = [float(s) for s in r["skews"].split(",") if s.strip()]
        for point in bench_mod.skew_sweep(g, spec, skews):
            for row in point.report.aggregate_rows:
                lines.append(f"skew,{point.skew!r},frames_mean:{row.executor},{row.frames_examined!r}")
                lines.append(f"skew,{point.skew!r},latency_mean:{row.executor},{row.modeled_latency_s!r}")
            for model, acc in sorted(point.accuracy.items()):
                lines.append(f"skew,{point.skew!r},accuracy:{model},{acc!r}")
    else:
        sizes = [int(s) for s in r["sizes"].split(",") if s.strip()]
        for point in bench_mod.size_sweep(spec, sizes, degree=r["degree"]):
            for model, acc in sorted(point.accuracy.items()):
                lines.append(f"size,{point.size},accuracy:{model},{acc!r}")
            lines.append(f"size,{point.size},rnn_mle_gap,{point.rnn_mle_gap!r}")
    Path(r["output"]).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {r['output']}")
    return 0


def _cmd_validate(args, config) -> int:
    defaults = {"kind": None, "path": None, "graph": None, "horizon": None}
    r = _resolve(args, defaults, config)
    _echo_config("validate", r)
    kind, path = r["kind"], r["path"]
    if kind == "graph":
        g = graph_mod.load_graph(path)
        print(f"ok: {g.num_cameras} cameras, {len(g.edges)} edges, connected")
    elif kind == "traj":
        trajs = trajgen_mod.load_trajectories(path)
        if r["graph"] is not None:
            g = graph_mod.load_graph(r["graph"])
            trajgen_mod.validate_trajectories(trajs, g, horizon=r["horizon"])
        print(f"ok: {len(trajs)} trajectories, {sum(len(t.visits) for t in trajs)} visits")
    elif kind == "model":
        if r["graph"] is None:
            raise bench_mod.BenchError("model validation requires --graph")
        g = graph_mod.load_graph(r["graph"])
        predictor = _load_predictor(path, g)
        print(f"ok: {type(predictor).__name__}")
    else:
        rows = bench_mod.read_report(path)
        print(f"ok: {len(rows)} rows ({sum(r_.is_aggregate for r_ in rows)} aggregate)")
    return 0


_COMMANDS = {
    "gen-graph": _cmd_gen_graph,
    "gen-traj": _cmd_gen_traj,
    "train": _cmd_train,
    "eval-predictor": _cmd_eval_predictor,
    "query": _cmd_query,
    "bench": _cmd_bench,
    "sweep": _cmd_sweep,
    "validate": _cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    try:
        config = _load_config_file(args.config)
        return _COMMANDS[args.command](args, config)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except json.JSONDecodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())

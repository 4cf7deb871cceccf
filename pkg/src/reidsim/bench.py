"""Benchmark harness: executor comparisons, skew and network-size sweeps,
predictor-accuracy tables, and cost breakdowns, emitted as machine-readable
reports."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .graph import CameraGraph, knn_graph_from_points, load_graph, sample_points
from .predict import (
    MlePredictor,
    Predictor,
    UniformPredictor,
    load_model,
    predictor_accuracy,
    uniform_chance_accuracy,
)
from .rnn import RnnConfig, RnnPredictor, load_rnn, train
from .search import (
    EXECUTOR_NAMES,
    CostModel,
    Query,
    QueryResult,
    SearchConfig,
    index_trajectories,
    run_query_adaptive,
    run_query_naive,
    run_query_oracle,
)
from .trajgen import (
    TrajGenConfig,
    Trajectory,
    ZipfSampler,
    generate_trajectories,
    load_trajectories,
    mean_dwell,
    split_dataset,
    validate_trajectories,
)

CSV_COLUMNS = (
    "executor",
    "query_id",
    "repeat",
    "frames_examined",
    "oracle_calls",
    "sampling_rounds",
    "modeled_latency_s",
    "recall",
    "is_aggregate",
)

# Executors that keep the predictor's probabilities fixed across sampling rounds.
STATIC_PROB_EXECUTORS = frozenset({"graph-search", "spatula"})


class BenchError(ValueError):
    """Invalid benchmark configuration or artifact mismatch."""


@dataclass(frozen=True)
class BenchRow:
    executor: str
    query_id: int
    repeat: int
    frames_examined: float
    oracle_calls: float
    sampling_rounds: float
    modeled_latency_s: float
    recall: float
    is_aggregate: bool = False


@dataclass
class BenchReport:
    rows: list[BenchRow]
    aggregate_rows: list[BenchRow]
    per_query: dict[tuple[str, int], dict[str, float]]
    speedups: dict[str, dict[str, dict[str, float]]]

    def executor_mean(self, executor: str, field_name: str) -> float:
        vals = [getattr(r, field_name) for r in self.rows if r.executor == executor]
        return float(np.mean(vals))


@dataclass(frozen=True)
class BenchConfig:
    """File-based benchmark run; all artifacts must share a graph checksum."""

    graph_path: str
    dataset_path: str
    executors: tuple[str, ...]
    num_queries: int = 50
    repeats: int = 20
    master_seed: int = 0
    window: int | None = None
    alpha: float = 0.75
    horizon: int = 3600
    cost: CostModel = CostModel()
    mle_model_path: str | None = None
    rnn_model_path: str | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.num_queries < 1 or self.repeats < 1:
            raise BenchError("num_queries and repeats must be >= 1")
        unknown = set(self.executors) - set(EXECUTOR_NAMES)
        if unknown or not self.executors:
            raise BenchError(f"executors must be a non-empty subset of {EXECUTOR_NAMES}, got {self.executors}")


@dataclass
class _BenchContext:
    g: CameraGraph
    index: Mapping[int, Trajectory]
    predictors: dict[str, Predictor]
    search: SearchConfig
    cost: CostModel
    master_seed: int


def _run_cell(ctx: _BenchContext, executor: str, query: Query, repeat: int) -> QueryResult:
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=ctx.master_seed, spawn_key=(1, query.object_id, repeat))
    )
    if executor == "naive":
        return run_query_naive(ctx.index, ctx.g.num_cameras, query, ctx.search, ctx.cost)
    if executor == "oracle":
        return run_query_oracle(ctx.index, query, ctx.search, ctx.cost)
    predictor = ctx.predictors[executor]
    return run_query_adaptive(
        ctx.index,
        ctx.g,
        query,
        predictor,
        ctx.search,
        rng,
        static_probs=executor in STATIC_PROB_EXECUTORS,
        cost=ctx.cost,
    )


_WORKER_CTX: _BenchContext | None = None
_WORKER_REPEATS = 0


def _init_worker(ctx: _BenchContext, repeats: int) -> None:
    global _WORKER_CTX, _WORKER_REPEATS
    _WORKER_CTX = ctx
    _WORKER_REPEATS = repeats


def _worker_task(args: tuple[str, Query]) -> list[BenchRow]:
    executor, query = args
    assert _WORKER_CTX is not None
    return [
        _result_row(executor, query.object_id, rep, _run_cell(_WORKER_CTX, executor, query, rep))
        for rep in range(_WORKER_REPEATS)
    ]


def _result_row(executor: str, query_id: int, repeat: int, res: QueryResult) -> BenchRow:
    return BenchRow(
        executor=executor,
        query_id=query_id,
        repeat=repeat,
        frames_examined=res.frames_examined,
        oracle_calls=res.oracle_calls,
        sampling_rounds=res.sampling_rounds,
        modeled_latency_s=res.modeled_latency,
        recall=res.recall,
    )


def sample_queries(test_trajs: Sequence[Trajectory], num_queries: int, master_seed: int) -> list[Query]:
    """Pick query objects from the test split; source is the first visit."""
    if num_queries > len(test_trajs):
        raise BenchError(f"test split has {len(test_trajs)} trajectories, need {num_queries} queries")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(0,)))
    picks = rng.choice(len(test_trajs), size=num_queries, replace=False)
    queries = []
    for i in sorted(int(p) for p in picks):
        t = test_trajs[i]
        queries.append(Query(object_id=t.id, source_camera=t.visits[0].camera, source_frame=t.visits[0].entry))
    return queries


def run_bench_loaded(
    g: CameraGraph,
    test_trajs: Sequence[Trajectory],
    predictors: dict[str, Predictor],
    executors: Sequence[str],
    num_queries: int,
    repeats: int,
    search: SearchConfig,
    cost: CostModel,
    master_seed: int,
    jobs: int = 1,
) -> BenchReport:
    """Run executors x queries x repeats with pre-derived per-cell seeds.

    Results are identical for any jobs value: every cell's RNG stream depends
    only on (master_seed, query id, repeat index).
    """
    for name in executors:
        if name not in ("naive", "oracle") and name not in predictors:
            raise BenchError(f"executor {name!r} requires a fitted predictor")
    index = index_trajectories(test_trajs)
    queries = sample_queries(test_trajs, num_queries, master_seed)
    ctx = _BenchContext(
        g=g, index=index, predictors=predictors, search=search, cost=cost, master_seed=master_seed
    )
    tasks = [(executor, query) for executor in executors for query in queries]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(ctx, repeats)) as pool:
            per_task = list(pool.map(_worker_task, tasks, chunksize=4))
    else:
        _init_worker(ctx, repeats)
        per_task = [_worker_task(t) for t in tasks]
    rows = [row for chunk in per_task for row in chunk]
    for row in rows:
        if row.recall != 1.0:
            raise BenchError(
                f"executor {row.executor} returned recall {row.recall} on query {row.query_id}"
            )
    return _assemble_report(rows)


def _assemble_report(rows: list[BenchRow]) -> BenchReport:
    executors = sorted({r.executor for r in rows})
    query_ids = sorted({r.query_id for r in rows})
    per_query: dict[tuple[str, int], dict[str, float]] = {}
    for e in executors:
        for q in query_ids:
            cell = [r for r in rows if r.executor == e and r.query_id == q]
            if not cell:
                continue
            frames = np.array([r.frames_examined for r in cell])
            lat = np.array([r.modeled_latency_s for r in cell])
            rounds = np.array([r.sampling_rounds for r in cell])
            per_query[(e, q)] = {
                "frames_mean": float(frames.mean()),
                "frames_std": float(frames.std()),
                "latency_mean": float(lat.mean()),
                "latency_std": float(lat.std()),
                "rounds_mean": float(rounds.mean()),
                "recall": float(np.mean([r.recall for r in cell])),
            }
    speedups: dict[str, dict[str, dict[str, float]]] = {}
    for e in executors:
        speedups[e] = {}
        for b in executors:
            if b == e:
                continue
            lat_ratios = []
            frame_ratios = []
            for q in query_ids:
                se, sb = per_query.get((e, q)), per_query.get((b, q))
                if se is None or sb is None or se["latency_mean"] <= 0 or se["frames_mean"] <= 0:
                    continue
                lat_ratios.append(sb["latency_mean"] / se["latency_mean"])
                frame_ratios.append(sb["frames_mean"] / se["frames_mean"])
            if lat_ratios:
                speedups[e][b] = {
                    "latency": float(np.exp(np.mean(np.log(lat_ratios)))),
                    "frames": float(np.exp(np.mean(np.log(frame_ratios)))),
                }
    aggregate_rows = []
    for e in executors:
        sub = [r for r in rows if r.executor == e]
        aggregate_rows.append(
            BenchRow(
                executor=e,
                query_id=-1,
                repeat=-1,
                frames_examined=float(np.mean([r.frames_examined for r in sub])),
                oracle_calls=float(np.mean([r.oracle_calls for r in sub])),
                sampling_rounds=float(np.mean([r.sampling_rounds for r in sub])),
                modeled_latency_s=float(np.mean([r.modeled_latency_s for r in sub])),
                recall=float(np.mean([r.recall for r in sub])),
                is_aggregate=True,
            )
        )
    return BenchReport(rows=rows, aggregate_rows=aggregate_rows, per_query=per_query, speedups=speedups)


def default_window(train_trajs: Sequence[Trajectory]) -> int:
    """Search window tuned to the training set's mean per-camera dwell."""
    return max(1, int(round(mean_dwell(train_trajs))))


def run_bench(cfg: BenchConfig) -> BenchReport:
    """File-based entry point: loads artifacts, checks they belong together,
    fits nothing (models come pre-trained from their own files)."""
    g = load_graph(cfg.graph_path)
    test_trajs = load_trajectories(cfg.dataset_path)
    validate_trajectories(test_trajs, g, horizon=cfg.horizon)
    predictors: dict[str, Predictor] = {}
    if "graph-search" in cfg.executors:
        predictors["graph-search"] = UniformPredictor(g)
    if "spatula" in cfg.executors:
        if cfg.mle_model_path is None:
            raise BenchError("spatula executor requires mle_model_path")
        predictor = load_model(cfg.mle_model_path, g)
        predictors["spatula"] = predictor
    if "tracer" in cfg.executors:
        if cfg.rnn_model_path is None:
            raise BenchError("tracer executor requires rnn_model_path")
        predictors["tracer"] = RnnPredictor(g, load_rnn(cfg.rnn_model_path, g))
    window = cfg.window if cfg.window is not None else default_window(test_trajs)
    search = SearchConfig(window=window, horizon=cfg.horizon, alpha=cfg.alpha)
    return run_bench_loaded(
        g,
        test_trajs,
        predictors,
        cfg.executors,
        cfg.num_queries,
        cfg.repeats,
        search,
        cfg.cost,
        cfg.master_seed,
        jobs=cfg.jobs,
    )


def cost_breakdown(rows: Sequence[BenchRow], cost: CostModel) -> dict[str, float]:
    """Per-operator modeled seconds across the detail rows."""
    detail = [r for r in rows if not r.is_aggregate]
    frames = sum(r.frames_examined for r in detail)
    rounds = sum(r.sampling_rounds for r in detail)
    detection = frames * cost.detector_cost
    reid = frames * cost.occupancy * cost.reid_cost
    prediction = rounds * cost.predictor_cost
    return {
        "detection_s": detection,
        "reid_s": reid,
        "prediction_s": prediction,
        "total_s": detection + reid + prediction,
    }


def _row_to_record(row: BenchRow) -> dict:
    return {
        "executor": row.executor,
        "query_id": row.query_id,
        "repeat": row.repeat,
        "frames_examined": row.frames_examined,
        "oracle_calls": row.oracle_calls,
        "sampling_rounds": row.sampling_rounds,
        "modeled_latency_s": row.modeled_latency_s,
        "recall": row.recall,
        "is_aggregate": row.is_aggregate,
    }


def emit_report(report: BenchReport, fmt: str, path: str | Path) -> None:
    """Write detail rows plus flagged aggregate rows in a stable column order."""
    records = [_row_to_record(r) for r in report.rows + report.aggregate_rows]
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for rec in records:
                writer.writerow([repr(rec[c]) if isinstance(rec[c], float) else rec[c] for c in CSV_COLUMNS])
    elif fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    else:
        raise BenchError(f"unknown report format {fmt!r}; expected csv or jsonl")


def read_report(path: str | Path) -> list[BenchRow]:
    """Parse a report written by emit_report (format chosen by content)."""
    text = Path(path).read_text(encoding="utf-8")
    rows = []
    first = text.lstrip()[:1]
    if first == "{":
        for line in text.splitlines():
            if line.strip():
                rows.append(BenchRow(**json.loads(line)))
        return rows
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames != list(CSV_COLUMNS):
        raise BenchError(f"{path}: unexpected CSV header {reader.fieldnames}")
    for rec in reader:
        rows.append(
            BenchRow(
                executor=rec["executor"],
                query_id=int(rec["query_id"]),
                repeat=int(rec["repeat"]),
                frames_examined=float(rec["frames_examined"]),
                oracle_calls=float(rec["oracle_calls"]),
                sampling_rounds=float(rec["sampling_rounds"]),
                modeled_latency_s=float(rec["modeled_latency_s"]),
                recall=float(rec["recall"]),
                is_aggregate=rec["is_aggregate"] == "True",
            )
        )
    return rows


@dataclass(frozen=True)
class SweepSpec:
    """Shared knobs for the skew and size sweeps. Each sweep point regenerates
    its dataset and retrains predictors with seeds derived from master_seed."""

    trajgen: TrajGenConfig
    rnn: RnnConfig
    executors: tuple[str, ...] = ("graph-search", "tracer", "oracle")
    num_queries: int = 30
    repeats: int = 10
    alpha: float = 0.75
    cost: CostModel = CostModel()
    train_fraction: float = 0.8
    master_seed: int = 0
    jobs: int = 1
    # size sweep only: endpoint pairs must be at least this far apart in the
    # unit square, so every network size sees the same trip population
    min_trip_distance: float = 0.35


@dataclass
class SkewPoint:
    skew: float
    report: BenchReport
    accuracy: dict[str, float]


@dataclass
class SizePoint:
    size: int
    accuracy: dict[str, float]

    @property
    def rnn_mle_gap(self) -> float:
        return self.accuracy["rnn"] - self.accuracy["mle"]


def _derived_seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence(entropy=master, spawn_key=tuple(key)).generate_state(1)[0])


def _prepare_point(
    g: CameraGraph,
    spec: SweepSpec,
    gen_cfg: TrajGenConfig,
    point_seed: int,
    endpoint_sampler=None,
) -> tuple[list[Trajectory], list[Trajectory], dict[str, Predictor], dict[str, float]]:
    trajs = generate_trajectories(g, gen_cfg, endpoint_sampler)
    train_set, test_set = split_dataset(trajs, spec.train_fraction, seed=_derived_seed(point_seed, 1))
    rnn_cfg = replace(spec.rnn, seed=_derived_seed(point_seed, 2))
    model, _ = train(train_set, g, rnn_cfg)
    predictors: dict[str, Predictor] = {
        "graph-search": UniformPredictor(g),
        "spatula": MlePredictor.fit(g, train_set),
        "tracer": RnnPredictor(g, model),
    }
    accuracy = {
        "uniform": uniform_chance_accuracy(g, test_set),
        "mle": predictor_accuracy(predictors["spatula"], test_set),
        "rnn": predictor_accuracy(predictors["tracer"], test_set),
    }
    return train_set, test_set, predictors, accuracy


def skew_sweep(g: CameraGraph, spec: SweepSpec, skews: Sequence[float]) -> list[SkewPoint]:
    """Regenerate the dataset and retrain predictors at each skew level, then
    benchmark the configured executors."""
    if len(skews) < 2:
        raise BenchError("skew sweep needs at least 2 skew values")
    points = []
    for i, skew in enumerate(skews):
        point_seed = _derived_seed(spec.master_seed, 10, i)
        gen_cfg = replace(spec.trajgen, skew=skew, seed=_derived_seed(point_seed, 0))
        train_set, test_set, predictors, accuracy = _prepare_point(g, spec, gen_cfg, point_seed)
        search = SearchConfig(
            window=default_window(train_set), horizon=gen_cfg.horizon, alpha=spec.alpha
        )
        report = run_bench_loaded(
            g,
            test_set,
            predictors,
            spec.executors,
            spec.num_queries,
            spec.repeats,
            search,
            spec.cost,
            master_seed=_derived_seed(point_seed, 3),
            jobs=spec.jobs,
        )
        points.append(SkewPoint(skew=skew, report=report, accuracy=accuracy))
    return points


def size_sweep(spec: SweepSpec, sizes: Sequence[int], degree: float) -> list[SizePoint]:
    """Predictor accuracies across network sizes over one fixed geography.

    One set of camera placements and one pair of geographic endpoint-hotspot
    distributions is drawn per sweep; each size uses the first `size`
    placements, so a larger network samples the same traffic pattern at a
    finer camera granularity. Graphs are k-nearest-neighbor constructions
    (k = round(degree)), keeping the degree profile stable across sizes, and
    endpoint pairs closer than spec.min_trip_distance are rejected so every
    size routes the same trip population.
    """
    if len(sizes) < 2:
        raise BenchError("size sweep needs at least 2 sizes")
    k = max(1, round(degree))
    n_max = max(sizes)
    root = np.random.SeedSequence(entropy=spec.master_seed, spawn_key=(20,))
    pts_ss, src_ss, dst_ss = root.spawn(3)
    placements = sample_points(n_max, pts_ss)
    src_sampler = ZipfSampler(n_max, spec.trajgen.skew, src_ss)
    dst_sampler = ZipfSampler(n_max, spec.trajgen.skew, dst_ss)
    points = []
    for i, size in enumerate(sizes):
        sub = placements[:size]
        g = knn_graph_from_points(sub, k)
        # hotspot locations fall onto this size's nearest camera
        nearest = np.argmin(
            ((placements[:, None, :] - sub[None, :, :]) ** 2).sum(axis=2), axis=1
        )

        def sample_endpoints(r, table=nearest):
            for _ in range(10_000):
                a = src_sampler.sample(r)
                b = dst_sampler.sample(r)
                if np.linalg.norm(placements[a] - placements[b]) >= spec.min_trip_distance:
                    return int(table[a]), int(table[b])
            raise BenchError(
                f"no endpoint pairs at least {spec.min_trip_distance} apart; lower min_trip_distance"
            )

        point_seed = _derived_seed(spec.master_seed, 20, i)
        gen_cfg = replace(spec.trajgen, seed=_derived_seed(point_seed, 0))
        _, _, _, accuracy = _prepare_point(g, spec, gen_cfg, point_seed, sample_endpoints)
        points.append(SizePoint(size=size, accuracy=accuracy))
    return points

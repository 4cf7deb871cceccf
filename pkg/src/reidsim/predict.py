"""Next-camera predictors: uniform, local transition-count MLE, and backoff
n-gram, all emitting a probability distribution over the current camera's
neighbors."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .graph import CameraGraph, graph_checksum
from .trajgen import Trajectory

PROB_SUM_TOL = 1e-9
DEFAULT_SMOOTHING = 1.0
DEFAULT_NGRAM_ORDER = 3


class ModelError(ValueError):
    """Malformed model file or model/graph mismatch."""


@dataclass(frozen=True, eq=False)
class NeighborDistribution:
    """Probabilities over the current camera's neighbors, ascending by id."""

    camera_ids: tuple[int, ...]
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "camera_ids", tuple(int(c) for c in self.camera_ids))
        if len(self.camera_ids) != probs.size or probs.size == 0:
            raise ValueError("camera_ids and probs must be parallel and non-empty")
        if any(a >= b for a, b in zip(self.camera_ids, self.camera_ids[1:])):
            raise ValueError("camera_ids must be strictly ascending")
        if (probs < 0).any() or abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities must be >= 0 and sum to 1, got sum {probs.sum()!r}")

    def argmax_camera(self) -> int:
        # np.argmax returns the first maximum; ids ascend, so ties resolve
        # to the lowest camera id.
        return self.camera_ids[int(np.argmax(self.probs))]


def _neighbor_distribution(g: CameraGraph, camera: int, weights: np.ndarray) -> NeighborDistribution:
    return NeighborDistribution(g.adjacency[camera], weights / weights.sum())


class Predictor(Protocol):
    def predict(self, history: Sequence[int]) -> NeighborDistribution: ...


@dataclass
class TransitionCounts:
    """Per ordered camera pair (u, v): historical traversal count u -> v."""

    counts: dict[int, dict[int, int]] = field(default_factory=dict)

    def get(self, u: int, v: int) -> int:
        return self.counts.get(u, {}).get(v, 0)

    def add(self, u: int, v: int, amount: int = 1) -> None:
        self.counts.setdefault(u, {})[v] = self.get(u, v) + amount

    def total_from(self, u: int) -> int:
        return sum(self.counts.get(u, {}).values())


def fit_mle(trajs: Iterable[Trajectory]) -> TransitionCounts:
    """Tally consecutive camera transitions across the training set."""
    counts = TransitionCounts()
    for t in trajs:
        cams = t.cameras
        for u, v in zip(cams, cams[1:]):
            counts.add(u, v)
    return counts


def predict_mle(
    g: CameraGraph,
    counts: TransitionCounts,
    history: Sequence[int],
    smoothing: float = DEFAULT_SMOOTHING,
) -> NeighborDistribution:
    """Add-lambda smoothed transition frequencies from the current camera.

    With smoothing=0 and no observed transitions the result degrades to
    uniform so the distribution stays well formed.
    """
    if not history:
        raise ValueError("history must be non-empty")
    u = history[-1]
    neigh = g.adjacency[u]
    raw = np.array([counts.get(u, v) for v in neigh], dtype=np.float64)
    weights = raw + smoothing
    if weights.sum() == 0.0:
        weights = np.ones(len(neigh))
    return _neighbor_distribution(g, u, weights)


@dataclass
class NgramModel:
    """Successor counts keyed by trailing camera contexts of length 1..n-1."""

    order: int
    tables: dict[int, dict[tuple[int, ...], dict[int, int]]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.order < 2:
            raise ValueError("n-gram order must be >= 2")


def fit_ngram(trajs: Iterable[Trajectory], n: int = DEFAULT_NGRAM_ORDER) -> NgramModel:
    """Sliding-window tally of every length-m window for each m in 2..n."""
    model = NgramModel(order=n)
    for m in range(2, n + 1):
        model.tables[m] = {}
    for t in trajs:
        cams = t.cameras
        for m in range(2, n + 1):
            table = model.tables[m]
            for i in range(len(cams) - m + 1):
                ctx = tuple(cams[i : i + m - 1])
                succ = cams[i + m - 1]
                slot = table.setdefault(ctx, {})
                slot[succ] = slot.get(succ, 0) + 1
    return model


def predict_ngram(
    g: CameraGraph,
    model: NgramModel,
    history: Sequence[int],
    smoothing: float = DEFAULT_SMOOTHING,
) -> NeighborDistribution:
    """Longest-match backoff over the fitted context tables.

    Falls back to the smoothed frequency estimate (which is uniform when the
    current camera has no recorded outgoing transitions at all).
    """
    if not history:
        raise ValueError("history must be non-empty")
    u = history[-1]
    neigh = g.adjacency[u]
    longest = min(model.order - 1, len(history))
    for ctx_len in range(longest, 0, -1):
        ctx = tuple(history[-ctx_len:])
        slot = model.tables.get(ctx_len + 1, {}).get(ctx)
        if slot:
            raw = np.array([slot.get(v, 0) for v in neigh], dtype=np.float64)
            weights = raw + smoothing
            if weights.sum() == 0.0:
                weights = np.ones(len(neigh))
            return _neighbor_distribution(g, u, weights)
    return predict_mle(g, TransitionCounts(), history, smoothing)


def uniform_predict(g: CameraGraph, history: Sequence[int]) -> NeighborDistribution:
    """Equal mass on every neighbor of the current camera."""
    if not history:
        raise ValueError("history must be non-empty")
    u = history[-1]
    return _neighbor_distribution(g, u, np.ones(len(g.adjacency[u])))


@dataclass
class UniformPredictor:
    g: CameraGraph

    def predict(self, history: Sequence[int]) -> NeighborDistribution:
        return uniform_predict(self.g, history)


@dataclass
class MlePredictor:
    g: CameraGraph
    counts: TransitionCounts
    smoothing: float = DEFAULT_SMOOTHING

    @classmethod
    def fit(cls, g: CameraGraph, trajs: Iterable[Trajectory], smoothing: float = DEFAULT_SMOOTHING) -> "MlePredictor":
        return cls(g=g, counts=fit_mle(trajs), smoothing=smoothing)

    def predict(self, history: Sequence[int]) -> NeighborDistribution:
        return predict_mle(self.g, self.counts, history, self.smoothing)


@dataclass
class NgramPredictor:
    g: CameraGraph
    model: NgramModel
    smoothing: float = DEFAULT_SMOOTHING

    @classmethod
    def fit(
        cls,
        g: CameraGraph,
        trajs: Iterable[Trajectory],
        order: int = DEFAULT_NGRAM_ORDER,
        smoothing: float = DEFAULT_SMOOTHING,
    ) -> "NgramPredictor":
        return cls(g=g, model=fit_ngram(trajs, order), smoothing=smoothing)

    def predict(self, history: Sequence[int]) -> NeighborDistribution:
        return predict_ngram(self.g, self.model, history, self.smoothing)


def predictor_accuracy(predictor: Predictor, test_trajs: Sequence[Trajectory]) -> float:
    """Top-1 next-camera accuracy over every hop of every test trajectory.

    Each hop is scored with the ground-truth prefix as input (the 100% recall
    regime keeps query histories ground-truth-consistent, so this matches
    deployment). Argmax ties resolve to the lowest camera id.
    """
    hits = 0
    hops = 0
    for t in test_trajs:
        cams = t.cameras
        for i in range(1, len(cams)):
            dist = predictor.predict(cams[:i])
            hits += int(dist.argmax_camera() == cams[i])
            hops += 1
    if hops == 0:
        raise ValueError("test set has no hops; need trajectories with >= 2 visits")
    return hits / hops


def uniform_chance_accuracy(g: CameraGraph, test_trajs: Sequence[Trajectory]) -> float:
    """Expected hit rate of picking a uniformly random neighbor at each hop.

    This is what random exploration scores in expectation; the argmax metric
    would instead measure how often the truth is the lowest-numbered neighbor,
    a tie-break artifact.
    """
    chances = [1.0 / g.degree(t.cameras[i]) for t in test_trajs for i in range(len(t.visits) - 1)]
    if not chances:
        raise ValueError("test set has no hops; need trajectories with >= 2 visits")
    return float(np.mean(chances))


MODEL_FORMAT = "reidsim-predictor-v1"


def save_model(predictor: MlePredictor | NgramPredictor, path: str | Path) -> None:
    """Serialize an MLE or n-gram predictor with its graph checksum."""
    checksum = graph_checksum(predictor.g)
    if isinstance(predictor, MlePredictor):
        payload = {
            "format": MODEL_FORMAT,
            "type": "mle",
            "smoothing": predictor.smoothing,
            "graph_checksum": checksum,
            "counts": {
                str(u): {str(v): c for v, c in sorted(vs.items())}
                for u, vs in sorted(predictor.counts.counts.items())
            },
        }
    elif isinstance(predictor, NgramPredictor):
        payload = {
            "format": MODEL_FORMAT,
            "type": "ngram",
            "order": predictor.model.order,
            "smoothing": predictor.smoothing,
            "graph_checksum": checksum,
            "tables": {
                str(m): {
                    ",".join(map(str, ctx)): {str(s): c for s, c in sorted(slot.items())}
                    for ctx, slot in sorted(table.items())
                }
                for m, table in sorted(predictor.model.tables.items())
            },
        }
    else:
        raise ModelError(f"cannot serialize predictor of type {type(predictor).__name__}")
    Path(path).write_text(json.dumps(payload, separators=(",", ":"), sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path, g: CameraGraph) -> MlePredictor | NgramPredictor:
    """Load a predictor file, verifying format, graph checksum, and adjacency."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed model file {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise ModelError(f"{path}: not a {MODEL_FORMAT} file")
    if payload.get("graph_checksum") != graph_checksum(g):
        raise ModelError(f"{path}: model was fitted on a different graph")
    kind = payload.get("type")
    smoothing = float(payload.get("smoothing", DEFAULT_SMOOTHING))
    if kind == "mle":
        counts = TransitionCounts()
        for u_str, vs in payload["counts"].items():
            u = int(u_str)
            for v_str, c in vs.items():
                v = int(v_str)
                if v not in g.adjacency[u]:
                    raise ModelError(f"{path}: transition {u}->{v} is not a graph edge")
                counts.add(u, v, int(c))
        return MlePredictor(g=g, counts=counts, smoothing=smoothing)
    if kind == "ngram":
        model = NgramModel(order=int(payload["order"]))
        for m_str, table in payload["tables"].items():
            m = int(m_str)
            model.tables[m] = {}
            for ctx_str, slot in table.items():
                ctx = tuple(int(x) for x in ctx_str.split(","))
                if len(ctx) != m - 1:
                    raise ModelError(f"{path}: context {ctx_str!r} has wrong length for order {m}")
                parsed = {}
                for s_str, c in slot.items():
                    s = int(s_str)
                    if s not in g.adjacency[ctx[-1]]:
                        raise ModelError(f"{path}: successor {s} not adjacent to context end {ctx[-1]}")
                    parsed[s] = int(c)
                model.tables[m][ctx] = parsed
        return NgramPredictor(g=g, model=model, smoothing=smoothing)
    raise ModelError(f"{path}: unknown model type {kind!r}")

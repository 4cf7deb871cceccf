"""Synthetic ground-truth trajectories: Zipf endpoint hotspots, shortest-path
routing, and per-camera dwell intervals."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .graph import CameraGraph, diameter, shortest_path


class GenerationError(ValueError):
    """Infeasible generation config or malformed trajectory data."""


# Draws one (source, destination) camera pair from a seeded stream.
EndpointSampler = Callable[[np.random.Generator], tuple[int, int]]


@dataclass(frozen=True)
class CameraVisit:
    """Contiguous frame interval an object spends in one camera view."""

    camera: int
    entry: int
    exit: int

    def __post_init__(self) -> None:
        if self.entry < 0 or self.exit < self.entry:
            raise GenerationError(f"bad visit interval ({self.entry},{self.exit}) at camera {self.camera}")

    def contains(self, frame: int) -> bool:
        return self.entry <= frame <= self.exit


@dataclass(frozen=True)
class Trajectory:
    """Ordered camera visits of one object; the ground truth for a query."""

    id: int
    visits: tuple[CameraVisit, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "visits", tuple(self.visits))
        for a, b in zip(self.visits, self.visits[1:]):
            if a.camera == b.camera:
                raise GenerationError(f"trajectory {self.id}: consecutive visits at camera {a.camera}")
            if a.exit >= b.entry:
                raise GenerationError(
                    f"trajectory {self.id}: intervals not strictly increasing "
                    f"({a.exit} >= {b.entry})"
                )

    @property
    def cameras(self) -> list[int]:
        return [v.camera for v in self.visits]


@dataclass(frozen=True)
class TrajGenConfig:
    count: int
    skew: float = 1.1
    horizon: int = 3600
    dwell_min: int = 30
    dwell_max: int = 80
    travel_min: int = 10
    travel_max: int = 60
    min_path_len: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise GenerationError("count must be >= 1")
        if self.skew < 0:
            raise GenerationError("skew must be >= 0")
        if self.dwell_min < 1 or self.dwell_max < self.dwell_min:
            raise GenerationError("need 1 <= dwell_min <= dwell_max")
        if self.travel_min < 0 or self.travel_max < self.travel_min:
            raise GenerationError("need 0 <= travel_min <= travel_max")
        if self.min_path_len < 2:
            raise GenerationError("min_path_len must be >= 2")
        if self.horizon < 1:
            raise GenerationError("horizon must be >= 1")


class ZipfSampler:
    """Zipf-distributed draws over a seeded permutation of category ids.

    Rank k (0-based) carries mass proportional to 1/(k+1)^s; the permutation
    decides which category holds each rank, so hotspots are not always the
    low-numbered ids.
    """

    def __init__(self, n: int, s: float, permutation_seed: int | np.random.SeedSequence = 0) -> None:
        if n < 1:
            raise GenerationError("need at least one category")
        if s < 0:
            raise GenerationError("skew must be >= 0")
        self.n = n
        self.s = s
        ranks = np.arange(1, n + 1, dtype=np.float64)
        mass = ranks ** (-s)
        self.rank_pmf = mass / mass.sum()
        self._cdf = np.cumsum(self.rank_pmf)
        self._cdf[-1] = 1.0
        perm_rng = np.random.default_rng(permutation_seed)
        self.categories = perm_rng.permutation(n)

    def sample(self, rng: np.random.Generator) -> int:
        rank = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return int(self.categories[min(rank, self.n - 1)])


def zipf_sample(n: int, s: float, rng: np.random.Generator, permutation_seed: int = 0) -> int:
    """One Zipf draw; see ZipfSampler for the distribution contract."""
    return ZipfSampler(n, s, permutation_seed).sample(rng)


def build_visits(path: Sequence[int], start: int, dwells: Sequence[int], travels: Sequence[int], traj_id: int = 0) -> Trajectory:
    """Lay out per-camera intervals along a path: each visit lasts its dwell,
    and the next entry begins travel+1 frames after the previous exit."""
    visits = []
    entry = start
    for i, camera in enumerate(path):
        exit_ = entry + dwells[i] - 1
        visits.append(CameraVisit(camera=int(camera), entry=entry, exit=exit_))
        if i + 1 < len(path):
            entry = exit_ + travels[i] + 1
    return Trajectory(id=traj_id, visits=tuple(visits))


def generate_trajectories(
    g: CameraGraph,
    cfg: TrajGenConfig,
    endpoint_sampler: EndpointSampler | None = None,
) -> list[Trajectory]:
    """Generate cfg.count trajectories routed via shortest paths.

    Endpoints come from two independent Zipf distributions (distinct hotspot
    permutations for sources and destinations) unless a custom sampler is
    given. Endpoint pairs are resampled until the route has at least
    min_path_len hops. Deterministic for a fixed (graph, config, sampler).
    """
    max_visits = diameter(g) + 1
    start_max = cfg.horizon // 4
    worst_span = max_visits * cfg.dwell_max + (max_visits - 1) * (cfg.travel_max + 1)
    if start_max + worst_span > cfg.horizon:
        raise GenerationError(
            f"horizon {cfg.horizon} too small: worst-case trajectory span {worst_span} "
            f"plus start offset {start_max} overruns it"
        )
    if cfg.min_path_len > diameter(g):
        raise GenerationError(f"min_path_len {cfg.min_path_len} exceeds graph diameter {diameter(g)}")

    root = np.random.SeedSequence(cfg.seed)
    src_ss, dst_ss, draw_ss = root.spawn(3)
    if endpoint_sampler is None:
        src_sampler = ZipfSampler(g.num_cameras, cfg.skew, src_ss)
        dst_sampler = ZipfSampler(g.num_cameras, cfg.skew, dst_ss)
        endpoint_sampler = lambda r: (src_sampler.sample(r), dst_sampler.sample(r))  # noqa: E731
    rng = np.random.default_rng(draw_ss)

    trajs: list[Trajectory] = []
    attempts = 0
    budget = 10 * cfg.count
    while len(trajs) < cfg.count:
        attempts += 1
        if attempts > budget:
            raise GenerationError(
                f"could not reach min_path_len={cfg.min_path_len} within {budget} endpoint samples"
            )
        src, dst = endpoint_sampler(rng)
        if src == dst:
            continue
        path = shortest_path(g, src, dst)
        if len(path) - 1 < cfg.min_path_len:
            continue
        start = int(rng.integers(0, start_max + 1))
        dwells = [int(rng.integers(cfg.dwell_min, cfg.dwell_max + 1)) for _ in path]
        travels = [int(rng.integers(cfg.travel_min, cfg.travel_max + 1)) for _ in path[:-1]]
        trajs.append(build_visits(path, start, dwells, travels, traj_id=len(trajs)))
    return trajs


def endpoint_concentration(trajs: Sequence[Trajectory], num_cameras: int | None = None) -> float:
    """Fraction of all endpoints covered by the most frequent 10% of cameras."""
    if not trajs:
        raise GenerationError("need at least one trajectory")
    counts: dict[int, int] = {}
    for t in trajs:
        for cam in (t.visits[0].camera, t.visits[-1].camera):
            counts[cam] = counts.get(cam, 0) + 1
    if num_cameras is None:
        num_cameras = max(counts) + 1
    top_k = max(1, -(-num_cameras // 10))  # ceil(num_cameras / 10)
    ranked = sorted(counts.values(), reverse=True)
    return sum(ranked[:top_k]) / (2 * len(trajs))


def split_dataset(trajs: Sequence[Trajectory], train_fraction: float, seed: int) -> tuple[list[Trajectory], list[Trajectory]]:
    """Seeded disjoint train/test split; both sides must be non-empty."""
    if not (0.0 < train_fraction < 1.0):
        raise GenerationError("train_fraction must be in (0, 1)")
    n = len(trajs)
    n_train = round(train_fraction * n)
    if n_train == 0 or n_train == n:
        raise GenerationError(f"fraction {train_fraction} leaves an empty split for {n} trajectories")
    order = np.random.default_rng(np.random.SeedSequence(seed)).permutation(n)
    train = [trajs[i] for i in order[:n_train]]
    test = [trajs[i] for i in order[n_train:]]
    return train, test


def validate_trajectories(trajs: Iterable[Trajectory], g: CameraGraph, horizon: int | None = None) -> None:
    """Check adjacency of consecutive visits (and horizon fit when given)."""
    for t in trajs:
        for v in t.visits:
            if not (0 <= v.camera < g.num_cameras):
                raise GenerationError(f"trajectory {t.id}: camera {v.camera} out of range")
            if horizon is not None and v.exit >= horizon:
                raise GenerationError(f"trajectory {t.id}: visit exits at {v.exit}, beyond horizon {horizon}")
        for a, b in zip(t.visits, t.visits[1:]):
            if b.camera not in g.adjacency[a.camera]:
                raise GenerationError(
                    f"trajectory {t.id}: cameras {a.camera} and {b.camera} are not adjacent"
                )


def mean_visit_count(trajs: Sequence[Trajectory]) -> float:
    return sum(len(t.visits) for t in trajs) / len(trajs)


def mean_dwell(trajs: Sequence[Trajectory]) -> float:
    total = sum(v.exit - v.entry + 1 for t in trajs for v in t.visits)
    n = sum(len(t.visits) for t in trajs)
    return total / n


def serialize_trajectories(trajs: Iterable[Trajectory]) -> str:
    lines = []
    for t in trajs:
        payload = {
            "id": t.id,
            "visits": [{"camera": v.camera, "entry": v.entry, "exit": v.exit} for v in t.visits],
        }
        lines.append(json.dumps(payload, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def save_trajectories(trajs: Iterable[Trajectory], path: str | Path) -> None:
    Path(path).write_text(serialize_trajectories(trajs), encoding="utf-8")


def load_trajectories(path: str | Path) -> list[Trajectory]:
    trajs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
            visits = tuple(
                CameraVisit(camera=int(v["camera"]), entry=int(v["entry"]), exit=int(v["exit"]))
                for v in payload["visits"]
            )
            trajs.append(Trajectory(id=int(payload["id"]), visits=visits))
        except (KeyError, TypeError, ValueError, GenerationError) as exc:
            raise GenerationError(f"{path}:{lineno}: {exc}") from exc
    return trajs

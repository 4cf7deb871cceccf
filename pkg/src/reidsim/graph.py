"""Camera-network graphs: presets, validation, shortest paths, and file I/O."""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PRESET_KINDS = ("grid", "geometric", "town05-like", "town07-like")

# Shape targets for the town presets: (cameras, avg degree, max degree cap).
TOWN_SHAPES = {
    "town05-like": (21, 3.5, 4),
    "town07-like": (20, 3.2, 4),
}

# Generated graphs must land within +-20% of the requested average degree.
DEGREE_TOLERANCE = 0.20


class GraphError(ValueError):
    """Malformed graph data or an unachievable generation target."""


def _normalize_edges(num_cameras: int, edges: Iterable[Sequence[int]]) -> tuple[tuple[int, int], ...]:
    seen: set[tuple[int, int]] = set()
    out: list[tuple[int, int]] = []
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if u == v:
            raise GraphError(f"self-loop on vertex {u}")
        if not (0 <= u < num_cameras and 0 <= v < num_cameras):
            raise GraphError(f"edge ({u},{v}) out of range for {num_cameras} cameras")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise GraphError(f"duplicate edge ({key[0]},{key[1]})")
        seen.add(key)
        out.append(key)
    return tuple(sorted(out))


@dataclass(frozen=True)
class CameraGraph:
    """Undirected, unweighted, connected camera network.

    Vertices are camera ids 0..num_cameras-1. Edges connect cameras that are
    directly reachable from one another. Immutable after construction and safe
    to share across concurrent query runs.
    """

    num_cameras: int
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.num_cameras < 1:
            raise GraphError("graph needs at least one camera")
        object.__setattr__(self, "edges", _normalize_edges(self.num_cameras, self.edges))
        neigh: list[list[int]] = [[] for _ in range(self.num_cameras)]
        for u, v in self.edges:
            neigh[u].append(v)
            neigh[v].append(u)
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(ns)) for ns in neigh))
        if not self._is_connected():
            raise GraphError("graph is not connected")

    def _is_connected(self) -> bool:
        if self.num_cameras == 1:
            return True
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in self.adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == self.num_cameras

    def neighbors(self, camera: int) -> tuple[int, ...]:
        return self.adjacency[camera]

    def degree(self, camera: int) -> int:
        return len(self.adjacency[camera])

    @property
    def avg_degree(self) -> float:
        return 2.0 * len(self.edges) / self.num_cameras

    @property
    def max_degree(self) -> int:
        return max(len(ns) for ns in self.adjacency)


@dataclass(frozen=True)
class GraphPreset:
    """Generation target for build_graph."""

    kind: str
    cameras: int
    degree: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in PRESET_KINDS:
            raise GraphError(f"unknown preset kind {self.kind!r}; expected one of {PRESET_KINDS}")
        if self.cameras < 2:
            raise GraphError("preset needs cameras >= 2")
        if not (1 <= self.degree < self.cameras):
            raise GraphError("preset needs 1 <= degree < cameras")


def make_preset(kind: str, cameras: int | None = None, degree: float | None = None, seed: int = 0) -> GraphPreset:
    """Build a GraphPreset, filling town-shape defaults when omitted."""
    if kind in TOWN_SHAPES:
        default_cams, default_deg, _ = TOWN_SHAPES[kind]
        cameras = default_cams if cameras is None else cameras
        degree = default_deg if degree is None else degree
    if cameras is None or degree is None:
        raise GraphError(f"preset {kind!r} requires explicit cameras and degree")
    return GraphPreset(kind=kind, cameras=cameras, degree=float(degree), seed=seed)


def _grid_dims(n: int) -> tuple[int, int]:
    # Prefer an exact rows x cols factorization near square; fall back to a
    # ragged grid for counts with no usable divisor.
    best = None
    root = math.sqrt(n)
    for rows in range(1, n + 1):
        if n % rows == 0:
            cols = n // rows
            if rows <= cols:
                score = abs(rows - root)
                if best is None or score < best[0]:
                    best = (score, rows, cols)
    if best is not None and best[1] > 1:
        return best[1], best[2]
    rows = max(1, round(root))
    return rows, math.ceil(n / rows)


def _grid_edges(n: int) -> list[tuple[int, int]]:
    rows, cols = _grid_dims(n)
    edges = []
    for k in range(n):
        r, c = divmod(k, cols)
        if c + 1 < cols and k + 1 < n and (k + 1) // cols == r:
            edges.append((k, k + 1))
        if (r + 1) * cols + c < n:
            edges.append((k, (r + 1) * cols + c))
    return edges


def _build_grid(preset: GraphPreset) -> CameraGraph:
    return CameraGraph(preset.cameras, tuple(_grid_edges(preset.cameras)))


def _build_town(preset: GraphPreset, max_degree: int) -> CameraGraph:
    """Grid road network densified with seeded short-range links.

    Extra edges join lattice positions at Manhattan distance 2, keeping the
    spatial locality of road intersections, until the average degree target
    is met or no candidate respects the per-vertex degree cap.
    """
    n = preset.cameras
    rows, cols = _grid_dims(n)
    edges = set(_grid_edges(n))
    degree = [0] * n
    for u, v in edges:
        degree[u] += 1
        degree[v] += 1

    def pos(k: int) -> tuple[int, int]:
        return divmod(k, cols)

    candidates = []
    for u in range(n):
        ru, cu = pos(u)
        for v in range(u + 1, n):
            rv, cv = pos(v)
            if abs(ru - rv) + abs(cu - cv) == 2 and (u, v) not in edges:
                candidates.append((u, v))
    rng = np.random.default_rng(np.random.SeedSequence(preset.seed))
    order = rng.permutation(len(candidates))
    target_edges = round(preset.degree * n / 2.0)
    for idx in order:
        if len(edges) >= target_edges:
            break
        u, v = candidates[idx]
        if degree[u] < max_degree and degree[v] < max_degree:
            edges.add((u, v))
            degree[u] += 1
            degree[v] += 1
    return CameraGraph(n, tuple(edges))


def _pairwise_distances(pts: np.ndarray) -> np.ndarray:
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def _patch_connected(n: int, dist: np.ndarray, edges: set[tuple[int, int]]) -> None:
    """Bridge components through their closest cross-component point pairs."""
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        parent[find(u)] = find(v)
    while True:
        roots = {find(x) for x in range(n)}
        if len(roots) == 1:
            return
        main = find(0)
        best = None
        for u in range(n):
            if find(u) != main:
                continue
            for v in range(n):
                if find(v) == main:
                    continue
                if best is None or dist[u, v] < best[0]:
                    best = (dist[u, v], u, v)
        assert best is not None
        _, u, v = best
        edges.add((min(u, v), max(u, v)))
        parent[find(u)] = find(v)


def geometric_graph_from_points(pts: np.ndarray, degree: float) -> CameraGraph:
    """Geometric graph over given unit-square points with a degree-matched
    radius: the connection radius is the pairwise-distance quantile that
    yields the requested edge count. Disconnected components are then patched
    together through their nearest point pairs.
    """
    n = len(pts)
    dist = _pairwise_distances(pts)
    iu, ju = np.triu_indices(n, k=1)
    pair_d = dist[iu, ju]
    k = int(round(degree * n / 2.0))
    k = min(max(k, n - 1), pair_d.size)
    radius = np.partition(pair_d, k - 1)[k - 1]
    edges = {(int(u), int(v)) for u, v, d in zip(iu, ju, pair_d) if d <= radius}
    _patch_connected(n, dist, edges)
    return CameraGraph(n, tuple(edges))


def knn_graph_from_points(pts: np.ndarray, k: int) -> CameraGraph:
    """Symmetrized k-nearest-neighbor graph over unit-square points.

    Degrees stay close to k everywhere, unlike the radius construction whose
    local density tracks the point process; useful when an experiment needs a
    degree profile that is stable across network sizes.
    """
    n = len(pts)
    if not (1 <= k < n):
        raise GraphError(f"need 1 <= k < points, got k={k} for {n} points")
    dist = _pairwise_distances(pts)
    np.fill_diagonal(dist, np.inf)
    edges: set[tuple[int, int]] = set()
    for i in range(n):
        for j in np.argsort(dist[i], kind="stable")[:k]:
            edges.add((min(i, int(j)), max(i, int(j))))
    _patch_connected(n, dist, edges)
    return CameraGraph(n, tuple(edges))


def sample_points(n: int, seed: int | np.random.SeedSequence) -> np.ndarray:
    """Uniform camera placements in the unit square."""
    return np.random.default_rng(seed).random((n, 2))


def build_graph(preset: GraphPreset) -> CameraGraph:
    """Generate a connected camera graph matching the preset statistics.

    Deterministic for a fixed preset and seed. Raises GraphError when the
    achieved average degree misses the target by more than 20%.
    """
    if preset.kind == "grid":
        g = _build_grid(preset)
    elif preset.kind == "geometric":
        g = geometric_graph_from_points(sample_points(preset.cameras, preset.seed), preset.degree)
    else:
        g = _build_town(preset, TOWN_SHAPES[preset.kind][2])
    lo = preset.degree * (1.0 - DEGREE_TOLERANCE)
    hi = preset.degree * (1.0 + DEGREE_TOLERANCE)
    if not (lo <= g.avg_degree <= hi):
        raise GraphError(
            f"{preset.kind} preset reached avg degree {g.avg_degree:.2f}, "
            f"outside [{lo:.2f}, {hi:.2f}] for target {preset.degree}"
        )
    return g


def shortest_path(g: CameraGraph, src: int, dst: int) -> list[int]:
    """Minimum-hop path from src to dst, inclusive.

    Ties are broken by expanding the lowest-numbered neighbor first, so the
    result is deterministic for a given graph.
    """
    if not (0 <= src < g.num_cameras and 0 <= dst < g.num_cameras):
        raise GraphError(f"vertex out of range: src={src} dst={dst}")
    if src == dst:
        return [src]
    parent = {src: src}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in g.adjacency[u]:
            if v not in parent:
                parent[v] = u
                if v == dst:
                    path = [dst]
                    while path[-1] != src:
                        path.append(parent[path[-1]])
                    path.reverse()
                    return path
                queue.append(v)
    raise GraphError(f"no path from {src} to {dst}")  # unreachable: graph is connected


def bfs_distances(g: CameraGraph, src: int) -> list[int]:
    dist = [-1] * g.num_cameras
    dist[src] = 0
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in g.adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def diameter(g: CameraGraph) -> int:
    return max(max(bfs_distances(g, s)) for s in range(g.num_cameras))


def serialize_graph(g: CameraGraph) -> str:
    payload = {"num_cameras": g.num_cameras, "edges": [[u, v] for u, v in g.edges]}
    return json.dumps(payload, separators=(",", ":")) + "\n"


def graph_checksum(g: CameraGraph) -> str:
    return hashlib.sha256(serialize_graph(g).encode("utf-8")).hexdigest()


def save_graph(g: CameraGraph, path: str | Path) -> None:
    Path(path).write_text(serialize_graph(g), encoding="utf-8")


def load_graph(path: str | Path) -> CameraGraph:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphError(f"malformed graph file {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise GraphError(f"malformed graph file {path}: expected an object")
    try:
        num_cameras = int(payload["num_cameras"])
        edges = payload["edges"]
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"malformed graph file {path}: {exc}") from exc
    if not isinstance(edges, list) or not all(isinstance(e, list) and len(e) == 2 for e in edges):
        raise GraphError(f"malformed graph file {path}: edges must be [u,v] pairs")
    return CameraGraph(num_cameras, tuple((int(u), int(v)) for u, v in edges))

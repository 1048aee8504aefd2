"""Community detection from reaction data and from graph data.

Two pathways: fuzzy c-means over signed-attitude rows (the overlap-capable
route, used both for candidate communities and for a community's principal
subcommunities) and single-level greedy modularity passes over a weighted
friendship graph (partitional only). Both are deterministic given a seed;
graph tie-breaks go to the smallest community id.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._rng import derive_rng
from .errors import DegenerateInput, NotFound, TooSmall


@dataclass
class AttitudeMatrix:
    """Dense citizens-by-features matrix of signed reactions in [-1, 1].

    0 means unobserved or neutral; unobserved cells are *not* imputed before
    clustering (zeros enter the distance computation as-is).
    """

    row_ids: list[int]
    col_ids: list[int]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise ValueError("values shape does not match id sequences")
        if len(set(self.row_ids)) != len(self.row_ids) or len(set(self.col_ids)) != len(self.col_ids):
            raise ValueError("row/col ids must be unique")
        if self.values.size and (np.nanmax(np.abs(self.values)) > 1 + 1e-12):
            raise ValueError("attitude values must lie in [-1, 1]")

    def row_index(self) -> dict[int, int]:
        return {r: i for i, r in enumerate(self.row_ids)}

    def restrict_rows(self, keep: Iterable[int]) -> "AttitudeMatrix":
        keep = [r for r in self.row_ids if r in set(keep)]
        idx = self.row_index()
        sel = [idx[r] for r in keep]
        return AttitudeMatrix(keep, list(self.col_ids), self.values[sel, :])


@dataclass
class FuzzyPartition:
    """Result of a fuzzy c-means run."""

    memberships: np.ndarray          # n x K, rows sum to 1
    centroids: np.ndarray            # K x features
    fuzzifier: float
    K: int
    converged: bool = True
    n_iters: int = 0
    objective_history: list[float] = field(default_factory=list)

    def partition_coefficient(self) -> float:
        """Mean squared membership; higher is crisper."""
        return float(np.mean(np.sum(self.memberships ** 2, axis=1)))


def _memberships_from_distances(d2: np.ndarray, fuzzifier: float) -> np.ndarray:
    # u_ik proportional to d_ik^(-1/(m-1)); rows touching a centroid exactly
    # split their mass over the zero-distance centroids.
    power = -1.0 / (fuzzifier - 1.0)
    zero = d2 <= 1e-300
    with np.errstate(divide="ignore"):
        g = np.where(zero, 0.0, d2) ** power
        g[zero] = 0.0
    u = np.zeros_like(d2)
    hit = zero.any(axis=1)
    if hit.any():
        z = zero[hit]
        u[hit] = z / z.sum(axis=1, keepdims=True)
    rest = ~hit
    if rest.any():
        u[rest] = g[rest] / g[rest].sum(axis=1, keepdims=True)
    return u


def _sq_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("nkf,nkf->nk", diff, diff)


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    closest = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centroids[j] = x[rng.integers(n)]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(closest), r))
        idx = min(idx, n - 1)
        centroids[j] = x[idx]
        closest = np.minimum(closest, np.sum((x - centroids[j]) ** 2, axis=1))
    return centroids


def fuzzy_c_means(data: AttitudeMatrix, K: int, fuzzifier: float = 2.0,
                  seed: int = 0, max_iters: int = 300, tol: float = 1e-6) -> FuzzyPartition:
    """Alternating membership/centroid updates until centroids move < tol.

    Seeding is k-means++ from the given seed; non-convergence within
    `max_iters` is reported through the `converged` flag, never an error.
    The recorded objective is non-increasing iteration over iteration.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    if fuzzifier <= 1:
        raise ValueError("fuzzifier must be > 1")
    x = data.values
    n_distinct = np.unique(x, axis=0).shape[0] if x.size else 0
    if n_distinct < K:
        raise DegenerateInput(f"need at least K={K} distinct rows, found {n_distinct}")

    rng = derive_rng(seed, "fcm", K)
    centroids = _kmeanspp_init(x, K, rng)
    u = _memberships_from_distances(_sq_distances(x, centroids), fuzzifier)
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        um = u ** fuzzifier
        new_centroids = (um.T @ x) / um.sum(axis=0)[:, None]
        d2 = _sq_distances(x, new_centroids)
        u = _memberships_from_distances(d2, fuzzifier)
        history.append(float(np.sum((u ** fuzzifier) * d2)))
        shift = float(np.max(np.abs(new_centroids - centroids)))
        centroids = new_centroids
        if shift < tol:
            converged = True
            break
    return FuzzyPartition(memberships=u, centroids=centroids, fuzzifier=fuzzifier,
                          K=K, converged=converged, n_iters=it,
                          objective_history=history)


def select_partition(data: AttitudeMatrix, k_range: tuple[int, int],
                     seed: int = 0, fuzzifier: float = 2.0,
                     max_iters: int = 300, tol: float = 1e-6) -> FuzzyPartition:
    """Sweep K over `k_range` and keep the run maximizing the partition coefficient.

    The top of the range is clamped to the number of distinct rows; if even
    the bottom is infeasible, DegenerateInput propagates from the K=2 run.
    """
    k_lo, k_hi = k_range
    if k_lo < 2 or k_hi < k_lo:
        raise ValueError("K range must satisfy 2 <= lo <= hi")
    n_distinct = np.unique(data.values, axis=0).shape[0] if data.values.size else 0
    k_hi = min(k_hi, max(n_distinct, k_lo))
    best: FuzzyPartition | None = None
    for k in range(k_lo, k_hi + 1):
        part = fuzzy_c_means(data, k, fuzzifier=fuzzifier, seed=seed,
                             max_iters=max_iters, tol=tol)
        if best is None or part.partition_coefficient() > best.partition_coefficient():
            best = part
    assert best is not None
    return best


@dataclass
class CommunityCandidate:
    """Thresholded member set with the fuzzy degrees that produced it."""

    members: set[int]
    degrees: dict[int, float]


def detect_communities(reactions: AttitudeMatrix, min_size: int, threshold: float,
                       k_range: tuple[int, int], seed: int = 0,
                       fuzzifier: float = 2.0) -> list[CommunityCandidate]:
    """Candidate overlapping communities from signed reaction rows.

    A citizen joins candidate k when its membership degree reaches
    `threshold`; candidates below `min_size` are dropped. Candidates are
    ordered by descending size, ties by smallest member id.
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must be in (0, 1)")
    part = select_partition(reactions, k_range, seed=seed, fuzzifier=fuzzifier)
    out: list[CommunityCandidate] = []
    for k in range(part.K):
        deg = part.memberships[:, k]
        members = {reactions.row_ids[i] for i in np.nonzero(deg >= threshold)[0]}
        if len(members) >= min_size:
            out.append(CommunityCandidate(
                members=members,
                degrees={reactions.row_ids[i]: float(deg[i]) for i in range(len(reactions.row_ids))}))
    out.sort(key=lambda c: (-len(c.members), min(c.members)))
    return out


def candidates_to_json(cands: Sequence[CommunityCandidate]) -> list[dict]:
    """JSON-ready export: member id arrays plus per-citizen degrees."""
    return [{"members": sorted(c.members),
             "degrees": {str(p): c.degrees[p] for p in sorted(c.degrees)}}
            for c in cands]


def principal_subcommunities(fabric, community: int, reactions: AttitudeMatrix,
                             seed: int = 0, fuzzifier: float = 2.0) -> list[set[int]]:
    """Detect a community's 2-7 dominant internal blocs and store them.

    Members are hard-assigned to their argmax cluster so downstream scoring
    can treat the blocs as discrete. Raises TooSmall below 4 sufficiently
    observed members; never returns fewer than 2 blocs silently.
    """
    comm = fabric.communities.get(community)
    if comm is None:
        raise NotFound(f"unknown community {community}")
    sub = reactions.restrict_rows(comm.members)
    observed = [r for i, r in enumerate(sub.row_ids) if np.any(sub.values[i] != 0.0)]
    if len(observed) < 4:
        raise TooSmall(f"community {community}: {len(observed)} observed members, need >= 4")
    sub = sub.restrict_rows(observed)
    part = select_partition(sub, (2, 7), seed=seed, fuzzifier=fuzzifier)
    assign = np.argmax(part.memberships, axis=1)
    blocs: list[set[int]] = []
    for k in range(part.K):
        bloc = {sub.row_ids[i] for i in np.nonzero(assign == k)[0]}
        if bloc:
            blocs.append(bloc)
    if len(blocs) < 2:
        raise DegenerateInput(f"community {community}: argmax assignment collapsed to one bloc")
    blocs.sort(key=lambda g: min(g))
    comm.principal_subcommunities = blocs
    return blocs


# -- graph clustering ---------------------------------------------------------

def modularity(edges: Sequence[tuple[int, int, float]],
               partition: Sequence[set[int]], resolution: float = 1.0) -> float:
    """Newman modularity with a resolution parameter, for weighted graphs."""
    two_m = sum(2.0 * w for _, _, w in edges)
    if two_m == 0:
        return 0.0
    comm_of: dict[int, int] = {}
    for ci, group in enumerate(partition):
        for node in group:
            comm_of[node] = ci
    intra = defaultdict(float)
    degree = defaultdict(float)
    for u, v, w in edges:
        degree[u] += w
        degree[v] += w
        if comm_of[u] == comm_of[v]:
            intra[comm_of[u]] += w
    q = 0.0
    for ci, group in enumerate(partition):
        deg_c = sum(degree[n] for n in group)
        q += 2.0 * intra[ci] / two_m - resolution * (deg_c / two_m) ** 2
    return q


def graph_cluster(edges: Sequence[tuple[int, int, float]],
                  resolution: float = 1.0, seed: int = 0) -> list[set[int]]:
    """Greedy single-level modularity maximization over a weighted graph.

    Nodes start in singleton communities; repeated passes in sorted node
    order move each node to the neighboring community with the best positive
    modularity gain (ties to the smallest community id) until stable.
    Deterministic given the edge list; the seed is accepted for interface
    stability but unused by the greedy sweep.
    """
    if not edges:
        return []
    nodes = sorted({n for u, v, _ in edges for n in (u, v)})
    weights: dict[tuple[int, int], float] = defaultdict(float)
    degree: dict[int, float] = defaultdict(float)
    neighbors: dict[int, set[int]] = defaultdict(set)
    two_m = 0.0
    for u, v, w in edges:
        if w <= 0:
            raise ValueError("edge weights must be positive")
        weights[(u, v)] += w
        weights[(v, u)] += w
        degree[u] += w
        degree[v] += w
        if u != v:
            neighbors[u].add(v)
            neighbors[v].add(u)
        two_m += 2.0 * w

    comm_of = {n: n for n in nodes}
    comm_degree = {n: degree[n] for n in nodes}

    def links_to(node: int) -> dict[int, float]:
        out: dict[int, float] = defaultdict(float)
        for nb in neighbors[node]:
            out[comm_of[nb]] += weights[(node, nb)]
        return out

    moved = True
    guard = 0
    while moved and guard < 200:
        moved = False
        guard += 1
        for node in nodes:
            current = comm_of[node]
            comm_degree[current] -= degree[node]
            lt = links_to(node)
            # Gain of joining community c: l_{n,c}/m - resolution * deg_n * deg_c / (2 m^2)
            best_comm, best_gain = current, lt.get(current, 0.0) / (two_m / 2.0) \
                - resolution * degree[node] * comm_degree[current] / (two_m / 2.0) ** 2 / 2.0
            for cand in sorted(lt):
                gain = lt[cand] / (two_m / 2.0) \
                    - resolution * degree[node] * comm_degree[cand] / (two_m / 2.0) ** 2 / 2.0
                if gain > best_gain + 1e-12 or (abs(gain - best_gain) <= 1e-12 and cand < best_comm):
                    best_comm, best_gain = cand, gain
            comm_of[node] = best_comm
            comm_degree[best_comm] = comm_degree.get(best_comm, 0.0) + degree[node]
            if best_comm != current:
                moved = True

    groups: dict[int, set[int]] = defaultdict(set)
    for n in nodes:
        groups[comm_of[n]].add(n)
    return [groups[c] for c in sorted(groups, key=lambda c: min(groups[c]))]

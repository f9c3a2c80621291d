"""Distance scales, sparse neighborhood covers, and per-scale potentials.

A cover for scale D holds a list of clusterings (partitions of V into
connected clusters of strong diameter at most D) such that every node has
some clustering containing its whole radius-D/tau ball inside one
cluster.  Clusterings are grown by shifted ball carving: centers are
visited in an exponentially-shifted random order and each carves a
Dijkstra ball of radius about D/2 out of the residual graph, which keeps
clusters connected and certifies the diameter deterministically.
Clusterings are added until the covering property holds, up to the
configured count, then once more up to double that before giving up.

Scale 0 (D = 1) always uses singleton clusterings; weights are assumed
to be at least 1, which the approximator layer guarantees by rescaling.
"""

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from boxflow.rng import child_rng


class CoverError(RuntimeError):
    """The retry budget was exhausted before the covering property held."""


def default_tau(n, paper_value=False):
    """Default tau = max(2, ceil(log2 n)); the published log^7 n by flag."""
    if paper_value:
        return max(2, int(math.ceil(math.log2(max(n, 2)) ** 7)))
    return max(2, int(math.ceil(math.log2(max(n, 2)))))


def default_num_clusterings(n):
    return max(1, int(math.ceil(4 * math.log2(max(n, 2)))))


@dataclass
class DistanceScales:
    tau: int
    beta: int
    levels: list  # D_i for i in I_scale, contiguous from 0
    i_max: int

    def level(self, i):
        # D_i = beta^i is defined beyond i_max too (used by row weights)
        if i < len(self.levels):
            return self.levels[i]
        return float(self.beta) ** i


def build_scales(g, tau):
    """Scales D_i = beta^i with beta = 8 tau, up to n^2 * max weight.

    Scale 0 is always present, so the index set is contiguous from 0.
    """
    if tau < 2:
        raise ValueError(f"tau must be at least 2, got {tau}")
    beta = 8 * tau
    limit = float(g.n) ** 2 * float(np.max(g.weight))
    levels = [1.0]
    nxt = float(beta)
    while nxt <= limit:
        levels.append(nxt)
        nxt *= beta
    return DistanceScales(tau=tau, beta=beta, levels=levels, i_max=len(levels) - 1)


@dataclass
class Clustering:
    ids: np.ndarray  # cluster id per node, dense 0..k-1
    members: list  # sorted node arrays per cluster id

    @property
    def n_clusters(self):
        return len(self.members)


@dataclass
class Cover:
    scale_index: int
    diameter: float
    radius: float  # covering radius D_i / tau
    clusterings: list = field(default_factory=list)
    covering_index: np.ndarray = None  # per node: first clustering covering its ball

    @property
    def num_clusterings(self):
        return len(self.clusterings)


def _make_clustering(ids_array):
    ids = np.asarray(ids_array, dtype=np.int64)
    k = int(ids.max()) + 1 if ids.size else 0
    members = [np.flatnonzero(ids == c) for c in range(k)]
    return Clustering(ids=ids, members=members)


def _singleton_clustering(n):
    return _make_clustering(np.arange(n))


def _truncated_ball(adj, n, source, radius):
    """Nodes within distance radius of source (full graph)."""
    dist = {source: 0.0}
    heap = [(0.0, source)]
    out = []
    while heap:
        du, u = heapq.heappop(heap)
        if du > dist[u]:
            continue
        out.append(u)
        for v, w, _e in adj[u]:
            nd = du + w
            if nd <= radius and (v not in dist or nd < dist[v]):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return out


def _carve_clustering(g, theta, order):
    """Partition V by residual Dijkstra balls of radius theta.

    Visiting centers in the given order, each unassigned center claims
    every unassigned node within distance theta of it in the residual
    graph.  Each cluster is a residual ball: connected, and its induced
    diameter is at most 2 theta.
    """
    n = g.n
    adj = g.adjacency()
    ids = np.full(n, -1, dtype=np.int64)
    next_id = 0
    for center in order:
        if ids[center] >= 0:
            continue
        dist = {center: 0.0}
        heap = [(0.0, center)]
        claimed = []
        while heap:
            du, u = heapq.heappop(heap)
            if du > dist.get(u, math.inf):
                continue
            claimed.append(u)
            for v, w, _e in adj[u]:
                if ids[v] >= 0:
                    continue
                nd = du + w
                if nd <= theta and (v not in dist or nd < dist[v]):
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        for u in claimed:
            ids[u] = next_id
        next_id += 1
    return _make_clustering(ids)


def _covering_ok(ball, ids):
    first = ids[ball[0]]
    for u in ball[1:]:
        if ids[u] != first:
            return False
    return True


def build_cover(g, scale_index, diameter, tau, seed, num_clusterings=None, stop_when_covered=True):
    """Cover for one scale; see module docstring for the construction.

    Raises CoverError if some ball is still uncovered after twice the
    target number of clusterings.
    """
    n = g.n
    num = num_clusterings if num_clusterings is not None else default_num_clusterings(n)
    radius = diameter / tau
    cover = Cover(scale_index=scale_index, diameter=diameter, radius=radius)
    covering_index = np.full(n, -1, dtype=np.int64)

    if diameter <= 1.0:
        # singleton scale; weights >= 1 make every covering ball trivial
        for j in range(1 if stop_when_covered else num):
            cover.clusterings.append(_singleton_clustering(n))
        covering_index[:] = 0
        cover.covering_index = covering_index
        return cover

    adj = g.adjacency()
    balls = [_truncated_ball(adj, n, v, radius) for v in range(n)]

    max_attempts = 2 * num
    attempt = 0
    while attempt < max_attempts:
        rng = child_rng(seed, "cover", scale_index, attempt)
        # exponential shifts order the centers; bigger shift carves first
        shifts = rng.exponential(size=n)
        order = np.argsort(-shifts, kind="stable")
        theta = (diameter / 2.0) * (0.7 + 0.3 * rng.random())
        clustering = _carve_clustering(g, theta, order)
        j = len(cover.clusterings)
        cover.clusterings.append(clustering)
        for v in range(n):
            if covering_index[v] < 0 and _covering_ok(balls[v], clustering.ids):
                covering_index[v] = j
        attempt += 1
        all_covered = bool((covering_index >= 0).all())
        if stop_when_covered and all_covered:
            break
        if not stop_when_covered and attempt >= num and all_covered:
            break

    if (covering_index < 0).any():
        missing = np.flatnonzero(covering_index < 0)
        raise CoverError(
            f"scale {scale_index} (D={diameter}): balls of {len(missing)} nodes "
            f"uncovered after {attempt} clusterings"
        )
    cover.covering_index = covering_index
    return cover


@dataclass
class DistanceStructure:
    """Cover plus potentials and derived p/w weights for one scale."""

    cover: Cover
    phi: list  # per clustering: array (n,) of potentials
    p: list = None  # per clustering: array (n,)
    w: np.ndarray = None  # array (n,)


@dataclass
class DistanceStructureSet:
    scales: DistanceScales
    structures: list  # DistanceStructure per scale index
    seed: int
    num_target: int

    @property
    def n_scales(self):
        return len(self.structures)


def build_potentials(g, cover):
    """phi_{V \\ C}(v) = min(dist_G(V \\ C, v), D_i) for every cluster.

    Distances are in the full graph; an empty complement (one cluster
    covering V) uses the convention +inf, capped to D_i.
    """
    n = g.n
    adj = g.adjacency()
    D = cover.diameter
    phis = []
    for clustering in cover.clusterings:
        phi = np.empty(n)
        for cid, members in enumerate(clustering.members):
            member_set = set(int(u) for u in members)
            if len(member_set) == n:
                phi[:] = D
                continue
            dist = {}
            heap = []
            # multi-source Dijkstra from the complement, stopping at D
            for u in range(n):
                if u not in member_set:
                    dist[u] = 0.0
                    heap.append((0.0, u))
            heapq.heapify(heap)
            while heap:
                du, u = heapq.heappop(heap)
                if du > dist.get(u, math.inf):
                    continue
                for v, w, _e in adj[u]:
                    nd = du + w
                    if nd <= D and (v not in dist or nd < dist[v]):
                        dist[v] = nd
                        heapq.heappush(heap, (nd, v))
            for u in members:
                u = int(u)
                phi[u] = min(dist.get(u, math.inf), D)
        phis.append(phi)
    return phis


def compute_pw(structure, tau):
    """p_{i,j}(v) = max(0, phi_{i,j}(v)/D_i - 0.25/tau); w_i = sum_j p_{i,j}."""
    D = structure.cover.diameter
    shift = 0.25 / tau
    ps = [np.maximum(0.0, phi / D - shift) for phi in structure.phi]
    w = np.sum(ps, axis=0) if ps else np.zeros(0)
    structure.p = ps
    structure.w = w
    return ps, w


def build_distance_structures(g, tau=None, seed=0, num_clusterings=None, stop_when_covered=True):
    """Scales, covers, potentials, and p/w for every scale of g."""
    tau = tau if tau is not None else default_tau(g.n)
    scales = build_scales(g, tau)
    num = num_clusterings if num_clusterings is not None else default_num_clusterings(g.n)
    structures = []
    for i, D in enumerate(scales.levels):
        cover = build_cover(
            g, i, D, tau, seed, num_clusterings=num, stop_when_covered=stop_when_covered
        )
        structure = DistanceStructure(cover=cover, phi=build_potentials(g, cover))
        compute_pw(structure, tau)
        structures.append(structure)
    return DistanceStructureSet(scales=scales, structures=structures, seed=seed, num_target=num)

"""Shared machinery of the two cost approximators.

A cost approximator holds a sparse matrix R whose rows are built from
graph structure; ||R d|| (l1 for transshipment, max for congestion)
estimates the optimal routing cost of demand d.  Because the raw
constants of the constructions are loose, a single global calibration
scale s is fitted once per approximator by maximizing OPT(d)/||R d||
over a batch of random two-point demands against cheap exact oracles; the
scaled operator s*R then satisfies the one-sided bound OPT <= ||s R d||
empirically, which is what the flow solvers rely on.  The measured upper
ratio rho = max ||s R d|| / OPT is logged, never assumed.
"""

import heapq
from dataclasses import dataclass

import numpy as np

from boxflow.rng import child_rng
from boxflow.sparsemat import compose, incidence_matrix, weight_inverse_matrix


@dataclass
class CalibrationReport:
    scale: float
    rho: float
    batch_size: int
    enabled: bool


class BaseApproximator:
    """Common behavior: scaling, norms, and the composed game operator."""

    norm_kind = "l1"  # overridden

    def __init__(self, graph, R_raw, row_decode, seed):
        self.graph = graph
        self.R = R_raw
        self.row_decode = row_decode
        self.seed = seed
        self.scale = 1.0
        self.calibration = CalibrationReport(scale=1.0, rho=float("nan"), batch_size=0, enabled=False)
        self._scaled_R = None
        self._M = None

    @property
    def n_rows(self):
        return self.R.n_rows

    def vec_norm(self, vec):
        if self.norm_kind == "l1":
            return float(np.abs(vec).sum())
        return float(np.abs(vec).max(initial=0.0))

    def apply_raw(self, d):
        return self.R.matvec(np.asarray(d, dtype=np.float64))

    def apply(self, d):
        """(s * R) @ d, the calibrated operator the solvers use."""
        return self.scaled_R().matvec(np.asarray(d, dtype=np.float64))

    def estimate(self, d):
        """||s R d||, the calibrated cost estimate."""
        return self.vec_norm(self.apply(d))

    def scaled_R(self):
        if self._scaled_R is None:
            self._scaled_R = self.R.scaled(self.scale) if self.scale != 1.0 else self.R
        return self._scaled_R

    def set_scale(self, scale):
        self.scale = float(scale)
        self._scaled_R = None
        self._M = None

    def game_operator(self):
        """M = (s R) B W^-1, cached; column sparse by composition."""
        if self._M is None:
            g = self.graph
            bw = compose(incidence_matrix(g), weight_inverse_matrix(g))
            self._M = compose(self.scaled_R(), bw)
        return self._M


def _pair_distance(g, u, v):
    """Shortest-path distance, the two-point transshipment optimum."""
    adj = g.adjacency()
    dist = {u: 0.0}
    heap = [(0.0, u)]
    while heap:
        du, x = heapq.heappop(heap)
        if x == v:
            return du
        if du > dist[x]:
            continue
        for y, w, _e in adj[x]:
            nd = du + w
            if y not in dist or nd < dist[y]:
                dist[y] = nd
                heapq.heappush(heap, (nd, y))
    raise RuntimeError("disconnected graph in pair distance")


def _pair_congestion(g, u, v):
    """Two-point congestion optimum: 1 / maxflow(u -> v) at capacities 1/w."""
    from boxflow.oracle import _Dinic

    net = _Dinic(g.n, 0.0)
    for e in range(g.m):
        cap = 1.0 / float(g.weight[e])
        net.add_edge(int(g.tail[e]), int(g.head[e]), cap, cap)
    value, _ = net.max_flow(u, v)
    if value <= 0:
        raise RuntimeError("zero max flow between distinct nodes")
    return 1.0 / value


def calibrate(approx, seed, batch_size=200, multipoint=16, safety=1.0):
    """Fit the global scale s = max OPT(d)/||R d|| over a calibration batch.

    The batch is two-point demands (cheap pair oracles) plus a handful of
    dense balanced demands priced by the exact oracle: tree cut bounds can
    be tight on every pair yet loose on spread demands, so pairs alone can
    undershoot the scale the one-sided bound needs.  safety multiplies the
    fitted scale; the cut-bound ratio of the tree approximator drifts
    above any finite batch maximum on fresh demands, so its builder passes
    safety=2.  Returns the CalibrationReport, also stored on the
    approximator.
    """
    g = approx.graph
    rng = child_rng(seed, "calibrate", approx.norm_kind)
    pair_opt = _pair_distance if approx.norm_kind == "l1" else _pair_congestion
    scale_needed = 0.0
    samples = []
    for _ in range(batch_size):
        u, v = (int(x) for x in rng.choice(g.n, size=2, replace=False))
        d = np.zeros(g.n)
        d[u], d[v] = 1.0, -1.0
        opt = pair_opt(g, u, v)
        est = approx.vec_norm(approx.apply_raw(d))
        if est <= 0:
            raise RuntimeError("approximator maps a nonzero demand to zero")
        samples.append((opt, est))
        scale_needed = max(scale_needed, opt / est)
    if multipoint > 0:
        from boxflow.oracle import opt_congestion, opt_transshipment

        for _ in range(multipoint):
            d = rng.normal(size=g.n)
            d -= d.mean()
            if approx.norm_kind == "l1":
                opt = opt_transshipment(g, d)[0]
            else:
                opt = opt_congestion(g, d)[0]
            est = approx.vec_norm(approx.apply_raw(d))
            if est <= 0 or opt <= 0:
                continue
            samples.append((opt, est))
            scale_needed = max(scale_needed, opt / est)
    scale_needed *= safety
    approx.set_scale(scale_needed)
    rho = max(scale_needed * est / opt for opt, est in samples)
    report = CalibrationReport(
        scale=scale_needed, rho=rho, batch_size=len(samples), enabled=True
    )
    approx.calibration = report
    return report

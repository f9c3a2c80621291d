"""Ground-truth solvers for desk-scale instances.

opt_transshipment: exact uncapacitated min-cost flow.  Balanced demand is
reduced to a transportation problem on the shortest-path metric (Dijkstra
from every supply node) and solved by successive shortest paths with
potentials; transported mass is routed back along the shortest-path trees
to produce an edge flow.  All arithmetic stays in int when the input is
integral, so answers like the golden 8-cycle cost come out exact.

opt_congestion: minimum congestion routing.  Feasibility of congestion c
(edge capacities c/w) is an exact max-flow question on a super-source /
super-sink network; bisection brackets the optimum and, for integer
inputs, a cut extracted from the last infeasible probe gives a rational
candidate |d(S)|/cap(S) that is certified by one exact feasibility check
in Fraction arithmetic.
"""

import heapq
from fractions import Fraction

import numpy as np

from boxflow.graphs import validate_demand


class OracleError(RuntimeError):
    pass


def _is_integral(arr):
    return all(float(v).is_integer() for v in arr)


def _dijkstra(g, source, as_int=False):
    """Distances and predecessor (edge, node) arrays from source."""
    n = g.n
    dist = [None] * n
    pred = [-1] * n
    pred_node = [-1] * n
    adj = g.adjacency()
    dist[source] = 0 if as_int else 0.0
    heap = [(dist[source], source)]
    done = [False] * n
    while heap:
        du, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w, e in adj[u]:
            if done[v]:
                continue
            nd = du + (int(w) if as_int else w)
            if dist[v] is None or nd < dist[v]:
                dist[v] = nd
                pred[v] = e
                pred_node[v] = u
                heapq.heappush(heap, (nd, v))
    if any(x is None for x in dist):
        raise OracleError("graph not connected")
    return dist, pred, pred_node


def opt_transshipment(g, d):
    """Exact optimum of  min ||Wf||_1 : Bf = d.

    Returns (cost, flow, potentials): a feasible flow attaining the cost
    and optimal dual potentials with <d, phi> equal to the cost.
    """
    d = np.asarray(d, dtype=np.float64)
    validate_demand(d)
    integral = _is_integral(g.weight) and _is_integral(d)
    if integral:
        dd = [int(round(v)) for v in d]
    else:
        dd = [float(v) for v in d]
        total = sum(dd)
        if total != 0.0:
            # absorb float imbalance so transport masses match exactly
            k = int(np.argmax(np.abs(d)))
            dd[k] -= total

    supplies = [v for v in range(g.n) if dd[v] > 0]
    demands = [v for v in range(g.n) if dd[v] < 0]
    flow = np.zeros(g.m)
    if not supplies:
        return (0 if integral else 0.0), flow, np.zeros(g.n)

    sp = {s: _dijkstra(g, s, as_int=integral) for s in supplies}
    mass_tol = 0 if integral else 1e-12 * float(np.abs(d).sum())

    plan, cost = _solve_transport(
        supplies,
        demands,
        {s: dd[s] for s in supplies},
        {t: -dd[t] for t in demands},
        lambda s, t: sp[s][0][t],
        mass_tol,
    )

    for (s, t), q in plan.items():
        if q == 0:
            continue
        _dist, pred, pred_node = sp[s]
        v = t
        while v != s:
            e = pred[v]
            u = pred_node[v]
            if int(g.head[e]) == v:
                flow[e] += q
            else:
                flow[e] -= q
            v = u

    phi = _transshipment_duals(g, flow)
    return cost, flow, phi


def _solve_transport(supplies, demands, supply, deficit, dist_fn, mass_tol):
    """Successive shortest paths on the bipartite transport network.

    Node potentials keep reduced costs nonnegative, so each augmentation
    is a Dijkstra over supply and demand nodes plus residual arcs.
    Returns ({(s, t): mass}, total_cost).
    """
    remaining_s = dict(supply)
    remaining_t = dict(deficit)
    plan = {}
    pot_s = {s: 0 for s in supplies}
    pot_t = {t: min(dist_fn(s, t) for s in supplies) for t in demands}
    guard = 4 * (len(supplies) * len(demands) + len(supplies) + len(demands)) + 16

    while True:
        active = [s for s in supplies if remaining_s[s] > mass_tol]
        if not active:
            break
        guard -= 1
        if guard < 0:
            raise OracleError("transport augmentation did not terminate")

        dist = {}
        prev = {}
        heap = []
        for s in active:
            dist[("s", s)] = 0
            prev[("s", s)] = None
            heapq.heappush(heap, (0, 0, ("s", s)))
        done = set()
        order = 1
        while heap:
            du, _, node = heapq.heappop(heap)
            if node in done:
                continue
            done.add(node)
            kind, v = node
            if kind == "s":
                for t in demands:
                    red = dist_fn(v, t) + pot_s[v] - pot_t[t]
                    nd = du + red
                    key = ("t", t)
                    if key not in dist or nd < dist[key]:
                        dist[key] = nd
                        prev[key] = node
                        heapq.heappush(heap, (nd, order, key))
                        order += 1
            else:
                for s in supplies:
                    if plan.get((s, v), 0) > mass_tol:
                        red = -(dist_fn(s, v) + pot_s[s] - pot_t[v])
                        nd = du + red
                        key = ("s", s)
                        if key not in dist or nd < dist[key]:
                            dist[key] = nd
                            prev[key] = node
                            heapq.heappush(heap, (nd, order, key))
                            order += 1

        targets = [t for t in demands if remaining_t[t] > mass_tol and ("t", t) in dist]
        if not targets:
            break
        t_best = min(targets, key=lambda t: (dist[("t", t)], t))

        path = []
        node = ("t", t_best)
        while prev[node] is not None:
            path.append((prev[node], node))
            node = prev[node]
        path.reverse()
        s_first = node[1]
        amount = min(remaining_s[s_first], remaining_t[t_best])
        for a, b in path:
            if a[0] == "t" and b[0] == "s":
                amount = min(amount, plan[(b[1], a[1])])
        for a, b in path:
            if a[0] == "s" and b[0] == "t":
                plan[(a[1], b[1])] = plan.get((a[1], b[1]), 0) + amount
            elif a[0] == "t" and b[0] == "s":
                plan[(b[1], a[1])] -= amount
        remaining_s[s_first] -= amount
        remaining_t[t_best] -= amount
        for t in demands:
            if ("t", t) in dist:
                pot_t[t] += dist[("t", t)]
        for s in supplies:
            if ("s", s) in dist:
                pot_s[s] += dist[("s", s)]

    cost = sum(dist_fn(s, t) * q for (s, t), q in plan.items() if q > 0)
    return {k: q for k, q in plan.items() if q > 0}, cost


def _transshipment_duals(g, flow):
    """Optimal potentials via Bellman-Ford on the residual network.

    Flow-carrying directions contribute -w arcs; at optimality there is no
    negative cycle and flow arcs come out tight, so <d, phi> matches the
    primal cost.
    """
    n = g.n
    pot = [0.0] * n
    arcs = []
    for e in range(g.m):
        u, v, w = int(g.tail[e]), int(g.head[e]), float(g.weight[e])
        arcs.append((u, v, w))
        arcs.append((v, u, w))
        if flow[e] > 0:
            arcs.append((v, u, -w))
        elif flow[e] < 0:
            arcs.append((u, v, -w))
    for _ in range(n + 1):
        changed = False
        for u, v, w in arcs:
            if pot[u] + w < pot[v] - 1e-12:
                pot[v] = pot[u] + w
                changed = True
        if not changed:
            break
    else:
        raise OracleError("negative cycle in residual network; flow not optimal")
    return -np.asarray(pot)


# -- minimum congestion ------------------------------------------------------


class _Dinic:
    """Max flow over float or Fraction capacities."""

    def __init__(self, n_nodes, zero):
        self.n = n_nodes
        self.zero = zero
        self.head = [[] for _ in range(n_nodes)]
        self.to = []
        self.cap = []

    def add_edge(self, u, v, cap_uv, cap_vu):
        idx = len(self.to)
        self.head[u].append(idx)
        self.to.append(v)
        self.cap.append(cap_uv)
        self.head[v].append(idx + 1)
        self.to.append(u)
        self.cap.append(cap_vu)
        return idx

    def max_flow(self, s, t):
        total = self.zero
        big = Fraction(10**30) if isinstance(self.zero, Fraction) else float("inf")
        last_level = None
        while True:
            level = [-1] * self.n
            level[s] = 0
            queue = [s]
            for u in queue:
                for idx in self.head[u]:
                    v = self.to[idx]
                    if self.cap[idx] > self.zero and level[v] < 0:
                        level[v] = level[u] + 1
                        queue.append(v)
            if level[t] < 0:
                return total, level
            last_level = level
            it = [0] * self.n

            def dfs(u, pushed):
                if u == t:
                    return pushed
                while it[u] < len(self.head[u]):
                    idx = self.head[u][it[u]]
                    v = self.to[idx]
                    if self.cap[idx] > self.zero and level[v] == level[u] + 1:
                        got = dfs(v, min(pushed, self.cap[idx]))
                        if got > self.zero:
                            self.cap[idx] -= got
                            self.cap[idx ^ 1] += got
                            return got
                    it[u] += 1
                return self.zero

            while True:
                pushed = dfs(s, big)
                if pushed <= self.zero:
                    break
                total += pushed


def _route_feasible(g, dd, congestion, exact, slack=0):
    """Can dd be routed with congestion cap?  Exact uses Fractions.

    Returns (feasible, source_side_nodes, signed_edge_flow).
    """
    n = g.n
    src, snk = n, n + 1
    zero = Fraction(0) if exact else 0.0
    net = _Dinic(n + 2, zero)
    edge_arc = []
    caps = []
    for e in range(g.m):
        u, v = int(g.tail[e]), int(g.head[e])
        w = Fraction(float(g.weight[e])) if exact else float(g.weight[e])
        cap = congestion / w
        caps.append(cap)
        edge_arc.append(net.add_edge(u, v, cap, cap))
    total = zero
    for v in range(n):
        if dd[v] > zero:
            net.add_edge(src, v, dd[v], zero)
            total += dd[v]
        elif dd[v] < zero:
            net.add_edge(v, snk, -dd[v], zero)
    value, level = net.max_flow(src, snk)
    feasible = value >= total - slack
    source_side = [v for v in range(n) if level[v] >= 0]
    flow = np.zeros(g.m)
    for e in range(g.m):
        idx = edge_arc[e]
        # residual bookkeeping: forward use minus backward use, halved
        # because unused capacity shows up on both sides
        fwd = caps[e] - net.cap[idx]
        bwd = caps[e] - net.cap[idx ^ 1]
        flow[e] = float(fwd - bwd) / 2.0
    return feasible, source_side, flow


def _cut_bound_exact(g, dd_int, cut_nodes):
    """|d(S)| / cap(S) as an exact Fraction, or None for trivial cuts."""
    in_cut = set(cut_nodes)
    if not in_cut or len(in_cut) == g.n:
        return None
    dS = sum(dd_int[v] for v in in_cut)
    cap = Fraction(0)
    for e in range(g.m):
        u, v = int(g.tail[e]), int(g.head[e])
        if (u in in_cut) != (v in in_cut):
            cap += Fraction(1) / Fraction(float(g.weight[e]))
    if cap == 0 or dS == 0:
        return None
    return abs(Fraction(dS)) / cap


def opt_congestion(g, d):
    """Exact optimum of  min ||Wf||_inf : Bf = d.

    Returns (cost, flow).  For integral input the cost is a certified
    rational: a cut bound |d(S)|/cap(S) matched by an exact feasibility
    check.  Otherwise bisection to relative 1e-9.
    """
    d = np.asarray(d, dtype=np.float64)
    validate_demand(d)
    if not np.any(d):
        return 0.0, np.zeros(g.m)
    integral = _is_integral(g.weight) and _is_integral(d)

    dd = [float(v) for v in d]
    total_pos = sum(v for v in dd if v > 0)
    hi = total_pos * float(np.max(g.weight))
    lo = 0.0
    slack = 1e-11 * max(total_pos, 1.0)
    flow = None
    cuts = []
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        ok, cut, f = _route_feasible(g, dd, mid, exact=False, slack=slack)
        if ok:
            hi = mid
            flow = f
        else:
            lo = mid
            cuts.append(cut)
        if hi - lo <= 1e-12 * max(hi, 1e-30):
            break

    if integral:
        dd_int = [int(round(v)) for v in d]
        seen = set()
        for cut in reversed(cuts):
            key = tuple(sorted(cut))
            if key in seen:
                continue
            seen.add(key)
            cand = _cut_bound_exact(g, dd_int, cut)
            if cand is None or not (lo * 0.999 <= float(cand) <= hi * 1.001):
                continue
            ok, _, exact_flow = _route_feasible(
                g, [Fraction(x) for x in dd_int], cand, exact=True
            )
            if ok:
                return float(cand), exact_flow

    if flow is None:
        _, _, flow = _route_feasible(g, dd, hi, exact=False, slack=slack)
    return hi, flow

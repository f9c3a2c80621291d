"""Max flow and transshipment via box-simplex games.

Both problems reduce to a family of games parameterized by a cost guess
t.  With M = (s R) B W^-1:

  max flow:       A^T = [M; -M]   b = [Rd; -Rd]/t   c = 0
  transshipment:  A   = [M, -M]   b = 0             c = -(Rd)/t

The certified game value at t measures the relative residual of the best
flow of cost at most t: zero when t is at least the optimum and at least
(OPT - t)/t below it.  A geometric grid over t is bisected for the
smallest t whose certified value is at most 2*eps_s; the deciding probe's
iterate also yields the primal flow, whose demand error is repaired by
coarse recursive solves plus an exact shortest-path-tree routing.  The
dual comes from one more solve just below the found threshold, following
the primal-dual extraction of the underlying reduction.
"""

import heapq
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from boxflow.boxsimplex import (
    BoxSimplexInstance,
    ColStackKernel,
    CsrKernel,
    MatCore,
    RowStackKernel,
    SolverConfig,
    solve_decide,
)
from boxflow.graphs import apply_B, apply_BT, validate_demand
from boxflow.sparsemat import ColSparseMatrix
from boxflow.tree_approx import build_mf_approximator
from boxflow.ts_approx import build_ts_approximator


class FlowSolveError(RuntimeError):
    pass


@dataclass
class FlowConfig:
    """Accuracy policy derived from the caller's eps.

    probe_div: probe accuracy is eps/probe_div and the threshold test is
    value <= 2*eps/probe_div.  grid_factor: multiplicative step 1 +
    eps/grid_factor.  dual_offset: the dual solve runs at (1 -
    eps*dual_offset) * t.  repair_theta: repair down to eps*repair_theta
    times ||R d||.
    """

    probe_div: float = 6.0
    grid_factor: float = 4.0
    dual_offset: float = 0.5
    repair_theta: float = 0.125
    repair_eps: float = 0.5
    max_bracket_expansions: int = 6
    max_repair_rounds: int = 60
    early_exit: bool = True
    alpha: float = 2.0
    beta: float = 2.0
    t_multiplier: float = 6.0


@dataclass
class SolveReport:
    problem: str
    eps: float
    n: int
    m: int
    primal_flow: np.ndarray
    primal_cost: float
    feasibility_residual: float
    dual_potentials: np.ndarray
    dual_value: float
    dual_norm: float
    t_final: float
    t_dual: float
    t_trace: list
    iterations_total: int
    solve_calls: int
    repair_rounds: int
    approx_scale: float
    approx_rho: float
    game_norm: float
    rounds_total: int = 0
    mode: str = "centralized"
    seed: int = 0


class CentralizedCore:
    """Products with M and s*R via the raw CSR kernels."""

    def __init__(self, approx):
        self._mk = CsrKernel(approx.game_operator())
        self._rk = CsrKernel(approx.scaled_R())
        self.rounds = 0  # minor-aggregation cores count; centralized is free

    def mul_M(self, x):
        return self._mk.A(x)

    def mul_MT(self, y):
        return self._mk.AT(y)

    def mul_absM(self, x):
        return self._mk.absA(x)

    def mul_absMT(self, y):
        return self._mk.absAT(y)

    def mul_R(self, d):
        return self._rk.A(d)

    def mul_RT(self, y):
        return self._rk.AT(y)


def _stack_rows(mat):
    """Explicit game matrix with A^T = [M; -M]: A = [M^T, -M^T]."""
    csc = mat.to_csc()
    game = sp.hstack([csc.T.tocsc(), -csc.T.tocsc()], format="csc")
    return ColSparseMatrix(game, col_bound=None)


def _stack_cols(mat):
    """Explicit game matrix A = [M, -M]."""
    csc = mat.to_csc()
    game = sp.hstack([csc, -csc], format="csc")
    return ColSparseMatrix(game, col_bound=2 * mat.col_bound)


class _GameFamily:
    """The t-independent parts of the game family for one problem."""

    def __init__(self, problem, g, approx, core):
        self.problem = problem
        self.g = g
        self.approx = approx
        self.core = core
        self.k = approx.scaled_R().n_rows
        self.m = g.m
        self.rd = None
        if problem == "maxflow":
            self.game_A = _stack_rows(approx.game_operator())
            self.kernel = RowStackKernel(core, self.k)
        else:
            self.game_A = _stack_cols(approx.game_operator())
            self.kernel = ColStackKernel(core, self.m)
        self.L = self.game_A.one_to_one_norm()

    def set_demand(self, d):
        self.rd = self.core.mul_R(np.asarray(d, dtype=np.float64))

    def estimate(self):
        return self.approx.vec_norm(self.rd)

    def instance_at(self, t):
        if self.problem == "maxflow":
            b = np.concatenate([self.rd, -self.rd]) / t
            c = np.zeros(self.m)
        else:
            b = np.zeros(2 * self.m)
            c = -self.rd / t
        return BoxSimplexInstance(self.game_A, b, c, kernel=self.kernel, L=self.L)

    def extract_primal(self, t, pt):
        w = self.g.weight
        if self.problem == "maxflow":
            return t * pt.x / w
        y1, y2 = pt.y[: self.m], pt.y[self.m :]
        return t * (y1 - y2) / w


@dataclass
class _Probe:
    t: float
    yes: bool
    value: float
    point: object


def _solver_config(cfg, trace=False):
    return SolverConfig(
        alpha=cfg.alpha,
        beta=cfg.beta,
        t_multiplier=cfg.t_multiplier,
        early_exit=cfg.early_exit,
        collect_trace=trace,
    )


def _run_probe(family, t, eps_probe, threshold, cfg):
    inst = family.instance_at(t)
    eps_eff = min(eps_probe, inst.L / 2) if inst.L > 0 else eps_probe
    sc = _solver_config(cfg)
    if family.problem == "maxflow":
        pt, up, lo = solve_decide(
            inst, eps_eff, config=sc, upper_at_most=threshold, lower_above=threshold
        )
        value = up
    else:
        pt, up, lo = solve_decide(
            inst, eps_eff, config=sc, upper_at_most=-threshold, lower_above=-threshold
        )
        value = -lo
    return _Probe(t=t, yes=value <= threshold, value=value, point=pt)


def _threshold_search(family, eps, cfg, trace, counters):
    """Smallest grid t whose certified game value is at most 2 eps_s."""
    est = family.estimate()
    if est <= 0:
        raise FlowSolveError("approximator estimate of the demand is zero")
    rho = family.approx.calibration.rho
    if not (rho and math.isfinite(rho)):
        rho = max(4.0, family.L) * family.g.n
    eps_s = eps / cfg.probe_div
    threshold = 2.0 * eps_s
    step = 1.0 + eps / cfg.grid_factor
    t_lo = est / (2.0 * rho)
    t_hi = est * 1.05
    cache = {}

    def probe(k):
        if k not in cache:
            p = _run_probe(family, t_lo * step**k, eps_s, threshold, cfg)
            counters["iterations"] += p.point.iterations
            counters["solves"] += 1
            trace.append((p.t, p.value, bool(p.yes)))
            cache[k] = p
        return cache[k]

    K = max(1, math.ceil(math.log(t_hi / t_lo) / math.log(step)))
    for _ in range(cfg.max_bracket_expansions):
        if probe(K).yes:
            break
        K = math.ceil(K * 1.5) + 4
    else:
        raise FlowSolveError("no threshold with small game value found; bracket exhausted")

    lo_k = 0
    if probe(0).yes:
        # estimate was loose on the high side; walk the bracket down
        for _ in range(cfg.max_bracket_expansions):
            shift = max(8, K // 2)
            t_lo /= step**shift
            shifted = {k + shift: p for k, p in cache.items()}
            cache.clear()
            cache.update(shifted)
            K += shift
            if not probe(0).yes:
                break
        else:
            pass  # t_lo is tiny; accept the lowest YES
    hi_k = min(k for k, p in cache.items() if p.yes)
    lo_k = max([k for k, p in cache.items() if k < hi_k and not p.yes], default=-1)
    while hi_k - lo_k > 1:
        mid = (hi_k + lo_k) // 2
        if probe(mid).yes:
            hi_k = mid
        else:
            lo_k = mid
    return probe(hi_k)


def _spt_route(g, d):
    """Route d exactly on a shortest-path tree rooted at node 0."""
    adj = g.adjacency()
    dist = [math.inf] * g.n
    pred_edge = [-1] * g.n
    pred_node = [-1] * g.n
    dist[0] = 0.0
    heap = [(0.0, 0)]
    done = [False] * g.n
    order = []
    while heap:
        du, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        order.append(u)
        for v, w, e in adj[u]:
            if not done[v] and du + w < dist[v]:
                dist[v] = du + w
                pred_edge[v] = e
                pred_node[v] = u
                heapq.heappush(heap, (dist[v], v))
    flow = np.zeros(g.m)
    subtree = np.array(d, dtype=np.float64)
    for u in reversed(order):
        if u == 0:
            continue
        e, par = pred_edge[u], pred_node[u]
        q = subtree[u]
        # the parent edge carries the whole subtree imbalance outward
        if int(g.tail[e]) == par and int(g.head[e]) == u:
            flow[e] -= q
        else:
            flow[e] += q
        subtree[par] += q
    return flow


def repair_flow(g, approx, d_resid, threshold, cfg=None, core=None, counters=None):
    """Flow f with B f = d_resid (exact tree routing at the end).

    Coarse recursive solves shrink the residual in approximator norm until
    both the stated threshold and the measured cost of tree-routing the
    remainder are small, then the remainder is routed on a shortest-path
    tree.
    """
    cfg = cfg or FlowConfig()
    counters = counters if counters is not None else {"iterations": 0, "solves": 0}
    d_r = np.asarray(d_resid, dtype=np.float64).copy()
    total = np.zeros(g.m)
    if not np.any(d_r):
        return total, 0
    core = core or CentralizedCore(approx)
    family = _GameFamily("maxflow" if approx.norm_kind == "linf" else "transshipment", g, approx, core)
    rounds = 0
    eps_rep = cfg.repair_eps
    prev = math.inf
    while rounds < cfg.max_repair_rounds:
        est = approx.vec_norm(core.mul_R(d_r))
        tree = _spt_route(g, d_r)
        tree_cost = _cost(g, tree, approx.norm_kind)
        if (est <= threshold and tree_cost <= threshold) or est == 0.0:
            break
        family.set_demand(d_r)
        sub_cfg = cfg
        probe = _threshold_search(family, eps_rep, sub_cfg, trace=[], counters=counters)
        f_k = family.extract_primal(probe.t, probe.point)
        total += f_k
        d_r = d_r - apply_B(g, f_k)
        rounds += 1
        if est >= prev * 0.95:
            eps_rep = max(eps_rep / 2.0, 1e-3)
        prev = est
    total += _spt_route(g, d_r)
    return total, rounds


def _cost(g, flow, norm_kind):
    scaled = np.abs(flow) * g.weight
    if norm_kind == "linf":
        return float(scaled.max(initial=0.0))
    return float(scaled.sum())


def _extract_dual(family, t_found, eps, cfg, counters):
    g = family.g
    t_dual = (1.0 - eps * cfg.dual_offset) * t_found
    inst = family.instance_at(t_dual)
    eps_s = min(eps / cfg.probe_div, inst.L / 2 if inst.L > 0 else math.inf)
    sc = _solver_config(cfg)
    if family.problem == "maxflow":
        pt, _up, _lo = solve_decide(inst, eps_s, config=sc, lower_above=0.0)
        y1, y2 = pt.y[: family.k], pt.y[family.k :]
        phi = -family.core.mul_RT(y1 - y2)
        norm = float(np.abs(apply_BT(g, phi) / g.weight).sum())
    else:
        pt, _up, _lo = solve_decide(inst, eps_s, config=sc, upper_at_most=0.0)
        phi = t_dual * family.core.mul_RT(pt.x)
        norm = float(np.abs(apply_BT(g, phi) / g.weight).max(initial=0.0))
    counters["iterations"] += pt.iterations
    counters["solves"] += 1
    if norm <= 0:
        raise FlowSolveError("degenerate dual: potentials are constant")
    phi = phi / norm
    return phi, t_dual


def _solve_flow(problem, g, d, eps, approx, seed, cfg, core):
    d = np.asarray(d, dtype=np.float64)
    validate_demand(d)
    if not (0 < eps < 0.5):
        raise ValueError(f"eps must be in (0, 1/2), got {eps}")
    cfg = cfg or FlowConfig()
    norm_kind = "linf" if problem == "maxflow" else "l1"

    if not np.any(d):
        return SolveReport(
            problem=problem,
            eps=eps,
            n=g.n,
            m=g.m,
            primal_flow=np.zeros(g.m),
            primal_cost=0.0,
            feasibility_residual=0.0,
            dual_potentials=np.zeros(g.n),
            dual_value=0.0,
            dual_norm=0.0,
            t_final=0.0,
            t_dual=0.0,
            t_trace=[],
            iterations_total=0,
            solve_calls=0,
            repair_rounds=0,
            approx_scale=approx.scale if approx else 1.0,
            approx_rho=float("nan"),
            game_norm=0.0,
            seed=seed,
        )

    core = core or CentralizedCore(approx)
    family = _GameFamily(problem, g, approx, core)
    family.set_demand(d)
    trace = []
    counters = {"iterations": 0, "solves": 0}

    found = _threshold_search(family, eps, cfg, trace, counters)
    t_final = found.t
    f_raw = family.extract_primal(t_final, found.point)

    d_resid = d - apply_B(g, f_raw)
    threshold = eps * cfg.repair_theta * family.estimate()
    f_rep, repair_rounds = repair_flow(
        g, approx, d_resid, threshold, cfg=cfg, core=core, counters=counters
    )
    flow = f_raw + f_rep
    resid = float(np.abs(apply_B(g, flow) - d).sum()) / max(float(np.abs(d).sum()), 1e-300)

    phi, t_dual = _extract_dual(family, t_final, eps, cfg, counters)
    dual_value = float(d @ phi)
    if dual_value < 0:
        phi = -phi
        dual_value = -dual_value
    if norm_kind == "linf":
        dual_norm = float(np.abs(apply_BT(g, phi) / g.weight).sum())
    else:
        dual_norm = float(np.abs(apply_BT(g, phi) / g.weight).max(initial=0.0))

    return SolveReport(
        problem=problem,
        eps=eps,
        n=g.n,
        m=g.m,
        primal_flow=flow,
        primal_cost=_cost(g, flow, norm_kind),
        feasibility_residual=resid,
        dual_potentials=phi,
        dual_value=dual_value,
        dual_norm=dual_norm,
        t_final=t_final,
        t_dual=t_dual,
        t_trace=trace,
        iterations_total=counters["iterations"],
        solve_calls=counters["solves"],
        repair_rounds=repair_rounds,
        approx_scale=approx.scale,
        approx_rho=approx.calibration.rho,
        game_norm=family.L,
        rounds_total=getattr(core, "rounds", 0),
        seed=seed,
    )


def build_maxflow_instance(g, approx, d, t):
    """Explicit box-simplex instance of the congestion game at guess t."""
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    family = _GameFamily("maxflow", g, approx, CentralizedCore(approx))
    family.set_demand(np.asarray(d, dtype=np.float64))
    return family.instance_at(t)


def build_ts_instance(g, approx, d, t):
    """Explicit box-simplex instance of the transshipment game at guess t."""
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    family = _GameFamily("transshipment", g, approx, CentralizedCore(approx))
    family.set_demand(np.asarray(d, dtype=np.float64))
    return family.instance_at(t)


def solve_maxflow(g, d, eps, approx=None, seed=0, cfg=None, core=None):
    """(1+eps)-approximate min-congestion routing of d, primal and dual."""
    if approx is None:
        approx = build_mf_approximator(g, seed=seed)
    return _solve_flow("maxflow", g, d, eps, approx, seed, cfg, core)


def solve_transshipment(g, d, eps, approx=None, seed=0, cfg=None, core=None):
    """(1+eps)-approximate transshipment of d, primal and dual."""
    if approx is None:
        approx = build_ts_approximator(g, seed=seed)
    return _solve_flow("transshipment", g, d, eps, approx, seed, cfg, core)

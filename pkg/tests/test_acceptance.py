"""Acceptance suite: one test per criterion, one printed line per criterion.

Run with `pytest -s tests/test_acceptance.py -v` to see the pass/fail
lines as they happen.
"""

import json
import math
import time

import numpy as np
import pytest

from boxflow.boxsimplex import BoxSimplexInstance, SolverConfig, iteration_budget, solve
from boxflow.cli import main as cli_main
from boxflow.graphs import apply_BT
from boxflow.minoragg import MinorAggCore, MinorAggNetwork, dist_matvec
from boxflow.oracle import opt_congestion, opt_transshipment
from boxflow.solvers import CentralizedCore, solve_transshipment
from boxflow.sparsemat import compose, incidence_matrix, weight_inverse_matrix
from boxflow.tree_approx import build_mf_approximator
from boxflow.ts_approx import build_ts_approximator

from conftest import (
    cycle_graph,
    grid_graph,
    path_graph,
    random_connected_graph,
    star_graph,
)
from test_sparsemat import random_col_sparse

EIGHT_CYCLE = "\n".join(f"{i} {(i + 1) % 8} 1" for i in range(8)) + "\n"
FIG1_D = "0 2\n1 -1\n3 1\n4 -1\n6 -1\n"
FIG2_D = "0 -2\n1 2\n3 1\n4 -1\n"


def _report(criterion, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE criterion-{criterion}: {status} ({detail})")
    assert ok, f"criterion-{criterion}: {detail}"


def _run_cli(argv, path):
    rc = cli_main(argv + ["--report", str(path)])
    assert rc == 0, f"cli exited {rc} for {argv}"
    return json.loads(open(path).read())


@pytest.fixture(scope="module")
def golden_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("golden")
    (d / "g.txt").write_text(EIGHT_CYCLE)
    (d / "fig1.d").write_text(FIG1_D)
    (d / "fig2.d").write_text(FIG2_D)
    return d


def test_criterion_1_golden_instances(golden_files):
    d = golden_files
    g, f1, f2 = str(d / "g.txt"), str(d / "fig1.d"), str(d / "fig2.d")
    msgs = []

    t0 = time.time()
    rep = _run_cli(["oracle", "--graph", g, "--demand", f1, "--problem", "transshipment"], d / "o1.json")
    ok = rep["result"]["cost"] == 4
    msgs.append(f"oracle ts = {rep['result']['cost']}")

    rep = _run_cli(["transshipment", "--graph", g, "--demand", f1, "--eps", "0.1"], d / "s1.json")
    res = rep["result"]
    dt1 = time.time() - t0
    ok &= 4.0 - 1e-9 <= res["primal_cost"] <= 4.4
    ok &= res["dual_value"] >= 3.6
    ok &= abs(res["dual_norm"] - 1.0) <= 1e-9
    ok &= dt1 <= 10.0
    msgs.append(f"ts cost={res['primal_cost']:.4f} dual={res['dual_value']:.4f} {dt1:.1f}s")

    t0 = time.time()
    rep = _run_cli(["oracle", "--graph", g, "--demand", f2, "--problem", "congestion"], d / "o2.json")
    ok &= rep["result"]["cost"] == 1.5
    msgs.append(f"oracle congestion = {rep['result']['cost']}")

    rep = _run_cli(["maxflow", "--graph", g, "--demand", f2, "--eps", "0.1"], d / "s2.json")
    res = rep["result"]
    dt2 = time.time() - t0
    ok &= 1.5 - 1e-9 <= res["primal_cost"] <= 1.65
    ok &= res["dual_value"] >= 1.35
    ok &= abs(res["dual_norm"] - 1.0) <= 1e-9
    ok &= dt2 <= 10.0
    msgs.append(f"mf cost={res['primal_cost']:.4f} dual={res['dual_value']:.4f} {dt2:.1f}s")
    _report(1, ok, "; ".join(msgs))


def _criterion2_instances():
    rng = np.random.default_rng(20240)
    out = []
    for _ in range(50):
        while True:
            n = int(rng.integers(5, 101))
            dd = int(rng.integers(5, 101))
            A = random_col_sparse(n, dd, 3, rng)
            if A.one_to_one_norm() >= 1.0:
                break
        b = rng.normal(size=dd)
        c = rng.normal(size=n)
        out.append(BoxSimplexInstance(A, b, c))
    return out


@pytest.fixture(scope="module")
def c2_instances():
    return _criterion2_instances()


def test_criterion_2_saddle_certification(c2_instances):
    t0 = time.time()
    worst = 0.0
    ok = True
    for eps in (0.3, 0.1, 0.03):
        for inst in c2_instances:
            pt = solve(inst, eps)
            ok &= pt.gap <= eps
            worst = max(worst, pt.gap / eps)
    dt = time.time() - t0
    ok &= dt <= 60.0
    _report(2, ok, f"150 solves, worst gap/eps = {worst:.3f}, {dt:.1f}s (budget 60s)")


def test_criterion_3_iteration_scaling(c2_instances):
    # Part 1: the full-budget guarantee with early exit off.
    ok = True
    worst = 0.0
    cfg = SolverConfig(early_exit=False, check_every=10**9)
    for eps in (0.3, 0.1, 0.03):
        for inst in c2_instances:
            pt = solve(inst, eps, cfg)
            assert pt.iterations == pt.scheduled_iterations
            assert pt.scheduled_iterations == iteration_budget(inst.d, inst.L, eps)
            ok &= pt.gap <= eps
            worst = max(worst, pt.gap / eps)
    # Part 2: early exit iteration grows at most linearly in 1/eps.
    rng = np.random.default_rng(77)
    A = random_col_sparse(40, 40, 3, rng)
    inst = BoxSimplexInstance(A, rng.normal(size=40), rng.normal(size=40))
    inv_eps, iters = [], []
    for eps in (0.4, 0.2, 0.1, 0.05):
        pt = solve(inst, eps)
        inv_eps.append(1.0 / eps)
        iters.append(pt.iterations)
    x = np.array(inv_eps)
    y = np.array(iters, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot
    ok &= r2 >= 0.9
    _report(3, ok, f"worst full-T gap/eps = {worst:.3f}; early-exit linear fit R^2 = {r2:.3f}")


def _criterion4_graphs():
    rng = np.random.default_rng(4242)
    graphs = [
        ("er16a", random_connected_graph(16, rng, weight_choices=(1.0,))),
        ("er16b", random_connected_graph(16, rng, weight_choices=(1.0,))),
        ("er32a", random_connected_graph(32, rng, weight_choices=(1.0,))),
        ("er32b", random_connected_graph(32, rng, weight_choices=(1.0,))),
        ("er64a", random_connected_graph(64, rng, extra_edge_prob=0.04, weight_choices=(1.0,))),
        ("er64b", random_connected_graph(64, rng, extra_edge_prob=0.04, weight_choices=(1.0,))),
        ("grid16", grid_graph(4, 4)),
        ("grid32", grid_graph(4, 8)),
        ("grid64", grid_graph(8, 8)),
        ("er32c", random_connected_graph(32, rng, weight_choices=(1.0,))),
    ]
    return graphs


def test_criterion_4_approximator_sandwich():
    rng = np.random.default_rng(999)
    ok = True
    rho_worst = {"l1": 0.0, "linf": 0.0}
    lo_worst = {"l1": math.inf, "linf": math.inf}
    for name, g in _criterion4_graphs():
        ts = build_ts_approximator(g, seed=1)
        mf = build_mf_approximator(g, seed=1)
        for _ in range(100):
            d = rng.normal(size=g.n)
            d -= d.mean()
            opt_ts = opt_transshipment(g, d)[0]
            opt_mf = opt_congestion(g, d)[0]
            r1 = ts.estimate(d) / opt_ts
            r2 = mf.estimate(d) / opt_mf
            ok &= r1 >= 1.0 - 1e-9 and r2 >= 1.0 - 1e-9
            rho_worst["l1"] = max(rho_worst["l1"], r1)
            rho_worst["linf"] = max(rho_worst["linf"], r2)
            lo_worst["l1"] = min(lo_worst["l1"], r1)
            lo_worst["linf"] = min(lo_worst["linf"], r2)
    ok &= rho_worst["l1"] <= 500.0 and rho_worst["linf"] <= 500.0
    _report(
        4,
        ok,
        f"1000 demands x 2: est/opt in [{lo_worst['l1']:.3f}, {rho_worst['l1']:.1f}] (l1), "
        f"[{lo_worst['linf']:.3f}, {rho_worst['linf']:.1f}] (linf), ceiling 500",
    )


def _suite_small_graphs():
    rng = np.random.default_rng(555)
    return [
        cycle_graph(8),
        cycle_graph(12),
        cycle_graph(30),
        path_graph(17),
        star_graph(9),
        grid_graph(4, 5),
        random_connected_graph(24, rng),
        random_connected_graph(30, rng),
        path_graph(2),
    ]


def test_criterion_5_structural_invariants():
    import heapq

    ok = True
    details = []
    for g in _suite_small_graphs():
        approx = build_ts_approximator(g, seed=3)
        ds = approx.structures
        tau = ds.scales.tau
        nums = [st.cover.num_clusterings for st in ds.structures]
        num_max = max(nums)
        # all-pairs distances for the Lipschitz checks
        dists = {}
        adj = g.adjacency()
        for s0 in range(g.n):
            dist = {s0: 0.0}
            heap = [(0.0, s0)]
            while heap:
                du, u = heapq.heappop(heap)
                if du > dist[u]:
                    continue
                for v, w, _e in adj[u]:
                    nd = du + w
                    if v not in dist or nd < dist[v]:
                        dist[v] = nd
                        heapq.heappush(heap, (nd, v))
            dists[s0] = dist
        # weights were normalized inside the approximator; rescale distances
        ws = approx.weight_scale
        for st in ds.structures:
            D = st.cover.diameter
            num_here = st.cover.num_clusterings
            for p in st.p:
                ok &= bool(np.all(p >= 0.0) and np.all(p <= 1.0))
                for u in range(g.n):
                    for v in range(g.n):
                        duv = dists[u][v] / ws
                        ok &= abs(p[u] - p[v]) <= duv / D + 1e-9
            ok &= bool(np.all(st.w >= 0.25 / tau - 1e-12))
            ok &= bool(np.all(st.w <= num_here + 1e-12))
            for u in range(g.n):
                for v in range(g.n):
                    duv = dists[u][v] / ws
                    ok &= abs(st.w[u] - st.w[v]) <= num_here * duv / D + 1e-9
        # row count and column sparsity
        n_scales = len(ds.structures)
        ok &= approx.R.n_rows <= n_scales * num_max * num_max * g.n
        pair_bound = sum(nums[i] * nums[i + 1] for i in range(n_scales - 1)) or 1
        ok &= approx.R.max_col_nnz() <= pair_bound
        M = approx.game_operator()
        ok &= M.max_col_nnz() <= M.col_bound
        # operator norm against the edge-pair quality ratio
        norm = M.one_to_one_norm()
        rho_edges = 0.0
        for e in range(g.m):
            u, v = int(g.tail[e]), int(g.head[e])
            dd = np.zeros(g.n)
            dd[u], dd[v] = 1.0, -1.0
            rho_edges = max(rho_edges, approx.estimate(dd) / dists[u][v])
        ok &= norm <= rho_edges + 1e-9
        details.append(f"n={g.n}: |A|_1to1={norm:.1f} <= rho_e={rho_edges:.1f}")
    _report(5, ok, f"{len(details)} graphs; " + details[0] + " ...")


def test_criterion_6_end_to_end():
    from boxflow.solvers import solve_maxflow

    rng = np.random.default_rng(606)
    eps = 0.1
    t0 = time.time()
    ok = True
    worst_primal = 0.0
    worst_dual = 1.0
    for trial in range(20):
        n = int(rng.integers(10, 31))
        g = random_connected_graph(n, rng)
        d = rng.integers(-3, 4, size=n).astype(float)
        d[-1] -= d.sum()
        if not np.any(d):
            d[0], d[-1] = 1.0, d[-1] - 1.0
        rep1 = solve_transshipment(g, d, eps, seed=trial)
        o1 = opt_transshipment(g, d)[0]
        rep2 = solve_maxflow(g, d, eps, seed=trial)
        o2 = opt_congestion(g, d)[0]
        ok &= rep1.primal_cost <= (1 + eps) * o1
        ok &= rep1.dual_value >= (1 - 4 * eps) * o1
        ok &= rep1.feasibility_residual <= 1e-8
        ok &= rep2.primal_cost <= (1 + eps) * o2
        ok &= rep2.dual_value >= (1 - 4 * eps) * o2
        ok &= rep2.feasibility_residual <= 1e-8
        worst_primal = max(worst_primal, rep1.primal_cost / o1, rep2.primal_cost / o2)
        worst_dual = min(worst_dual, rep1.dual_value / o1, rep2.dual_value / o2)
    dt = time.time() - t0
    ok &= dt <= 300.0
    _report(
        6,
        ok,
        f"20 instances x 2 solvers: primal <= {worst_primal:.3f} opt, "
        f"dual >= {worst_dual:.3f} opt, {dt:.0f}s (budget 300s)",
    )


def test_criterion_7_distributed_equivalence():
    rng = np.random.default_rng(707)
    graphs = [cycle_graph(8), grid_graph(3, 4), random_connected_graph(14, rng)]
    ok = True
    worst = 0.0
    for gi, g in enumerate(graphs):
        approx = build_ts_approximator(g, seed=70 + gi)
        net = MinorAggNetwork(g)
        core = MinorAggCore(net, approx)
        cen = CentralizedCore(approx)
        diff_r = np.abs(core.r_columns().to_dense() - approx.scaled_R().to_dense()).max(initial=0.0)
        ok &= diff_r <= 1e-9
        nums = [st.cover.num_clusterings for st in approx.structures.structures]
        budget = 4 * len(nums) * max(nums) * max(nums)
        k = approx.R.n_rows
        for which, size, ref in [
            ("R", g.n, cen.mul_R),
            ("Rt", k, cen.mul_RT),
            ("A", g.m, cen.mul_M),
            ("At", k, cen.mul_MT),
            ("absA", g.m, cen.mul_absM),
            ("absAt", k, cen.mul_absMT),
        ]:
            x = rng.normal(size=size)
            before = net.round_count
            got = dist_matvec(core, which, x)
            rounds = net.round_count - before
            want = ref(x)
            scale = max(1.0, float(np.abs(want).max(initial=0.0)))
            rel = float(np.abs(got - want).max(initial=0.0)) / scale
            ok &= rel <= 1e-9
            ok &= rounds <= budget
            worst = max(worst, rel)
    # full solve equivalence on the golden cycle
    g = cycle_graph(8)
    d = np.array([2.0, -1.0, 0.0, 1.0, -1.0, 0.0, -1.0, 0.0])
    approx = build_ts_approximator(g, seed=0)
    rep_c = solve_transshipment(g, d, 0.25, approx=approx, seed=0)
    net = MinorAggNetwork(g)
    rep_d = solve_transshipment(
        g, d, 0.25, approx=approx, seed=0, core=MinorAggCore(net, approx)
    )
    for a, b in [
        (rep_c.primal_cost, rep_d.primal_cost),
        (rep_c.dual_value, rep_d.dual_value),
    ]:
        ok &= abs(a - b) <= 1e-9 * max(1.0, abs(a))
    ok &= float(np.abs(rep_c.primal_flow - rep_d.primal_flow).max()) <= 1e-9
    ok &= float(np.abs(rep_c.dual_potentials - rep_d.dual_potentials).max()) <= 1e-9
    _report(7, ok, f"3 graphs x 6 products, worst rel diff {worst:.2e}; full solve matches")


def test_criterion_8_determinism(golden_files):
    d = golden_files
    g, f1, f2 = str(d / "g.txt"), str(d / "fig1.d"), str(d / "fig2.d")
    commands = [
        ["transshipment", "--graph", g, "--demand", f1, "--eps", "0.2", "--seed", "5"],
        ["maxflow", "--graph", g, "--demand", f2, "--eps", "0.2", "--seed", "5"],
        ["oracle", "--graph", g, "--demand", f1, "--problem", "transshipment"],
        ["oracle", "--graph", g, "--demand", f2, "--problem", "congestion"],
        ["approx-quality", "--graph", g, "--samples", "8", "--seed", "5"],
        ["dist-demo", "--graph", g, "--seed", "5"],
        ["maxflow", "--graph", g, "--demand", f2, "--eps", "0.3", "--seed", "5",
         "--mode", "minor-agg"],
    ]
    ok = True
    for idx, argv in enumerate(commands):
        p1, p2 = d / f"det{idx}a.json", d / f"det{idx}b.json"
        assert cli_main(argv + ["--report", str(p1)]) == 0
        assert cli_main(argv + ["--report", str(p2)]) == 0
        ok &= p1.read_bytes() == p2.read_bytes()
    _report(8, ok, f"{len(commands)} subcommands byte-identical across reruns")

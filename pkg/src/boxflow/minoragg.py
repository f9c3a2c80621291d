"""Single-process simulator of the Minor-Aggregation distributed model.

A round has three phases: every edge votes whether to contract (supernodes
are the connected components of contracted edges), every node contributes
a value folded per supernode by a commutative-associative consensus
operator, and every surviving inter-supernode edge learns both endpoint
consensus values and contributes values folded per supernode by an
aggregation operator.  Self-loops of the contracted minor are dropped.

All folds use a fixed canonical order (node index, then edge index), so
results do not depend on iteration order.  A message auditor enforces a
configurable per-value word budget: node ids must fit a few machine words
and numeric payloads are counted one word per float.

On top of the raw model sit the distributed implementations of the
transshipment approximator: per-node computation of the columns of R by
cluster-containment consensus rounds, and the six matrix-vector products
with R, R^T, A = R B W^-1, A^T, |A| and |A|^T.  Entries are evaluated
with the same formula helper as the centralized builder, so the columns
agree bit for bit.
"""

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from boxflow.ts_approx import r_entry


class AuditError(RuntimeError):
    """A message exceeded the word budget or carried an invalid value."""


class OperatorError(RuntimeError):
    """A consensus/aggregation operator failed the associativity check."""


_NAMED_OPS = {"sum", "min", "max"}


@dataclass
class RoundResult:
    supernode: np.ndarray  # dense supernode index per node
    n_supernodes: int
    consensus: np.ndarray = None  # per node, folded value of its supernode
    aggregate: np.ndarray = None  # per node, folded incident-edge value
    edge_tail_value: np.ndarray = None  # y of the tail-side supernode, per edge
    edge_head_value: np.ndarray = None


class MinorAggNetwork:
    """Network state: one round per run_round call, with a trace."""

    def __init__(self, graph, word_budget=None, debug_ops=False, debug_samples=8):
        self.g = graph
        n = graph.n
        self.word_budget = (
            int(word_budget)
            if word_budget is not None
            else 8 * max(1, math.ceil(math.log2(max(n, 2))))
        )
        self.debug_ops = debug_ops
        self.debug_samples = debug_samples
        self.round_count = 0
        self.trace = []
        self._id_bound = max(16, n**4)

    # -- auditing ---------------------------------------------------------

    def _audit(self, values, what):
        arr = np.asarray(values)
        words = 1 if arr.ndim == 1 else arr.shape[1]
        if words > self.word_budget:
            raise AuditError(
                f"{what}: {words}-word message exceeds budget {self.word_budget}"
            )
        if np.issubdtype(arr.dtype, np.integer):
            if arr.size and int(np.abs(arr).max()) > self._id_bound:
                raise AuditError(f"{what}: integer value exceeds the id bit budget")
        else:
            if arr.size and not np.isfinite(arr).all():
                raise AuditError(f"{what}: non-finite value in message")
        return arr, words

    def _check_operator(self, op, values, what):
        if not callable(op):
            if op not in _NAMED_OPS:
                raise ValueError(f"unknown operator {op!r}")
            return
        if not self.debug_ops:
            return
        flat = np.asarray(values, dtype=np.float64).ravel()
        if flat.size < 3:
            return
        rng = np.random.default_rng(1234 + self.round_count)
        for _ in range(self.debug_samples):
            a, b, c = (float(flat[rng.integers(0, flat.size)]) for _ in range(3))
            scale = max(1.0, abs(a), abs(b), abs(c))
            if abs(op(op(a, b), c) - op(a, op(b, c))) > 1e-9 * scale:
                raise OperatorError(f"{what}: operator is not associative on samples")
            if abs(op(a, b) - op(b, a)) > 1e-9 * scale:
                raise OperatorError(f"{what}: operator is not commutative on samples")

    # -- folding ----------------------------------------------------------

    def _fold(self, op, groups, values, n_groups):
        """Fold values per group id in canonical (input) order."""
        values = np.asarray(values, dtype=np.float64)
        single = values.ndim == 1
        if single:
            values = values[:, None]
        k = values.shape[1]
        out = np.empty((n_groups, k))
        if callable(op):
            for col in range(k):
                buckets = [[] for _ in range(n_groups)]
                for idx, gid in enumerate(groups):
                    buckets[gid].append(values[idx, col])
                for gid, vals in enumerate(buckets):
                    out[gid, col] = reduce(op, vals) if vals else 0.0
        elif op == "sum":
            for col in range(k):
                out[:, col] = np.bincount(groups, weights=values[:, col], minlength=n_groups)
        elif op == "min":
            out[:] = np.inf
            for col in range(k):
                np.minimum.at(out[:, col], groups, values[:, col])
        elif op == "max":
            out[:] = -np.inf
            for col in range(k):
                np.maximum.at(out[:, col], groups, values[:, col])
        return out[:, 0] if single else out

    # -- the model step ----------------------------------------------------

    def run_round(
        self,
        contract=None,
        node_values=None,
        consensus_op="sum",
        edge_value_fn=None,
        aggregate_op="sum",
        label="",
    ):
        """One synchronous round; see the module docstring for semantics.

        contract: bool array over edges (None contracts nothing).
        node_values: per-node scalar or small vector for the consensus.
        edge_value_fn(edge_ids, y_tail, y_head) -> (z_tail, z_head) values
        each surviving edge contributes to its two endpoint supernodes.
        """
        g = self.g
        n, m = g.n, g.m
        if contract is None:
            contract = np.zeros(m, dtype=bool)
        contract = np.asarray(contract, dtype=bool)
        if contract.shape != (m,):
            raise ValueError("contract must have one vote per edge")

        if contract.any():
            sel = np.flatnonzero(contract)
            adj = sp.csr_matrix(
                (np.ones(len(sel)), (g.tail[sel], g.head[sel])), shape=(n, n)
            )
            _, labels = csgraph.connected_components(adj, directed=False)
        else:
            labels = np.arange(n)
        # canonical dense supernode ids ordered by smallest member
        order = np.full(labels.max() + 1, -1, dtype=np.int64)
        nxt = 0
        for v in range(n):
            if order[labels[v]] < 0:
                order[labels[v]] = nxt
                nxt += 1
        super_id = order[labels]
        n_super = nxt

        result = RoundResult(supernode=super_id, n_supernodes=n_super)
        max_words = 0

        if node_values is not None:
            vals, words = self._audit(node_values, "consensus value")
            max_words = max(max_words, words)
            self._check_operator(consensus_op, vals, "consensus")
            folded = self._fold(consensus_op, super_id, vals, n_super)
            result.consensus = folded[super_id]

        if edge_value_fn is not None:
            alive = np.flatnonzero(super_id[g.tail] != super_id[g.head])
            y = result.consensus
            if y is None:
                y_tail = y_head = None
            else:
                y_tail = y[g.tail[alive]]
                y_head = y[g.head[alive]]
            z_tail, z_head = edge_value_fn(alive, y_tail, y_head)
            zt, words_t = self._audit(z_tail, "aggregate value")
            zh, words_h = self._audit(z_head, "aggregate value")
            max_words = max(max_words, words_t, words_h)
            self._check_operator(aggregate_op, zt, "aggregation")
            groups = np.concatenate([super_id[g.tail[alive]], super_id[g.head[alive]]])
            stacked = np.concatenate([zt, zh], axis=0)
            folded = self._fold(aggregate_op, groups, stacked, n_super)
            result.aggregate = folded[super_id]
            result.edge_tail_value = y_tail
            result.edge_head_value = y_head

        self.round_count += 1
        self.trace.append(
            {
                "round": self.round_count,
                "label": label,
                "supernodes": int(n_super),
                "max_words": int(max_words),
                "consensus_op": consensus_op if not callable(consensus_op) else "custom",
                "aggregate_op": (aggregate_op if not callable(aggregate_op) else "custom")
                if edge_value_fn is not None
                else None,
            }
        )
        return result


# -- distributed approximator ------------------------------------------------


class MinorAggCore:
    """Distributed products with R and A = R B W^-1 over a network.

    Rows of R are organized into blocks; within a block the clusters
    carrying the rows partition (part of) the node set into connected
    pieces, so one contraction round folds per-row sums.  The
    transshipment approximator contributes one block per (scale,
    clustering) with a vector payload over the upper clusterings; the
    tree approximator contributes one block per tree depth.  Construction
    for the transshipment case runs the containment consensus rounds that
    let every node assemble its own column of R; entries go through the
    same formula helper as the centralized builder, so the columns agree
    bit for bit.
    """

    def __init__(self, net, approx):
        self.net = net
        self.approx = approx
        g = net.g
        self.n, self.m = g.n, g.m
        self.k = approx.R.n_rows
        self._blocks = []
        if approx.norm_kind == "l1":
            self._init_ts_blocks()
        else:
            self._init_tree_blocks()
        self._finish_blocks(g)

    # -- transshipment blocks ----------------------------------------------

    def _init_ts_blocks(self):
        g = self.net.g
        ds = self.approx.structures
        scale = self.approx.scale
        structures = ds.structures

        if len(structures) == 1:
            # degenerate single-scale fallback: s * beta * identity
            ids = np.arange(self.n)
            entries = np.full((self.n, 1), float(ds.scales.beta) * scale)
            self._blocks.append(
                {
                    "contract": np.zeros(self.m, dtype=bool),
                    "cluster_id": ids,
                    "n_clusters": self.n,
                    "row_of": [np.arange(self.n)],
                    "entries": entries,
                }
            )
            return

        # one aggregation round: edges learn their endpoints' cluster ids
        # for every (scale, clustering); payload is polylog many ids
        id_tables = np.stack(
            [
                st.cover.clusterings[j].ids
                for st in structures
                for j in range(st.cover.num_clusterings)
            ],
            axis=1,
        )
        self.net.run_round(
            node_values=id_tables,
            consensus_op="max",
            edge_value_fn=lambda e, yt, yh: (np.zeros(len(e)), np.zeros(len(e))),
            label="edge-id-setup",
        )

        row = 0
        for i in range(len(structures) - 1):
            low, high = structures[i], structures[i + 1]
            d_next = ds.scales.levels[i + 1]
            num_hi = high.cover.num_clusterings
            for j, clustering in enumerate(low.cover.clusterings):
                ids = clustering.ids
                n_clusters = clustering.n_clusters
                contract = ids[g.tail] == ids[g.head]
                # containment of C_{i,j}(v) in C_{i+1,jp}(v): all members
                # agree on the higher cluster id, checked by a (max, -min)
                # consensus over the cluster-contracted minor
                hi_ids = np.stack(
                    [high.cover.clusterings[jp].ids for jp in range(num_hi)], axis=1
                ).astype(np.float64)
                res = self.net.run_round(
                    contract=contract,
                    node_values=np.concatenate([hi_ids, -hi_ids], axis=1),
                    consensus_op="max",
                    label=f"containment i={i} j={j}",
                )
                mx = res.consensus[:, :num_hi]
                mn = -res.consensus[:, num_hi:]
                contained = mx == mn  # per node, per jp
                p_lo = low.p[j]
                entries = np.zeros((self.n, num_hi))
                for jp in range(num_hi):
                    p_hi = high.p[jp]
                    for v in range(self.n):
                        if contained[v, jp]:
                            entries[v, jp] = (
                                r_entry(d_next, p_lo[v], p_hi[v], low.w[v], high.w[v])
                                * self.approx.scale
                            )
                row_of = []
                for jp in range(num_hi):
                    row_of.append(np.arange(row, row + n_clusters))
                    row += n_clusters
                self._blocks.append(
                    {
                        "contract": contract,
                        "cluster_id": ids,
                        "n_clusters": n_clusters,
                        "row_of": row_of,
                        "entries": entries,
                    }
                )

    # -- tree blocks --------------------------------------------------------

    def _init_tree_blocks(self):
        g = self.net.g
        tree = self.approx.tree
        scale = self.approx.scale
        row_of_tree_node = {x: r for r, x in enumerate(self.approx.row_decode)}
        by_depth = {}
        for x in range(tree.n_nodes):
            if tree.parent[x] >= 0:
                by_depth.setdefault(tree.depth[x], []).append(x)
        for depth in sorted(by_depth):
            nodes = by_depth[depth]
            n_real = len(nodes)
            cluster_id = np.full(self.n, -1, dtype=np.int64)
            entries = np.zeros((self.n, 1))
            rows = np.empty(n_real, dtype=np.int64)
            for cid, x in enumerate(nodes):
                rows[cid] = row_of_tree_node[x]
                for v in tree.subtree[x]:
                    cluster_id[v] = cid
                    entries[v, 0] = scale * (1.0 / tree.cap[x])
            # nodes whose leaf sits above this depth become filler
            # singletons with zero entries
            filler = n_real
            for v in range(self.n):
                if cluster_id[v] < 0:
                    cluster_id[v] = filler
                    filler += 1
            contract = cluster_id[g.tail] == cluster_id[g.head]
            contract &= cluster_id[g.tail] < n_real
            self._blocks.append(
                {
                    "contract": contract,
                    "cluster_id": cluster_id,
                    "n_clusters": n_real,
                    "n_groups": filler,
                    "row_of": [rows],
                    "entries": entries,
                }
            )

    # -- shared machinery ----------------------------------------------------

    def _finish_blocks(self, g):
        """Edge-local column data per block, used by the A products."""
        tail, head = g.tail, g.head
        inv_w = 1.0 / g.weight
        for blk in self._blocks:
            blk.setdefault("n_groups", blk["n_clusters"])
            ids = blk["cluster_id"]
            ent = blk["entries"]  # (n, num_jp)
            same = ids[tail] == ids[head]
            # A entry of edge e in the rows of its tail-side and head-side
            # clusters (internal edges touch a single row)
            ent_t = ent[tail]
            ent_h = ent[head]
            val_tail = (ent_t - np.where(same[:, None], ent_h, 0.0)) * inv_w[:, None]
            val_head = (np.where(same[:, None], ent_t, 0.0) - ent_h) * inv_w[:, None]
            blk["edge_val_tail"] = val_tail
            blk["edge_val_head"] = val_head
            blk["edge_same"] = same
            blk["groups_tail"] = ids[tail]
            blk["groups_head"] = ids[head]

    @property
    def rounds(self):
        return self.net.round_count

    def r_columns(self):
        """The R matrix the nodes assembled, as a ColSparseMatrix.

        Bit-identical to the centralized scaled matrix because entries go
        through the same arithmetic.
        """
        from boxflow.sparsemat import ColSparseMatrix

        rows, cols, vals = [], [], []
        for blk in self._blocks:
            ids = blk["cluster_id"]
            ent = blk["entries"]
            for jp, row_of in enumerate(blk["row_of"]):
                for v in range(self.n):
                    cid = int(ids[v])
                    if cid < blk["n_clusters"] and ent[v, jp] != 0.0:
                        rows.append(int(row_of[cid]))
                        cols.append(v)
                        vals.append(ent[v, jp])
        return ColSparseMatrix.from_triplets(
            self.k, self.n, rows, cols, vals, col_bound=self.approx.scaled_R().col_bound
        )

    def _scatter_rows(self, out, blk, per_cluster):
        """per_cluster: (n_groups, num_jp) folded sums; place real rows."""
        nc = blk["n_clusters"]
        for jp, row_of in enumerate(blk["row_of"]):
            out[row_of] = per_cluster[:nc, jp]

    # -- products ---------------------------------------------------------

    def mul_R(self, x):
        """R x: one consensus round per block, vector payload over jp."""
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(self.k)
        for blk in self._blocks:
            contrib = blk["entries"] * x[:, None]
            self.net.run_round(
                contract=blk["contract"],
                node_values=contrib,
                consensus_op="sum",
                label="mul_R block",
            )
            sums = np.stack(
                [
                    np.bincount(blk["cluster_id"], weights=contrib[:, jp], minlength=blk["n_groups"])
                    for jp in range(contrib.shape[1])
                ],
                axis=1,
            )
            self._scatter_rows(out, blk, sums)
        return out

    def mul_RT(self, y):
        """R^T y: zero rounds; every node dots its own column locally."""
        y = np.asarray(y, dtype=np.float64)
        out = np.zeros(self.n)
        for blk in self._blocks:
            ids = blk["cluster_id"]
            ent = blk["entries"]
            nc = blk["n_clusters"]
            member = ids < nc
            for jp, row_of in enumerate(blk["row_of"]):
                gathered = np.zeros(self.n)
                gathered[member] = y[row_of[ids[member]]]
                out += ent[:, jp] * gathered
        return out

    def _forward_block_product(self, x, use_abs, label):
        """Shared by A x and |A| x: per block an edge-to-node partials
        round then a cluster consensus round."""
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(self.k)
        for blk in self._blocks:
            vt = blk["edge_val_tail"]
            vh = blk["edge_val_head"]
            if use_abs:
                vt, vh = np.abs(vt), np.abs(vh)
            vt = vt * x[:, None]
            vh = vh * x[:, None]
            same = blk["edge_same"]

            def edge_fn(alive, yt, yh, vt=vt, vh=vh, same=same):
                # internal edges hand their whole term to the tail side
                zt = vt[alive]
                zh = np.where(same[alive][:, None], 0.0, vh[alive])
                return zt, zh

            partial = self.net.run_round(
                edge_value_fn=edge_fn, aggregate_op="sum", label=f"{label} partials"
            ).aggregate
            self.net.run_round(
                contract=blk["contract"],
                node_values=partial,
                consensus_op="sum",
                label=f"{label} consensus",
            )
            sums = np.stack(
                [
                    np.bincount(blk["cluster_id"], weights=partial[:, jp], minlength=blk["n_groups"])
                    for jp in range(partial.shape[1])
                ],
                axis=1,
            )
            self._scatter_rows(out, blk, sums)
        return out

    def mul_M(self, x):
        return self._forward_block_product(x, use_abs=False, label="mul_M")

    def mul_absM(self, x):
        return self._forward_block_product(x, use_abs=True, label="mul_absM")

    def _edge_dot(self, y, use_abs):
        """Local transpose products: one round delivers each node's row
        values of y to its incident edges, which then dot their columns."""
        columns = []
        for blk in self._blocks:
            ids = blk["cluster_id"]
            nc = blk["n_clusters"]
            member = ids < nc
            for row_of in blk["row_of"]:
                vals = np.zeros(self.n)
                vals[member] = y[row_of[ids[member]]]
                columns.append(vals)
        table = np.stack(columns, axis=1)  # row values known at each node
        res = self.net.run_round(
            node_values=table,
            consensus_op="max",
            edge_value_fn=lambda e, yt, yh: (np.zeros(len(e)), np.zeros(len(e))),
            label="transpose delivery",
        )
        # no contraction, so the delivered endpoint values are the tables
        yt, yh = res.edge_tail_value, res.edge_head_value
        out = np.zeros(self.m)
        col = 0
        for blk in self._blocks:
            same = blk["edge_same"]
            vt = np.abs(blk["edge_val_tail"]) if use_abs else blk["edge_val_tail"]
            vh = np.abs(blk["edge_val_head"]) if use_abs else blk["edge_val_head"]
            for jp in range(len(blk["row_of"])):
                out += vt[:, jp] * yt[:, col]
                out += np.where(same, 0.0, vh[:, jp] * yh[:, col])
                col += 1
        return out

    def mul_MT(self, y):
        return self._edge_dot(np.asarray(y, dtype=np.float64), use_abs=False)

    def mul_absMT(self, y):
        return self._edge_dot(np.asarray(y, dtype=np.float64), use_abs=True)


def dist_compute_R_columns(net, approx):
    """Run the containment rounds and return the node-assembled R."""
    core = MinorAggCore(net, approx)
    return core, core.r_columns()


_PRODUCTS = {
    "R": "mul_R",
    "Rt": "mul_RT",
    "A": "mul_M",
    "At": "mul_MT",
    "absA": "mul_absM",
    "absAt": "mul_absMT",
}


def dist_matvec(core, which, x):
    """Distributed product with one of R, R^T, A, A^T, |A|, |A|^T."""
    if which not in _PRODUCTS:
        raise ValueError(f"unknown product {which!r}; choose from {sorted(_PRODUCTS)}")
    return getattr(core, _PRODUCTS[which])(np.asarray(x, dtype=np.float64))

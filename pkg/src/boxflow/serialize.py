"""Text serialization of cost approximators.

Versioned line format; floats are written as C99 hex literals so files
round-trip bit-exactly.  The transshipment section carries the scale
header, the row decode table and the R triplets; the tree section adds
the parent and cut-capacity arrays of the decomposition tree.
"""

import numpy as np

from boxflow.sparsemat import ColSparseMatrix

TS_MAGIC = "boxflow-tsapprox-v1"
TREE_MAGIC = "boxflow-treeapprox-v1"


class FormatError(ValueError):
    pass


def _fmt(x):
    return float(x).hex()


def _triplet_lines(R):
    coo = R.to_csc().tocoo()
    order = np.lexsort((coo.row, coo.col))
    lines = [f"nnz {coo.nnz}"]
    for idx in order:
        lines.append(f"{coo.row[idx]} {coo.col[idx]} {_fmt(coo.data[idx])}")
    return lines


def _parse_triplets(it, n_rows, n_cols, col_bound):
    head = next(it).split()
    if head[0] != "nnz":
        raise FormatError("expected nnz line")
    count = int(head[1])
    rows, cols, vals = [], [], []
    for _ in range(count):
        r, c, v = next(it).split()
        rows.append(int(r))
        cols.append(int(c))
        vals.append(float.fromhex(v))
    return ColSparseMatrix.from_triplets(n_rows, n_cols, rows, cols, vals, col_bound=col_bound)


def save_approximator(approx):
    """Serialize either approximator kind to a text document."""
    from boxflow.tree_approx import TreeApproximator
    from boxflow.ts_approx import TsApproximator

    R = approx.R
    if isinstance(approx, TsApproximator):
        lines = [TS_MAGIC]
        lines.append(
            f"header n {approx.graph.n} rows {R.n_rows} tau {approx.tau} "
            f"seed {approx.seed} scale {_fmt(approx.scale)} "
            f"weight_scale {_fmt(approx.weight_scale)} col_bound {R.col_bound}"
        )
        lines.append("decode " + str(len(approx.row_decode)))
        for (i, j, jp, cid) in approx.row_decode:
            lines.append(f"{i} {j} {jp} {cid}")
    elif isinstance(approx, TreeApproximator):
        tree = approx.tree
        lines = [TREE_MAGIC]
        lines.append(
            f"header n {approx.graph.n} rows {R.n_rows} seed {approx.seed} "
            f"scale {_fmt(approx.scale)} col_bound {R.col_bound}"
        )
        lines.append("parent " + " ".join(str(p) for p in tree.parent))
        lines.append("leaf " + " ".join(str(v) for v in tree.leaf_vertex))
        lines.append("cap " + " ".join(_fmt(c) for c in tree.cap))
        lines.append("decode " + " ".join(str(x) for x in approx.row_decode))
    else:
        raise FormatError(f"unknown approximator type {type(approx)!r}")
    lines.extend(_triplet_lines(R))
    lines.append("end")
    return "\n".join(lines) + "\n"


def load_approximator(graph, text):
    """Rebuild an approximator for graph from its serialized form.

    The transshipment loader restores the operator and decode table but
    not the clustering structures (rebuild from the recorded seed when the
    distributed simulator is needed).
    """
    from boxflow.tree_approx import DecompTree, TreeApproximator
    from boxflow.ts_approx import TsApproximator

    lines = [ln for ln in text.splitlines() if ln.strip()]
    it = iter(lines)
    magic = next(it)
    if magic == TS_MAGIC:
        head = next(it).split()
        fields = dict(zip(head[1::2], head[2::2]))
        if int(fields["n"]) != graph.n:
            raise FormatError("graph size does not match the serialized header")
        n_rows = int(fields["rows"])
        count = int(next(it).split()[1])
        decode = []
        for _ in range(count):
            i, j, jp, cid = (int(tok) for tok in next(it).split())
            decode.append((i, j, jp, cid))
        R = _parse_triplets(it, n_rows, graph.n, int(fields["col_bound"]))
        approx = TsApproximator(
            graph,
            structures=None,
            R_raw=R,
            row_decode=decode,
            seed=int(fields["seed"]),
            weight_scale=float.fromhex(fields["weight_scale"]),
        )
        approx.tau = int(fields["tau"])
        approx.set_scale(float.fromhex(fields["scale"]))
        return approx
    if magic == TREE_MAGIC:
        head = next(it).split()
        fields = dict(zip(head[1::2], head[2::2]))
        if int(fields["n"]) != graph.n:
            raise FormatError("graph size does not match the serialized header")
        n_rows = int(fields["rows"])
        parent = [int(x) for x in next(it).split()[1:]]
        leaf_vertex = [int(x) for x in next(it).split()[1:]]
        cap = [float.fromhex(x) for x in next(it).split()[1:]]
        decode = [int(x) for x in next(it).split()[1:]]
        n_nodes = len(parent)
        children = [[] for _ in range(n_nodes)]
        depth = [0] * n_nodes
        for x in range(n_nodes):
            if parent[x] >= 0:
                children[parent[x]].append(x)
        for x in range(n_nodes):  # parents precede children by construction
            if parent[x] >= 0:
                depth[x] = depth[parent[x]] + 1
        leaf_of = [-1] * graph.n
        subtree = [[] for _ in range(n_nodes)]
        for x in range(n_nodes):
            if leaf_vertex[x] >= 0:
                leaf_of[leaf_vertex[x]] = x
        for v in range(graph.n):
            x = leaf_of[v]
            while x >= 0:
                subtree[x].append(v)
                x = parent[x]
        tree = DecompTree(
            parent=parent,
            children=children,
            leaf_vertex=leaf_vertex,
            leaf_of=leaf_of,
            depth=depth,
            cap=cap,
            subtree=[sorted(s) for s in subtree],
        )
        R = _parse_triplets(it, n_rows, graph.n, int(fields["col_bound"]))
        approx = TreeApproximator(graph, tree, R, decode, int(fields["seed"]))
        approx.set_scale(float.fromhex(fields["scale"]))
        return approx
    raise FormatError(f"unknown format magic {magic!r}")

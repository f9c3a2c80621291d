"""Accelerated solver for bilinear box-simplex games.

The game is  min over x in [-1,1]^n of max over y in the probability
simplex of  x^T A y - <b, y> + <c, x>.  The solver is an extragradient
scheme whose per-iteration work is a constant number of products with A,
A^T, |A| and |A|^T, and it returns the running average of the iterates
together with an exactly evaluated duality gap certificate.

Simplex iterates are kept in the log domain: the multiplicative update
y * exp(v) followed by l1 normalization becomes a log-sum-exp shift, which
cannot underflow no matter how many iterations run.

Products go through a kernel object so the same loop can run against an
explicit sparse matrix (fast path) or against matrices that exist only as
operators, e.g. the stacked game matrices of the flow reductions or the
distributed simulator.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import _sparsetools

FLOOR = 1e-300  # denominator floor; only reachable for all-zero rows of A


class ParameterError(ValueError):
    """Bad accuracy or instance parameters."""


class NumericOverflowError(RuntimeError):
    """A non-finite intermediate appeared; should not happen on valid input."""


def _raw_matvec(shape, indptr, indices, data, x):
    out = np.zeros(shape[0])
    _sparsetools.csr_matvec(shape[0], shape[1], indptr, indices, data, x, out)
    return out


class CsrKernel:
    """Products with an explicit ColSparseMatrix, minus per-call overhead.

    Uses the same sequential CSR kernel scipy dispatches to, so results are
    bit-identical to mat.matvec and friends.
    """

    def __init__(self, mat):
        csr = mat._csr
        csrT = mat._csrT
        self._fwd = ((csr.shape), csr.indptr, csr.indices, csr.data)
        self._fwd_abs = ((csr.shape), csr.indptr, csr.indices, np.abs(csr.data))
        self._bwd = ((csrT.shape), csrT.indptr, csrT.indices, csrT.data)
        self._bwd_abs = ((csrT.shape), csrT.indptr, csrT.indices, np.abs(csrT.data))

    def A(self, y):
        return _raw_matvec(*self._fwd, y)

    def AT(self, x):
        return _raw_matvec(*self._bwd, x)

    def absA(self, y):
        return _raw_matvec(*self._fwd_abs, y)

    def absAT(self, x):
        return _raw_matvec(*self._bwd_abs, x)


class RowStackKernel:
    """Game products for A with A^T = [M; -M] stacked by rows.

    Here A = [M^T, -M^T], the box side is indexed like rows of M^T and the
    simplex side is two copies of rows(M).  core must provide mul_M,
    mul_MT, mul_absM, mul_absMT.
    """

    def __init__(self, core, k):
        self.core = core
        self.k = k

    def A(self, y):
        return self.core.mul_MT(y[: self.k] - y[self.k :])

    def AT(self, x):
        mx = self.core.mul_M(x)
        return np.concatenate([mx, -mx])

    def absA(self, y):
        return self.core.mul_absMT(y[: self.k] + y[self.k :])

    def absAT(self, x):
        ax = self.core.mul_absM(x)
        return np.concatenate([ax, ax])


class ColStackKernel:
    """Game products for A = [M, -M] stacked by columns.

    The box side is rows(M); the simplex side is two copies of cols(M).
    """

    def __init__(self, core, k):
        self.core = core
        self.k = k

    def A(self, y):
        return self.core.mul_M(y[: self.k] - y[self.k :])

    def AT(self, x):
        mtx = self.core.mul_MT(x)
        return np.concatenate([mtx, -mtx])

    def absA(self, y):
        return self.core.mul_absM(y[: self.k] + y[self.k :])

    def absAT(self, x):
        ax = self.core.mul_absMT(x)
        return np.concatenate([ax, ax])


class MatCore:
    """Centralized core products with M via the raw CSR kernel."""

    def __init__(self, mat):
        self._k = CsrKernel(mat)

    def mul_M(self, x):
        return self._k.A(x)

    def mul_MT(self, y):
        return self._k.AT(y)

    def mul_absM(self, x):
        return self._k.absA(x)

    def mul_absMT(self, y):
        return self._k.absAT(y)


@dataclass
class SolverConfig:
    """Step parameters and bookkeeping knobs.

    alpha and beta are the regularization weights of the extragradient
    steps; the iteration budget is ceil(t_multiplier * (8*log2(d) + 1) *
    L / eps).  With early_exit the exact gap of the running average is
    evaluated every check_every iterations (default ceil(T/100)) and the
    loop stops once it reaches eps.
    """

    alpha: float = 2.0
    beta: float = 2.0
    t_multiplier: float = 6.0
    early_exit: bool = True
    check_every: int = 0  # 0 selects ceil(T/100)
    collect_trace: bool = False


@dataclass
class SaddlePoint:
    x: np.ndarray
    y: np.ndarray
    iterations: int
    gap: float
    scheduled_iterations: int
    early_exit: bool
    trace: list = field(default_factory=list)


class BoxSimplexInstance:
    """An (A, b, c) game.  A is a ColSparseMatrix of shape (n, d).

    A custom kernel may stand in for A's products; L must then be supplied
    since the matrix may only exist implicitly.
    """

    def __init__(self, A, b, c, kernel=None, L=None, n=None, d=None):
        self.A = A
        if A is not None:
            n, d = A.shape
        self.n, self.d = n, d
        self.b = np.asarray(b, dtype=np.float64)
        self.c = np.asarray(c, dtype=np.float64)
        if self.b.shape != (d,):
            raise ParameterError(f"b has shape {self.b.shape}, expected ({d},)")
        if self.c.shape != (n,):
            raise ParameterError(f"c has shape {self.c.shape}, expected ({n},)")
        self.kernel = kernel if kernel is not None else CsrKernel(A)
        self.L = float(L) if L is not None else A.one_to_one_norm()

    def eval_simplex_form(self, y):
        """-( ||Ay + c||_1 + <b, y> ); lower certificate for the game value."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.d,) or y.min(initial=0.0) < -1e-12 or abs(y.sum() - 1.0) > 1e-9:
            raise ParameterError("y is not in the probability simplex")
        return -(float(np.abs(self.kernel.A(y) + self.c).sum()) + float(self.b @ y))

    def eval_box_form(self, x):
        """max(A^T x - b) + <c, x>; upper certificate for the game value."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,) or np.abs(x).max(initial=0.0) > 1.0 + 1e-12:
            raise ParameterError("x is not in the box [-1,1]^n")
        return float((self.kernel.AT(x) - self.b).max()) + float(self.c @ x)

    def gap(self, x, y):
        """Exact sup/inf gap of the pair: eval_box(x) - eval_simplex(y).

        Nonnegative for every feasible pair and zero exactly at saddle
        points.
        """
        return self.eval_box_form(x) - self.eval_simplex_form(y)


def iteration_budget(d, L, eps, t_multiplier=6.0):
    """Scheduled iteration count ceil(t_multiplier*(8 log2 d + 1)*L/eps)."""
    return int(math.ceil(t_multiplier * (8.0 * math.log2(d) + 1.0) * L / eps))


def _logsumexp(v):
    m = v.max()
    return m + math.log(np.exp(v - m).sum())


def _average(xhat_sum, yhat_sum, k):
    xa = np.clip(xhat_sum / k, -1.0, 1.0)
    ya = yhat_sum / k
    s = ya.sum()
    if s <= 0:
        raise NumericOverflowError("running average left the simplex")
    return xa, ya / s


def _entropy(y):
    mask = y > 0
    return float(-(y[mask] * np.log(y[mask])).sum())


def _solve_zero_matrix(inst):
    """Closed form for A = 0: the game decouples into two linear problems."""
    x = -np.sign(inst.c)
    j = int(np.argmin(inst.b)) if inst.d else 0
    y = np.zeros(inst.d)
    y[j] = 1.0
    return SaddlePoint(
        x=x, y=y, iterations=0, gap=inst.gap(x, y), scheduled_iterations=0, early_exit=False
    )


def _run(inst, eps, config, stop_fn=None):
    """Core loop shared by solve() and value probes.

    stop_fn(best_upper, best_lower) may end the run once the certified
    value bounds decide whatever question the caller is asking.  Returns
    (SaddlePoint, best_upper, best_lower) with certificates in original
    units.
    """
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    L = inst.L
    if L == 0.0:
        pt = _solve_zero_matrix(inst)
        return pt, inst.eval_box_form(pt.x), inst.eval_simplex_form(pt.y)
    if eps >= L:
        raise ParameterError(f"eps={eps} must be below L={L}")

    n, d = inst.n, inst.d
    ker = inst.kernel
    inv_L = 1.0 / L
    b = inst.b * inv_L
    c = inst.c * inv_L
    alpha, beta = config.alpha, config.beta
    inv_beta = 1.0 / beta
    T = iteration_budget(d, L, eps, config.t_multiplier)
    check_every = config.check_every if config.check_every > 0 else max(1, math.ceil(T / 100))

    x = np.zeros(n)
    ln_y = np.full(d, -math.log(d))
    ln_ybar = ln_y.copy()
    y = np.exp(ln_y)
    ybar = y.copy()
    xhat_sum = np.zeros(n)
    yhat_sum = np.zeros(d)

    def project_box(num, den):
        # Where a row of A is identically zero the denominator vanishes and
        # the update degenerates to the clipped sign of the numerator; the
        # floor realizes exactly that limit.
        return np.clip(num / np.maximum(den, FLOOR), -1.0, 1.0)

    def log_project(base_ln, v):
        ln_new = base_ln + v
        return ln_new - _logsumexp(ln_new)

    trace = []
    best_upper = math.inf
    best_lower = -math.inf
    iterations_done = T
    exited_early = False

    for t in range(T):
        absA_y = inv_L * ker.absA(y)
        two_diag = 2.0 * x * absA_y
        absAT_x2 = inv_L * ker.absAT(x * x)

        gx = (inv_L * ker.A(y) + c) / 3.0
        gy = (b - inv_L * ker.AT(x)) / 3.0

        x_star = project_box(-(gx - two_diag), 2.0 * absA_y)
        ln_yp = log_project(ln_y, -inv_beta * (gy + inv_L * ker.absAT(x_star * x_star) - absAT_x2))
        yp = np.exp(ln_yp)
        x_prime = project_box(-(gx - two_diag), 2.0 * inv_L * ker.absA(yp))

        xhat_sum += x_prime
        yhat_sum += yp

        gx = (inv_L * ker.A(yp) + c) / 6.0
        gy = (b - inv_L * ker.AT(x_prime)) / 6.0

        xbar_star = project_box(-(gx - two_diag), 2.0 * inv_L * ker.absA(ybar))
        ln_y_next = log_project(
            ln_ybar,
            -inv_beta
            * (
                gy
                + inv_L * ker.absAT(xbar_star * xbar_star)
                + alpha * ln_ybar
                - absAT_x2
                - alpha * ln_y
            ),
        )
        y_next = np.exp(ln_y_next)
        x_next = project_box(-(gx - two_diag), 2.0 * inv_L * ker.absA(y_next))
        ln_ybar_next = log_project(
            ln_y,
            -inv_beta
            * (
                gy
                + inv_L * ker.absAT(x_next * x_next)
                + alpha * ln_y_next
                - absAT_x2
                - alpha * ln_y
            ),
        )

        x = x_next
        ln_y, ln_ybar = ln_y_next, ln_ybar_next
        y, ybar = np.exp(ln_y), np.exp(ln_ybar)

        if not np.isfinite(x).all() or not np.isfinite(ln_y).all():
            raise NumericOverflowError(f"non-finite iterate at iteration {t}")

        if (t + 1) % check_every == 0 or t == T - 1:
            xa, ya = _average(xhat_sum, yhat_sum, t + 1)
            up = inst.eval_box_form(xa)
            lo = inst.eval_simplex_form(ya)
            best_upper = min(best_upper, up)
            best_lower = max(best_lower, lo)
            if config.collect_trace:
                trace.append((t + 1, up - lo, _entropy(ya)))
            if stop_fn is not None and stop_fn(best_upper, best_lower):
                iterations_done = t + 1
                exited_early = t + 1 < T
                break
            if config.early_exit and up - lo <= eps:
                iterations_done = t + 1
                exited_early = t + 1 < T
                break

    xa, ya = _average(xhat_sum, yhat_sum, iterations_done)
    gap = inst.gap(xa, ya)
    best_upper = min(best_upper, inst.eval_box_form(xa))
    best_lower = max(best_lower, inst.eval_simplex_form(ya))
    pt = SaddlePoint(
        x=xa,
        y=ya,
        iterations=iterations_done,
        gap=gap,
        scheduled_iterations=T,
        early_exit=exited_early,
        trace=trace,
    )
    return pt, best_upper, best_lower


def solve(inst, eps, config=None):
    """Run the extragradient iteration and return an eps-saddle point.

    The step sequence follows the published listing literally: rescale
    (A, b, c) by 1/L, take T = ceil(6(8 log2 d + 1) L / eps) iterations of
    the gradient (factor 1/3) and extragradient (factor 1/6) oracles with
    alpha = beta = 2, and return the running average.  The reported gap is
    exact and in original (unrescaled) units.
    """
    pt, _, _ = _run(inst, eps, config or SolverConfig())
    return pt


def solve_decide(inst, eps, config=None, upper_at_most=None, lower_above=None):
    """Solve, stopping as soon as the certified value bounds settle a test.

    upper_at_most: stop once eval_box of the average is <= this value.
    lower_above: stop once eval_simplex of the average exceeds it.  Used
    by the binary search over the flow threshold t, where only a
    comparison against a fixed level matters, so far-from-threshold probes
    finish after a few checkpoints.  Returns (point, best_upper,
    best_lower).
    """

    def stop_fn(up, lo):
        if upper_at_most is not None and up <= upper_at_most:
            return True
        if lower_above is not None and lo > lower_above:
            return True
        return False

    return _run(inst, eps, config or SolverConfig(), stop_fn=stop_fn)

"""Desk-scale verification of the layer-split stability bound.

Fine-tuning a fraction ``a`` of the parameters is modeled as regularized
empirical risk minimization: the random freeze mask enters in expectation as
the penalty (1-a) * ||w - w0||^2, making the training objective

    f_S(w) = (1/k) sum_i |x_i . w - y_i|  +  (1-a) * ||w - w0||^2

2(1-a)-strongly convex, while requiring ||x_i|| <= L keeps every per-sample
loss L-Lipschitz in w.  Replacing one training sample then moves the
minimizer by at most 2L/((1-a)k) and changes the loss at the replaced sample
by at most 2L^2/((1-a)k); the lab fits both minimizers explicitly and checks
the two inequalities on seeded grids of (k, a, L).

One-dimensional tasks (the default everywhere speed matters) are solved
exactly by scanning the breakpoints of the piecewise-quadratic objective;
higher dimensions use ADMM on the split t = Xw - y, which converges linearly
thanks to the strong convexity.  Both paths are certified by a min-norm
subgradient residual.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass
class ToyTask:
    """A small regression dataset with a pretrained anchor and a tuned fraction."""

    x: np.ndarray            # (k, dim), each row with norm <= lipschitz
    y: np.ndarray            # (k,)
    w0: np.ndarray           # (dim,)
    tuned_fraction: float    # in [0, 1)
    lipschitz: float

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.asarray(self.y, dtype=float)
        self.w0 = np.atleast_1d(np.asarray(self.w0, dtype=float))
        if self.x.shape[0] != self.y.size:
            raise DomainError("x and y must have matching sample counts")
        if self.x.shape[0] < 2:
            raise DomainError("need at least two samples")
        if not 0.0 <= self.tuned_fraction < 1.0:
            raise DomainError("tuned fraction must lie in [0, 1)")
        if not self.lipschitz > 0:
            raise DomainError("lipschitz must be > 0")
        norms = np.linalg.norm(self.x, axis=1)
        if np.any(norms > self.lipschitz * (1 + 1e-12)):
            raise DomainError("feature norms must not exceed the Lipschitz constant")

    @property
    def k(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def replace(self, i: int, x_new: np.ndarray, y_new: float) -> "ToyTask":
        x = self.x.copy()
        y = self.y.copy()
        x[i] = x_new
        y[i] = y_new
        return ToyTask(x, y, self.w0.copy(), self.tuned_fraction, self.lipschitz)


def loss(task: ToyTask, w: np.ndarray, i: int) -> float:
    """Absolute-error loss of sample i at parameters w."""
    return float(abs(task.x[i] @ np.atleast_1d(w) - task.y[i]))


def objective(task: ToyTask, w: np.ndarray) -> float:
    w = np.atleast_1d(w)
    data = float(np.mean(np.abs(task.x @ w - task.y)))
    return data + (1.0 - task.tuned_fraction) * float(np.sum((w - task.w0) ** 2))


def subgradient(task: ToyTask, w: np.ndarray) -> np.ndarray:
    """The a.e. gradient (sign convention sgn(0)=0 at kinks)."""
    w = np.atleast_1d(w)
    resid = task.x @ w - task.y
    return (task.x.T @ np.sign(resid) / task.k
            + 2.0 * (1.0 - task.tuned_fraction) * (w - task.w0))


def masked_finetune(task: ToyTask, tol: float = 1e-12) -> np.ndarray:
    """Minimizer of the regularized fine-tuning objective.

    Exact for 1-D parameters; ADMM otherwise.
    """
    if task.dim == 1:
        return _solve_1d(task)
    return _solve_admm(task, tol)


def _solve_1d(task: ToyTask) -> np.ndarray:
    x = task.x[:, 0]
    y = task.y
    w0 = float(task.w0[0])
    k = task.k
    lam = 2.0 * (1.0 - task.tuned_fraction)   # curvature of the penalty

    nz = np.abs(x) > 0
    if not np.any(nz):
        return np.array([w0])
    beta = y[nz] / x[nz]
    weight = np.abs(x[nz])
    order = np.argsort(beta, kind="stable")
    beta = beta[order]
    weight = weight[order]
    total = float(weight.sum())
    prefix = np.concatenate([[0.0], np.cumsum(weight)])   # prefix[j] = sum of first j

    # Derivative on the open segment right of breakpoint j (j = 0..len):
    #   g(w) = (2*prefix[j] - total)/k + lam*(w - w0), increasing in w.
    for j in range(len(beta) + 1):
        slope_term = (2.0 * prefix[j] - total) / k
        w_star = w0 - slope_term / lam
        lo = -np.inf if j == 0 else beta[j - 1]
        hi = np.inf if j == len(beta) else beta[j]
        if lo <= w_star <= hi:
            return np.array([w_star])
        if w_star < lo:
            # 0 lies in the subdifferential at the breakpoint left of this segment
            return np.array([lo])
    return np.array([beta[-1]])   # unreachable for lam > 0; defensive


def _solve_admm(task: ToyTask, tol: float, max_iter: int = 20000) -> np.ndarray:
    x, y = task.x, task.y
    k, dim = task.k, task.dim
    lam = 2.0 * (1.0 - task.tuned_fraction)
    rho = 1.0
    gram = lam * np.eye(dim) + rho * (x.T @ x)
    w = task.w0.copy()
    t = x @ w - y
    u = np.zeros(k)
    thresh = 1.0 / (k * rho)
    for _ in range(max_iter):
        rhs = lam * task.w0 + rho * (x.T @ (y + t - u))
        w_new = np.linalg.solve(gram, rhs)
        xw = x @ w_new
        v = xw - y + u
        t_new = np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)
        u = u + xw - y - t_new
        primal = float(np.linalg.norm(xw - y - t_new))
        dual = float(rho * np.linalg.norm(x.T @ (t_new - t)))
        w, t = w_new, t_new
        if max(primal, dual) < tol:
            break
    return w


def stationarity_residual(task: ToyTask, w: np.ndarray, kink_tol: float = 1e-9) -> float:
    """Min-norm subgradient at w: the certificate that w minimizes the objective.

    Samples sitting on their kink contribute any sign in [-1, 1]; the residual
    minimizes over those signs (exact interval check in 1-D, projected
    gradient otherwise).
    """
    w = np.atleast_1d(w)
    resid = task.x @ w - task.y
    scale = np.maximum(np.abs(task.y), 1.0)
    on_kink = np.abs(resid) <= kink_tol * scale
    base = (task.x[~on_kink].T @ np.sign(resid[~on_kink]) / task.k
            + 2.0 * (1.0 - task.tuned_fraction) * (w - task.w0))
    kinked = task.x[on_kink] / task.k
    if kinked.shape[0] == 0:
        return float(np.linalg.norm(base))
    if task.dim == 1:
        reach = float(np.sum(np.abs(kinked)))
        return float(max(abs(base[0]) - reach, 0.0))
    s = np.zeros(kinked.shape[0])
    a_mat = kinked.T                       # dim x n_kinked
    lip = 2.0 * float(np.linalg.norm(a_mat.T @ a_mat, 2)) + 1e-30
    for _ in range(2000):
        grad = 2.0 * a_mat.T @ (base + a_mat @ s)
        s = np.clip(s - grad / lip, -1.0, 1.0)
    return float(np.linalg.norm(base + a_mat @ s))


def replace_one_gap(task: ToyTask, i: int, x_new, y_new) -> tuple[float, float]:
    """(loss gap at the replaced sample, parameter distance) for one replacement."""
    x_new = np.atleast_1d(np.asarray(x_new, dtype=float))
    if np.linalg.norm(x_new) > task.lipschitz * (1 + 1e-12):
        raise DomainError("replacement feature norm exceeds the Lipschitz constant")
    w_full = masked_finetune(task)
    w_repl = masked_finetune(task.replace(i, x_new, float(y_new)))
    # both losses are evaluated at the original i-th sample
    gap = abs(loss(task, w_full, i) - loss(task, w_repl, i))
    return gap, float(np.linalg.norm(w_repl - w_full))


def loss_gap_bound(lipschitz: float, k: int, tuned_fraction: float) -> float:
    """2 L^2 / ((1-a) k): the replace-one loss stability bound."""
    if not 0.0 <= tuned_fraction < 1.0:
        raise DomainError("tuned fraction must lie in [0, 1)")
    return 2.0 * lipschitz**2 / ((1.0 - tuned_fraction) * k)


def param_dist_bound(lipschitz: float, k: int, tuned_fraction: float) -> float:
    """2 L / ((1-a) k): the replace-one parameter-distance bound."""
    return 2.0 * lipschitz / ((1.0 - tuned_fraction) * k)


@dataclass
class StabilityReport:
    """Replace-one trial results for one (k, a, L) grid cell."""

    k: int
    tuned_fraction: float
    lipschitz: float
    gaps: np.ndarray
    param_dists: np.ndarray
    bound: float
    param_bound: float
    violation_count: int = 0

    @property
    def max_gap(self) -> float:
        return float(self.gaps.max())

    @property
    def tightness(self) -> float:
        return self.max_gap / self.bound


SLACK = 1e-8


def verify_as_bound(trials: int, k_grid, alpha_grid, l_grid,
                    seed: int = 0) -> list[StabilityReport]:
    """Replace-one experiments over a (k, a, L) grid; raises on any violation."""
    k_grid, alpha_grid, l_grid = list(k_grid), list(alpha_grid), list(l_grid)
    if not (k_grid and alpha_grid and l_grid):
        raise DomainError("grids must be nonempty")
    reports = []
    for ki, k in enumerate(k_grid):
        for ai, a in enumerate(alpha_grid):
            for li, lip in enumerate(l_grid):
                rng = np.random.default_rng([seed, ki, ai, li])
                gaps = np.empty(trials)
                dists = np.empty(trials)
                bound = loss_gap_bound(lip, k, a)
                p_bound = param_dist_bound(lip, k, a)
                violations = 0
                for t in range(trials):
                    task = _random_task(rng, k, a, lip)
                    i = int(rng.integers(k))
                    x_new = rng.uniform(-lip, lip)
                    y_new = rng.uniform(-2.0, 2.0)
                    gap, dist = replace_one_gap(task, i, x_new, y_new)
                    gaps[t] = gap
                    dists[t] = dist
                    if gap > bound + SLACK or dist > p_bound + SLACK:
                        violations += 1
                        raise AssertionError(
                            "stability bound violated: "
                            + json.dumps({
                                "k": k, "alpha": a, "L": lip, "trial": t,
                                "gap": gap, "bound": bound,
                                "param_dist": dist, "param_bound": p_bound,
                                "x": task.x.tolist(), "y": task.y.tolist(),
                                "w0": task.w0.tolist(), "i": i,
                                "x_new": float(x_new), "y_new": float(y_new),
                            }))
                reports.append(StabilityReport(k, a, lip, gaps, dists,
                                               bound, p_bound, violations))
    return reports


def _random_task(rng: np.random.Generator, k: int, a: float, lip: float) -> ToyTask:
    x = rng.uniform(-lip, lip, size=(k, 1))
    y = rng.uniform(-2.0, 2.0, size=k)
    w0 = rng.uniform(-1.0, 1.0, size=1)
    return ToyTask(x, y, w0, a, lip)


def mask_regularizer_samples(w: np.ndarray, w0: np.ndarray, tuned_fraction: float,
                             rng: np.random.Generator, draws: int) -> np.ndarray:
    """Monte-Carlo draws of ||(I - M)(w - w0)||^2 for random freeze masks.

    Each coordinate is tuned independently with probability ``tuned_fraction``;
    the sample mean converges to (1 - tuned_fraction) * ||w - w0||^2, the
    expected-regularizer form the lab optimizes.
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    w0 = np.atleast_1d(np.asarray(w0, dtype=float))
    diff2 = (w - w0) ** 2
    frozen = rng.random((draws, w.size)) >= tuned_fraction
    return frozen @ diff2


def report_rows(reports: list[StabilityReport]) -> list[dict]:
    """Flatten reports to one row per trial (CSV schema: k, alpha, L, trial,
    max_gap, bound, ratio)."""
    rows = []
    for rep in reports:
        for t, gap in enumerate(rep.gaps):
            rows.append({
                "k": rep.k, "alpha": rep.tuned_fraction, "L": rep.lipschitz,
                "trial": t, "max_gap": float(gap), "bound": rep.bound,
                "ratio": float(gap / rep.bound),
            })
    return rows


STABILITY_COLUMNS = ["k", "alpha", "L", "trial", "max_gap", "bound", "ratio"]

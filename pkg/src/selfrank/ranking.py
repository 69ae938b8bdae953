"""Pair-task ranking models: low-rank multitask and per-task ridge.

Pair tasks share query inputs heavily (each user appears in many tasks), and
their output Grams are rank-one (z z^T under the linear kernel on signed
rating differences). The low-rank trainer here runs the exact multitask
updates of learners.fit_lowrank_mtl while exploiting both structures, so the
stacked n x n Gram is never materialized: everything reduces to the distinct
user Gram K_u plus segment reductions over the stacked task rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .data_io import PairTaskSet
from .errors import DivergenceError, InvalidInputError, NumericalError
from .kernels import KernelSpec, cross_vector, gram
from .learners import TrainConfig, _stop


@dataclass
class PairTaskData:
    """Stacked view of a PairTaskSet against a fixed user feature map."""

    users: list
    U: np.ndarray  # distinct user features, one row per user
    K_u: np.ndarray  # user Gram under the input kernel
    kernel: KernelSpec
    pairs: list[tuple[int, int]]  # document index pairs, one per task
    row_user: np.ndarray  # user index per stacked row
    starts: np.ndarray  # first stacked row of each task
    task_sizes: np.ndarray
    z: np.ndarray  # stacked signed rating differences

    @property
    def n_rows(self) -> int:
        return self.z.shape[0]

    @property
    def n_tasks(self) -> int:
        return len(self.pairs)


def build_pair_task_data(
    tasks: PairTaskSet, features: dict, kernel: KernelSpec
) -> PairTaskData:
    """Stack the task samples and precompute the distinct-user Gram."""
    if not tasks.tasks:
        raise InvalidInputError("pair task set has no tasks")
    users = sorted({q for t in tasks.tasks for q in t.query_ids})
    missing = [u for u in users if u not in features]
    if missing:
        raise InvalidInputError(f"no features for users {missing[:5]!r}")
    index = {u: k for k, u in enumerate(users)}
    U = np.vstack([np.asarray(features[u], dtype=float) for u in users])
    K_u = gram(U, kernel)
    row_user = []
    sizes = []
    z_parts = []
    pairs = []
    for t in tasks.tasks:
        pairs.append((t.a, t.b))
        row_user.extend(index[q] for q in t.query_ids)
        sizes.append(len(t.query_ids))
        z_parts.append(t.z)
    sizes = np.asarray(sizes, dtype=int)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return PairTaskData(
        users=users,
        U=U,
        K_u=K_u,
        kernel=kernel,
        pairs=pairs,
        row_user=np.asarray(row_user, dtype=int),
        starts=starts,
        task_sizes=sizes,
        z=np.concatenate(z_parts).astype(float),
    )


def _segment_sum(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    return np.add.reduceat(values, starts, axis=0)


def _group_by_user(rows: np.ndarray, row_user: np.ndarray, n_users: int) -> np.ndarray:
    """Sum stacked rows per user; column-wise bincount beats unbuffered add.at."""
    return np.stack(
        [np.bincount(row_user, weights=rows[:, j], minlength=n_users) for j in range(rows.shape[1])],
        axis=1,
    )


@dataclass
class LowRankRankModel:
    """Shared-input low-rank multitask model over pair tasks."""

    data: PairTaskData
    M: np.ndarray  # n x r over stacked rows
    N: np.ndarray  # n x r, rows grouped by task
    cfg: TrainConfig
    iters_run: int
    objective_trace: list[float]

    def query_cross(self, x: np.ndarray) -> np.ndarray:
        return cross_vector(self.data.U, x, self.data.kernel)

    def tournament_weights(self, queries: np.ndarray) -> np.ndarray:
        """Edge weight per task for each query row; shape (n_tasks, n_queries).

        alpha_t(x) = N_t M^T v_x with v_x the stacked cross vector; the edge
        weight is z_t^T alpha_t(x). M^T v_x collapses to agg(M)^T V_u through
        the duplicated-user structure.
        """
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        d = self.data
        Vu = np.stack([cross_vector(d.U, q, d.kernel) for q in queries], axis=1)
        agg = _group_by_user(self.M, d.row_user, len(d.users))
        core = agg.T @ Vu  # r x q
        alpha = self.N @ core  # stacked rows x q
        return _segment_sum(alpha * d.z[:, None], d.starts)


def fit_rank_lowrank(data: PairTaskData, cfg: TrainConfig) -> LowRankRankModel:
    """Multitask factorized descent specialized to pair tasks.

    Identical iterates to learners.fit_lowrank_mtl on the materialized kernel
    blocks (cross block K_t = rows of S K_u S^T, output gram z_t z_t^T); cost
    per iteration is O(n r^2 + u^2 r) instead of O(n^2 r).
    """
    n, T = data.n_rows, data.n_tasks
    r = cfg.rank
    scale = cfg.init_scale if cfg.init_scale is not None else 1.0 / np.sqrt(n * r)
    rng = np.random.default_rng(cfg.seed)
    M = scale * rng.standard_normal((n, r))
    N = np.empty((n, r))
    for s, n_t in zip(data.starts, data.task_sizes):
        N[s : s + n_t] = scale * rng.standard_normal((n_t, r))

    row_task = np.repeat(np.arange(T), data.task_sizes)
    inv_nt = 1.0 / data.task_sizes.astype(float)
    inv_Tnt_rows = (inv_nt / T)[row_task]
    inv_nt_rows = inv_nt[row_task]
    z = data.z
    z2_per_task = _segment_sum(z * z, data.starts)
    shrink = 1.0 - cfg.lam * cfg.step

    def forward(M, N):
        """P rows, per-task w = N_t^T z_t broadcast to rows, and pw = P w."""
        agg = _group_by_user(M, data.row_user, len(data.users))
        P = (data.K_u @ agg)[data.row_user]
        w_rows = _segment_sum(z[:, None] * N, data.starts)[row_task]
        pw = np.einsum("ij,ij->i", P, w_rows)
        return P, w_rows, pw

    def objective(M, N, P, w_rows, pw):
        # residual_t = ||z_t||^2 - 2 z_t.(P_t w_t) + ||P_t w_t||^2, all segment sums
        res = (
            z2_per_task
            - 2.0 * _segment_sum(z * pw, data.starts)
            + _segment_sum(pw * pw, data.starts)
        )
        data_term = float(np.sum(np.maximum(res, 0.0) * inv_nt) / T)
        pen = float(np.sum(M * P)) + float(np.sum(w_rows[data.starts] ** 2))
        return data_term + cfg.lam * pen

    P, w_rows, pw = forward(M, N)
    trace = [objective(M, N, P, w_rows, pw)]
    if not np.isfinite(trace[0]):
        raise DivergenceError(0)
    iters = 0
    bounds = list(zip(data.starts.tolist(), (data.starts + data.task_sizes).tolist()))
    NG = np.empty((n, r))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, cfg.max_iters + 1):
            # M correction rows: ((P_t w_t - z_t) w_t^T) / (T n_t)
            M_corr = ((pw - z) * inv_Tnt_rows)[:, None] * w_rows
            # N correction rows: (N_t (P_t^T P_t) - P_t) / n_t, per-task GEMMs
            for s, e in bounds:
                np.dot(N[s:e], np.dot(P[s:e].T, P[s:e]), out=NG[s:e])
            M = shrink * M - cfg.step * M_corr
            N = shrink * N - cfg.step * (inv_nt_rows[:, None] * (NG - P))
            P, w_rows, pw = forward(M, N)
            obj = objective(M, N, P, w_rows, pw)
            if not np.isfinite(obj):
                raise DivergenceError(k)
            trace.append(obj)
            iters = k
            if _stop(trace[-2], obj, cfg.tol):
                break
    return LowRankRankModel(
        data=data, M=M, N=N, cfg=cfg, iters_run=iters, objective_trace=trace
    )


def halving_step_search_rank(
    data: PairTaskData,
    cfg: TrainConfig,
    start: float = 0.1,
    probe_iters: int | None = 10,
    max_halvings: int = 60,
) -> float:
    """Halve from `start` until a probe of fit_rank_lowrank descends."""
    step = start
    for _ in range(max_halvings):
        probe = TrainConfig(
            lam=cfg.lam, rank=cfg.rank, step=step,
            max_iters=probe_iters if probe_iters is not None else cfg.max_iters,
            seed=cfg.seed, tol=0.0, init_scale=cfg.init_scale,
        )
        try:
            model = fit_rank_lowrank(data, probe)
        except DivergenceError:
            step *= 0.5
            continue
        if np.all(np.diff(model.objective_trace) <= 0):
            return step
        step *= 0.5
    raise NumericalError(f"no descending step found after {max_halvings} halvings")


@dataclass
class HsRankModel:
    """Independent per-task kernel ridge over each pair task's own co-raters."""

    data: PairTaskData
    lam: float
    _factors: list

    def tournament_weights(self, queries: np.ndarray) -> np.ndarray:
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        d = self.data
        Vu = np.stack([cross_vector(d.U, q, d.kernel) for q in queries], axis=1)
        out = np.empty((d.n_tasks, queries.shape[0]))
        for t in range(d.n_tasks):
            s = d.starts[t]
            rows = d.row_user[s : s + d.task_sizes[t]]
            alpha = cho_solve(self._factors[t], Vu[rows])
            out[t] = d.z[s : s + d.task_sizes[t]] @ alpha
        return out


def fit_rank_hs(data: PairTaskData, lam: float) -> HsRankModel:
    """Closed-form per-task weights: alpha_t(x) = (K_t + n_t lam I)^-1 v_x."""
    if not lam > 0:
        raise InvalidInputError(f"lam must be > 0, got {lam}")
    factors = []
    for t in range(data.n_tasks):
        s = data.starts[t]
        rows = data.row_user[s : s + data.task_sizes[t]]
        K_t = data.K_u[np.ix_(rows, rows)]
        n_t = rows.shape[0]
        system = K_t + n_t * lam * np.eye(n_t)
        try:
            factors.append(cho_factor(system))
        except np.linalg.LinAlgError:
            jitter = 1e-12 * float(np.trace(K_t)) / max(n_t, 1)
            try:
                factors.append(cho_factor(system + jitter * np.eye(n_t)))
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"task {t}: ridge factorization failed") from exc
    return HsRankModel(data=data, lam=lam, _factors=factors)

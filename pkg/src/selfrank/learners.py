"""Surrogate regression in kernel form.

Two regularization routes for the least-squares surrogate problem:

* Hilbert-Schmidt (ridge): closed-form weights alpha(x) = (K_X + n lam I)^-1 v_x.
* Trace norm via the factorized problem: gradient descent on coefficient
  matrices M, N in R^{n x r} that represent the factors A = X^T M, B = Y^T N
  entirely through the input/output Gram matrices:

      M_{k+1} = (1 - lam nu) M_k - nu (K_X M_k N_k^T K_Y N_k - K_Y N_k)
      N_{k+1} = (1 - lam nu) N_k - nu (N_k M_k^T K_X K_X M_k - K_X M_k)

  with weights alpha(x) = N_k M_k^T v_x. The 1/n data factor is absorbed into
  lam and the factor 2 of the gradients is absorbed into nu, so the updates are
  hand-checkable as written. A multitask variant handles per-task datasets with
  missing data through per-task kernel blocks, keeping explicit 1/(T n_t)
  weights because task sizes differ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DivergenceError, InvalidInputError, NumericalError


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the factorized gradient descent.

    init_scale defaults to 1/sqrt(n*r) at fit time when left as None.
    """

    lam: float
    rank: int
    step: float
    max_iters: int
    seed: int = 0
    tol: float = 1e-9
    init_scale: float | None = None

    def __post_init__(self):
        if not self.lam >= 0:
            raise InvalidInputError(f"lam must be >= 0, got {self.lam}")
        if not self.step >= 0:
            raise InvalidInputError(f"step must be >= 0, got {self.step}")
        if self.rank < 1:
            raise InvalidInputError(f"rank must be >= 1, got {self.rank}")
        if self.max_iters < 1:
            raise InvalidInputError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol < 0:
            raise InvalidInputError(f"tol must be >= 0, got {self.tol}")
        if self.init_scale is not None and not self.init_scale > 0:
            raise InvalidInputError(f"init_scale must be > 0, got {self.init_scale}")


@dataclass
class FactorPair:
    """Coefficient factors after fitting, with the recorded objective trace."""

    M: np.ndarray
    N: np.ndarray
    iters_run: int
    objective_trace: list[float] = field(default_factory=list)


@dataclass
class MtlFactorSet:
    """Multitask factors: one shared M over stacked inputs, one N_t per task."""

    M: np.ndarray
    N_per_task: list[np.ndarray]
    task_sizes: list[int]
    iters_run: int
    objective_trace: list[float] = field(default_factory=list)

    @property
    def T(self) -> int:
        return len(self.N_per_task)


class HsModel:
    """Closed-form ridge weights through a cached Cholesky factorization."""

    def __init__(self, K_X: np.ndarray, lam: float):
        K_X = np.asarray(K_X, dtype=float)
        if K_X.ndim != 2 or K_X.shape[0] != K_X.shape[1]:
            raise InvalidInputError(f"K_X must be square, got {K_X.shape}")
        if not lam > 0:
            raise InvalidInputError(f"lam must be > 0, got {lam}")
        self.n = K_X.shape[0]
        self.lam = float(lam)
        system = K_X + self.n * self.lam * np.eye(self.n)
        try:
            self._cho = cho_factor(system)
        except np.linalg.LinAlgError:
            jitter = 1e-12 * float(np.trace(K_X)) / self.n
            try:
                self._cho = cho_factor(system + jitter * np.eye(self.n))
            except np.linalg.LinAlgError as exc:
                raise NumericalError(
                    f"Cholesky factorization failed despite jitter {jitter:.3e}"
                ) from exc

    def solve(self, v: np.ndarray) -> np.ndarray:
        return cho_solve(self._cho, v)


def fit_hs(K_X: np.ndarray, lam: float) -> HsModel:
    """Factor (K_X + n lam I) once for repeated weight solves."""
    return HsModel(K_X, lam)


def hs_weights(model: HsModel, v_x: np.ndarray) -> np.ndarray:
    """Solve (K_X + n lam I) alpha = v_x."""
    v_x = np.asarray(v_x, dtype=float)
    if v_x.shape[0] != model.n:
        raise InvalidInputError(f"v_x has length {v_x.shape[0]}, expected {model.n}")
    return model.solve(v_x)


def factorized_objective(M, N, K_X, K_Y, lam: float) -> float:
    """Kernel-form objective of the factorized trace-norm problem.

    tr((I - K_X M N^T) K_Y (I - N M^T K_X)) + lam (tr(M^T K_X M) + tr(N^T K_Y N)),
    evaluated in O(n^2 r) through P = K_X M and Q = K_Y N.
    """
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    if M.shape != N.shape:
        raise InvalidInputError(f"M {M.shape} and N {N.shape} must share shape")
    P = K_X @ M
    Q = K_Y @ N
    residual = float(np.trace(K_Y)) - 2.0 * float(np.sum(P * Q)) + float(
        np.sum((N.T @ Q) * (P.T @ P))
    )
    residual = max(residual, 0.0)  # trace expansion can dip epsilon-negative at interpolation
    penalty = lam * (float(np.sum(M * P)) + float(np.sum(N * Q)))
    return residual + penalty


def lowrank_step(M, N, K_X, K_Y, lam: float, step: float):
    """One simultaneous update of (M, N); both new factors use the old pair."""
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    n = K_X.shape[0]
    if M.shape != N.shape or M.shape[0] != n or K_Y.shape != (n, n):
        raise InvalidInputError(
            f"shape mismatch: M {M.shape}, N {N.shape}, K_X {K_X.shape}, K_Y {K_Y.shape}"
        )
    P = K_X @ M
    Q = K_Y @ N
    shrink = 1.0 - lam * step
    M_next = shrink * M - step * (P @ (N.T @ Q) - Q)
    N_next = shrink * N - step * (N @ (P.T @ P) - P)
    return M_next, N_next


def init_factors(n: int, cfg: TrainConfig, count: int = 2) -> list[np.ndarray]:
    """Seeded i.i.d. normal factor matrices, scaled by init_scale (default 1/sqrt(n r))."""
    scale = cfg.init_scale if cfg.init_scale is not None else 1.0 / np.sqrt(n * cfg.rank)
    rng = np.random.default_rng(cfg.seed)
    return [scale * rng.standard_normal((n, cfg.rank)) for _ in range(count)]


def _stop(prev: float, curr: float, tol: float) -> bool:
    return abs(curr - prev) / max(prev, 1e-12) < tol


def fit_lowrank(
    K_X: np.ndarray,
    K_Y: np.ndarray,
    cfg: TrainConfig,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> FactorPair:
    """Gradient descent on the factorized objective in kernel form.

    Runs until max_iters or until the relative objective change drops below
    cfg.tol; the trace records the objective at the initial point and after
    every update. Raises DivergenceError on the first non-finite objective.
    """
    K_X = np.asarray(K_X, dtype=float)
    K_Y = np.asarray(K_Y, dtype=float)
    n = K_X.shape[0]
    if K_Y.shape != (n, n):
        raise InvalidInputError(f"K_X {K_X.shape} and K_Y {K_Y.shape} must be n x n alike")
    if init is not None:
        M = np.asarray(init[0], dtype=float).copy()
        N = np.asarray(init[1], dtype=float).copy()
        if M.ndim == 1:
            M = M[:, None]
        if N.ndim == 1:
            N = N[:, None]
    else:
        M, N = init_factors(n, cfg)
    trace = [factorized_objective(M, N, K_X, K_Y, cfg.lam)]
    if not np.isfinite(trace[0]):
        raise DivergenceError(0)
    iters = 0
    with np.errstate(over="ignore", invalid="ignore"):  # guard reports divergence instead
        for k in range(1, cfg.max_iters + 1):
            M, N = lowrank_step(M, N, K_X, K_Y, cfg.lam, cfg.step)
            obj = factorized_objective(M, N, K_X, K_Y, cfg.lam)
            if not np.isfinite(obj):
                raise DivergenceError(k)
            trace.append(obj)
            iters = k
            if _stop(trace[-2], obj, cfg.tol):
                break
    return FactorPair(M=M, N=N, iters_run=iters, objective_trace=trace)


def lowrank_weights(fp: FactorPair, v_x: np.ndarray) -> np.ndarray:
    """alpha(x) = N M^T v_x."""
    v_x = np.asarray(v_x, dtype=float)
    if v_x.shape[0] != fp.M.shape[0]:
        raise InvalidInputError(
            f"v_x has length {v_x.shape[0]}, expected {fp.M.shape[0]}"
        )
    return fp.N @ (fp.M.T @ v_x)


def halving_step_search(
    K_X: np.ndarray,
    K_Y: np.ndarray,
    cfg: TrainConfig,
    start: float = 0.1,
    probe_iters: int | None = 10,
    max_halvings: int = 60,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Halve the step from `start` until a probe run descends monotonically.

    probe_iters=None validates over cfg.max_iters: a step whose first few
    iterations descend can still overshoot later (the quartic's curvature
    grows with the factor norms), so callers that need a non-increasing trace
    for the whole run must probe the whole run. When the eventual fit starts
    from explicit factors, pass the same `init` here.
    """
    step = start
    for _ in range(max_halvings):
        probe = TrainConfig(
            lam=cfg.lam,
            rank=cfg.rank,
            step=step,
            max_iters=probe_iters if probe_iters is not None else cfg.max_iters,
            seed=cfg.seed,
            tol=0.0,
            init_scale=cfg.init_scale,
        )
        try:
            fp = fit_lowrank(K_X, K_Y, probe, init=init)
        except DivergenceError:
            step *= 0.5
            continue
        t = np.asarray(fp.objective_trace)
        if np.all(np.diff(t) <= 0):
            return step
        step *= 0.5
    raise NumericalError(f"no descending step found after {max_halvings} halvings")


def _row_slices(task_sizes) -> list[slice]:
    slices = []
    start = 0
    for n_t in task_sizes:
        slices.append(slice(start, start + n_t))
        start += n_t
    return slices


def fit_lowrank_mtl(
    cross_blocks: list[np.ndarray],
    output_grams: list[np.ndarray],
    cfg: TrainConfig,
    init: tuple[np.ndarray, list[np.ndarray]] | None = None,
) -> MtlFactorSet:
    """Multitask factorized descent over per-task kernel blocks.

    cross_blocks[t] is the n_t x n kernel block of task t's inputs against the
    row-stacked inputs of all tasks; output_grams[t] is the n_t x n_t output
    Gram of task t (zero rows/columns encode missing data). Updates:

        N_t <- (1 - nu lam) N_t - (nu / n_t) (N_t P_t^T P_t - P_t),  P_t = K_t M
        M   <- (1 - nu lam) M - nu * stack_t[ (K_t M N_t^T K_Yt N_t - K_Yt N_t) / (T n_t) ]

    The recorded objective is sum_t tr((I - K_t M N_t^T) K_Yt (...)^T)/(T n_t)
    plus lam (tr(M^T K M) + sum_t tr(N_t^T K_Yt N_t)).
    """
    T = len(cross_blocks)
    if T == 0 or len(output_grams) != T:
        raise InvalidInputError("need one cross block and one output gram per task")
    task_sizes = [b.shape[0] for b in cross_blocks]
    n = sum(task_sizes)
    for t, (K_t, KY_t) in enumerate(zip(cross_blocks, output_grams)):
        if K_t.shape != (task_sizes[t], n) or KY_t.shape != (task_sizes[t], task_sizes[t]):
            raise InvalidInputError(
                f"task {t}: cross block {K_t.shape} / output gram {KY_t.shape} "
                f"inconsistent with n_t={task_sizes[t]}, n={n}"
            )
    slices = _row_slices(task_sizes)
    if init is not None:
        M = np.asarray(init[0], dtype=float).copy()
        N_blocks = [np.asarray(N_t, dtype=float).copy() for N_t in init[1]]
    else:
        scale = cfg.init_scale if cfg.init_scale is not None else 1.0 / np.sqrt(n * cfg.rank)
        rng = np.random.default_rng(cfg.seed)
        M = scale * rng.standard_normal((n, cfg.rank))
        N_blocks = [scale * rng.standard_normal((n_t, cfg.rank)) for n_t in task_sizes]

    def objective(M, N_blocks):
        P_blocks = [K_t @ M for K_t in cross_blocks]
        Q_blocks = [KY_t @ N_t for KY_t, N_t in zip(output_grams, N_blocks)]
        data = 0.0
        pen = 0.0
        for s, n_t, P_t, Q_t, N_t, KY_t in zip(
            slices, task_sizes, P_blocks, Q_blocks, N_blocks, output_grams
        ):
            res = (
                float(np.trace(KY_t))
                - 2.0 * float(np.sum(P_t * Q_t))
                + float(np.sum((N_t.T @ Q_t) * (P_t.T @ P_t)))
            )
            data += max(res, 0.0) / (T * n_t)
            pen += float(np.sum(N_t * Q_t)) + float(np.sum(M[s] * P_t))
        return data + cfg.lam * pen

    trace = [objective(M, N_blocks)]
    if not np.isfinite(trace[0]):
        raise DivergenceError(0)
    shrink = 1.0 - cfg.lam * cfg.step
    iters = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, cfg.max_iters + 1):
            P_blocks = [K_t @ M for K_t in cross_blocks]
            M_corr = np.empty_like(M)
            N_new = []
            for s, n_t, P_t, N_t, KY_t in zip(
                slices, task_sizes, P_blocks, N_blocks, output_grams
            ):
                Q_t = KY_t @ N_t
                M_corr[s] = (P_t @ (N_t.T @ Q_t) - Q_t) / (T * n_t)
                N_new.append(shrink * N_t - (cfg.step / n_t) * (N_t @ (P_t.T @ P_t) - P_t))
            M = shrink * M - cfg.step * M_corr
            N_blocks = N_new
            obj = objective(M, N_blocks)
            if not np.isfinite(obj):
                raise DivergenceError(k)
            trace.append(obj)
            iters = k
            if _stop(trace[-2], obj, cfg.tol):
                break
    return MtlFactorSet(
        M=M,
        N_per_task=N_blocks,
        task_sizes=task_sizes,
        iters_run=iters,
        objective_trace=trace,
    )


def mtl_weights(ms: MtlFactorSet, v_x: np.ndarray) -> list[np.ndarray]:
    """Per-task weights alpha_t = N_t M^T v_x over the stacked cross vector."""
    v_x = np.asarray(v_x, dtype=float)
    n = sum(ms.task_sizes)
    if v_x.shape[0] != n:
        raise InvalidInputError(f"v_x has length {v_x.shape[0]}, expected {n}")
    core = ms.M.T @ v_x
    return [N_t @ core for N_t in ms.N_per_task]

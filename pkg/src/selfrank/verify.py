"""Built-in verification suite: every structural property, checked by oracles.

Each check compares a production code path against an independent
reference (explicit-coordinate gradient descent, proximal/SVT solves,
exhaustive enumeration, dense linear solves) and reports a residual with its
threshold. The CLI `verify` command runs this and fails on any violation.
"""

from __future__ import annotations

import numpy as np

from .decoding import Tournament, backward_weight, decode_finite, fas_exact, fas_greedy
from .learners import (
    TrainConfig,
    fit_hs,
    fit_lowrank,
    fit_lowrank_mtl,
    halving_step_search,
    hs_weights,
    lowrank_step,
)
from .losses import zero_one
from .oracles import (
    ExplicitProblem,
    explicit_descending_step,
    explicit_gd,
    nuclear_norm,
    prox_nuclear,
    svt,
)


def _check(name: str, value: float, threshold: float) -> dict:
    return {
        "name": name,
        "value": float(value),
        "threshold": float(threshold),
        "pass": bool(value <= threshold),
    }


def _random_problem(rng, n_max=30, d_max=10, t_max=8):
    n = int(rng.integers(8, n_max + 1))
    d = int(rng.integers(2, d_max + 1))
    T = int(rng.integers(2, t_max + 1))
    X = rng.standard_normal((n, d))
    Y = rng.standard_normal((n, T))
    return X, Y


def check_hand_updates() -> dict:
    """Scalar update example: K_X=K_Y=[1], M=2, N=1, lam=0, step=0.1 -> (1.9, 0.8)."""
    one = np.array([[1.0]])
    M1, N1 = lowrank_step(np.array([[2.0]]), np.array([[1.0]]), one, one, 0.0, 0.1)
    resid = abs(M1[0, 0] - 1.9) + abs(N1[0, 0] - 0.8)
    return _check("lowrank_hand_step", resid, 1e-12)


def check_factor_equivalence(rng, problems=5, iters=100) -> list[dict]:
    """Kernel factors must track the explicit factors: A_k = X^T M_k, B_k = Y^T N_k."""
    dev_factors = 0.0
    dev_weights = 0.0
    for _ in range(problems):
        X, Y = _random_problem(rng)
        n = X.shape[0]
        r = int(rng.integers(1, 5))
        K, KY = X @ X.T, Y @ Y.T
        M0 = rng.standard_normal((n, r)) / np.sqrt(n * r)
        N0 = rng.standard_normal((n, r)) / np.sqrt(n * r)
        lam = float(rng.uniform(0.05, 0.5))
        base = TrainConfig(lam=lam, rank=r, step=1.0, max_iters=iters, seed=0, tol=0.0)
        step = halving_step_search(K, KY, base, probe_iters=None, init=(M0, N0))
        cfg = TrainConfig(lam=lam, rank=r, step=step, max_iters=iters, seed=0, tol=0.0)
        fp = fit_lowrank(K, KY, cfg, init=(M0, N0))
        traj = explicit_gd(ExplicitProblem(X, Y), X.T @ M0, Y.T @ N0, lam, step, iters)
        A_k, B_k = traj[-1]
        scale_a = max(np.linalg.norm(A_k), 1e-12)
        scale_b = max(np.linalg.norm(B_k), 1e-12)
        dev_factors = max(
            dev_factors,
            np.linalg.norm(A_k - X.T @ fp.M) / scale_a,
            np.linalg.norm(B_k - Y.T @ fp.N) / scale_b,
        )
        x = rng.standard_normal(X.shape[1])
        lhs = (fp.N @ (fp.M.T @ (X @ x))) @ Y  # decoded through weights
        rhs = x @ A_k @ B_k.T
        dev_weights = max(dev_weights, np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-12))
    return [
        _check("loss_trick_factor_equivalence", dev_factors, 1e-8),
        _check("loss_trick_weight_equivalence", dev_weights, 1e-8),
    ]


def check_hs_normal_equations(rng, queries=100) -> dict:
    """Ridge weights must satisfy (K + n lam I) alpha = v_x to 1e-10 relative."""
    worst = 0.0
    for _ in range(queries):
        n = int(rng.integers(5, 40))
        d = int(rng.integers(2, 10))
        X = rng.standard_normal((n, d))
        K = X @ X.T
        lam = float(rng.uniform(1e-3, 1.0))
        model = fit_hs(K, lam)
        v = rng.standard_normal(n)
        alpha = hs_weights(model, v)
        resid = np.linalg.norm((K + n * lam * np.eye(n)) @ alpha - v) / max(np.linalg.norm(v), 1e-12)
        worst = max(worst, resid)
    return _check("hs_normal_equation_residual", worst, 1e-10)


def check_monotone_descent(rng, problems=3) -> dict:
    """With the full-run halving step, the objective trace never rises."""
    worst = 0.0
    for _ in range(problems):
        X, Y = _random_problem(rng)
        K, KY = X @ X.T, Y @ Y.T
        cfg = TrainConfig(lam=0.1, rank=3, step=1.0, max_iters=300, seed=1, tol=0.0)
        step = halving_step_search(K, KY, cfg, probe_iters=None)
        fp = fit_lowrank(K, KY, TrainConfig(lam=0.1, rank=3, step=step, max_iters=300, seed=1, tol=0.0))
        rises = np.diff(fp.objective_trace)
        worst = max(worst, float(np.max(rises, initial=0.0)))
    return _check("monotone_descent_max_rise", worst, 0.0)


def check_gram_balance(rng, problems=2) -> dict:
    """At stationarity the factor Grams balance: M^T K_X M = N^T K_Y N."""
    worst = 0.0
    for _ in range(problems):
        n, d, T, r = 12, 4, 4, 2
        X = rng.standard_normal((n, d))
        Y = rng.standard_normal((n, T))
        K, KY = X @ X.T, Y @ Y.T
        base = TrainConfig(lam=0.5, rank=r, step=1.0, max_iters=400, seed=2, tol=0.0)
        step = halving_step_search(K, KY, base, probe_iters=None)
        cfg = TrainConfig(lam=0.5, rank=r, step=step, max_iters=200000, seed=2, tol=1e-10)
        fp = fit_lowrank(K, KY, cfg)
        gm = fp.M.T @ K @ fp.M
        gn = fp.N.T @ KY @ fp.N
        ratio = np.linalg.norm(gm - gn) / (np.linalg.norm(gm) + 1.0)
        worst = max(worst, ratio)
    return _check("gram_balance_ratio", worst, 1e-3)


def check_variational_consistency(rng, problems=2) -> dict:
    """Factorized descent at full rank must reach the proximal solver's objective."""
    worst = 0.0
    for _ in range(problems):
        n = int(rng.integers(10, 25))
        d = int(rng.integers(3, 15))
        T = int(rng.integers(3, 15))
        r = min(d, T)
        X = rng.standard_normal((n, d))
        Y = X @ (rng.standard_normal((T, 2)) @ rng.standard_normal((2, d))).T
        Y += 0.3 * rng.standard_normal((n, T))
        p = ExplicitProblem(X, Y)
        lam_n = 0.1
        op = np.linalg.norm(X, 2)
        G_ista, trace = prox_nuclear(p, lam_n, n / (2 * op**2), 3000)
        lam_gd = n * lam_n / 2.0  # bridge the 1/n and the variational 1/2 conventions
        A0 = 0.1 * rng.standard_normal((d, r))
        B0 = 0.1 * rng.standard_normal((T, r))
        step = explicit_descending_step(p, A0, B0, lam_gd, 0.5 / op**2)
        traj = explicit_gd(p, A0, B0, lam_gd, step, 30000)
        A, B = traj[-1]
        F_fact = float(np.sum((X @ A @ B.T - Y) ** 2) / n + (lam_n / 2) * (np.sum(A**2) + np.sum(B**2)))
        gap = abs(F_fact - trace[-1]) / abs(trace[-1])
        worst = max(worst, gap)
    return _check("variational_objective_gap", worst, 0.01)


def check_svt(rng) -> dict:
    a = svt(np.diag([3.0, 1.0]), 1.0)
    resid = np.linalg.norm(a - np.diag([2.0, 0.0]))
    b = rng.standard_normal((5, 4))
    resid = max(resid, np.linalg.norm(svt(b, 0.0) - b))
    resid = max(resid, np.linalg.norm(svt(b, np.linalg.norm(b, 2) + 1.0)))
    return _check("svt_exactness", resid, 1e-12)


def check_ista_descent(rng) -> dict:
    X, Y = _random_problem(rng, n_max=20)
    p = ExplicitProblem(X, Y)
    op = np.linalg.norm(X, 2)
    _, trace = prox_nuclear(p, 0.05, X.shape[0] / (2 * op**2), 500)
    rises = np.diff(trace)
    return _check("ista_descent_max_rise", float(np.max(rises, initial=0.0)), 1e-10)


def check_fas(rng, tournaments=300, max_docs=7) -> list[dict]:
    """Greedy never beats the exact optimum and matches it on most instances."""
    matches = 0
    undercut = 0.0
    for _ in range(tournaments):
        n = int(rng.integers(2, max_docs + 1))
        t = Tournament(np.triu(rng.standard_normal((n, n)), k=1))
        greedy_obj = backward_weight(t, fas_greedy(t))
        exact_obj = backward_weight(t, fas_exact(t))
        undercut = max(undercut, exact_obj - greedy_obj)
        if greedy_obj <= exact_obj + 1e-12:
            matches += 1
    return [
        _check("fas_greedy_never_undercuts_exact", undercut, 1e-12),
        _check("fas_greedy_match_shortfall", 1.0 - matches / tournaments, 0.1),
    ]


def check_decode_finite(rng, instances=50) -> dict:
    """The loss-trick argmin must agree with direct exhaustive re-evaluation."""
    labels = ["a", "b", "c", "d"]
    mismatches = 0
    for _ in range(instances):
        train = [labels[i] for i in rng.integers(0, len(labels), size=6)]
        alpha = rng.standard_normal(6)
        chosen, _ = decode_finite(labels, alpha, train, zero_one)
        scores = [
            sum(a * (0.0 if c == y else 1.0) for a, y in zip(alpha, train))
            for c in labels
        ]
        expected = labels[int(np.argmin(scores))]
        if chosen != expected:
            mismatches += 1
    return _check("decode_finite_oracle_mismatches", float(mismatches), 0.0)


def check_mtl_reduction(rng) -> dict:
    """fit_lowrank_mtl at T=1 must reproduce fit_lowrank after nu/lam rescaling."""
    n, d, T_out, r = 12, 4, 3, 2
    X = rng.standard_normal((n, d))
    Y = rng.standard_normal((n, T_out))
    K, KY = X @ X.T, Y @ Y.T
    nu, lam = 0.02, 0.5
    ms = fit_lowrank_mtl([K], [KY], TrainConfig(lam=lam, rank=r, step=nu, max_iters=50, seed=3, tol=0.0))
    fp = fit_lowrank(K, KY, TrainConfig(lam=lam * n, rank=r, step=nu / n, max_iters=50, seed=3, tol=0.0))
    dev = max(
        np.linalg.norm(ms.M - fp.M) / max(np.linalg.norm(fp.M), 1e-12),
        np.linalg.norm(ms.N_per_task[0] - fp.N) / max(np.linalg.norm(fp.N), 1e-12),
    )
    return _check("mtl_t1_reduction", dev, 1e-8)


def check_trace_norm_domination(rng, problems=10) -> dict:
    """Half the penalty always dominates the nuclear norm of the induced G."""
    worst = -np.inf
    for _ in range(problems):
        X, Y = _random_problem(rng)
        r = int(rng.integers(1, 5))
        M = rng.standard_normal((X.shape[0], r))
        N = rng.standard_normal((X.shape[0], r))
        A, B = X.T @ M, Y.T @ N
        half_pen = 0.5 * (np.trace(M.T @ X @ X.T @ M) + np.trace(N.T @ Y @ Y.T @ N))
        gap = nuclear_norm(B @ A.T) - half_pen  # must be <= 0
        worst = max(worst, gap / max(half_pen, 1e-12))
    return _check("trace_norm_domination_violation", worst, 1e-10)


def run_verification(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    checks = [check_hand_updates()]
    checks += check_factor_equivalence(rng)
    checks.append(check_hs_normal_equations(rng))
    checks.append(check_monotone_descent(rng))
    checks.append(check_gram_balance(rng))
    checks.append(check_variational_consistency(rng))
    checks.append(check_svt(rng))
    checks.append(check_ista_descent(rng))
    checks += check_fas(rng)
    checks.append(check_decode_finite(rng))
    checks.append(check_mtl_reduction(rng))
    checks.append(check_trace_norm_domination(rng))
    return {"checks": checks, "passed": all(c["pass"] for c in checks)}

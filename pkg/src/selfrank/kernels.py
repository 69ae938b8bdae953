"""Kernels on inputs and outputs, Gram matrices and cross-kernel vectors.

All vector kernels share one row-evaluation path so that ``kernel_eval``,
``cross_vector`` and ``gram`` agree bit-for-bit: a Gram entry is the same
floating-point computation as the corresponding single evaluation, which also
makes every Gram matrix exactly symmetric by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

KERNEL_KINDS = ("linear", "gaussian", "abel", "delta")


@dataclass(frozen=True)
class KernelSpec:
    """A kernel identified by kind and, for gaussian/abel, a bandwidth.

    kinds:
      linear    k(a, b) = <a, b>
      gaussian  k(a, b) = exp(-||a - b||^2 / (2 s^2))
      abel      k(a, b) = exp(-||a - b|| / s)
      delta     k(a, b) = 1 if a == b (canonical encoding) else 0
    """

    kind: str
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InvalidInputError(f"unknown kernel kind {self.kind!r}")
        if self.kind in ("gaussian", "abel"):
            if self.bandwidth is None or not self.bandwidth > 0:
                raise InvalidInputError(
                    f"{self.kind} kernel requires bandwidth > 0, got {self.bandwidth!r}"
                )

    def to_config(self) -> dict:
        cfg = {"kernel.kind": self.kind}
        if self.bandwidth is not None:
            cfg["kernel.bandwidth"] = self.bandwidth
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "KernelSpec":
        return cls(kind=cfg["kernel.kind"], bandwidth=cfg.get("kernel.bandwidth"))


def canonical_encoding(y):
    """Hashable canonical form used by the delta kernel's equality test.

    Sequences and arrays become nested tuples so composite outputs (rating
    vectors) compare componentwise.
    """
    if isinstance(y, np.ndarray):
        return ("arr",) + tuple(canonical_encoding(v) for v in y.tolist())
    if isinstance(y, (list, tuple)):
        return ("arr",) + tuple(canonical_encoding(v) for v in y)
    if isinstance(y, (bool, np.bool_)):
        return bool(y)
    if isinstance(y, (int, np.integer)):
        return float(y)
    if isinstance(y, (float, np.floating)):
        return float(y)
    return y


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise InvalidInputError(f"points must be vectors, got ndim={pts.ndim}")
    return pts


def _as_point(x, dim: int) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v[None]
    if v.ndim != 1 or v.shape[0] != dim:
        raise InvalidInputError(f"point has dimension {v.shape}, expected ({dim},)")
    return v


def _rows(spec: KernelSpec, pts: np.ndarray, x: np.ndarray) -> np.ndarray:
    """k(x, pts[i]) for every row i; the single numeric path for vector kernels."""
    if spec.kind == "linear":
        return (pts * x).sum(axis=1)
    d2 = ((pts - x) ** 2).sum(axis=1)
    if spec.kind == "gaussian":
        return np.exp(-d2 / (2.0 * spec.bandwidth**2))
    if spec.kind == "abel":
        return np.exp(-np.sqrt(d2) / spec.bandwidth)
    raise InvalidInputError(f"_rows does not handle kind {spec.kind!r}")


def kernel_eval(spec: KernelSpec, a, b) -> float:
    """Evaluate k(a, b); symmetric in its arguments."""
    if spec.kind == "delta":
        return 1.0 if canonical_encoding(a) == canonical_encoding(b) else 0.0
    va = np.asarray(a, dtype=float)
    va = va[None] if va.ndim == 0 else va
    if va.ndim != 1:
        raise InvalidInputError("kernel_eval expects vector arguments")
    vb = _as_point(b, va.shape[0])
    return float(_rows(spec, vb[None, :], va)[0])


def cross_vector(train_points, x, spec: KernelSpec) -> np.ndarray:
    """Vector of k(x, x_i) over the training points."""
    if spec.kind == "delta":
        cx = canonical_encoding(x)
        return np.array(
            [1.0 if canonical_encoding(p) == cx else 0.0 for p in train_points]
        )
    pts = _as_points(train_points)
    return _rows(spec, pts, _as_point(x, pts.shape[1]))


def gram(points, spec: KernelSpec) -> np.ndarray:
    """Gram matrix K[i, j] = k(p_i, p_j).

    Exactly symmetric (commutative elementwise products, identical reduction
    order) with unit diagonal for gaussian/abel/delta.
    """
    n = len(points)
    if n == 0:
        raise InvalidInputError("gram requires a nonempty point list")
    if spec.kind == "delta":
        codes = [canonical_encoding(p) for p in points]
        return np.array(
            [[1.0 if ci == cj else 0.0 for cj in codes] for ci in codes]
        )
    pts = _as_points(points)
    out = np.empty((n, n))
    for i in range(n):
        out[i] = _rows(spec, pts, pts[i])
    return out


def check_gram(K: np.ndarray, eps: float = 1e-10) -> None:
    """Validate the Gram-matrix invariants; raises InvalidInputError on failure.

    Checks exact symmetry and that the smallest eigenvalue is >= -eps * trace.
    Intended for small n (eigendecomposition cost).
    """
    K = np.asarray(K)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidInputError(f"gram matrix must be square, got {K.shape}")
    if not np.array_equal(K, K.T):
        raise InvalidInputError("gram matrix is not exactly symmetric")
    w = np.linalg.eigvalsh(K)
    bound = -eps * float(np.trace(K))
    if w[0] < bound:
        raise InvalidInputError(
            f"gram matrix is not PSD: min eigenvalue {w[0]:.3e} < {bound:.3e}"
        )

"""Objective functions with analytic gradients and smoothness constants.

Each constructor returns an immutable :class:`Problem` bundling the value
and gradient callables with the constants the stepsize calculus needs: the
gradient Lipschitz constant ``L``, the strong-convexity constant ``mu``
(0 when none is claimed), and, when available, a known optimum and a lower
bound on the objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

# Below this column count a dense copy of the feature matrix is kept; numpy
# dense matvecs beat sparse ones on such narrow matrices.
_DENSE_FALLBACK_COLS = 64


@dataclass(frozen=True)
class Dataset:
    """Binary-classification data: sparse M x n feature matrix and +-1 labels."""

    features: sp.csr_matrix
    labels: np.ndarray

    def __post_init__(self):
        feats = sp.csr_matrix(self.features)
        labels = np.asarray(self.labels, dtype=float).reshape(-1)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        if feats.shape[0] != labels.shape[0]:
            raise ValueError(
                f"feature rows {feats.shape[0]} != label count {labels.shape[0]}"
            )
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must all be -1 or +1")
        if feats.nnz and not np.all(np.isfinite(feats.data)):
            raise ValueError("feature matrix contains non-finite values")

    @property
    def M(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Problem:
    """Smooth objective with analytic gradient and known constants.

    ``reference_opt`` is an exactly-known minimizer ``(x_*, f(x_*))`` when one
    exists; ``f_lower`` is any valid lower bound on the objective (used for
    suboptimality gaps).  ``convex`` marks objectives for which a reference
    solution may be computed by descent.
    """

    name: str
    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    L: float
    mu: float = 0.0
    convex: bool = False
    reference_opt: tuple[np.ndarray, float] | None = None
    f_lower: float | None = None
    params: dict = field(default_factory=dict)


def quadratic(Q: np.ndarray, b: np.ndarray) -> Problem:
    """f(x) = (1/2) x'Qx - b'x for symmetric positive semidefinite Q.

    L and mu are the extreme eigenvalues of Q; when Q is nonsingular the
    optimum Q^-1 b is attached as the reference.
    """
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"Q must be square, got shape {Q.shape}")
    if Q.shape[0] != b.shape[0]:
        raise ValueError("Q and b dimensions disagree")
    if not np.allclose(Q, Q.T, rtol=1e-10, atol=1e-12):
        raise ValueError("Q must be symmetric")
    eigs = np.linalg.eigvalsh(Q)
    lam_min, lam_max = float(eigs[0]), float(eigs[-1])
    if lam_max <= 0:
        raise ValueError("Q must be nonzero positive semidefinite")
    if lam_min < -1e-10 * lam_max:
        raise ValueError(f"Q is not positive semidefinite (lambda_min = {lam_min:.3g})")
    mu = max(lam_min, 0.0)

    def value(x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (Q @ x) - b @ x)

    def gradient(x: np.ndarray) -> np.ndarray:
        return Q @ np.asarray(x, dtype=float) - b

    reference = None
    f_lower = None
    if lam_min > 1e-12 * lam_max:
        x_star = np.linalg.solve(Q, b)
        f_star = float(0.5 * x_star @ (Q @ x_star) - b @ x_star)
        reference = (x_star, f_star)
        f_lower = f_star

    return Problem(
        name="quadratic",
        dim=Q.shape[0],
        value=value,
        gradient=gradient,
        L=lam_max,
        mu=mu,
        convex=True,
        reference_opt=reference,
        f_lower=f_lower,
        params={"dim": Q.shape[0]},
    )


def rosenbrock() -> Problem:
    """The 2-D banana valley f(x, y) = (1 - x)^2 + 100 (y - x^2)^2.

    Non-convex with global minimum (1, 1).  There is no global gradient
    Lipschitz constant, so ``L`` is a local estimate: the largest Hessian
    spectral norm over a grid covering the box [-2, 2]^2, which is where the
    standard trajectories live.
    """

    def value(p: np.ndarray) -> float:
        x, y = np.float64(p[0]), np.float64(p[1])  # np scalars: overflow -> inf, not OverflowError
        return float((1.0 - x) ** 2 + 100.0 * (y - x * x) ** 2)

    def gradient(p: np.ndarray) -> np.ndarray:
        x, y = np.float64(p[0]), np.float64(p[1])
        return np.array(
            [
                -2.0 * (1.0 - x) - 400.0 * x * (y - x * x),
                200.0 * (y - x * x),
            ]
        )

    # Hessian entries: hxx = 2 - 400 y + 1200 x^2, hxy = -400 x, hyy = 200.
    xs = np.linspace(-2.0, 2.0, 81)
    ys = np.linspace(-2.0, 2.0, 81)
    X, Y = np.meshgrid(xs, ys)
    hxx = 2.0 - 400.0 * Y + 1200.0 * X * X
    hxy = -400.0 * X
    hyy = np.full_like(hxx, 200.0)
    mean = (hxx + hyy) / 2.0
    radius = np.sqrt(((hxx - hyy) / 2.0) ** 2 + hxy ** 2)
    L_local = float(np.max(np.maximum(np.abs(mean + radius), np.abs(mean - radius))))

    return Problem(
        name="rosenbrock",
        dim=2,
        value=value,
        gradient=gradient,
        L=L_local,
        mu=0.0,
        convex=False,
        reference_opt=(np.array([1.0, 1.0]), 0.0),
        f_lower=0.0,
        params={"L_is_local_estimate": True},
    )


def _feature_operator(data: Dataset):
    """Matvec pair (A @ x, A.T @ r) with a dense fast path for narrow matrices."""
    if data.n <= _DENSE_FALLBACK_COLS:
        A = data.features.toarray()
        return (lambda x: A @ x), (lambda r: A.T @ r)
    A = data.features
    AT = A.T.tocsr()
    return (lambda x: A @ x), (lambda r: AT @ r)


def _logistic_loss_mean(z: np.ndarray) -> float:
    # log(1 + exp(-z)) evaluated as logaddexp(0, -z): stable for any |z|.
    return float(np.mean(np.logaddexp(0.0, -z)))


def logreg_l2(data: Dataset, l2: float) -> Problem:
    """Mean logistic loss plus (l2/2) ||x||^2.

    L = lambda_max(A'A)/(4M) + l2 and mu = l2.  The spectral norm estimate is
    inflated by 1% so L stays a true upper bound.
    """
    if l2 < 0:
        raise ValueError("l2 must be nonnegative")
    matvec, rmatvec = _feature_operator(data)
    y = data.labels
    M = data.M
    sn, _ = spectral_norm(data.features)
    L = 1.01 * sn / (4.0 * M) + l2

    def value(x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        z = y * matvec(x)
        return _logistic_loss_mean(z) + 0.5 * l2 * float(x @ x)

    def gradient(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = y * matvec(x)
        s = expit(-z)
        return -rmatvec(y * s) / M + l2 * x

    return Problem(
        name="logreg-l2",
        dim=data.n,
        value=value,
        gradient=gradient,
        L=L,
        mu=l2,
        convex=True,
        f_lower=0.0,
        params={"l2": l2, "M": M},
    )


def logreg_nonconvex(data: Dataset, lam: float) -> Problem:
    """Mean logistic loss plus the bounded ratio penalty lam * sum x_j^2/(1 + x_j^2).

    The penalty's curvature is at most 2 per coordinate, so
    L = lambda_max(A'A)/(4M) + 2*lam; the objective is non-convex for lam > 0.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    matvec, rmatvec = _feature_operator(data)
    y = data.labels
    M = data.M
    sn, _ = spectral_norm(data.features)
    L = 1.01 * sn / (4.0 * M) + 2.0 * lam

    def value(x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        z = y * matvec(x)
        xsq = x * x
        return _logistic_loss_mean(z) + lam * float(np.sum(xsq / (1.0 + xsq)))

    def gradient(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = y * matvec(x)
        s = expit(-z)
        reg = 2.0 * lam * x / (1.0 + x * x) ** 2
        return -rmatvec(y * s) / M + reg

    return Problem(
        name="logreg-ncvx",
        dim=data.n,
        value=value,
        gradient=gradient,
        L=L,
        mu=0.0,
        convex=False,
        f_lower=0.0,
        params={"lambda": lam, "M": M},
    )


def spectral_norm(
    A, rel_tol: float = 1e-6, max_iters: int = 10_000, seed: int = 0
) -> tuple[float, bool]:
    """Largest eigenvalue of A'A by power iteration on repeated matvecs.

    Returns (estimate, converged).  The zero matrix yields (0.0, True).
    """
    if sp.issparse(A):
        A = sp.csr_matrix(A)
        nnz = A.nnz
    else:
        A = np.asarray(A, dtype=float)
        nnz = int(np.count_nonzero(A))
    if nnz == 0:
        return 0.0, True

    n = A.shape[1]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = A.T @ (A @ v)
        lam_new = float(v @ w)  # Rayleigh quotient, ||v|| = 1
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            # v landed in the nullspace of A; restart from a new direction.
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            continue
        v = w / norm_w
        if abs(lam_new - lam) <= rel_tol * abs(lam_new):
            return lam_new, True
        lam = lam_new
    return lam, False


def finite_diff_gradient(problem: Problem, x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient (f(x + h e_j) - f(x - h e_j)) / (2h)."""
    if not (h > 0):
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        grad[j] = (problem.value(x + e) - problem.value(x - e)) / (2.0 * h)
    return grad

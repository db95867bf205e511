"""Momentum state machines: heavy-ball and its aggregated multi-buffer variant.

The aggregated method keeps ``m`` momentum buffers with individual decay
factors ``beta_i`` and stepsizes ``gamma_i``.  Every step folds the current
gradient into each buffer and moves the iterate by the average of the scaled
buffers:

    V_i <- beta_i * V_i + g
    x   <- x - (1/m) * sum_i gamma_i * V_i

With ``m = 1`` this is exactly the classical heavy-ball recurrence, and with
all ``beta_i = 0`` it collapses to gradient descent with step
``(1/m) * sum_i gamma_i``.

States are plain immutable values; every update returns a new state, so a
state can be shared between threads or replayed freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DivergenceError(RuntimeError):
    """An update produced non-finite values.

    Carries the last finite state so callers can record a truncated run
    instead of crashing.
    """

    def __init__(self, message: str, state: "OptimizerState | None" = None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class AggConfig:
    """Knobs of the aggregated method: momentum decays and stepsizes.

    ``betas`` and ``gammas`` must have equal length ``m >= 1``, with every
    ``beta_i`` in ``[0, 1)`` and every ``gamma_i > 0``.  (The theory breaks
    down at ``beta = 1``, so the library excludes it outright.)
    """

    betas: tuple[float, ...]
    gammas: tuple[float, ...]

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        gammas = tuple(float(g) for g in self.gammas)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "gammas", gammas)
        if len(betas) < 1:
            raise ValueError("need at least one (beta, gamma) pair")
        if len(betas) != len(gammas):
            raise ValueError(
                f"betas and gammas must have equal length, got {len(betas)} != {len(gammas)}"
            )
        for b in betas:
            if not (0.0 <= b < 1.0) or not np.isfinite(b):
                raise ValueError(f"momentum parameter {b} outside [0, 1)")
        for g in gammas:
            if not (g > 0.0) or not np.isfinite(g):
                raise ValueError(f"stepsize {g} must be positive and finite")

    @property
    def m(self) -> int:
        return len(self.betas)


@dataclass(frozen=True)
class OptimizerState:
    """Iterate, momentum buffers, and step counter of one run.

    After ``init`` the buffers are zero; the buffers stored at counter ``k``
    are the ones that produced ``x`` (i.e. the values as of step ``k - 1``),
    which is what the virtual-iterate formula reads.
    """

    x: np.ndarray
    buffers: tuple[np.ndarray, ...]
    k: int
    config: AggConfig


def init(config: AggConfig, x0: np.ndarray) -> OptimizerState:
    """Fresh state at ``x0`` with zero momentum buffers.

    The zero-buffer convention makes the first step a plain gradient step of
    size ``(1/m) * sum_i gamma_i``, since every buffer becomes the bare
    gradient.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1:
        x0 = x0.reshape(-1)
    if not np.all(np.isfinite(x0)):
        raise ValueError("starting point contains non-finite values")
    zeros = tuple(np.zeros_like(x0) for _ in range(config.m))
    return OptimizerState(x=x0.copy(), buffers=zeros, k=0, config=config)


def step(state: OptimizerState, grad: np.ndarray) -> OptimizerState:
    """Advance one iteration given the gradient at ``state.x``."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.x.shape:
        raise ValueError(f"gradient shape {grad.shape} != iterate shape {state.x.shape}")
    if not np.all(np.isfinite(grad)):
        raise DivergenceError(f"non-finite gradient at iteration {state.k}", state=state)

    cfg = state.config
    new_buffers = tuple(
        b * v + grad for b, v in zip(cfg.betas, state.buffers)
    )
    update = np.zeros_like(state.x)
    for g, v in zip(cfg.gammas, new_buffers):
        update += g * v
    new_x = state.x - update / cfg.m

    if not np.all(np.isfinite(new_x)) or not all(
        np.all(np.isfinite(v)) for v in new_buffers
    ):
        raise DivergenceError(f"iterate diverged at iteration {state.k}", state=state)
    return OptimizerState(x=new_x, buffers=new_buffers, k=state.k + 1, config=cfg)


def virtual_iterate(state: OptimizerState) -> np.ndarray:
    """Momentum-corrected iterate x - (1/m) sum_i (beta_i gamma_i / (1 - beta_i)) V_i.

    This auxiliary sequence follows a pure gradient recursion with step
    ``(1/m) sum_i gamma_i / (1 - beta_i)`` and is used by tests and the run
    harness as an internal consistency check.  The buffers stored in the
    state are exactly the ones the formula needs, so this reads them
    directly; on a fresh state it returns ``x0``.
    """
    cfg = state.config
    offset = np.zeros_like(state.x)
    for b, g, v in zip(cfg.betas, cfg.gammas, state.buffers):
        offset += (b * g / (1.0 - b)) * v
    return state.x - offset / cfg.m


def virtual_step_size(config: AggConfig) -> float:
    """Effective stepsize (1/m) sum_i gamma_i / (1 - beta_i) of the virtual recursion."""
    return sum(g / (1.0 - b) for b, g in zip(config.betas, config.gammas)) / config.m


def momentum_expansion(grad_history: list[np.ndarray], beta: float) -> np.ndarray:
    """Geometric-weight sum ``sum_l beta^l * grad[-1 - l]`` over a gradient history.

    A momentum buffer with decay ``beta``, fed the gradients in
    ``grad_history`` in order, must equal this value exactly; it serves as an
    independent check of buffer contents.
    """
    if len(grad_history) == 0:
        raise ValueError("empty gradient history")
    acc = np.zeros_like(np.asarray(grad_history[0], dtype=float))
    for g in grad_history:
        acc = beta * acc + np.asarray(g, dtype=float)
    return acc


@dataclass(frozen=True)
class AveragingState:
    """Online weighted average of iterates with geometrically growing weights.

    Point ``x_k`` gets weight proportional to ``rho**k`` with
    ``rho = (1 - mu*F/2)**-1 >= 1``.  The running sums are kept normalized so
    that the most recent weight is 1; nothing ever grows like ``rho**K``.
    """

    xbar: np.ndarray
    weight_sum: float
    rho: float

    @classmethod
    def fresh(cls, rho: float, dim: int) -> "AveragingState":
        if not (rho >= 1.0) or not np.isfinite(rho):
            raise ValueError(f"weight ratio rho must be >= 1, got {rho}")
        return cls(xbar=np.zeros(dim), weight_sum=0.0, rho=float(rho))


def averaging_update(avg: AveragingState, x_k: np.ndarray) -> AveragingState:
    """Fold the next iterate into the running weighted average."""
    if avg.rho < 1.0:
        raise ValueError(f"weight ratio rho must be >= 1, got {avg.rho}")
    x_k = np.asarray(x_k, dtype=float)
    # Normalized recurrence: previous weights shrink by 1/rho, new point gets weight 1.
    w = avg.weight_sum / avg.rho + 1.0
    xbar = (avg.xbar * (w - 1.0) + x_k) / w
    return AveragingState(xbar=xbar, weight_sum=w, rho=avg.rho)


@dataclass(frozen=True)
class HeavyBallState:
    """State of the classical single-buffer recurrence V <- beta*V + g, x <- x - gamma*V."""

    x: np.ndarray
    v: np.ndarray
    k: int
    beta: float
    gamma: float


def hb_init(x0: np.ndarray, beta: float, gamma: float) -> HeavyBallState:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x0)):
        raise ValueError("starting point contains non-finite values")
    if not (0.0 <= beta < 1.0):
        raise ValueError(f"momentum parameter {beta} outside [0, 1)")
    if not (gamma > 0.0):
        raise ValueError(f"stepsize {gamma} must be positive")
    return HeavyBallState(x=x0.copy(), v=np.zeros_like(x0), k=0, beta=beta, gamma=gamma)


def hb_step(state: HeavyBallState, grad: np.ndarray) -> HeavyBallState:
    """One heavy-ball update; the direct recurrence, independent of the aggregated machine."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise DivergenceError(f"non-finite gradient at iteration {state.k}")
    v = state.beta * state.v + grad
    x = state.x - state.gamma * v
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"iterate diverged at iteration {state.k}")
    return HeavyBallState(x=x, v=v, k=state.k + 1, beta=state.beta, gamma=state.gamma)

"""Experiment driver: run optimizers on problems, tune stepsizes, check bounds.

A run is fully described by a :class:`RunConfig`; identical configs on the
same problem produce bit-identical traces.  Traces carry the per-iteration
metrics behind convergence plots plus enough metadata (resolved stepsizes,
theory-constant snapshot, starting point) to re-verify the theoretical
bounds later from the exported files alone.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import theory
from .libsvm import load_libsvm, to_dataset
from .optim import (
    AggConfig,
    AveragingState,
    DivergenceError,
    averaging_update,
    init,
    step,
    virtual_iterate,
    virtual_step_size,
)
from .problems import Problem, logreg_l2, logreg_nonconvex, quadratic, rosenbrock

STEPSIZE_MODES = ("explicit", "theory-ncvx", "theory-cvx", "tune", "tuned")
THEORY_MODES = ("theory-ncvx", "theory-cvx")
TUNING_GRID = tuple(2.0 ** p for p in range(-6, 9))  # gamma = a / L, 15 points

DATA_DIR_ENV = "AGGHB_DATA_DIR"


class VerificationRefused(RuntimeError):
    """Bound verification requested on a trace the guarantees say nothing about."""


class TuningError(RuntimeError):
    """Every stepsize in the tuning grid diverged; ``sweep`` holds the table."""

    def __init__(self, message: str, sweep):
        super().__init__(message)
        self.sweep = sweep


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run, minus the problem object itself.

    ``stepsize_mode`` is the single stepsize source: explicit/tuned carry the
    values in ``gammas``, the theory modes derive a uniform stepsize from the
    problem constants, and ``tune`` is a request that :func:`tune` resolves.
    """

    problem: str
    optimizer: str  # "gd" | "hb" | "agghb"
    betas: tuple[float, ...]
    stepsize_mode: str
    gammas: tuple[float, ...] | None = None
    iters: int = 1000
    seed: int = 0
    problem_params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.gammas is not None:
            object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if self.iters < 1:
            raise ValueError("iteration budget must be >= 1")
        if self.stepsize_mode not in STEPSIZE_MODES:
            raise ValueError(f"unknown stepsize mode {self.stepsize_mode!r}")
        needs_gammas = self.stepsize_mode in ("explicit", "tuned")
        if needs_gammas and self.gammas is None:
            raise ValueError(f"mode {self.stepsize_mode!r} requires explicit gammas")
        if not needs_gammas and self.gammas is not None:
            raise ValueError(
                f"mode {self.stepsize_mode!r} must not carry explicit gammas"
            )
        if self.gammas is not None and len(self.gammas) != len(self.betas):
            raise ValueError("betas and gammas must have equal length")
        if self.optimizer not in ("gd", "hb", "agghb"):
            raise ValueError(f"unknown optimizer kind {self.optimizer!r}")
        if self.optimizer == "gd" and any(b != 0.0 for b in self.betas):
            raise ValueError("gd requires all momentum parameters to be zero")
        if self.optimizer == "hb" and len(self.betas) != 1:
            raise ValueError("hb uses exactly one momentum parameter")


@dataclass
class Trace:
    """Per-iteration metrics of one run plus reproduction metadata.

    Row ``k`` holds the metrics at iterate ``x_k`` (before step ``k+1``);
    ``f_avg`` is the objective at the running weighted-average iterate and is
    tracked only in the convex theory mode.  ``max_virtual_residual`` is the
    largest relative defect of the momentum-corrected iterate recursion seen
    during the run, a cheap online self-check of the update arithmetic.
    """

    ks: np.ndarray
    f: np.ndarray
    grad_norm: np.ndarray
    dist_opt: np.ndarray | None
    f_avg: np.ndarray | None
    config: RunConfig
    gammas: tuple[float, ...]
    constants: dict
    x0: np.ndarray
    wall_time: float
    diverged: bool
    max_virtual_residual: float


def default_start(problem: Problem, seed: int) -> np.ndarray:
    """Deterministic starting point: seeded Gaussian for quadratics, the
    classic (-1.2, 1) for the banana valley, zeros for regression weights."""
    if problem.name == "rosenbrock":
        return np.array([-1.2, 1.0])
    if problem.name == "quadratic":
        return np.random.default_rng(seed).standard_normal(problem.dim)
    return np.zeros(problem.dim)


def resolve_gammas(config: RunConfig, problem: Problem) -> tuple[float, ...]:
    """Materialize the stepsizes a run will use."""
    if config.stepsize_mode in ("explicit", "tuned"):
        return config.gammas
    if config.stepsize_mode == "theory-ncvx":
        g = theory.stepsize_nonconvex(config.betas, problem.L)
    elif config.stepsize_mode == "theory-cvx":
        g = theory.stepsize_convex(config.betas, problem.L, problem.mu)
    else:
        raise ValueError(
            "stepsize mode 'tune' is unresolved; call tune() to pick gammas first"
        )
    return (g,) * len(config.betas)


def _constants_snapshot(
    acfg: AggConfig, problem: Problem, horizon: int
) -> dict[str, float]:
    consts = theory.constants(acfg, horizon=horizon)
    eb = theory.effective_betas(acfg.betas)
    ncvx = theory.check_nonconvex_condition(consts, problem.L, acfg.m)
    cvx = theory.check_convex_conditions(acfg, problem.L, problem.mu, horizon=horizon)
    return {
        "A": consts.A,
        "C": consts.C,
        "D": consts.D,
        "E": consts.E,
        "F": consts.F,
        "B": consts.B,
        "beta_tilde": eb.beta_tilde,
        "beta_hat": eb.beta_hat,
        "beta_max": eb.beta_max,
        "L": problem.L,
        "mu": problem.mu,
        "nonconvex_margin": ncvx.margin,
        "f_margin": cvx.f_margin,
        "bf_margin": cvx.bf_margin,
    }


def run(config: RunConfig, problem: Problem) -> Trace:
    """Execute a configured run and record metrics at every iterate."""
    gammas = resolve_gammas(config, problem)
    acfg = AggConfig(betas=config.betas, gammas=gammas)
    if "x0" in config.problem_params:
        x0 = np.asarray(config.problem_params["x0"], dtype=float)
    else:
        x0 = default_start(problem, config.seed)
    if x0.shape[0] != problem.dim:
        raise ValueError(f"x0 has dimension {x0.shape[0]}, problem has {problem.dim}")

    snapshot = _constants_snapshot(acfg, problem, horizon=config.iters)
    track_avg = config.stepsize_mode == "theory-cvx"
    x_star = problem.reference_opt[0] if problem.reference_opt is not None else None

    t0 = time.perf_counter()
    state = init(acfg, x0)
    avg = None
    if track_avg:
        rho = 1.0 / (1.0 - problem.mu * snapshot["F"] / 2.0)
        avg = AveragingState.fresh(rho, problem.dim)

    vstep = virtual_step_size(acfg)
    x_tilde = virtual_iterate(state)
    max_residual = 0.0

    ks, fs, gnorms = [], [], []
    dists = [] if x_star is not None else None
    favgs = [] if track_avg else None
    diverged = False

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(config.iters + 1):
            f_k = problem.value(state.x)
            g_k = problem.gradient(state.x)
            ks.append(k)
            fs.append(f_k)
            gnorms.append(float(np.linalg.norm(g_k)))
            if dists is not None:
                dists.append(float(np.linalg.norm(state.x - x_star)))
            if track_avg:
                avg = averaging_update(avg, state.x)
                favgs.append(problem.value(avg.xbar))
            if not np.isfinite(f_k) or not np.all(np.isfinite(g_k)):
                diverged = True
                break
            if k == config.iters:
                break
            try:
                state = step(state, g_k)
            except DivergenceError:
                diverged = True
                break
            prev_norm = float(np.linalg.norm(x_tilde))
            predicted = x_tilde - vstep * g_k
            x_tilde = virtual_iterate(state)
            residual = float(np.linalg.norm(x_tilde - predicted)) / (1.0 + prev_norm)
            max_residual = max(max_residual, residual)

    wall = time.perf_counter() - t0
    return Trace(
        ks=np.asarray(ks, dtype=int),
        f=np.asarray(fs, dtype=float),
        grad_norm=np.asarray(gnorms, dtype=float),
        dist_opt=None if dists is None else np.asarray(dists, dtype=float),
        f_avg=None if favgs is None else np.asarray(favgs, dtype=float),
        config=config,
        gammas=gammas,
        constants=snapshot,
        x0=x0.copy(),
        wall_time=wall,
        diverged=diverged,
        max_virtual_residual=max_residual,
    )


@dataclass(frozen=True)
class SweepEntry:
    a: float
    gamma: float
    final_f: float
    diverged: bool


def tune(
    base: RunConfig, problem: Problem, jobs: int = 1
) -> tuple[RunConfig, list[SweepEntry]]:
    """Grid-search the uniform stepsize gamma = a/L over a in 2^-6 .. 2^8.

    Best is the lowest final objective among non-diverged runs, ties broken
    toward the smaller stepsize.  Returns the resolved config (mode "tuned")
    and the full sweep table.
    """
    if base.stepsize_mode != "tune":
        raise ValueError("tune() expects a config with stepsize mode 'tune'")
    m = len(base.betas)

    def run_point(a: float) -> SweepEntry:
        gammas = (a / problem.L,) * m
        cfg = replace(base, stepsize_mode="explicit", gammas=gammas)
        trace = run(cfg, problem)
        final_f = float(trace.f[-1]) if not trace.diverged else float("inf")
        return SweepEntry(
            a=a, gamma=gammas[0], final_f=final_f, diverged=trace.diverged
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            sweep = list(pool.map(run_point, TUNING_GRID))
    else:
        sweep = [run_point(a) for a in TUNING_GRID]

    best = None
    for entry in sweep:  # grid order is ascending, so ties keep the smaller a
        if entry.diverged:
            continue
        if best is None or entry.final_f < best.final_f:
            best = entry
    if best is None:
        raise TuningError("every stepsize in the tuning grid diverged", sweep)
    best_cfg = replace(
        base, stepsize_mode="tuned", gammas=(best.gamma,) * m
    )
    return best_cfg, sweep


@dataclass(frozen=True)
class Reference:
    """Best-known minimizer with the achieved gradient norm as certificate."""

    x: np.ndarray
    f: float
    grad_norm: float


def reference_solution(
    problem: Problem, grad_tol: float = 1e-10, max_iters: int = 10 ** 6
) -> Reference:
    """High-accuracy optimum of a convex problem.

    Uses the closed form when the problem carries one; otherwise runs plain
    gradient descent with step 1/L until the gradient norm falls below
    ``grad_tol`` or the iteration cap is hit.  The returned gradient norm is
    the error certificate either way.
    """
    if not problem.convex:
        raise ValueError(
            f"problem {problem.name!r} is not convex; use its known optimum directly"
        )
    if problem.reference_opt is not None:
        x_star, f_star = problem.reference_opt
        gnorm = float(np.linalg.norm(problem.gradient(x_star)))
        return Reference(x=np.asarray(x_star, dtype=float), f=f_star, grad_norm=gnorm)

    x = np.zeros(problem.dim)
    gamma = 1.0 / problem.L
    g = problem.gradient(x)
    for _ in range(max_iters):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= grad_tol:
            break
        x = x - gamma * g
        g = problem.gradient(x)
    gnorm = float(np.linalg.norm(g))
    return Reference(x=x, f=problem.value(x), grad_norm=gnorm)


@dataclass(frozen=True)
class CheckRow:
    K: int
    observed: float
    bound: float
    slack: float
    passed: bool


@dataclass(frozen=True)
class VerificationReport:
    mode: str
    rows: tuple[CheckRow, ...]
    passed: bool
    certificate: float | None  # reference gradient norm, convex modes only


def bound_checkpoints(budget: int) -> list[int]:
    """Logarithmically spaced prefixes 10, 100, ... capped by the budget."""
    ks = []
    k = 10
    while k < budget:
        ks.append(k)
        k *= 10
    ks.append(budget)
    return ks


def verify_bounds(
    trace: Trace, problem: Problem, reference: Reference | None = None
) -> VerificationReport:
    """Check the observed trace against the guarantee its stepsize mode claims.

    Non-convex mode compares the best squared gradient norm over each prefix
    with its ceiling; convex modes compare the weighted-average suboptimality
    with its ceiling, allowing twice the reference certificate as slack for
    the imperfectly known optimum.
    """
    mode = trace.config.stepsize_mode
    if mode not in THEORY_MODES:
        raise VerificationRefused(
            f"trace was produced with stepsize mode {mode!r}; bounds are only "
            "claimed for theory-derived stepsizes (theory-ncvx, theory-cvx)"
        )
    budget = trace.config.iters
    acfg = AggConfig(betas=trace.config.betas, gammas=trace.gammas)
    consts = theory.constants(acfg, horizon=budget)
    checkpoints = bound_checkpoints(budget)
    recorded = len(trace.f) - 1  # last recorded iterate index

    rows = []
    certificate = None
    if mode == "theory-ncvx":
        if problem.f_lower is None:
            raise ValueError(
                "non-convex verification needs a known lower bound on the objective"
            )
        delta0 = float(trace.f[0]) - problem.f_lower
        inputs = theory.BoundInputs(
            L=problem.L, mu=problem.mu, delta0=delta0, r0_sq=0.0
        )
        sq = trace.grad_norm ** 2
        for K in checkpoints:
            bound = theory.bound_nonconvex(K, inputs, consts, acfg.m)
            if trace.diverged and K > recorded:
                observed = float("inf")  # run truncated before this prefix
            else:
                observed = float(np.min(sq[1 : K + 1]))
            rows.append(
                CheckRow(
                    K=K, observed=observed, bound=bound, slack=0.0,
                    passed=observed <= bound,
                )
            )
    else:
        if trace.f_avg is None:
            raise ValueError("trace carries no averaged-iterate objective values")
        if reference is None:
            reference = reference_solution(problem)
        certificate = reference.grad_norm
        slack = 2.0 * certificate
        r0_sq = float(np.linalg.norm(trace.x0 - reference.x) ** 2)
        inputs = theory.BoundInputs(
            L=problem.L, mu=problem.mu, delta0=0.0, r0_sq=r0_sq
        )
        F = consts.F
        for K in checkpoints:
            bound = theory.bound_convex(K, inputs, F)
            if trace.diverged and K > recorded:
                observed = float("inf")
            else:
                observed = float(trace.f_avg[K]) - reference.f
            rows.append(
                CheckRow(
                    K=K, observed=observed, bound=bound, slack=slack,
                    passed=observed <= bound + slack,
                )
            )

    return VerificationReport(
        mode=mode,
        rows=tuple(rows),
        passed=all(r.passed for r in rows),
        certificate=certificate,
    )


# ---------------------------------------------------------------------------
# Problem construction from serializable descriptions (CLI and trace re-load)
# ---------------------------------------------------------------------------

def resolve_data_path(path: str | Path) -> Path:
    """Find a dataset file, falling back to $AGGHB_DATA_DIR for bare names."""
    p = Path(path)
    if p.exists():
        return p
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        candidate = Path(env) / p
        if candidate.exists():
            return candidate
    raise FileNotFoundError(
        f"dataset file {path!r} not found (also tried ${DATA_DIR_ENV})"
    )


def build_problem(name: str, params: dict) -> Problem:
    """Construct a problem from its id and serializable parameters.

    Regularization strengths accept the string "auto", meaning the
    data-derived defaults: base/1e5 for the convex penalty and base/1e3 for
    the non-convex one, where base is the unregularized smoothness constant.
    """
    if name == "quadratic":
        dim = int(params.get("dim", 10))
        return quadratic(np.diag(np.arange(1.0, dim + 1.0)), np.zeros(dim))
    if name == "rosenbrock":
        return rosenbrock()
    if name in ("logreg-l2", "logreg-ncvx"):
        data_path = params.get("data")
        if data_path is None:
            raise ValueError(f"problem {name!r} needs a 'data' parameter")
        parsed = load_libsvm(resolve_data_path(data_path))
        data = to_dataset(parsed.records, n_features=params.get("n_features"))
        from .problems import spectral_norm  # local import to avoid cycle noise

        sn, _ = spectral_norm(data.features)
        base_L = 1.01 * sn / (4.0 * data.M)
        if name == "logreg-l2":
            l2 = params.get("l2", 0.0)
            l2 = base_L / 1e5 if l2 == "auto" else float(l2)
            return logreg_l2(data, l2)
        lam = params.get("lambda", 0.0)
        lam = base_L / 1e3 if lam == "auto" else float(lam)
        return logreg_nonconvex(data, lam)
    raise ValueError(f"unknown problem id {name!r}")


# ---------------------------------------------------------------------------
# Trace export / import
# ---------------------------------------------------------------------------

CSV_HEADER = "k,f,grad_norm,dist_opt,f_avg"


def _meta_path(csv_path: Path) -> Path:
    if csv_path.suffix == ".csv":
        return csv_path.with_suffix(".meta.json")
    return csv_path.parent / (csv_path.name + ".meta.json")


def export_trace(trace: Trace, path: str | Path) -> tuple[Path, Path]:
    """Write a trace as CSV plus a JSON metadata sidecar.

    The same trace always produces byte-identical files: floats are written
    with full round-trip precision and the metadata keys are sorted.
    """
    csv_path = Path(path)
    lines = [CSV_HEADER]
    for i, k in enumerate(trace.ks):
        dist = repr(float(trace.dist_opt[i])) if trace.dist_opt is not None else ""
        favg = repr(float(trace.f_avg[i])) if trace.f_avg is not None else ""
        lines.append(
            f"{int(k)},{float(trace.f[i])!r},{float(trace.grad_norm[i])!r},{dist},{favg}"
        )
    csv_path.write_text("\n".join(lines) + "\n")

    meta = {
        "schema": 1,
        "config": asdict(trace.config),
        "gammas": list(trace.gammas),
        "constants": trace.constants,
        "x0": [float(v) for v in trace.x0],
        "wall_time": trace.wall_time,
        "diverged": trace.diverged,
        "max_virtual_residual": trace.max_virtual_residual,
    }
    meta_path = _meta_path(csv_path)
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return csv_path, meta_path


def read_trace(path: str | Path) -> Trace:
    """Load a trace previously written by :func:`export_trace`."""
    csv_path = Path(path)
    meta_path = _meta_path(csv_path)
    if not csv_path.exists():
        raise FileNotFoundError(f"trace file {csv_path} not found")
    if not meta_path.exists():
        raise FileNotFoundError(f"metadata sidecar {meta_path} not found")

    text = csv_path.read_text().splitlines()
    if not text or text[0] != CSV_HEADER:
        raise ValueError(f"line 1: expected header {CSV_HEADER!r}")
    ks, fs, gnorms, dists, favgs = [], [], [], [], []
    for lineno, line in enumerate(text[1:], start=2):
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            ks.append(int(parts[0]))
            fs.append(float(parts[1]))
            gnorms.append(float(parts[2]))
            dists.append(float(parts[3]) if parts[3] else None)
            favgs.append(float(parts[4]) if parts[4] else None)
        except ValueError:
            raise ValueError(f"line {lineno}: malformed numeric field") from None

    meta = json.loads(meta_path.read_text())
    cfg_dict = dict(meta["config"])
    cfg_dict["betas"] = tuple(cfg_dict["betas"])
    if cfg_dict.get("gammas") is not None:
        cfg_dict["gammas"] = tuple(cfg_dict["gammas"])
    config = RunConfig(**cfg_dict)

    has_dist = all(d is not None for d in dists) and len(dists) > 0
    has_favg = all(v is not None for v in favgs) and len(favgs) > 0
    return Trace(
        ks=np.asarray(ks, dtype=int),
        f=np.asarray(fs, dtype=float),
        grad_norm=np.asarray(gnorms, dtype=float),
        dist_opt=np.asarray(dists, dtype=float) if has_dist else None,
        f_avg=np.asarray(favgs, dtype=float) if has_favg else None,
        config=config,
        gammas=tuple(meta["gammas"]),
        constants=meta["constants"],
        x0=np.asarray(meta["x0"], dtype=float),
        wall_time=meta["wall_time"],
        diverged=meta["diverged"],
        max_virtual_residual=meta["max_virtual_residual"],
    )

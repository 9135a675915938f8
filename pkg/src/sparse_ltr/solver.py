"""Sparse pairwise SVM solvers.

Minimizes ``J(w) + λ Ω(w)`` with ``J(w) = Σ_p max(0, 1 - x̃_pᵀ w)²`` and
``λ = 1 / C``. Convex penalties (ℓ1, weighted ℓ1) go through an accelerated
proximal gradient loop; non-convex ones through reweighted ℓ1, each outer
step being a warm-started weighted-ℓ1 solve.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import penalties as pen
from ._jsonio import dumps
from .data import Dataset, PreferencePairs, pair_incidence, xtilde_apply, xtilde_apply_transpose
from .penalties import PenaltySpec, penalty_value, reweight, soft_threshold

__all__ = [
    "SolverError",
    "SolverConfig",
    "SolverState",
    "FitResult",
    "squared_hinge_loss",
    "squared_hinge_gradient",
    "lipschitz_constant",
    "objective",
    "fista_solve",
    "reweighted_solve",
    "fit",
    "predict_scores",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

SUM_NORMS = "sum_norms"
SPECTRAL = "spectral"
MODEL_FORMAT = "sparse-ltr-model/1"

_CHUNK = 65536
_TINY = np.finfo(float).tiny


class SolverError(ArithmeticError):
    """The objective became non-finite; usually badly scaled data or a tiny C."""


@dataclass(frozen=True)
class SolverConfig:
    c: float = 1.0
    inner_tol: float = 1e-8
    inner_max_iter: int = 10_000
    inner_patience: int = 5
    outer_tol: float = 1e-5
    outer_max_iter: int = 20
    lipschitz_mode: str = SUM_NORMS
    zero_threshold: float = 1e-10

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("C must be positive")
        if not (self.inner_tol > 0 and self.outer_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.inner_max_iter < 1 or self.outer_max_iter < 1 or self.inner_patience < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.lipschitz_mode not in (SUM_NORMS, SPECTRAL):
            raise ValueError(f"unknown lipschitz mode {self.lipschitz_mode!r}")

    @property
    def lam(self) -> float:
        return 1.0 / self.c


@dataclass
class SolverState:
    w: np.ndarray
    z: np.ndarray
    t: float
    k: int
    L: float


@dataclass
class FitResult:
    weights: np.ndarray
    objective_trace: list
    inner_iterations: int
    outer_iterations: int
    converged: bool
    nonzero_count: int
    penalty: Optional[PenaltySpec] = None
    c: Optional[float] = None
    lipschitz: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return int(self.weights.shape[0])

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1]

    def support(self, zero_threshold: float = 1e-10) -> np.ndarray:
        return np.flatnonzero(np.abs(self.weights) > zero_threshold)


# --------------------------------------------------------------------------
# loss, gradient, Lipschitz constant
# --------------------------------------------------------------------------


def squared_hinge_loss(pairs: PreferencePairs, dataset: Dataset, w) -> float:
    h = np.maximum(1.0 - xtilde_apply(pairs, dataset, w), 0.0)
    return float(h @ h)


def squared_hinge_gradient(pairs: PreferencePairs, dataset: Dataset, w) -> np.ndarray:
    h = np.maximum(1.0 - xtilde_apply(pairs, dataset, w), 0.0)
    return -2.0 * xtilde_apply_transpose(pairs, dataset, h)


def _sum_sq_norms(pairs, dataset) -> float:
    X = dataset.features
    total = 0.0
    for lo in range(0, pairs.count, _CHUNK):
        D = X[pairs.winners[lo : lo + _CHUNK]] - X[pairs.losers[lo : lo + _CHUNK]]
        total += float(np.einsum("ij,ij->", D, D))
    return total


def _spectral_norm_sq(pairs, dataset, max_iter=1000, tol=1e-12) -> float:
    # power iteration on X̃ᵀX̃ from a fixed start vector
    rng = np.random.default_rng(0)
    v = rng.standard_normal(dataset.dimension)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        u = xtilde_apply_transpose(pairs, dataset, xtilde_apply(pairs, dataset, v))
        new = float(np.linalg.norm(u))
        if new == 0.0:
            return 0.0
        v = u / new
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return est


def lipschitz_constant(pairs: PreferencePairs, dataset: Dataset, mode: str = SUM_NORMS) -> float:
    """Lipschitz constant of the squared-hinge gradient.

    ``sum_norms`` gives ``2 Σ_p ||x̃_p||²``. ``spectral`` gives
    ``2 σ_max(X̃)²`` from power iteration, inflated by 1% against
    under-estimation and capped by the ``sum_norms`` bound.
    """
    if pairs.count == 0:
        raise ValueError("no preference pairs")
    bound = 2.0 * _sum_sq_norms(pairs, dataset)
    if mode == SUM_NORMS:
        L = bound
    elif mode == SPECTRAL:
        L = min(bound, 1.01 * 2.0 * _spectral_norm_sq(pairs, dataset))
    else:
        raise ValueError(f"unknown lipschitz mode {mode!r}")
    if not math.isfinite(L):
        raise SolverError("Lipschitz constant overflows; rescale the features")
    if L <= 0.0:
        # every pair difference is zero; any positive step is safe
        L = 1.0
    return L


def objective(pairs: PreferencePairs, dataset: Dataset, spec: PenaltySpec, w) -> float:
    """``J(w) + λ Σ_j g(|w_j|)`` with ``λ = spec.lam``."""
    return squared_hinge_loss(pairs, dataset, w) + spec.lam * penalty_value(spec, w)


def _nonzero_count(w, thr):
    return int(np.count_nonzero(np.abs(w) > thr))


# --------------------------------------------------------------------------
# convex solver
# --------------------------------------------------------------------------


def fista_solve(
    pairs: PreferencePairs,
    dataset: Dataset,
    spec: PenaltySpec,
    config: SolverConfig,
    w0=None,
    lipschitz: Optional[float] = None,
) -> FitResult:
    """Accelerated forward-backward splitting for ℓ1 / weighted-ℓ1.

    Each step is ``w_k = prox_{(λ/L) Ω}(z_k - ∇J(z_k) / L)`` followed by the
    momentum update of ``t`` and ``z``. Stops once the relative objective
    change stays below ``inner_tol`` for ``inner_patience`` consecutive
    iterations, or at ``inner_max_iter``.

    The returned weights are the iterate with the lowest objective seen,
    the warm start included, so a warm-started call never increases the
    objective.
    """
    if not spec.is_convex:
        raise ValueError(f"fista_solve handles convex penalties only, got {spec.kind!r}")
    d = dataset.dimension
    lam = config.lam
    spec = spec.with_lambda(lam)
    beta = reweight(spec, np.zeros(d))
    L = lipschitz if lipschitz is not None else lipschitz_constant(pairs, dataset, config.lipschitz_mode)
    step = 1.0 / L
    thr = lam * step

    X = dataset.features
    A = pair_incidence(pairs, dataset.n_samples)
    At = A.T.tocsr()
    thresholds = thr * beta
    lam_beta = lam * beta

    def value(q, w):
        h = np.maximum(1.0 - q, 0.0)
        return float(h @ h) + float(lam_beta @ np.abs(w))

    w_prev = np.zeros(d) if w0 is None else np.array(w0, dtype=np.float64)
    if w_prev.shape != (d,):
        raise ValueError(f"warm start has shape {w_prev.shape}, expected ({d},)")
    q_prev = A @ (X @ w_prev)
    f_prev = value(q_prev, w_prev)
    if not math.isfinite(f_prev):
        raise SolverError("non-finite objective at the starting point")
    trace = [f_prev]
    best_w, best_f = w_prev, f_prev

    # pair margins are linear in w, so X̃z is extrapolated like z itself
    state = SolverState(w=w_prev, z=w_prev, t=1.0, k=0, L=L)
    q_z = q_prev
    streak = 0
    converged = False
    for k in range(1, config.inner_max_iter + 1):
        h = np.maximum(1.0 - q_z, 0.0)
        grad = -2.0 * (X.T @ (At @ h))
        w = soft_threshold(state.z - step * grad, thresholds)
        q_w = A @ (X @ w)

        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * state.t * state.t))
        mom = (state.t - 1.0) / t_next
        state.z = w + mom * (w - w_prev)
        q_z = q_w + mom * (q_w - q_prev)
        state.t, state.w, state.k = t_next, w, k

        f = value(q_w, w)
        if not math.isfinite(f):
            raise SolverError(f"non-finite objective at iteration {k}")
        trace.append(f)
        if f < best_f:
            best_w, best_f = w, f

        rel = abs(f - f_prev) / max(abs(f_prev), _TINY)
        streak = streak + 1 if rel < config.inner_tol else 0
        w_prev, q_prev, f_prev = w, q_w, f
        if streak >= config.inner_patience:
            converged = True
            break

    return FitResult(
        weights=best_w,
        objective_trace=trace,
        inner_iterations=state.k,
        outer_iterations=1,
        converged=converged,
        nonzero_count=_nonzero_count(best_w, config.zero_threshold),
        penalty=spec,
        c=config.c,
        lipschitz=L,
    )


# --------------------------------------------------------------------------
# non-convex solver
# --------------------------------------------------------------------------


def reweighted_solve(
    pairs: PreferencePairs,
    dataset: Dataset,
    spec: PenaltySpec,
    config: SolverConfig,
    w0=None,
    lipschitz: Optional[float] = None,
) -> FitResult:
    """Reweighted-ℓ1 majorization-minimization for ℓp, log and MCP.

    Starts from ``β = 1`` (a plain ℓ1 solve), then alternates a warm-started
    weighted-ℓ1 solve with ``β_j <- g'(|w_j|)``. Momentum restarts on every
    outer step. Stops when ``max_j |Δw_j| < outer_tol`` or after
    ``outer_max_iter`` outer steps.

    ``objective_trace`` holds the true objective after each outer step.
    """
    d = dataset.dimension
    spec = spec.with_lambda(config.lam)
    L = lipschitz if lipschitz is not None else lipschitz_constant(pairs, dataset, config.lipschitz_mode)
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=np.float64)
    beta = np.ones(d)
    trace = []
    inner_total = 0
    converged = False
    outer = 0
    inner = None
    for outer in range(1, config.outer_max_iter + 1):
        sub = PenaltySpec(kind=pen.WEIGHTED_L1, beta=beta, lam=spec.lam)
        inner = fista_solve(pairs, dataset, sub, config, w0=w, lipschitz=L)
        inner_total += inner.inner_iterations
        w_new = inner.weights
        trace.append(objective(pairs, dataset, spec, w_new))
        beta = reweight(spec, w_new)
        delta = float(np.max(np.abs(w_new - w))) if d else 0.0
        log.debug("outer %d: objective %.12g, max|dw| %.3g", outer, trace[-1], delta)
        w = w_new
        if delta < config.outer_tol:
            converged = True
            break

    return FitResult(
        weights=w,
        objective_trace=trace,
        inner_iterations=inner_total,
        outer_iterations=outer,
        converged=converged,
        nonzero_count=_nonzero_count(w, config.zero_threshold),
        penalty=spec,
        c=config.c,
        lipschitz=L,
    )


def fit(pairs: PreferencePairs, dataset: Dataset, spec: PenaltySpec, config: SolverConfig) -> FitResult:
    """Dispatch to the convex or the reweighted solver."""
    if spec.is_convex:
        return fista_solve(pairs, dataset, spec, config)
    return reweighted_solve(pairs, dataset, spec, config)


def predict_scores(model, dataset: Dataset) -> np.ndarray:
    """Per-document scores ``xᵀw``. ``model`` is a FitResult or a weight vector."""
    w = model.weights if isinstance(model, FitResult) else np.asarray(model, dtype=np.float64)
    if w.shape != (dataset.dimension,):
        raise ValueError(
            f"model dimension {w.shape[0] if w.ndim else 0} does not match data dimension {dataset.dimension}"
        )
    return dataset.features @ w


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------


def model_document(result: FitResult) -> dict:
    spec = result.penalty
    penalty = spec.params() if spec is not None else None
    if spec is not None:
        penalty["lambda"] = spec.lam
    return {
        "format": MODEL_FORMAT,
        "dimension": result.dimension,
        "penalty": penalty,
        "c": result.c,
        "converged": bool(result.converged),
        "inner_iterations": int(result.inner_iterations),
        "outer_iterations": int(result.outer_iterations),
        "nonzero_count": int(result.nonzero_count),
        "final_objective": float(result.final_objective),
        "lipschitz": result.lipschitz,
        "weights": {str(j + 1): float(v) for j, v in enumerate(result.weights) if v != 0.0},
    }


def save_model(result: FitResult, path) -> None:
    """Write the model as JSON; weights keyed by 1-based feature id, zeros omitted."""
    Path(path).write_text(dumps(model_document(result)) + "\n", encoding="utf-8")


def load_model(path) -> FitResult:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a model file (format {doc.get('format')!r})")
    d = int(doc["dimension"])
    w = np.zeros(d)
    for key, val in doc["weights"].items():
        j = int(key) - 1
        if not 0 <= j < d:
            raise ValueError(f"{path}: feature id {key} outside dimension {d}")
        w[j] = float(val)
    spec = None
    if doc.get("penalty"):
        p = dict(doc["penalty"])
        lam = p.pop("lambda", 1.0)
        spec = PenaltySpec(lam=lam, **p)
    return FitResult(
        weights=w,
        objective_trace=[float(doc["final_objective"])],
        inner_iterations=int(doc["inner_iterations"]),
        outer_iterations=int(doc["outer_iterations"]),
        converged=bool(doc["converged"]),
        nonzero_count=int(doc["nonzero_count"]),
        penalty=spec,
        c=doc.get("c"),
        lipschitz=doc.get("lipschitz"),
    )

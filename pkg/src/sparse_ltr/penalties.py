"""Separable sparsity penalties ``Ω(w) = Σ_j g(|w_j|)`` and their reweighting.

Non-convex penalties are handled by majorizing ``g`` with its tangent at the
current iterate, which turns each step into a weighted-ℓ1 problem with
weights ``β_j = g'(|w_j|)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

__all__ = [
    "L1",
    "WEIGHTED_L1",
    "LP",
    "LOG",
    "MCP",
    "CONVEX_KINDS",
    "NONCONVEX_KINDS",
    "PenaltySpec",
    "penalty_value",
    "reweight",
    "prox_weighted_l1",
]

L1 = "l1"
WEIGHTED_L1 = "weighted_l1"
LP = "lp"
LOG = "log"
MCP = "mcp"

CONVEX_KINDS = (L1, WEIGHTED_L1)
NONCONVEX_KINDS = (LP, LOG, MCP)
_ALL_KINDS = CONVEX_KINDS + NONCONVEX_KINDS

# smoothing for the infinite lp derivative at zero
LP_SMOOTHING = 1e-8
MAX_WEIGHT = 1e12


@dataclass(frozen=True)
class PenaltySpec:
    """Which penalty to use and its parameters.

    ``lam`` is the regularization strength λ. The solvers overwrite it with
    ``1 / C``; MCP uses it inside ``g`` as well. For MCP, ``g`` is stored
    divided by λ, so ``λ Σ_j g(|w_j|)`` is the standard minimax concave
    penalty ``λ|w| - w²/(2γ)`` (``γλ²/2`` beyond ``|w| = γλ``).
    """

    kind: str = L1
    beta: Optional[np.ndarray] = field(default=None, compare=False)
    p: float = 0.5
    epsilon: float = 0.1
    gamma: float = 2.0
    lam: float = 1.0

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in _ALL_KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if kind == WEIGHTED_L1:
            if self.beta is None:
                raise ValueError("weighted_l1 needs a beta vector")
            beta = np.array(self.beta, dtype=np.float64).reshape(-1)
            if np.any(~(beta >= 0)):
                raise ValueError("beta entries must be non-negative")
            beta.setflags(write=False)
            object.__setattr__(self, "beta", beta)
        if kind == LP and not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if kind == LOG and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if kind == MCP and not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def is_convex(self) -> bool:
        return self.kind in CONVEX_KINDS

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return replace(self, lam=float(lam))

    def weighted(self, beta) -> "PenaltySpec":
        return PenaltySpec(kind=WEIGHTED_L1, beta=beta, lam=self.lam)

    def params(self) -> dict:
        """Parameters relevant to ``kind``, for config echoes and model files."""
        out = {"kind": self.kind}
        if self.kind == LP:
            out["p"] = self.p
        elif self.kind == LOG:
            out["epsilon"] = self.epsilon
        elif self.kind == MCP:
            out["gamma"] = self.gamma
        elif self.kind == WEIGHTED_L1:
            out["beta"] = [float(b) for b in self.beta]
        return out


def _g(spec: PenaltySpec, a: np.ndarray) -> np.ndarray:
    if spec.kind == L1:
        return a
    if spec.kind == WEIGHTED_L1:
        if spec.beta.shape != a.shape:
            raise ValueError("beta and w lengths differ")
        return spec.beta * a
    if spec.kind == LP:
        return a**spec.p
    if spec.kind == LOG:
        return np.log(spec.epsilon + a)
    # MCP per unit of λ: λ * this is the usual MCP, and its slope is the
    # reweighting rule max(1 - |w| / (γλ), 0)
    lam, gamma = spec.lam, spec.gamma
    return np.where(a <= gamma * lam, a - a * a / (2.0 * gamma * lam), 0.5 * gamma * lam)


def penalty_value(spec: PenaltySpec, w) -> float:
    """``Σ_j g(|w_j|)`` for the active kind, not multiplied by λ."""
    a = np.abs(np.asarray(w, dtype=np.float64))
    return float(np.sum(_g(spec, a)))


def penalty_terms(spec: PenaltySpec, w) -> np.ndarray:
    """Per-coordinate ``g(|w_j|)``."""
    return _g(spec, np.abs(np.asarray(w, dtype=np.float64)))


def reweight(spec: PenaltySpec, w) -> np.ndarray:
    """Tangent weights ``β_j = g'(|w_j|)``, clipped to ``[0, 1e12]``."""
    a = np.abs(np.asarray(w, dtype=np.float64))
    if spec.kind == L1:
        beta = np.ones_like(a)
    elif spec.kind == WEIGHTED_L1:
        if spec.beta.shape != a.shape:
            raise ValueError("beta and w lengths differ")
        beta = np.array(spec.beta, dtype=np.float64)
    elif spec.kind == LP:
        beta = spec.p * (a + LP_SMOOTHING) ** (spec.p - 1.0)
    elif spec.kind == LOG:
        beta = 1.0 / (spec.epsilon + a)
    else:
        beta = np.maximum(1.0 - a / (spec.gamma * spec.lam), 0.0)
    return np.clip(beta, 0.0, MAX_WEIGHT)


def prox_weighted_l1(z, mu: float, beta) -> np.ndarray:
    """Soft thresholding ``sign(z_j) (|z_j| - mu β_j)_+``.

    This is the proximity operator of ``mu Σ_j β_j |w_j|``. Entries with
    ``|z_j| <= mu β_j`` come out as exact zeros.
    """
    z = np.asarray(z, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim == 0:
        beta = np.broadcast_to(beta, z.shape)
    if beta.shape != z.shape:
        raise ValueError(f"beta has shape {beta.shape}, z has shape {z.shape}")
    if not mu > 0:
        raise ValueError("mu must be positive")
    return soft_threshold(z, mu * beta)


def soft_threshold(z: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Unchecked ``sign(z) (|z| - thresholds)_+``."""
    shrunk = np.abs(z) - thresholds
    return np.where(shrunk > 0, np.sign(z) * shrunk, 0.0)

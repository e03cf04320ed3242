"""Gap between self-adjoint matrices through the orthogonal projections onto their graphs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import Lattice
from .operator import OperatorSpec, TruncatedOperator, assemble


@dataclass(frozen=True)
class GapResult:
    directed_ab: float
    directed_ba: float

    @property
    def gap(self) -> float:
        return max(self.directed_ab, self.directed_ba)

    def __float__(self):
        return self.gap


def _as_matrix(A) -> np.ndarray:
    if isinstance(A, TruncatedOperator):
        return A.matrix
    return np.atleast_2d(np.asarray(A, dtype=complex))


def graph_projection(A) -> np.ndarray:
    """Orthogonal projection of ``C^{2N}`` onto ``G(A) = {(u, Au)}``."""
    A = _as_matrix(A)
    N = A.shape[0]
    Q, _ = np.linalg.qr(np.vstack([np.eye(N), A]))
    return Q @ Q.conj().T


def _check_shapes(A, B):
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")


def directed_gap(A, B) -> float:
    """``sup_{v in S_A} dist(v, G(B)) = ||(I - P_B) P_A||_2``."""
    A, B = _as_matrix(A), _as_matrix(B)
    _check_shapes(A, B)
    PA, PB = graph_projection(A), graph_projection(B)
    return float(np.linalg.norm(PA - PB @ PA, 2))


def gap(A, B) -> GapResult:
    """Both directed gaps; ``GapResult.gap`` is their maximum."""
    A, B = _as_matrix(A), _as_matrix(B)
    _check_shapes(A, B)
    PA, PB = graph_projection(A), graph_projection(B)
    ab = float(np.linalg.norm(PA - PB @ PA, 2))
    ba = float(np.linalg.norm(PB - PA @ PB, 2))
    return GapResult(directed_ab=min(ab, 1.0), directed_ba=min(ba, 1.0))


@dataclass
class GapScan:
    steps: np.ndarray
    gaps: np.ndarray
    cutoff: float

    @property
    def ratios(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.steps > 0, self.gaps / np.where(self.steps > 0, self.steps, 1.0), 0.0)

    @property
    def lipschitz_estimate(self) -> float:
        return float(np.max(self.ratios)) if len(self.ratios) else 0.0

    def to_csv(self) -> str:
        lines = ["abs_dt,gap,ratio"]
        for s, g, r in zip(self.steps, self.gaps, self.ratios):
            lines.append(",".join(format(float(x), ".17g") for x in (s, g, r)))
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {"cutoff": self.cutoff, "abs_dt": self.steps.tolist(), "gap": self.gaps.tolist(),
                "ratio": self.ratios.tolist()}


def gap_continuity_scan(spec: OperatorSpec, lattice: Lattice, t0, sequence: Sequence, cutoff: float) -> GapScan:
    """``g(M(t), M(t0))`` for each ``t`` of a sequence converging to ``t0``."""
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    P0 = graph_projection(assemble(spec, lattice, t0, cutoff))
    steps, gaps = [], []
    for t in sequence:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        P = graph_projection(assemble(spec, lattice, t, cutoff))
        g = max(np.linalg.norm(P - P0 @ P, 2), np.linalg.norm(P0 - P @ P0, 2))
        steps.append(float(np.linalg.norm(t - t0)))
        gaps.append(min(float(g), 1.0))
    return GapScan(steps=np.array(steps), gaps=np.array(gaps), cutoff=float(cutoff))

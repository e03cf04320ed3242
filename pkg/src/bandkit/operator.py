"""Truncated fiber operators in the plane-wave basis.

The fiber operator at quasimomentum ``t`` acts on quasiperiodic functions
``u(x + w) = exp(i<t, w>) u(x)``.  In the orthonormal basis
``exp(i<gamma + t, x>) e_k`` its matrix entries are::

    M[(g,k),(g',k')] = sum_{|a|=2s} q_a (g'+t)^a  delta_gg' delta_kk'
                     + sum_{|a|<2s} [Qhat_a(g - g')]_kk' (g'+t)^a
                     + [b(g)]_kk' delta_gg'

Basis order is gamma-major (lexicographic integer coordinates), component
``k`` minor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import NonSelfAdjointError, SpecValidationError, UnsupportedShiftError
from .lattice import Lattice, enumerate_dual_points, monomial

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class FourierCoefficient:
    frequency: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "frequency", tuple(int(g) for g in self.frequency))
        mat = np.atleast_2d(np.asarray(self.matrix, dtype=complex))
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)


@dataclass(frozen=True)
class OperatorSpec:
    """Coefficient data of ``T = L + P + B``.

    ``principal`` maps multi-indices of order ``2s`` to real scalars (the
    principal part is ``q_a I_m``), ``lower`` maps multi-indices of order
    ``< 2s`` to finite Fourier series, and ``multiplier`` maps dual integer
    coordinates to the Hermitian matrices ``b(gamma)`` of the shift-invariant
    bounded part (zero where absent).
    """

    d: int
    m: int
    s: int
    principal: Mapping[tuple[int, ...], float]
    lower: Mapping[tuple[int, ...], tuple[FourierCoefficient, ...]] = field(default_factory=dict)
    multiplier: Mapping[tuple[int, ...], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1 or self.m < 1 or self.s < 1:
            raise SpecValidationError("d, m and s must be positive integers")
        principal = {}
        for alpha, q in self.principal.items():
            alpha = tuple(int(a) for a in alpha)
            self._check_alpha(alpha, "principal")
            if sum(alpha) != 2 * self.s:
                raise SpecValidationError(f"principal multi-index {alpha} must have order {2 * self.s}")
            q = complex(q)
            if q.imag != 0.0:
                raise SpecValidationError(f"principal coefficient q_{alpha} must be real")
            principal[alpha] = q.real
        lower = {}
        for alpha, terms in self.lower.items():
            alpha = tuple(int(a) for a in alpha)
            self._check_alpha(alpha, "lower")
            if sum(alpha) > 2 * self.s - 1:
                raise SpecValidationError(f"lower-order multi-index {alpha} must have order <= {2 * self.s - 1}")
            terms = tuple(t if isinstance(t, FourierCoefficient) else FourierCoefficient(*t) for t in terms)
            for term in terms:
                if len(term.frequency) != self.d:
                    raise SpecValidationError(f"lower[{alpha}]: frequency {term.frequency} is not {self.d}-dimensional")
                if term.matrix.shape != (self.m, self.m):
                    raise SpecValidationError(
                        f"lower[{alpha}] at frequency {term.frequency}: expected {self.m}x{self.m} matrix"
                    )
            lower[alpha] = terms
        mult = {}
        for gamma, b in self.multiplier.items():
            gamma = tuple(int(g) for g in gamma)
            if len(gamma) != self.d:
                raise SpecValidationError(f"multiplier frequency {gamma} is not {self.d}-dimensional")
            b = np.atleast_2d(np.asarray(b, dtype=complex))
            if b.shape != (self.m, self.m):
                raise SpecValidationError(f"multiplier at {gamma}: expected {self.m}x{self.m} matrix")
            if np.abs(b - b.conj().T).max() > HERMITIAN_TOL:
                raise NonSelfAdjointError(f"multiplier b{gamma} is not Hermitian")
            b.setflags(write=False)
            mult[gamma] = b
        object.__setattr__(self, "principal", principal)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "multiplier", mult)

    def _check_alpha(self, alpha, where):
        if len(alpha) != self.d or any(a < 0 for a in alpha):
            raise SpecValidationError(f"{where} multi-index {alpha} invalid for d={self.d}")

    def lower_frequencies(self) -> list[tuple[int, ...]]:
        freqs = {term.frequency for terms in self.lower.values() for term in terms}
        return sorted(freqs)

    def multiplier_sup(self) -> float:
        """``sup_gamma ||b(gamma)||_2`` (zero for an absent multiplier)."""
        if not self.multiplier:
            return 0.0
        return max(float(np.linalg.norm(b, 2)) for b in self.multiplier.values())

    def principal_symbol(self, xi) -> np.ndarray:
        """``sum_a q_a xi^a`` row-wise for ``xi`` of shape ``(d,)`` or ``(K, d)``."""
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1])
        for alpha, q in self.principal.items():
            out = out + q * monomial(xi, alpha)
        return out


@dataclass(frozen=True)
class TruncatedOperator:
    t: np.ndarray
    cutoff: float
    coords: np.ndarray
    vectors: np.ndarray
    m: int
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def basis(self) -> list[tuple[tuple[int, ...], int]]:
        return [(tuple(int(c) for c in g), k) for g in self.coords for k in range(self.m)]

    def index_of(self, gamma, k: int = 0) -> int:
        """Row of basis element ``(gamma, k)``; ``gamma`` in integer coordinates."""
        hits = np.flatnonzero(np.all(self.coords == np.asarray(gamma, dtype=int), axis=1))
        if len(hits) == 0:
            raise KeyError(f"gamma={tuple(gamma)} is outside the truncation")
        return int(hits[0]) * self.m + k


def _index_map(coords) -> dict[tuple[int, ...], int]:
    return {tuple(int(c) for c in g): i for i, g in enumerate(coords)}


def _check_frequencies_fit(spec: OperatorSpec, lattice: Lattice, cutoff: float):
    freqs = spec.lower_frequencies()
    if not freqs:
        return
    reach = np.linalg.norm(lattice.to_cartesian(freqs), axis=1).max()
    if reach > 2.0 * cutoff + 1e-12:
        raise ValueError(
            f"cutoff {cutoff} too small: lower-order frequencies reach |gamma|={reach:.6g} > 2*cutoff"
        )


def assemble_parts(spec: OperatorSpec, lattice: Lattice, t, cutoff: float):
    """Split assembly: ``(coords, vectors, principal_diag, lower, multiplier)``.

    ``principal_diag`` is the symbol value per gamma (length K); ``lower`` and
    ``multiplier`` are full ``N x N`` complex matrices.
    """
    if lattice.dimension != spec.d:
        raise SpecValidationError(f"spec has d={spec.d} but lattice has d={lattice.dimension}")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    _check_frequencies_fit(spec, lattice, cutoff)
    coords, vectors = enumerate_dual_points(lattice, cutoff)
    m = spec.m
    K = len(coords)
    N = K * m
    shifted = vectors + t

    principal_diag = spec.principal_symbol(shifted) if spec.principal else np.zeros(K)

    lower = np.zeros((N, N), dtype=complex)
    index = _index_map(coords)
    for alpha, terms in spec.lower.items():
        colfac = monomial(shifted, alpha)
        for term in terms:
            eta = np.asarray(term.frequency)
            rows, cols = [], []
            for j, g in enumerate(coords):
                i = index.get(tuple(int(c) for c in g + eta))
                if i is not None:
                    rows.append(i)
                    cols.append(j)
            if not rows:
                continue
            rows = np.asarray(rows)
            cols = np.asarray(cols)
            for k in range(m):
                for kk in range(m):
                    q = term.matrix[k, kk]
                    if q != 0:
                        lower[rows * m + k, cols * m + kk] += q * colfac[cols]

    mult = np.zeros((N, N), dtype=complex)
    for gamma, b in spec.multiplier.items():
        i = index.get(gamma)
        if i is not None:
            mult[i * m:(i + 1) * m, i * m:(i + 1) * m] = b
    return coords, vectors, principal_diag, lower, mult


def hermiticity_defect(matrix: np.ndarray) -> float:
    """Largest entry of ``|M - M^*|`` relative to ``max(1, max|M|)``."""
    scale = max(1.0, float(np.abs(matrix).max(initial=0.0)))
    return float(np.abs(matrix - matrix.conj().T).max(initial=0.0)) / scale


def assemble(spec: OperatorSpec, lattice: Lattice, t, cutoff: float, check: bool = True) -> TruncatedOperator:
    """Matrix of the fiber operator at ``t`` on the basis ``|gamma| <= cutoff``.

    Raises
    ------
    NonSelfAdjointError
        If ``check`` and the assembled matrix is not Hermitian to 1e-10
        (relative to its largest entry).  This points at bad coefficient
        data, e.g. a potential whose Fourier series is not conjugate
        symmetric.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    coords, vectors, pdiag, lower, mult = assemble_parts(spec, lattice, t, cutoff)
    M = lower + mult
    M[np.diag_indices_from(M)] += np.repeat(pdiag, spec.m)
    if check:
        defect = hermiticity_defect(M)
        if defect > HERMITIAN_TOL:
            raise NonSelfAdjointError(f"assembled matrix at t={t.tolist()} not Hermitian (defect {defect:.3e})")
        M = 0.5 * (M + M.conj().T)
    M.setflags(write=False)
    return TruncatedOperator(t=t, cutoff=float(cutoff), coords=coords, vectors=vectors, m=spec.m, matrix=M)


@dataclass(frozen=True)
class SelfAdjointnessReport:
    max_defect: float
    defects: tuple[float, ...]
    passed: bool

    def to_dict(self):
        return {"max_defect": self.max_defect, "defects": list(self.defects), "pass": self.passed}


def check_self_adjointness(spec: OperatorSpec, lattice: Lattice, trial_ts: Iterable, cutoff: float) -> SelfAdjointnessReport:
    defects = tuple(hermiticity_defect(assemble(spec, lattice, t, cutoff, check=False).matrix) for t in trial_ts)
    if not defects:
        raise ValueError("at least one trial quasimomentum required")
    worst = max(defects)
    return SelfAdjointnessReport(max_defect=worst, defects=defects, passed=worst <= HERMITIAN_TOL)


def verify_modulation_identity(spec: OperatorSpec, lattice: Lattice, t0, dgamma, u, cutoff: float) -> float:
    """Residual of ``A_{t0+g}(S u) = S(A_{t0} u)`` for a dual lattice vector ``g``.

    ``t0`` and ``t0 + g`` label the same quasiperiodic condition, so the two
    truncated matrices must agree after relabelling the basis by ``g``; ``S``
    moves the coefficient of ``gamma`` to ``gamma - g``.  ``dgamma`` is given
    in integer dual coordinates and ``u`` is a coefficient vector in the
    basis of ``t0``.

    Raises
    ------
    UnsupportedShiftError
        If ``u`` lives so close to the cutoff that the shift or the coupling
        by lower-order frequencies leaves the truncation.
    """
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    dgamma = np.atleast_1d(np.asarray(dgamma, dtype=int))
    op0 = assemble(spec, lattice, t0, cutoff)
    op1 = assemble(spec, lattice, t0 + lattice.to_cartesian(dgamma), cutoff)
    u = np.asarray(u, dtype=complex)
    if u.shape != (op0.size,):
        raise ValueError(f"u must have length {op0.size}")
    m = spec.m
    index = _index_map(op0.coords)
    support = [op0.coords[i] for i in range(len(op0.coords)) if np.any(u[i * m:(i + 1) * m] != 0)]
    reach = [np.zeros(spec.d, dtype=int)] + [np.asarray(f) for f in spec.lower_frequencies()]
    for g in support:
        for eta in reach:
            for target in (g + eta, g + eta - dgamma):
                if tuple(int(c) for c in target) not in index:
                    raise UnsupportedShiftError(
                        f"support point {tuple(g)} too close to the cutoff for shift {tuple(dgamma)}"
                    )

    def shift(vec):
        out = np.zeros_like(vec)
        for g, i in index.items():
            block = vec[i * m:(i + 1) * m]
            if np.any(block != 0):
                j = index[tuple(int(c) for c in np.asarray(g) - dgamma)]
                out[j * m:(j + 1) * m] = block
        return out

    lhs = op1.matrix @ shift(u)
    rhs = shift(op0.matrix @ u)
    return float(np.linalg.norm(lhs - rhs))


def operator_lipschitz_constant(spec: OperatorSpec, lattice: Lattice, t_pairs: Sequence, cutoff: float) -> float:
    """``max ||M(t) - M(t')||_2 / |t - t'|`` over the given pairs.

    Coincident pairs are skipped.
    """
    best = None
    for t, tp in t_pairs:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tp = np.atleast_1d(np.asarray(tp, dtype=float))
        dist = float(np.linalg.norm(t - tp))
        if dist == 0.0:
            continue
        diff = assemble(spec, lattice, t, cutoff).matrix - assemble(spec, lattice, tp, cutoff).matrix
        ratio = float(np.linalg.norm(diff, 2)) / dist
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise ValueError("no pair with distinct endpoints")
    return best

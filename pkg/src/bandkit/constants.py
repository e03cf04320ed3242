"""Ellipticity, coercivity shift and relative-boundedness constants.

The chain, for ``T = L + P + B`` with ``L = sum q_a I_m D_a``:

* ``c2``: ``sum q_a xi^a >= c2 |xi|^{2s}`` on the unit sphere;
* ``c1``: ``||P u|| <= c1 sum_{|a|<2s} ||D_a u||``, bounded by the summed
  norms of the Fourier coefficients;
* ``c3``: number of multi-indices with ``|a| <= 2s-1`` (Cauchy-Schwarz);
* ``c``: shift with ``c2 rho^{2s} + c > sqrt(c3) (c1 + eps) sum_a rho^{|a|}``
  for every radius ``rho``, which gives
  ``||Lu + cu|| >= (c1 + eps) sum ||D_a u||`` on every fiber;
* ``c5``, ``c6``: ``||Pu + Bu|| <= c5 ||u|| + ||Lu + cu|| / 2`` and the
  resolvent point ``i c6`` used for the compact-resolvent condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.stats import norm, qmc

from .errors import DegenerateSymbolError, InsufficientEnumerationError
from .lattice import Lattice, enumerate_dual_points, monomial, multi_indices
from .operator import OperatorSpec, assemble, assemble_parts

DEFAULT_EPSILON = 0.1
SHIFT_MARGIN = 1e-6
ELLIPTIC_TOL = 1e-10


@dataclass
class EllipticityReport:
    c2_estimate: float
    min_direction: np.ndarray
    passed: bool
    n_samples: int

    def to_dict(self):
        return {
            "c2": self.c2_estimate,
            "min_direction": self.min_direction.tolist(),
            "n_samples": self.n_samples,
            "pass": self.passed,
        }


def _sphere_samples(d: int, n: int) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = 2 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(th), np.sin(th)])
    pts = qmc.Sobol(d, scramble=True, seed=12345).random(n)
    g = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    g = np.vstack([g, np.eye(d), -np.eye(d)])
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _symbol_ratio(spec: OperatorSpec, xi) -> float:
    """``sigma(xi) / |xi|^{2s}`` with correctly rounded sums.

    fsum on both sides makes ``|xi|^2 / |xi|^2`` come out as exactly 1.
    Monomials are plain repeated products: numpy's vectorized ``power`` is
    not correctly rounded and would break that exactness by an ulp.
    """
    xi = [float(x) for x in np.asarray(xi, dtype=float)]
    num = math.fsum(q * math.prod(x for x, k in zip(xi, a) for _ in range(k)) for a, q in spec.principal.items())
    den = math.fsum(float(x) * float(x) for x in xi) ** spec.s
    return num / den


def check_ellipticity(spec: OperatorSpec, n_samples: int = 2048) -> EllipticityReport:
    """Minimum of the homogeneous principal symbol over the unit sphere.

    Deterministic quasi-uniform sampling followed by a local polish from the
    best sample.
    """
    if not spec.principal or all(q == 0 for q in spec.principal.values()):
        raise DegenerateSymbolError("principal part is identically zero")
    samples = _sphere_samples(spec.d, n_samples)
    vals = np.array([_symbol_ratio(spec, x) for x in samples])
    i = int(np.argmin(vals))
    best, where = float(vals[i]), samples[i]
    if spec.d > 1:
        res = optimize.minimize(lambda x: _symbol_ratio(spec, x) if np.any(x) else np.inf, where,
                                method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        if res.fun < best:
            best, where = float(res.fun), res.x / np.linalg.norm(res.x)
    return EllipticityReport(c2_estimate=best, min_direction=np.asarray(where), passed=best > ELLIPTIC_TOL,
                             n_samples=len(samples))


def bound_lower_order(spec: OperatorSpec) -> float:
    """``c1 = sum_a sum_gamma ||Qhat_a(gamma)||_2`` (triangle inequality on the Fourier series)."""
    return float(sum(np.linalg.norm(t.matrix, 2) for terms in spec.lower.values() for t in terms))


def cauchy_schwarz_count(d: int, s: int) -> int:
    """Number of multi-indices in ``d`` variables with ``|a| <= 2s - 1``."""
    return math.comb(2 * s - 1 + d, d)


@dataclass
class CoercivityReport:
    c1: float
    c2: float
    c3: int
    epsilon: float
    c4: float
    c: float
    verified_range: float
    rhs_coefficient: float
    lattice_deficit_max: float
    radial_deficit_max: float
    n_checked: int
    verified: bool

    def to_dict(self):
        return {
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "epsilon": self.epsilon,
            "c4": self.c4,
            "c": self.c,
            "verified_range": self.verified_range,
            "rhs_coefficient": self.rhs_coefficient,
            "lattice_deficit_max": self.lattice_deficit_max,
            "radial_deficit_max": self.radial_deficit_max,
            "n_lattice_points_checked": self.n_checked,
            "symbol_certified": self.verified,
        }


def _radial_terms(d: int, s: int) -> np.ndarray:
    """``n_k`` = number of multi-indices of order ``k`` for ``k = 0..2s-1``."""
    return np.array([math.comb(k + d - 1, d - 1) for k in range(2 * s)], dtype=float)


def solve_shift(c2: float, K: float, s: int, d: int, lattice: Lattice | None = None,
                enumeration_cap: float | None = None):
    """Smallest safe ``c`` for ``c2 rho^{2s} + c > K sum_{|a|<2s} rho^{|a|}``.

    Returns ``(c, c4, lattice_max, radial_max, cap, n_checked, verified)``.
    The deficit ``K sum n_k rho^k - c2 rho^{2s}`` is negative beyond the
    unique root ``c4`` of ``deficit / rho^{2s}`` (a decreasing function);
    ``c`` is the supremum of the deficit on ``[0, c4]`` plus a margin.
    When a lattice is given, the inequality is also checked at every dual
    point with ``|gamma| <= enumeration_cap``.
    """
    nk = _radial_terms(d, s)

    def rhs(rho):
        return K * np.polyval(nk[::-1], rho)

    def deficit(rho):
        return rhs(rho) - c2 * rho ** (2 * s)

    def scaled(rho):
        return deficit(rho) / rho ** (2 * s)

    hi = 1.0
    while scaled(hi) >= 0:
        hi *= 2.0
    lo = hi / 2.0
    while scaled(lo) < 0:
        lo /= 2.0
    c4 = optimize.brentq(scaled, lo, hi, xtol=1e-14, rtol=1e-15)

    grid = np.linspace(0.0, c4, 4001)
    vals = deficit(grid)
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    polish = optimize.minimize_scalar(lambda r: -deficit(r), bounds=(a, b), method="bounded",
                                      options={"xatol": 1e-13})
    radial_max = max(float(vals[i]), float(-polish.fun))

    lattice_max = -np.inf
    n_checked = 0
    verified = True
    cap = enumeration_cap
    c = max(radial_max, 0.0) + SHIFT_MARGIN
    if lattice is not None:
        if cap is None:
            cap = float(math.ceil(c4)) + 1.0
        if cap < c4:
            raise InsufficientEnumerationError(f"enumeration cap {cap} below the tail threshold c4={c4:.6g}")
        _, vecs = enumerate_dual_points(lattice, cap)
        rho = np.linalg.norm(vecs, axis=1)
        lattice_max = float(np.max(deficit(rho)))
        n_checked = len(rho)
        verified = bool(np.all(c2 * rho ** (2 * s) + c > rhs(rho)))
        c = max(c, lattice_max + SHIFT_MARGIN)
    return c, c4, lattice_max, radial_max, cap, n_checked, verified


def compute_coercivity_shift(
    spec: OperatorSpec,
    lattice: Lattice,
    epsilon: float = DEFAULT_EPSILON,
    enumeration_cap: float | None = None,
    c2: float | None = None,
    factor: float = 1.0,
) -> CoercivityReport:
    """Shift ``c`` making ``L + c`` dominate the lower-order terms with margin ``epsilon``.

    ``factor = 2`` gives the stronger shift needed for the relative bound.

    Raises
    ------
    DegenerateSymbolError
        If the principal symbol is not elliptic.
    InsufficientEnumerationError
        If ``enumeration_cap`` is smaller than the tail threshold ``c4``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if c2 is None:
        ell = check_ellipticity(spec)
        if not ell.passed:
            raise DegenerateSymbolError(f"principal symbol not elliptic (min {ell.c2_estimate:.3e})")
        c2 = ell.c2_estimate
    c1 = bound_lower_order(spec)
    c3 = cauchy_schwarz_count(spec.d, spec.s)
    K = factor * math.sqrt(c3) * (c1 + epsilon)
    c, c4, lmax, rmax, cap, n_checked, ok = solve_shift(c2, K, spec.s, spec.d, lattice, enumeration_cap)
    return CoercivityReport(c1=c1, c2=c2, c3=c3, epsilon=epsilon, c4=c4, c=c, verified_range=cap,
                            rhs_coefficient=K, lattice_deficit_max=lmax, radial_deficit_max=rmax,
                            n_checked=n_checked, verified=ok)


def _battery(coords_vecs, t, m, n_random, rng):
    """Deterministic trial vectors: basis vectors, random unit vectors, Gaussian profiles."""
    vecs = coords_vecs + t
    K = len(vecs)
    N = K * m
    items = [(f"basis[{i}]", np.eye(N, 1, -i, dtype=complex).ravel()) for i in range(N)]
    for r in range(n_random):
        v = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        items.append((f"random[{r}]", v / np.linalg.norm(v)))
    r2 = np.sum(vecs ** 2, axis=1)
    for w in (0.5, 1.0, 2.0, 4.0):
        prof = np.repeat(np.exp(-r2 / w ** 2), m).astype(complex)
        items.append((f"gaussian[w={w}]", prof / np.linalg.norm(prof)))
    return items


@dataclass
class RelativeBoundReport:
    c5: float
    c6: float
    condition_value: float
    condition_bound: float
    battery_size: int
    worst_slack: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations and self.c6 > 2 * self.c5 and self.condition_value < 1 and self.condition_bound < 1

    def to_dict(self):
        return {
            "c5": self.c5,
            "c6": self.c6,
            "condition_value": self.condition_value,
            "condition_bound": self.condition_bound,
            "battery_size": self.battery_size,
            "worst_slack": self.worst_slack,
            "violations": self.violations,
            "pass": self.passed,
        }


def relative_bound_constant(spec: OperatorSpec, lattice: Lattice, epsilon: float = DEFAULT_EPSILON,
                            coercivity: CoercivityReport | None = None) -> tuple[float, CoercivityReport, CoercivityReport]:
    """``c5`` such that ``||Pu + Bu|| <= c5 ||u|| + ||Lu + cu|| / 2``.

    With ``c'`` the doubled-factor shift, ``||Pu|| <= theta ||Lu + c'u|| / 2``
    where ``theta = c1 / (c1 + eps)``, and ``||Lu + c'u|| <= ||Lu + cu|| +
    (c' - c)||u||``; the multiplier adds ``sup ||b||``.
    """
    base = coercivity or compute_coercivity_shift(spec, lattice, epsilon)
    strong = compute_coercivity_shift(spec, lattice, base.epsilon, c2=base.c2, factor=2.0)
    theta = base.c1 / (base.c1 + base.epsilon)
    c5 = spec.multiplier_sup() + theta * 0.5 * max(0.0, strong.c - base.c)
    return c5, base, strong


def check_relative_bound(
    spec: OperatorSpec,
    lattice: Lattice,
    cutoff: float,
    trial_ts,
    coercivity: CoercivityReport | None = None,
    epsilon: float = DEFAULT_EPSILON,
    seed: int = 0,
    n_random: int = 32,
) -> RelativeBoundReport:
    """Battery check of the relative bound and the compact-resolvent condition.

    ``c6 = 2 c5 + 1``.  ``condition_value`` is the left side
    ``c5 ||(L+c-i c6)^-1|| + ||(L+c)(L+c-i c6)^-1|| / 2`` evaluated on the
    truncations; ``condition_bound`` is ``c5 / c6 + 1/2``, its value under the
    self-adjoint resolvent estimates.
    """
    c5, base, _ = relative_bound_constant(spec, lattice, epsilon, coercivity)
    c = base.c
    c6 = 2 * c5 + 1
    rng = np.random.default_rng(seed)
    m = spec.m
    violations = []
    worst = np.inf
    res_max = 0.0
    ratio_max = 0.0
    count = 0
    for t in trial_ts:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        coords, vecs, pdiag, lower, mult = assemble_parts(spec, lattice, t, cutoff)
        ldiag = np.repeat(pdiag, m) + c
        PB = lower + mult
        for label, u in _battery(vecs, t, m, n_random, rng):
            lhs = np.linalg.norm(PB @ u)
            rhs = c5 * np.linalg.norm(u) + 0.5 * np.linalg.norm(ldiag * u)
            slack = rhs - lhs
            worst = min(worst, slack)
            count += 1
            if slack < -1e-12 * max(1.0, rhs):
                violations.append({"t": t.tolist(), "vector": label, "lhs": float(lhs), "rhs": float(rhs)})
        denom = np.sqrt(ldiag ** 2 + c6 ** 2)
        res_max = max(res_max, float(np.max(1.0 / denom)))
        ratio_max = max(ratio_max, float(np.max(np.abs(ldiag) / denom)))
    return RelativeBoundReport(c5=c5, c6=c6, condition_value=c5 * res_max + 0.5 * ratio_max,
                               condition_bound=c5 / c6 + 0.5, battery_size=count, worst_slack=float(worst),
                               violations=violations)


def chain_margin(spec: OperatorSpec, lattice: Lattice, cutoff: float, trial_ts, coercivity: CoercivityReport,
                 seed: int = 0, n_random: int = 32) -> float:
    """Smallest ``||Lu + cu|| - (c1 + eps) sum_{|a|<2s} ||D_a u||`` over the battery (should be >= 0)."""
    rng = np.random.default_rng(seed)
    alphas = multi_indices(spec.d, 2 * spec.s - 1)
    m = spec.m
    worst = np.inf
    for t in trial_ts:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        _, vecs, pdiag, _, _ = assemble_parts(spec, lattice, t, cutoff)
        shifted = vecs + t
        ldiag = np.repeat(pdiag, m) + coercivity.c
        dal = [np.repeat(monomial(shifted, a), m) for a in alphas]
        for _, u in _battery(vecs, t, m, n_random, rng):
            lhs = np.linalg.norm(ldiag * u)
            rhs = (coercivity.c1 + coercivity.epsilon) * sum(np.linalg.norm(da * u) for da in dal)
            worst = min(worst, lhs - rhs)
    return float(worst)


def below_boundedness(spec: OperatorSpec, lattice: Lattice, cutoff: float, trial_ts, c: float) -> float:
    """``min_t lambda_min(M(t)) + c``."""
    return float(min(np.linalg.eigvalsh(assemble(spec, lattice, t, cutoff).matrix)[0] for t in trial_ts) + c)

"""Lattice geometry: dual lattice, fundamental-domain reduction, k-paths.

Conventions
-----------
Primal generators ``a_i`` are the rows of ``basis``; dual generators ``b_i``
are the rows of ``dual_basis`` with ``<b_i, a_j> = 2*pi*delta_ij``.  A dual
point is addressed either by its integer coordinates ``n`` (``gamma = n @ B``)
or by its Cartesian vector.  The quasimomentum fundamental domain is the
centered half-open cell ``{sum c_i b_i : c_i in [-1/2, 1/2)}``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateLatticeError

_BIORTH_TOL = 1e-12


@dataclass(frozen=True)
class Lattice:
    basis: np.ndarray
    dual_basis: np.ndarray
    cell_volume: float

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    def to_cartesian(self, coords) -> np.ndarray:
        """Map integer (or fractional) dual coordinates to Cartesian vectors."""
        return np.asarray(coords, dtype=float) @ self.dual_basis

    def to_dual_coords(self, points) -> np.ndarray:
        """Fractional dual coordinates of Cartesian points (rows)."""
        return np.asarray(points, dtype=float) @ np.linalg.inv(self.dual_basis)


@dataclass(frozen=True)
class MultiIndex:
    components: tuple[int, ...]

    def __post_init__(self):
        if any(int(a) != a or a < 0 for a in self.components):
            raise ValueError(f"multi-index components must be nonnegative integers: {self.components}")
        object.__setattr__(self, "components", tuple(int(a) for a in self.components))

    @property
    def order(self) -> int:
        return sum(self.components)

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)


def multi_indices(d: int, max_order: int, min_order: int = 0) -> list[tuple[int, ...]]:
    """All multi-indices in ``d`` variables with ``min_order <= |alpha| <= max_order``.

    Ordered by total order, then lexicographically descending (``(2,0)`` before
    ``(1,1)``), which is the usual monomial order.
    """
    out = []
    for order in range(min_order, max_order + 1):
        block = [a for a in itertools.product(range(order + 1), repeat=d) if sum(a) == order]
        out.extend(sorted(block, reverse=True))
    return out


def monomial(xi, alpha) -> np.ndarray:
    """``xi**alpha = prod_i xi_i**alpha_i`` evaluated row-wise.

    ``xi`` may be a single point of shape ``(d,)`` or a stack ``(K, d)``.
    """
    xi = np.asarray(xi, dtype=float)
    alpha = np.asarray(alpha, dtype=int)
    return np.prod(xi ** alpha, axis=-1)


def build_lattice(generators) -> Lattice:
    """Build a Bravais lattice from its primal generators (one per row).

    Raises
    ------
    DegenerateLatticeError
        If the generators are not linearly independent.
    """
    A = np.atleast_2d(np.asarray(generators, dtype=float))
    d = A.shape[0]
    if A.shape != (d, d):
        raise DegenerateLatticeError(f"expected {d} generators of length {d}, got shape {A.shape}")
    vol = abs(float(np.linalg.det(A)))
    if not np.isfinite(vol) or vol <= 1e-14 * max(1.0, float(np.abs(A).max())) ** d:
        raise DegenerateLatticeError("lattice generators are linearly dependent")
    B = 2.0 * np.pi * np.linalg.inv(A).T
    defect = np.abs(B @ A.T - 2.0 * np.pi * np.eye(d)).max()
    if defect > _BIORTH_TOL * max(1.0, np.abs(B).max() * np.abs(A).max()):
        raise DegenerateLatticeError(f"generator matrix too ill-conditioned (biorthogonality defect {defect:.3g})")
    A.setflags(write=False)
    B.setflags(write=False)
    return Lattice(basis=A, dual_basis=B, cell_volume=vol)


def enumerate_dual_points(lattice: Lattice, cutoff: float) -> tuple[np.ndarray, np.ndarray]:
    """Dual lattice points inside the closed ball ``|gamma| <= cutoff``.

    Returns ``(coords, vectors)``: integer coordinates ``(K, d)`` in
    lexicographic order and the matching Cartesian vectors.
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    B = lattice.dual_basis
    d = lattice.dimension
    # |n_i| = |gamma . (B^-1)[:, i]| <= cutoff * |(B^-1)[:, i]|
    Binv = np.linalg.inv(B)
    bounds = np.floor(cutoff * np.linalg.norm(Binv, axis=0) + 1e-9).astype(int)
    axes = [np.arange(-b, b + 1) for b in bounds]
    grid = np.array(list(itertools.product(*axes)), dtype=int).reshape(-1, d)
    vecs = grid @ B
    slack = 1e-12 * max(1.0, cutoff)
    keep = np.linalg.norm(vecs, axis=1) <= cutoff + slack
    return grid[keep], vecs[keep]


def reduce_to_fundamental(lattice: Lattice, t) -> np.ndarray:
    """Translate ``t`` by a dual lattice vector into the centered half-open cell.

    The shift is applied as ``t - n @ B`` with integer ``n`` so that a point
    already inside the cell is returned unchanged, bit for bit.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    c = lattice.to_dual_coords(t)
    n = np.floor(c + 0.5)
    if not np.any(n):
        return t.copy()
    return t - n @ lattice.dual_basis


@dataclass(frozen=True)
class QuasimomentumPath:
    samples: np.ndarray
    labels: tuple = ()
    waypoint_indices: tuple[int, ...] = ()
    reduced: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def sample_path(
    lattice: Lattice,
    waypoints: Sequence,
    steps_per_segment: int,
    labels: Sequence[str] | None = None,
    reduce: bool = False,
) -> QuasimomentumPath:
    """Piecewise-linear path through ``waypoints`` (Cartesian).

    Each segment contributes ``steps_per_segment`` steps; shared waypoints
    appear once.  With ``reduce=True`` every sample is mapped into the
    fundamental domain (refinement studies want the raw straight line).
    """
    W = np.asarray(waypoints, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if len(W) < 2:
        raise ValueError("a path needs at least two waypoints")
    if steps_per_segment < 1:
        raise ValueError("steps_per_segment must be >= 1")
    if W.shape[1] != lattice.dimension:
        raise ValueError(f"waypoints have dimension {W.shape[1]}, lattice has {lattice.dimension}")

    fracs = np.arange(steps_per_segment) / steps_per_segment
    pieces = [W[i] + fracs[:, None] * (W[i + 1] - W[i]) for i in range(len(W) - 1)]
    pieces.append(W[-1:])
    samples = np.concatenate(pieces)
    if reduce:
        samples = np.array([reduce_to_fundamental(lattice, s) for s in samples])
    if labels is not None and len(labels) != len(W):
        raise ValueError("one label per waypoint expected")
    idx = tuple(i * steps_per_segment for i in range(len(W)))
    samples.setflags(write=False)
    return QuasimomentumPath(
        samples=samples,
        labels=tuple(labels) if labels is not None else (),
        waypoint_indices=idx,
        reduced=reduce,
    )


def path_from_points(points) -> QuasimomentumPath:
    """Wrap an explicit list of quasimomenta (e.g. a convergent sequence)."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    P.setflags(write=False)
    return QuasimomentumPath(samples=P)


def fundamental_grid(lattice: Lattice, n_per_axis: int) -> np.ndarray:
    """Uniform grid of the half-open fundamental domain, ``n_per_axis**d`` points."""
    c = -0.5 + np.arange(n_per_axis) / n_per_axis
    coords = np.array(list(itertools.product(c, repeat=lattice.dimension)))
    return coords @ lattice.dual_basis

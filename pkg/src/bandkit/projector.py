"""Riesz projectors, Bloch-vector phase conventions and continuity scans.

Inner products are linear in the first slot, ``(f, g) = sum f conj(g)``,
on coefficient vectors of the orthonormal plane-wave basis.  With that
convention the overlap ``(psi, exp(i<t,x>))`` of an ``m = 1`` Bloch vector is
simply its ``gamma = 0`` coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import (
    AlignmentUndefinedError,
    ContourCollisionError,
    CountingViolationError,
    NumericalFailure,
    OverlapBelowThresholdError,
    SimplicityViolationError,
)
from .lattice import Lattice, QuasimomentumPath, path_from_points
from .operator import OperatorSpec, TruncatedOperator
from .spectral import (
    CLUSTER_RTOL,
    SpectrumAtT,
    cluster_multiplicities,
    spectra_along,
)

CONVENTIONS = ("raw", "reference", "planewave")
COLLISION_TOL = 1e-8
ALIGN_TOL = 1e-12
DEFAULT_EPSILON = 1e-3


@dataclass(frozen=True)
class Contour:
    """Circle ``|z - center| = radius`` in the complex plane."""

    center: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("contour radius must be positive")

    def distance_to(self, eigenvalues) -> float:
        return float(np.min(np.abs(np.abs(np.asarray(eigenvalues) - self.center) - self.radius)))


def _as_matrix(op) -> np.ndarray:
    return op.matrix if isinstance(op, TruncatedOperator) else np.asarray(op, dtype=complex)


def riesz_projector_quadrature(op, contour: Contour, nodes: int = 64) -> np.ndarray:
    """``(1/2 pi i) \\oint (z - A)^{-1} dz`` by the trapezoid rule in angle.

    The trapezoid rule converges geometrically for a circle kept away from
    the spectrum, with rate set by the ratio of radii to the nearest
    eigenvalues on either side.

    Raises
    ------
    ContourCollisionError
        If an eigenvalue lies within 1e-8 of the circle.
    """
    A = _as_matrix(op)
    if nodes < 16:
        raise ValueError("at least 16 quadrature nodes required")
    if contour.distance_to(np.linalg.eigvalsh(A)) < COLLISION_TOL:
        raise ContourCollisionError(f"an eigenvalue lies on the contour {contour}")
    N = A.shape[0]
    I = np.eye(N)
    P = np.zeros((N, N), dtype=complex)
    theta = 2 * np.pi * (np.arange(nodes) + 0.5) / nodes
    for th in theta:
        w = contour.radius * np.exp(1j * th)
        try:
            R = np.linalg.solve((contour.center + w) * I - A, I)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"singular resolvent on the contour: {exc}") from None
        P += w * R
    return P / nodes


def riesz_projector_eigen(spectrum: SpectrumAtT, j: int, tol: float | None = None) -> np.ndarray:
    """Orthogonal projector onto cluster ``j`` (1-based) as ``sum v v^*``."""
    clusters = cluster_multiplicities(spectrum, tol)
    V = spectrum.eigenvectors[:, list(clusters.members(j))]
    return V @ V.conj().T


def projector_onto(spectrum: SpectrumAtT, indices) -> np.ndarray:
    V = spectrum.eigenvectors[:, list(indices)]
    return V @ V.conj().T


@dataclass(frozen=True)
class BlochVector:
    coefficients: np.ndarray
    t: np.ndarray
    band: int
    convention: str = "raw"
    zero_index: int | None = None

    def __post_init__(self):
        if self.convention not in ("raw", "reference-aligned", "planewave-aligned"):
            raise ValueError(f"unknown phase convention {self.convention!r}")


def bloch_vector(spectrum: SpectrumAtT, n: int) -> BlochVector:
    """Normalized eigenvector of band ``n`` (1-based) as returned by the eigensolver."""
    zero = None
    op = spectrum.operator
    if op is not None and op.m == 1:
        zero = op.index_of(np.zeros(op.coords.shape[1], dtype=int))
    return BlochVector(
        coefficients=np.array(spectrum.eigenvectors[:, n - 1]),
        t=np.asarray(spectrum.t),
        band=n,
        convention="raw",
        zero_index=zero,
    )


def align_phase_to_reference(psi: BlochVector, ref: BlochVector) -> BlochVector:
    """Multiply ``psi`` by the unimodular factor making ``(ref, psi)`` real and nonnegative.

    This is the phase that minimizes ``||e^{i theta} psi - ref||``.
    """
    ov = np.vdot(psi.coefficients, ref.coefficients)
    if abs(ov) < ALIGN_TOL:
        raise AlignmentUndefinedError(
            f"band {psi.band} at t={np.asarray(psi.t).tolist()} is orthogonal to the reference vector"
        )
    return replace(psi, coefficients=psi.coefficients * (ov / abs(ov)), convention="reference-aligned")


def overlap_with_planewave(psi: BlochVector) -> complex:
    """``(psi, exp(i<t,x>))``, i.e. the ``gamma = 0`` coefficient (``m = 1`` only)."""
    if psi.zero_index is None:
        raise ValueError("plane-wave overlap is defined for scalar (m = 1) operators only")
    return complex(psi.coefficients[psi.zero_index])


def align_phase_to_planewave(psi: BlochVector, epsilon: float = DEFAULT_EPSILON) -> BlochVector:
    """Rotate ``psi`` so that its plane-wave overlap is real and positive.

    Raises
    ------
    OverlapBelowThresholdError
        If ``|(psi, exp(i<t,x>))| <= epsilon``; the caller should fall back
        to reference alignment.
    """
    u0 = overlap_with_planewave(psi)
    if abs(u0) <= epsilon:
        raise OverlapBelowThresholdError(
            f"plane-wave overlap {abs(u0):.3e} <= {epsilon} for band {psi.band} at t={np.asarray(psi.t).tolist()}"
        )
    return replace(psi, coefficients=psi.coefficients * (np.conj(u0) / abs(u0)), convention="planewave-aligned")


@dataclass
class OverlapReport:
    ts: np.ndarray
    values: np.ndarray
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.values > self.threshold))

    def to_dict(self):
        return {
            "t": np.asarray(self.ts).tolist(),
            "overlap_modulus": self.values.tolist(),
            "threshold": self.threshold,
            "pass": self.passed,
        }


def overlap_scan(spec: OperatorSpec, lattice: Lattice, ts, n: int, cutoff: float,
                 threshold: float = DEFAULT_EPSILON) -> OverlapReport:
    """``|(Psi_{n,t}, exp(i<t,x>))|`` at each ``t``."""
    spectra = spectra_along(spec, lattice, ts, cutoff)
    values = np.array([abs(overlap_with_planewave(bloch_vector(s, n))) for s in spectra])
    return OverlapReport(ts=np.asarray([np.atleast_1d(t) for t in ts], dtype=float), values=values, threshold=threshold)


def _cluster_window(spectrum: SpectrumAtT, j: int, tol):
    """``(members, mu, r)`` with ``r`` half of the half-gap to the neighbouring clusters."""
    clusters = cluster_multiplicities(spectrum, tol)
    mu = clusters.values
    gaps = []
    if j > 1:
        gaps.append(mu[j - 1] - mu[j - 2])
    if j < clusters.p:
        gaps.append(mu[j] - mu[j - 1])
    if not gaps:
        raise ValueError("cannot isolate the only cluster")
    r = 0.5 * (0.5 * min(gaps))
    return list(clusters.members(j)), float(mu[j - 1]), r


@dataclass
class ProjectorScan:
    steps: np.ndarray
    distances: np.ndarray
    quadrature_distances: np.ndarray
    quadrature_agreement: np.ndarray
    rank: int
    center: float
    radius: float
    first_index: int = 0

    def to_dict(self):
        return {
            "first_index": self.first_index,
            "abs_dt": self.steps.tolist(),
            "projector_distance": self.distances.tolist(),
            "projector_distance_quadrature": self.quadrature_distances.tolist(),
            "quadrature_vs_eigen": self.quadrature_agreement.tolist(),
            "rank": self.rank,
            "center": self.center,
            "radius": self.radius,
        }


def projector_continuity_scan(
    spec: OperatorSpec,
    lattice: Lattice,
    t0,
    path,
    j: int,
    cutoff: float,
    tol: float | None = None,
    nodes: int = 64,
    tail_only: bool = False,
) -> ProjectorScan:
    """``||P(t_i) - P(t0)||_2`` for the spectral projector of cluster ``j`` of ``t0``.

    At each ``t_i`` the projector is formed both from the eigenvectors in the
    window ``(mu_j - r, mu_j + r)`` and by contour quadrature on the circle of
    radius ``r``; their disagreement is reported alongside.  ``r`` is half of
    the largest radius that isolates the cluster at ``t0``.

    With ``tail_only`` the scan starts after the last sample whose window
    holds the wrong number of eigenvalues (the sequence has to settle
    before the counts stabilize); ``first_index`` records where.

    Raises
    ------
    CountingViolationError
        If the window at some scanned ``t_i`` does not hold exactly ``k_j``
        eigenvalues (with ``tail_only``: if even the last sample fails).
    """
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    if not isinstance(path, QuasimomentumPath):
        path = path_from_points(path)
    base, *rest = spectra_along(spec, lattice, [t0, *path.samples], cutoff)
    members, mu, r = _cluster_window(base, j, tol)
    contour = Contour(mu, r)
    P0 = projector_onto(base, members)

    windows = [np.flatnonzero((s.eigenvalues > mu - r) & (s.eigenvalues < mu + r)) for s in rest]
    bad = [i for i, w in enumerate(windows) if len(w) != len(members)]
    start = 0
    if bad and tail_only and bad[-1] < len(rest) - 1:
        start = bad[-1] + 1
    elif bad:
        i = bad[-1] if tail_only else bad[0]
        raise CountingViolationError(
            f"sample {i} (t={np.asarray(rest[i].t).tolist()}): {len(windows[i])} eigenvalues "
            f"near {mu:.6g}, expected {len(members)}"
        )
    dist, qdist, agree = [], [], []
    for s, inside in zip(rest[start:], windows[start:]):
        P = projector_onto(s, inside)
        Q = riesz_projector_quadrature(s.operator, contour, nodes)
        dist.append(np.linalg.norm(P - P0, 2))
        qdist.append(np.linalg.norm(Q - P0, 2))
        agree.append(np.linalg.norm(P - Q, 2))
    steps = np.array([float(np.linalg.norm(t - t0)) for t in path.samples[start:]])
    return ProjectorScan(steps=steps, distances=np.array(dist), quadrature_distances=np.array(qdist),
                         quadrature_agreement=np.array(agree), rank=len(members), center=float(mu),
                         radius=float(r), first_index=start)


def _is_simple(lam: np.ndarray, n: int, tol) -> bool:
    i = n - 1
    for k in (i - 1, i + 1):
        if 0 <= k < len(lam):
            thresh = tol if tol is not None else CLUSTER_RTOL * (1 + max(abs(lam[i]), abs(lam[k])))
            if abs(lam[k] - lam[i]) <= thresh:
                return False
    return True


@dataclass
class BlochScan:
    steps: np.ndarray
    differences: np.ndarray
    raw_differences: np.ndarray
    overlaps: np.ndarray | None
    conventions_used: list[str] = field(default_factory=list)
    vectors: list[BlochVector] = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "abs_dt": self.steps.tolist(),
            "bloch_difference": self.differences.tolist(),
            "bloch_difference_raw": self.raw_differences.tolist(),
            "overlap_modulus": None if self.overlaps is None else self.overlaps.tolist(),
            "conventions": list(self.conventions_used),
        }


def bloch_continuity_scan(
    spec: OperatorSpec,
    lattice: Lattice,
    path,
    n: int,
    cutoff: float,
    convention: str = "reference",
    epsilon: float = DEFAULT_EPSILON,
    tol: float | None = None,
) -> BlochScan:
    """Step differences ``||Psi_{n,t_{i+1}} - Psi_{n,t_i}||`` along a path.

    ``convention`` selects the phase rule:

    * ``raw``: eigensolver output, no phase fixing (a negative control);
    * ``reference``: each vector aligned to its aligned predecessor;
    * ``planewave``: plane-wave overlap made real positive, falling back to
      reference alignment where the overlap is ``<= epsilon`` (a first
      sample below the threshold is kept as returned and anchors the rest).

    Raises
    ------
    SimplicityViolationError
        If band ``n`` is degenerate at some sample.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    if not isinstance(path, QuasimomentumPath):
        path = path_from_points(path)
    spectra = spectra_along(spec, lattice, path.samples, cutoff)
    raw = []
    for i, s in enumerate(spectra):
        if not _is_simple(s.eigenvalues, n, tol):
            raise SimplicityViolationError(f"band {n} is not simple at sample {i} (t={np.asarray(s.t).tolist()})")
        raw.append(bloch_vector(s, n))
    scalar = raw[0].zero_index is not None
    if convention == "planewave" and not scalar:
        raise ValueError("plane-wave convention requires m = 1")

    aligned: list[BlochVector] = []
    used: list[str] = []
    for psi in raw:
        if convention == "raw":
            aligned.append(psi)
            used.append("raw")
            continue
        if convention == "planewave":
            try:
                aligned.append(align_phase_to_planewave(psi, epsilon))
                used.append("planewave")
                continue
            except OverlapBelowThresholdError:
                pass
        if not aligned:
            aligned.append(replace(psi, convention="reference-aligned"))
        else:
            aligned.append(align_phase_to_reference(psi, aligned[-1]))
        used.append("reference")

    def steps_of(vecs):
        return np.array([np.linalg.norm(b.coefficients - a.coefficients) for a, b in zip(vecs[:-1], vecs[1:])])

    ts = np.asarray(path.samples)
    overlaps = np.array([abs(overlap_with_planewave(p)) for p in raw]) if scalar else None
    return BlochScan(
        steps=np.linalg.norm(np.diff(ts, axis=0), axis=1),
        differences=steps_of(aligned),
        raw_differences=steps_of(raw),
        overlaps=overlaps,
        conventions_used=used,
        vectors=aligned,
    )


def bloch_distances_to(spec: OperatorSpec, lattice: Lattice, t0, sequence: Sequence, n: int, cutoff: float,
                       convention: str = "reference", epsilon: float = DEFAULT_EPSILON) -> BlochScan:
    """``||Psi_{n,t} - Psi_{n,t0}||`` for each ``t`` of a sequence, aligned pairwise."""
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    diffs, raws, used, steps = [], [], [], []
    overlaps = None
    for t in sequence:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        scan = bloch_continuity_scan(spec, lattice, [t0, t], n, cutoff, convention, epsilon)
        diffs.append(scan.differences[0])
        raws.append(scan.raw_differences[0])
        used.append(scan.conventions_used[-1])
        steps.append(scan.steps[0])
        if scan.overlaps is not None:
            overlaps = [scan.overlaps[0]] if overlaps is None else overlaps
            overlaps.append(scan.overlaps[1])
    return BlochScan(steps=np.array(steps), differences=np.array(diffs), raw_differences=np.array(raws),
                     overlaps=None if overlaps is None else np.array(overlaps), conventions_used=used)

"""Eigen-decomposition, multiplicity clusters, band functions, interval counting.

Band and cluster labels are 1-based to match ``lambda_1 <= lambda_2 <= ...``;
array positions stay 0-based.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BandkitError, NumericalFailure, TruncationTrustError, UndefinedGapError
from .lattice import Lattice, QuasimomentumPath, path_from_points
from .operator import OperatorSpec, TruncatedOperator, assemble

WORKERS_ENV = "BANDKIT_WORKERS"
CLUSTER_RTOL = 1e-8


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SpectrumAtT:
    t: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    operator: TruncatedOperator | None = None

    def __len__(self):
        return len(self.eigenvalues)


@dataclass(frozen=True)
class ClusterDecomposition:
    values: np.ndarray
    multiplicities: tuple[int, ...]
    partial_sums: tuple[int, ...]
    tol: float | None

    @property
    def p(self) -> int:
        return len(self.multiplicities)

    def members(self, j: int) -> range:
        """0-based eigenvalue positions of cluster ``j`` (1-based)."""
        if not 1 <= j <= self.p:
            raise IndexError(f"cluster {j} out of range 1..{self.p}")
        start = self.partial_sums[j - 2] if j > 1 else 0
        return range(start, self.partial_sums[j - 1])

    def cluster_of(self, n: int) -> int:
        """1-based cluster containing band ``n`` (1-based)."""
        for j, s in enumerate(self.partial_sums, start=1):
            if n <= s:
                return j
        raise IndexError(f"band {n} beyond the spectrum ({self.partial_sums[-1]} eigenvalues)")


def eigen_decompose(op: TruncatedOperator) -> SpectrumAtT:
    """Eigenpairs of a truncated operator, eigenvalues nondecreasing."""
    try:
        w, v = np.linalg.eigh(op.matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigensolver failed at t={np.asarray(op.t).tolist()}: {exc}") from None
    if not np.all(np.isfinite(w)):
        raise NumericalFailure(f"non-finite eigenvalues at t={np.asarray(op.t).tolist()}")
    # eigh already returns ascending values; a stable sort pins the order of exact ties
    order = np.argsort(w, kind="stable")
    w, v = w[order], v[:, order]
    w.setflags(write=False)
    v.setflags(write=False)
    return SpectrumAtT(t=np.asarray(op.t), eigenvalues=w, eigenvectors=v, operator=op)


def _values(spectrum) -> np.ndarray:
    if isinstance(spectrum, SpectrumAtT):
        return spectrum.eigenvalues
    return np.asarray(spectrum, dtype=float)


def cluster_multiplicities(spectrum, tol: float | None = None) -> ClusterDecomposition:
    """Group equal eigenvalues into ``(mu_j, k_j, s_j)``.

    Greedy left-to-right: a new cluster starts when the next eigenvalue
    exceeds the previous one by more than ``tol``.  Chains of small steps
    therefore merge.  With ``tol=None`` the threshold is
    ``1e-8 * (1 + |lambda|)``.  ``mu_j`` is the cluster mean.
    """
    lam = _values(spectrum)
    if tol is not None and tol <= 0:
        raise ValueError("tol must be positive")
    if len(lam) == 0:
        raise ValueError("empty spectrum")
    groups = [[lam[0]]]
    for prev, cur in zip(lam[:-1], lam[1:]):
        thresh = tol if tol is not None else CLUSTER_RTOL * (1.0 + max(abs(prev), abs(cur)))
        if cur - prev > thresh:
            groups.append([cur])
        else:
            groups[-1].append(cur)
    mu = np.array([float(np.mean(g)) for g in groups])
    k = tuple(len(g) for g in groups)
    return ClusterDecomposition(values=mu, multiplicities=k, partial_sums=tuple(np.cumsum(k).tolist()), tol=tol)


def min_cluster_gap(clusters: ClusterDecomposition, p_limit: int) -> float:
    """Half the smallest spacing ``mu_{j+1} - mu_j`` over ``j <= p_limit``.

    Any radius strictly below the returned value isolates each of the first
    ``p_limit`` clusters.
    """
    if clusters.p < 2:
        raise UndefinedGapError("a single cluster has no spectral gap")
    if not 1 <= p_limit <= clusters.p - 1:
        raise UndefinedGapError(f"p_limit must be in 1..{clusters.p - 1}, got {p_limit}")
    return 0.5 * float(np.min(np.diff(clusters.values[: p_limit + 1])))


def count_in_interval(spectrum, center: float, r: float) -> int:
    """Number of eigenvalues (with multiplicity) in the open interval ``(center - r, center + r)``."""
    if r <= 0:
        raise ValueError("r must be positive")
    lam = _values(spectrum)
    return int(np.count_nonzero((lam > center - r) & (lam < center + r)))


def trusted_band_count(size: int) -> int:
    """Largest band count reported for a truncation of dimension ``size``."""
    return math.ceil(size / 2)


@dataclass(frozen=True)
class BandStructure:
    path: QuasimomentumPath
    bands: np.ndarray

    def to_csv(self) -> str:
        """CSV text: ``t_1..t_d, band_1..band_n``, 17 significant digits."""
        ts = np.asarray(self.path.samples)
        d = ts.shape[1]
        n = self.bands.shape[1]
        header = [f"t_{i + 1}" for i in range(d)] + [f"band_{j + 1}" for j in range(n)]
        lines = [",".join(header)]
        for t, row in zip(ts, self.bands):
            lines.append(",".join(format(float(x), ".17g") for x in (*t, *row)))
        return "\n".join(lines) + "\n"


def spectra_along(spec: OperatorSpec, lattice: Lattice, ts, cutoff: float, workers: int | None = None) -> list[SpectrumAtT]:
    """Independent eigen-decompositions at each quasimomentum, in input order."""
    ts = [np.atleast_1d(np.asarray(t, dtype=float)) for t in ts]

    def one(item):
        i, t = item
        try:
            return eigen_decompose(assemble(spec, lattice, t, cutoff))
        except BandkitError as exc:
            raise type(exc)(f"sample {i}: {exc}") from None

    nw = worker_count(workers)
    if nw == 1 or len(ts) < 2:
        return [one(item) for item in enumerate(ts)]
    with ThreadPoolExecutor(max_workers=nw) as pool:
        return list(pool.map(one, enumerate(ts)))


def compute_bands(
    spec: OperatorSpec,
    lattice: Lattice,
    path: QuasimomentumPath,
    cutoff: float,
    n_bands: int,
    workers: int | None = None,
) -> BandStructure:
    """Lowest ``n_bands`` band functions sampled along ``path``.

    Raises
    ------
    TruncationTrustError
        If ``n_bands`` exceeds the lower half of the truncated spectrum.
    """
    if not isinstance(path, QuasimomentumPath):
        path = path_from_points(path)
    if n_bands < 1:
        raise ValueError("n_bands must be >= 1")
    probe = assemble(spec, lattice, path.samples[0], cutoff)
    limit = trusted_band_count(probe.size)
    if n_bands > limit:
        raise TruncationTrustError(
            f"{n_bands} bands requested but a truncation of size {probe.size} only trusts the lowest {limit}; raise the cutoff"
        )
    spectra = spectra_along(spec, lattice, path.samples, cutoff, workers)
    bands = np.array([s.eigenvalues[:n_bands] for s in spectra])
    return BandStructure(path=path, bands=bands)


@dataclass(frozen=True)
class BandDeltaReport:
    steps: np.ndarray
    deltas: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        return self.deltas[1:] / self.deltas[:-1]

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.deltas) < 0))

    def to_dict(self):
        return {
            "steps": self.steps.tolist(),
            "max_band_delta": self.deltas.tolist(),
            "ratios": self.ratios.tolist(),
            "strictly_decreasing": self.strictly_decreasing,
        }


def band_delta_scan(
    spec: OperatorSpec,
    lattice: Lattice,
    t0,
    cutoff: float,
    n_bands: int,
    h0: float = 1e-2,
    halvings: int = 5,
    direction=None,
    ts=None,
) -> BandDeltaReport:
    """``max_{n <= n_bands} |lambda_n(t) - lambda_n(t0)|`` along a refining sequence.

    By default ``t = t0 + h0 2^-i e`` for ``i = 0..halvings`` with ``e`` the
    unit vector along the first dual generator; an explicit sequence can be
    passed as ``ts`` instead.
    """
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    if ts is None:
        e = np.asarray(direction, dtype=float) if direction is not None else lattice.dual_basis[0]
        e = e / np.linalg.norm(e)
        ts = [t0 + h0 * 2.0 ** (-i) * e for i in range(halvings + 1)]
    ts = [np.atleast_1d(np.asarray(t, dtype=float)) for t in ts]
    base = eigen_decompose(assemble(spec, lattice, t0, cutoff))
    if n_bands > trusted_band_count(len(base)):
        raise TruncationTrustError(f"{n_bands} bands exceed the trusted lower half of size {len(base)}")
    ref = base.eigenvalues[:n_bands]
    spectra = spectra_along(spec, lattice, ts, cutoff)
    deltas = np.array([np.max(np.abs(s.eigenvalues[:n_bands] - ref)) for s in spectra])
    steps = np.array([float(np.linalg.norm(t - t0)) for t in ts])
    return BandDeltaReport(steps=steps, deltas=deltas)


@dataclass
class RadiusCertificate:
    radius: float
    first_index: int | None
    passed: bool
    counterexample: dict | None = None

    def to_dict(self):
        return {
            "radius": self.radius,
            "first_index": self.first_index,
            "pass": self.passed,
            "counterexample": self.counterexample,
        }


@dataclass
class CountingReport:
    t0: np.ndarray
    cluster_values: np.ndarray
    multiplicities: tuple[int, ...]
    p_limit: int
    gap_bound: float
    radii: list[RadiusCertificate] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.radii)

    def to_dict(self):
        return {
            "t0": np.asarray(self.t0).tolist(),
            "p_limit": self.p_limit,
            "cluster_values": self.cluster_values[: self.p_limit + 1].tolist(),
            "multiplicities": list(self.multiplicities[: self.p_limit + 1]),
            "gap_bound": self.gap_bound,
            "radii": [r.to_dict() for r in self.radii],
            "pass": self.passed,
        }


def _default_p_limit(clusters: ClusterDecomposition, size: int) -> int:
    trusted = trusted_band_count(size)
    p = sum(1 for s in clusters.partial_sums if s <= trusted)
    return max(1, min(p, clusters.p - 1))


def _counting_holds(lam: np.ndarray, clusters: ClusterDecomposition, p_limit: int, r: float):
    """``None`` if every cluster ``j <= p_limit`` is reproduced exactly, else the first failure."""
    for j in range(1, p_limit + 1):
        mu = clusters.values[j - 1]
        inside = np.flatnonzero((lam > mu - r) & (lam < mu + r))
        expected = list(clusters.members(j))
        if len(inside) != clusters.multiplicities[j - 1] or inside.tolist() != expected:
            return {"cluster": j, "count": int(len(inside)), "expected": clusters.multiplicities[j - 1],
                    "indices": [int(i) + 1 for i in inside]}
    return None


def theorem1_certificate(
    spec: OperatorSpec,
    lattice: Lattice,
    t0,
    sequence: Sequence,
    cutoff: float,
    tol: float | None = None,
    p_limit: int | None = None,
    n: int | None = None,
    radius_fractions: Sequence[float] = (0.75, 0.5, 0.25),
) -> CountingReport:
    """Empirical interval-counting certificate around ``t0``.

    For each radius ``r = f * gap`` (``gap`` from :func:`min_cluster_gap`) the
    report gives the first sequence position after which every operator has
    exactly ``k_j`` eigenvalues in ``(mu_j - r, mu_j + r)`` for all
    ``j <= p_limit``, and those eigenvalues are ``lambda_{s_{j-1}+1..s_j}``.
    ``p_limit`` may instead be derived from a band number ``n`` (the cluster
    containing it); by default it covers the trusted lower half.
    """
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    base = eigen_decompose(assemble(spec, lattice, t0, cutoff))
    clusters = cluster_multiplicities(base, tol)
    if n is not None:
        p_limit = clusters.cluster_of(n)
    elif p_limit is None:
        p_limit = _default_p_limit(clusters, len(base))
    gap = min_cluster_gap(clusters, p_limit)
    if any(not 0 < f < 1 for f in radius_fractions):
        raise ValueError("radius fractions must lie in (0, 1)")

    seq = [np.atleast_1d(np.asarray(t, dtype=float)) for t in sequence]
    spectra = spectra_along(spec, lattice, seq, cutoff)
    report = CountingReport(t0=t0, cluster_values=clusters.values, multiplicities=clusters.multiplicities,
                            p_limit=p_limit, gap_bound=gap)
    for f in radius_fractions:
        r = f * gap
        failures = [_counting_holds(s.eigenvalues, clusters, p_limit, r) for s in spectra]
        bad = [i for i, fail in enumerate(failures) if fail is not None]
        if not bad:
            report.radii.append(RadiusCertificate(radius=r, first_index=0, passed=True))
        elif bad[-1] == len(spectra) - 1:
            fail = dict(failures[bad[-1]])
            fail["index"] = bad[-1]
            fail["t"] = seq[bad[-1]].tolist()
            report.radii.append(RadiusCertificate(radius=r, first_index=None, passed=False, counterexample=fail))
        else:
            report.radii.append(RadiusCertificate(radius=r, first_index=bad[-1] + 1, passed=True))
    return report

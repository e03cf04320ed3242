"""Experiment orchestration behind the command-line verbs.

Every ``run_*`` function returns the data it wrote so that it can be used
from Python directly.  Data files are deterministic: floats go through
``repr`` (JSON) or 17-digit formatting (CSV), keys keep insertion order, and
wall-clock time only appears in the manifest sidecar.
"""

from __future__ import annotations

import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .constants import (
    DEFAULT_EPSILON as CONSTANTS_EPSILON,
    SHIFT_MARGIN,
    below_boundedness,
    chain_margin,
    check_ellipticity,
    check_relative_bound,
    compute_coercivity_shift,
)
from .errors import BandkitError, SpecParseError
from .gapmetric import gap_continuity_scan
from .lattice import Lattice, fundamental_grid, sample_path
from .operator import HERMITIAN_TOL, OperatorSpec, assemble
from .projector import (
    COLLISION_TOL,
    DEFAULT_EPSILON as OVERLAP_EPSILON,
    bloch_distances_to,
    projector_continuity_scan,
)
from .specfile import BUNDLED, bundled_spec_path, load_spec, spec_hash
from .spectral import (
    CLUSTER_RTOL,
    band_delta_scan,
    cluster_multiplicities,
    compute_bands,
    eigen_decompose,
    theorem1_certificate,
    worker_count,
)

DEFAULT_CUTOFF = {1: 16.0, 2: 6.0}
SEQUENCE_RANGE = (3, 10)
RADIUS_FRACTIONS = (0.75, 0.5, 0.25)
DECAY_SLACK = 1e-12


def default_cutoff(d: int) -> float:
    return DEFAULT_CUTOFF.get(d, 3.0)


def resolve_spec_path(spec: str | Path) -> Path:
    """A file path, or the name of a bundled spec such as ``mathieu_q1``."""
    path = Path(spec)
    if path.is_file():
        return path
    stem = path.name[:-5] if path.name.endswith(".json") else path.name
    if str(spec) in BUNDLED or stem in BUNDLED and not path.parent.parts:
        return bundled_spec_path(stem)
    raise SpecParseError(f"{spec}: no such file (bundled specs: {', '.join(BUNDLED)})")


@dataclass
class RunManifest:
    command: str
    spec_path: str
    spec_sha256: str
    lattice_generators: list
    dual_generators: list
    cutoff: float
    path: dict
    tolerances: dict
    conventions: dict
    version: str = __version__
    workers: int = 1
    wall_clock_seconds: float = 0.0
    python: str = field(default_factory=platform.python_version)

    def write(self, path: Path):
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")


def manifest_path(out: Path) -> Path:
    out = Path(out)
    return out.with_suffix(".manifest.json") if out.suffix else out.with_name(out.name + ".manifest.json")


def _tolerances() -> dict:
    return {
        "hermitian_defect": HERMITIAN_TOL,
        "cluster_rtol": CLUSTER_RTOL,
        "contour_collision": COLLISION_TOL,
        "shift_margin": SHIFT_MARGIN,
        "decay_slack": DECAY_SLACK,
    }


def _base_manifest(command, spec_file, lattice, cutoff, path_desc, conventions) -> RunManifest:
    return RunManifest(
        command=command,
        spec_path=str(spec_file),
        spec_sha256=spec_hash(spec_file),
        lattice_generators=np.asarray(lattice.basis).tolist(),
        dual_generators=np.asarray(lattice.dual_basis).tolist(),
        cutoff=float(cutoff),
        path=path_desc,
        tolerances=_tolerances(),
        conventions=conventions,
        workers=worker_count(),
    )


def _write_outputs(text: str, out, manifest: RunManifest, started: float):
    if out is None:
        return
    out = Path(out)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    manifest.wall_clock_seconds = round(time.perf_counter() - started, 6)
    manifest.write(manifest_path(out))


def _clean(obj):
    """Plain-Python copy of a report (numpy scalars and arrays converted)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, allow_nan=False) + "\n"


def to_cartesian_point(lattice: Lattice, coords) -> np.ndarray:
    """Dual-lattice coordinates (fractions of the dual generators) to a Cartesian point."""
    c = np.atleast_1d(np.asarray(coords, dtype=float))
    if c.shape != (lattice.dimension,):
        raise ValueError(f"expected {lattice.dimension} coordinates, got {c.tolist()}")
    return c @ lattice.dual_basis


def default_waypoints(d: int) -> list[list[float]]:
    """``-1/2 -> 1/2`` in one dimension; Gamma -> X -> M -> Gamma otherwise."""
    if d == 1:
        return [[-0.5], [0.5]]
    x = [0.5] + [0.0] * (d - 1)
    corner = [0.5] * d
    return [[0.0] * d, x, corner, [0.0] * d]


# --------------------------------------------------------------------------- bands


def run_bands(spec_file, waypoints=None, samples: int = 65, cutoff: float | None = None, n_bands: int = 4,
              out=None, reduce: bool = False) -> str:
    """Band functions along a waypoint path (dual coordinates); returns the CSV text.

    ``samples`` counts every point of the path, so ``samples - 1`` must be a
    multiple of the number of segments.
    """
    started = time.perf_counter()
    spec_file = resolve_spec_path(spec_file)
    spec, lattice = load_spec(spec_file)
    cutoff = default_cutoff(spec.d) if cutoff is None else float(cutoff)
    waypoints = default_waypoints(spec.d) if waypoints is None else waypoints
    segments = len(waypoints) - 1
    if segments < 1:
        raise ValueError("a path needs at least two waypoints")
    if samples < 2 or (samples - 1) % segments:
        raise ValueError(f"samples - 1 = {samples - 1} is not a positive multiple of {segments} segments")
    pts = [to_cartesian_point(lattice, w) for w in waypoints]
    path = sample_path(lattice, pts, (samples - 1) // segments, reduce=reduce)
    bands = compute_bands(spec, lattice, path, cutoff, n_bands)
    text = bands.to_csv()
    manifest = _base_manifest(
        "bands", spec_file, lattice, cutoff,
        {"waypoints_dual": [list(map(float, w)) for w in waypoints], "samples": samples,
         "reduced": reduce, "n_bands": n_bands},
        {"coordinates": "cartesian t in CSV, waypoints in dual coordinates"},
    )
    _write_outputs(text, out, manifest, started)
    return text


# ------------------------------------------------------------------------ gap scan


def default_sequence(lattice: Lattice, t0, i_range=SEQUENCE_RANGE) -> list[np.ndarray]:
    """``t0 + 2^-i b_1`` for ``i`` in ``i_range`` (inclusive), ``b_1`` the first dual generator."""
    b1 = lattice.dual_basis[0]
    return [t0 + 2.0 ** (-i) * b1 for i in range(i_range[0], i_range[1] + 1)]


def run_gap_scan(spec_file, t0=None, cutoff: float | None = None, out=None, i_range=SEQUENCE_RANGE) -> str:
    started = time.perf_counter()
    spec_file = resolve_spec_path(spec_file)
    spec, lattice = load_spec(spec_file)
    cutoff = default_cutoff(spec.d) if cutoff is None else float(cutoff)
    t0c = [0.0] * spec.d if t0 is None else list(t0)
    t0_cart = to_cartesian_point(lattice, t0c)
    scan = gap_continuity_scan(spec, lattice, t0_cart, default_sequence(lattice, t0_cart, i_range), cutoff)
    text = scan.to_csv()
    manifest = _base_manifest("gap-scan", spec_file, lattice, cutoff,
                              {"t0_dual": t0c, "sequence": f"t0 + 2^-i b_1, i = {i_range[0]}..{i_range[1]}"}, {})
    _write_outputs(text, out, manifest, started)
    return text


# ----------------------------------------------------------------------- constants


def trial_quasimomenta(lattice: Lattice, count: int = 16) -> np.ndarray:
    n = max(2, round(count ** (1.0 / lattice.dimension)))
    return fundamental_grid(lattice, n)


def constants_report(spec: OperatorSpec, lattice: Lattice, cutoff: float, epsilon: float = CONSTANTS_EPSILON,
                     seed: int = 0) -> dict:
    """Ellipticity, coercivity shift, relative bound and below-boundedness on 16 trial ``t``."""
    report: dict = {}
    ell = check_ellipticity(spec)
    report["ellipticity"] = ell.to_dict()
    if not ell.passed:
        report["pass"] = False
        report["failure"] = "ellipticity"
        return report
    ts = trial_quasimomenta(lattice)
    coer = compute_coercivity_shift(spec, lattice, epsilon, c2=ell.c2_estimate)
    coer_cap = compute_coercivity_shift(spec, lattice, epsilon, c2=ell.c2_estimate,
                                        enumeration_cap=2 * coer.verified_range)
    report["coercivity"] = coer.to_dict()
    report["coercivity"]["c_at_doubled_cap"] = coer_cap.c
    report["coercivity"]["cap_stable"] = bool(abs(coer_cap.c - coer.c) <= 1e-9 * max(1.0, abs(coer.c)))
    rel = check_relative_bound(spec, lattice, cutoff, ts, coercivity=coer, epsilon=epsilon, seed=seed)
    report["relative_bound"] = rel.to_dict()
    margin = chain_margin(spec, lattice, cutoff, ts, coer, seed=seed)
    report["chain_margin"] = margin
    below = below_boundedness(spec, lattice, cutoff, ts, coer.c)
    report["below_boundedness"] = {"n_trial_t": len(ts), "min_eig_plus_c": below, "pass": below >= -1e-6}
    checks = {
        "ellipticity": ell.passed,
        "coercivity": coer.verified and report["coercivity"]["cap_stable"],
        "relative_bound": rel.passed,
        "chain_margin": margin >= -1e-9,
        "below_boundedness": below >= -1e-6,
    }
    failing = [k for k, ok in checks.items() if not ok]
    report["pass"] = not failing
    if failing:
        report["failure"] = failing[0]
    return report


def run_constants(spec_file, cutoff: float | None = None, epsilon: float = CONSTANTS_EPSILON, seed: int = 0,
                  out=None) -> dict:
    started = time.perf_counter()
    spec_file = resolve_spec_path(spec_file)
    spec, lattice = load_spec(spec_file)
    cutoff = default_cutoff(spec.d) if cutoff is None else float(cutoff)
    report = constants_report(spec, lattice, cutoff, epsilon, seed)
    manifest = _base_manifest("constants", spec_file, lattice, cutoff, {"trial_t": "uniform grid of F*, 16 points"},
                              {"epsilon": epsilon, "seed": seed})
    _write_outputs(dumps_report(report), out, manifest, started)
    return report


# ------------------------------------------------------------------------- certify


def _decays(steps, values) -> bool:
    """Nonincreasing (up to slack) and at least linear in the step."""
    v = np.asarray(values, dtype=float)
    s = np.asarray(steps, dtype=float)
    if len(v) == 0:
        return False
    if np.all(v <= DECAY_SLACK):
        return True
    monotone = bool(np.all(np.diff(v) <= DECAY_SLACK + 1e-9 * v[:-1]))
    linear = bool(v[-1] <= 4.0 * v[0] * s[-1] / s[0] + DECAY_SLACK)
    return monotone and linear


def _section(fn):
    try:
        return fn()
    except (BandkitError, ValueError) as exc:
        return {"pass": False, "error": f"{type(exc).__name__}: {exc}"}


def _band_delta_section(spec, lattice, t0, seq, cutoff, n_bands):
    rep = band_delta_scan(spec, lattice, t0, cutoff, n_bands, ts=seq)
    out = rep.to_dict()
    out["pass"] = rep.strictly_decreasing
    return out


def _bloch_section(spec, lattice, t0, seq, cutoff, n_bands, conventions, epsilon):
    base = eigen_decompose(assemble(spec, lattice, t0, cutoff))
    clusters = cluster_multiplicities(base)
    simple = [n for n in range(1, n_bands + 1) if clusters.multiplicities[clusters.cluster_of(n) - 1] == 1]
    bands = {}
    ok = bool(simple)
    for n in simple:
        entry = {}
        for conv in conventions:
            try:
                scan = bloch_distances_to(spec, lattice, t0, seq, n, cutoff, conv, epsilon)
            except (BandkitError, ValueError) as exc:
                entry[conv] = {"pass": False, "error": f"{type(exc).__name__}: {exc}"}
                ok = False
                continue
            d = scan.to_dict()
            aligned_ok = conv == "raw" or bool(np.all(scan.differences <= scan.raw_differences + DECAY_SLACK))
            d["aligned_not_worse_than_raw"] = aligned_ok
            d["pass"] = _decays(scan.steps, scan.differences) and aligned_ok
            ok = ok and d["pass"]
            entry[conv] = d
        bands[str(n)] = entry
    return {"simple_bands": simple, "bands": bands, "pass": ok}


def _projectors(spec, lattice, t0, seq, cutoff, n_bands):
    base = eigen_decompose(assemble(spec, lattice, t0, cutoff))
    clusters = cluster_multiplicities(base)
    last = min(clusters.cluster_of(n_bands), clusters.p - 1)
    out, ok = {}, True
    for j in range(1, last + 1):
        try:
            scan = projector_continuity_scan(spec, lattice, t0, seq, j, cutoff, tail_only=True)
        except (BandkitError, ValueError) as exc:
            out[str(j)] = {"pass": False, "error": f"{type(exc).__name__}: {exc}"}
            ok = False
            continue
        d = scan.to_dict()
        d["pass"] = _decays(scan.steps, scan.distances) and bool(np.all(scan.quadrature_agreement <= 1e-8))
        ok = ok and d["pass"]
        out[str(j)] = d
    return {"clusters": out, "pass": ok}


def _gap_section(spec, lattice, t0, seq, cutoff):
    scans, ratios = [], []
    for cut in (cutoff / 4, cutoff / 2, cutoff):
        try:
            scan = gap_continuity_scan(spec, lattice, t0, seq, cut)
        except ValueError:
            continue
        scans.append(scan.to_dict())
        ratios.extend(scan.ratios.tolist())
    if not ratios:
        raise ValueError("no cutoff in the ladder supports the operator's frequencies")
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
    return {"scans": scans, "ratio_max": max(ratios), "ratio_min": min(ratios), "ratio_spread": spread,
            "lipschitz_estimate": max(ratios), "pass": bool(spread <= 2.0)}


def certify_report(spec: OperatorSpec, lattice: Lattice, t0_dual, cutoff: float, n_bands: int = 4,
                   epsilon: float = OVERLAP_EPSILON, constants_epsilon: float = CONSTANTS_EPSILON, seed: int = 0,
                   conventions=None, i_range=SEQUENCE_RANGE) -> dict:
    """All continuity certificates around ``t0`` plus the constants chain, with an overall verdict."""
    t0 = to_cartesian_point(lattice, t0_dual)
    seq = default_sequence(lattice, t0, i_range)
    if conventions is None:
        conventions = ("raw", "reference", "planewave") if spec.m == 1 else ("raw", "reference")
    report: dict = {
        "t0": t0.tolist(),
        "cutoff": float(cutoff),
        "n_bands": n_bands,
        "sequence": [t.tolist() for t in seq],
    }
    report["constants"] = _section(lambda: constants_report(spec, lattice, cutoff, constants_epsilon, seed))

    def counting():
        rep = theorem1_certificate(spec, lattice, t0, seq, cutoff, n=n_bands, radius_fractions=RADIUS_FRACTIONS)
        return rep.to_dict()

    report["counting"] = _section(counting)
    report["band_deltas"] = _section(lambda: _band_delta_section(spec, lattice, t0, seq, cutoff, n_bands))
    report["bloch"] = _section(lambda: _bloch_section(spec, lattice, t0, seq, cutoff, n_bands, conventions, epsilon))
    report["projector"] = _section(lambda: _projectors(spec, lattice, t0, seq, cutoff, n_bands))
    report["gap"] = _section(lambda: _gap_section(spec, lattice, t0, seq, cutoff))
    sections = ("constants", "counting", "band_deltas", "bloch", "projector", "gap")
    failing = [name for name in sections if not report[name].get("pass", False)]
    report["failing_sections"] = failing
    report["pass"] = not failing
    return _clean(report)


def run_certify(spec_file, t0=None, cutoff: float | None = None, n_bands: int = 4, out=None,
                epsilon: float = OVERLAP_EPSILON, constants_epsilon: float = CONSTANTS_EPSILON, seed: int = 0,
                convention: str | None = None, i_range=SEQUENCE_RANGE) -> dict:
    started = time.perf_counter()
    spec_file = resolve_spec_path(spec_file)
    spec, lattice = load_spec(spec_file)
    cutoff = default_cutoff(spec.d) if cutoff is None else float(cutoff)
    t0c = [0.0] * spec.d if t0 is None else list(t0)
    conventions = None
    if convention is not None:
        conventions = ("raw", convention) if convention != "raw" else ("raw",)
    report = certify_report(spec, lattice, t0c, cutoff, n_bands, epsilon, constants_epsilon, seed, conventions,
                            i_range)
    manifest = _base_manifest(
        "certify", spec_file, lattice, cutoff,
        {"t0_dual": t0c, "sequence": f"t0 + 2^-i b_1, i = {i_range[0]}..{i_range[1]}", "n_bands": n_bands},
        {"bloch": list(conventions or ("raw", "reference", "planewave")), "overlap_epsilon": epsilon,
         "constants_epsilon": constants_epsilon, "seed": seed, "radius_fractions": list(RADIUS_FRACTIONS)},
    )
    _write_outputs(dumps_report(report), out, manifest, started)
    return report

"""JSON problem-spec files.

Schema (top-level keys)::

    dimension           int
    m                   int
    order_s             int
    lattice_generators  d x d array, one primal generator per row
    principal           [{"alpha": [...], "q": float}, ...]
    lower               [{"alpha": [...], "terms": [{"gamma": [...], "re": M, "im": M}, ...]}, ...]
    multiplier          [{"gamma": [...], "re": M, "im": M}, ...]

``M`` is an ``m x m`` nested list, or a bare number when ``m == 1``; ``im``
may be omitted.  ``gamma`` is given in integer dual-lattice coordinates.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import BandkitError, SpecParseError, SpecValidationError
from .lattice import Lattice, build_lattice
from .operator import FourierCoefficient, OperatorSpec, assemble, check_self_adjointness

BUNDLED = ("free_1d", "free_2d", "mathieu_q1", "mathieu_q01", "indefinite_2d", "nonhermitian_1d")


def bundled_spec_path(name: str) -> Path:
    """Path of a spec file shipped in ``bandkit/data`` (name with or without ``.json``)."""
    stem = name[:-5] if name.endswith(".json") else name
    path = resources.files("bandkit") / "data" / f"{stem}.json"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled spec named {name!r}; available: {', '.join(BUNDLED)}")
    return Path(str(path))


def _require(obj, key, where):
    if not isinstance(obj, dict):
        raise SpecParseError(f"{where}: expected an object")
    if key not in obj:
        raise SpecParseError(f"{where}: missing field '{key}'")
    return obj[key]


def _int_vector(value, d, where):
    if not isinstance(value, list) or len(value) != d or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise SpecParseError(f"{where}: expected a list of {d} integers, got {value!r}")
    return tuple(value)


def _matrix(entry, m, where):
    def part(key, required):
        if key not in entry:
            if required:
                raise SpecParseError(f"{where}: missing field '{key}'")
            return np.zeros((m, m))
        raw = entry[key]
        try:
            arr = np.asarray(raw, dtype=float)
        except (TypeError, ValueError) as exc:
            raise SpecParseError(f"{where}.{key}: not numeric ({exc})") from None
        if arr.ndim == 0 and m == 1:
            arr = arr.reshape(1, 1)
        if arr.shape != (m, m):
            raise SpecParseError(f"{where}.{key}: expected {m}x{m} matrix, got shape {arr.shape}")
        return arr

    return part("re", True) + 1j * part("im", False)


def parse_spec(data: dict) -> tuple[OperatorSpec, Lattice]:
    """Build ``(OperatorSpec, Lattice)`` from decoded JSON without running validation checks."""
    d = _require(data, "dimension", "spec")
    m = _require(data, "m", "spec")
    s = _require(data, "order_s", "spec")
    for name, val in (("dimension", d), ("m", m), ("order_s", s)):
        if not isinstance(val, int) or isinstance(val, bool) or val < 1:
            raise SpecParseError(f"spec.{name}: expected a positive integer, got {val!r}")
    gens = _require(data, "lattice_generators", "spec")
    try:
        A = np.asarray(gens, dtype=float)
    except (TypeError, ValueError):
        raise SpecParseError("spec.lattice_generators: not a numeric array") from None
    if A.shape != (d, d):
        raise SpecParseError(f"spec.lattice_generators: expected {d}x{d} array, got shape {A.shape}")

    principal = {}
    for i, entry in enumerate(_require(data, "principal", "spec")):
        where = f"principal[{i}]"
        alpha = _int_vector(_require(entry, "alpha", where), d, f"{where}.alpha")
        q = _require(entry, "q", where)
        if not isinstance(q, (int, float)) or isinstance(q, bool):
            raise SpecParseError(f"{where}.q: expected a real number")
        principal[alpha] = float(q)

    lower = {}
    for i, entry in enumerate(data.get("lower", [])):
        where = f"lower[{i}]"
        alpha = _int_vector(_require(entry, "alpha", where), d, f"{where}.alpha")
        terms = []
        for j, term in enumerate(_require(entry, "terms", where)):
            tw = f"{where}.terms[{j}]"
            gamma = _int_vector(_require(term, "gamma", tw), d, f"{tw}.gamma")
            terms.append(FourierCoefficient(gamma, _matrix(term, m, tw)))
        lower[alpha] = tuple(lower.get(alpha, ())) + tuple(terms)

    mult = {}
    for i, entry in enumerate(data.get("multiplier", [])):
        where = f"multiplier[{i}]"
        gamma = _int_vector(_require(entry, "gamma", where), d, f"{where}.gamma")
        mult[gamma] = _matrix(entry, m, where)

    lattice = build_lattice(A)
    spec = OperatorSpec(d=d, m=m, s=s, principal=principal, lower=lower, multiplier=mult)
    return spec, lattice


def _validation_cutoff(spec: OperatorSpec, lattice: Lattice) -> float:
    reach = 0.0
    freqs = spec.lower_frequencies()
    if freqs:
        reach = float(np.linalg.norm(lattice.to_cartesian(freqs), axis=1).max())
    shortest = float(np.linalg.norm(lattice.dual_basis, axis=1).min())
    return 1.5 * max(reach, shortest)


def _name_offender(spec, lattice, t, cutoff) -> str:
    op = assemble(spec, lattice, t, cutoff, check=False)
    D = np.abs(op.matrix - op.matrix.conj().T)
    r, c = np.unravel_index(int(np.argmax(D)), D.shape)
    basis = op.basis
    (g, k), (gp, kp) = basis[r], basis[c]
    eta = tuple(int(a - b) for a, b in zip(g, gp))
    return f"coupling at frequency {eta} between components ({k},{kp}) is not conjugate-symmetric"


def validate(spec: OperatorSpec, lattice: Lattice, seed: int = 0, n_trials: int = 3):
    """Eager self-adjointness check at ``n_trials`` random quasimomenta."""
    rng = np.random.default_rng(seed)
    ts = (rng.uniform(-0.5, 0.5, size=(n_trials, spec.d))) @ lattice.dual_basis
    cutoff = _validation_cutoff(spec, lattice)
    report = check_self_adjointness(spec, lattice, ts, cutoff)
    if not report.passed:
        worst = ts[int(np.argmax(report.defects))]
        raise SpecValidationError(
            f"spec is not formally self-adjoint (defect {report.max_defect:.3e}): "
            + _name_offender(spec, lattice, worst, cutoff)
        )
    return report


def load_spec(path, validate_spec: bool = True) -> tuple[OperatorSpec, Lattice]:
    """Read, parse and (by default) validate a problem-spec file.

    Raises
    ------
    SpecParseError
        Unreadable file, invalid JSON (with line/column) or malformed field.
    SpecValidationError
        Well-formed data that does not define a self-adjoint operator.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecParseError(f"{path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        spec, lattice = parse_spec(data)
    except BandkitError as exc:
        raise type(exc)(f"{path}: {exc}") from None
    if validate_spec:
        validate(spec, lattice)
    return spec, lattice


def spec_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _matrix_json(mat, m):
    mat = np.asarray(mat, dtype=complex)
    if m == 1:
        return {"re": float(mat[0, 0].real), "im": float(mat[0, 0].imag)}
    return {"re": mat.real.tolist(), "im": mat.imag.tolist()}


def spec_to_dict(spec: OperatorSpec, lattice: Lattice) -> dict:
    """Inverse of :func:`parse_spec`."""
    return {
        "dimension": spec.d,
        "m": spec.m,
        "order_s": spec.s,
        "lattice_generators": np.asarray(lattice.basis).tolist(),
        "principal": [{"alpha": list(a), "q": q} for a, q in spec.principal.items()],
        "lower": [
            {"alpha": list(a), "terms": [{"gamma": list(t.frequency), **_matrix_json(t.matrix, spec.m)} for t in terms]}
            for a, terms in spec.lower.items()
        ],
        "multiplier": [{"gamma": list(g), **_matrix_json(b, spec.m)} for g, b in spec.multiplier.items()],
    }

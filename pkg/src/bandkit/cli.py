"""``bandkit`` command line.

Exit codes: 0 success, 2 usage, 3 spec parse error, 4 validation error,
5 numerical failure, 6 certification failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .errors import BandkitError, CertificationFailure, NumericalFailure, SpecParseError, SpecValidationError
from .runs import (
    SEQUENCE_RANGE,
    dumps_report,
    resolve_spec_path,
    run_bands,
    run_certify,
    run_constants,
    run_gap_scan,
)
from .specfile import load_spec

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_NUMERICAL = 5
EXIT_CERTIFICATION = 6


def parse_point(text: str) -> list[float]:
    """``"0.25"`` or ``"0.5,0"`` -> list of floats."""
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a point: {text!r}") from None


def parse_waypoints(text: str) -> list[list[float]]:
    """``"0;0.5"`` or ``"0,0;0.5,0;0.5,0.5"`` -> list of points."""
    return [parse_point(p) for p in text.split(";") if p.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandkit",
        description="Bloch band structure, continuity certificates and operator constants.",
        epilog=__doc__.split("\n\n", 1)[1].strip(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"bandkit {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, out=True):
        p.add_argument("--spec", required=True, help="spec file or bundled name (e.g. mathieu_q1)")
        p.add_argument("--cutoff", type=float, default=None, help="plane-wave cutoff |gamma| <= cutoff")
        if out:
            p.add_argument("--out", default=None, help="output file (a .manifest.json sidecar is written next to it)")

    p = sub.add_parser("bands", help="band functions along a path, as CSV")
    common(p)
    p.add_argument("--path", type=parse_waypoints, default=None,
                   help="waypoints in dual coordinates, ';'-separated, e.g. '0;0.5' or '0,0;0.5,0'")
    p.add_argument("--samples", type=int, default=65, help="total samples including both ends")
    p.add_argument("--bands", type=int, default=4, help="number of lowest bands to output")
    p.add_argument("--reduce", action="store_true", help="map samples into the fundamental domain")

    p = sub.add_parser("certify", help="continuity certificates around t0, as JSON")
    common(p)
    p.add_argument("--t0", type=parse_point, default=None, help="base point in dual coordinates")
    p.add_argument("--bands", type=int, default=4, help="bands checked by the Bloch and delta sections")
    p.add_argument("--convention", choices=("raw", "reference", "planewave"), default=None,
                   help="Bloch phase convention (default: all applicable)")
    p.add_argument("--epsilon", type=float, default=1e-3, help="plane-wave overlap threshold")
    p.add_argument("--seed", type=int, default=0, help="seed of the relative-bound test battery")

    p = sub.add_parser("gap-scan", help="gap-metric distances along t0 + 2^-i b_1, as CSV")
    common(p)
    p.add_argument("--t0", type=parse_point, default=None)
    p.add_argument("--imin", type=int, default=SEQUENCE_RANGE[0])
    p.add_argument("--imax", type=int, default=SEQUENCE_RANGE[1])

    p = sub.add_parser("constants", help="ellipticity, coercivity and relative-bound constants, as JSON")
    common(p)
    p.add_argument("--epsilon", type=float, default=0.1, help="coercivity margin")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("validate", help="parse and check a spec file")
    common(p, out=False)
    return parser


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)


def _dispatch(args) -> int:
    if args.verb == "bands":
        text = run_bands(args.spec, args.path, args.samples, args.cutoff, args.bands, args.out, args.reduce)
        _emit(text, args.out)
        return EXIT_OK
    if args.verb == "gap-scan":
        _emit(run_gap_scan(args.spec, args.t0, args.cutoff, args.out, (args.imin, args.imax)), args.out)
        return EXIT_OK
    if args.verb == "constants":
        report = run_constants(args.spec, args.cutoff, args.epsilon, args.seed, args.out)
        _emit(dumps_report(report), args.out)
        return EXIT_OK if report["pass"] else EXIT_CERTIFICATION
    if args.verb == "certify":
        report = run_certify(args.spec, args.t0, args.cutoff, args.bands, args.out, epsilon=args.epsilon,
                             seed=args.seed, convention=args.convention)
        _emit(dumps_report(report), args.out)
        if not report["pass"]:
            print(f"certification failed: {', '.join(report['failing_sections'])}", file=sys.stderr)
            return EXIT_CERTIFICATION
        return EXIT_OK
    if args.verb == "validate":
        path = resolve_spec_path(args.spec)
        spec, lattice = load_spec(path)
        summary = {"spec": str(path), "dimension": spec.d, "m": spec.m, "order_s": spec.s,
                   "lattice_generators": lattice.basis.tolist(), "valid": True}
        sys.stdout.write(json.dumps(summary, indent=2) + "\n")
        return EXIT_OK
    raise AssertionError(args.verb)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, SpecParseError):
        return EXIT_PARSE
    if isinstance(exc, SpecValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, NumericalFailure):
        return EXIT_NUMERICAL
    if isinstance(exc, CertificationFailure):
        return EXIT_CERTIFICATION
    return EXIT_USAGE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except BandkitError as exc:
        print(f"bandkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except (ValueError, OSError) as exc:
        print(f"bandkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

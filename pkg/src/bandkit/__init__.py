"""Plane-wave Bloch spectra, band functions and continuity certificates for periodic operators."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BandkitError,
    CertificationFailure,
    NumericalFailure,
    SpecParseError,
    SpecValidationError,
)
from .gapmetric import GapResult, directed_gap, gap, gap_continuity_scan, graph_projection  # noqa: E402
from .lattice import (  # noqa: E402
    Lattice,
    QuasimomentumPath,
    build_lattice,
    enumerate_dual_points,
    reduce_to_fundamental,
    sample_path,
)
from .operator import (  # noqa: E402
    FourierCoefficient,
    OperatorSpec,
    TruncatedOperator,
    assemble,
    check_self_adjointness,
    operator_lipschitz_constant,
    verify_modulation_identity,
)
from .specfile import load_spec, parse_spec  # noqa: E402
from .spectral import (  # noqa: E402
    BandStructure,
    ClusterDecomposition,
    SpectrumAtT,
    cluster_multiplicities,
    compute_bands,
    count_in_interval,
    eigen_decompose,
    min_cluster_gap,
    theorem1_certificate,
)

__all__ = [
    "__version__",
    "BandkitError", "CertificationFailure", "NumericalFailure", "SpecParseError", "SpecValidationError",
    "GapResult", "directed_gap", "gap", "gap_continuity_scan", "graph_projection",
    "Lattice", "QuasimomentumPath", "build_lattice", "enumerate_dual_points", "reduce_to_fundamental", "sample_path",
    "FourierCoefficient", "OperatorSpec", "TruncatedOperator", "assemble", "check_self_adjointness",
    "operator_lipschitz_constant", "verify_modulation_identity",
    "load_spec", "parse_spec",
    "BandStructure", "ClusterDecomposition", "SpectrumAtT", "cluster_multiplicities", "compute_bands",
    "count_in_interval", "eigen_decompose", "min_cluster_gap", "theorem1_certificate",
]

"""Reference operators used throughout the tests and the bundled spec files."""

from __future__ import annotations

import numpy as np

from .lattice import Lattice, build_lattice
from .operator import FourierCoefficient, OperatorSpec


def free_laplacian(d: int = 1, period: float = 2 * np.pi) -> tuple[OperatorSpec, Lattice]:
    """``-Delta`` on the cubic lattice ``period * Z^d`` (dual lattice ``(2 pi / period) Z^d``)."""
    principal = {}
    for i in range(d):
        alpha = [0] * d
        alpha[i] = 2
        principal[tuple(alpha)] = 1.0
    spec = OperatorSpec(d=d, m=1, s=1, principal=principal)
    return spec, build_lattice(period * np.eye(d))


def mathieu(q: float) -> tuple[OperatorSpec, Lattice]:
    """``-u'' + 2 q cos(x) u`` on ``2 pi Z``.

    With ``x = 2z`` this is the Mathieu equation ``y'' + (a - 2 (4q) cos 2z) y = 0``
    with ``a = 4 lambda``, so the bottom of the spectrum at ``t = 0`` is
    ``a_0(4q) / 4``.
    """
    terms = (
        FourierCoefficient((1,), [[q]]),
        FourierCoefficient((-1,), [[q]]),
    )
    spec = OperatorSpec(d=1, m=1, s=1, principal={(2,): 1.0}, lower={(0,): terms})
    return spec, build_lattice([[2 * np.pi]])


def direct_sum(first: OperatorSpec, second: OperatorSpec) -> OperatorSpec:
    """Block-diagonal system ``first (+) second``; both must share one principal part."""
    if first.d != second.d or first.s != second.s or first.principal != second.principal:
        raise ValueError("direct sum needs equal d, s and principal coefficients")
    m1, m2 = first.m, second.m
    m = m1 + m2

    def embed(mat, offset, size):
        out = np.zeros((m, m), dtype=complex)
        out[offset:offset + size, offset:offset + size] = mat
        return out

    lower: dict = {}
    for spec, off in ((first, 0), (second, m1)):
        for alpha, terms in spec.lower.items():
            lower.setdefault(alpha, [])
            lower[alpha].extend(FourierCoefficient(t.frequency, embed(t.matrix, off, spec.m)) for t in terms)
    mult: dict = {}
    for spec, off in ((first, 0), (second, m1)):
        for gamma, b in spec.multiplier.items():
            mult[gamma] = mult.get(gamma, np.zeros((m, m), dtype=complex)) + embed(b, off, spec.m)
    return OperatorSpec(
        d=first.d,
        m=m,
        s=first.s,
        principal=dict(first.principal),
        lower={a: tuple(v) for a, v in lower.items()},
        multiplier=mult,
    )

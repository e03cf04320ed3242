import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bandkit.errors import NonSelfAdjointError, SpecValidationError, UnsupportedShiftError
from bandkit.lattice import build_lattice
from bandkit.models import direct_sum, free_laplacian, mathieu
from bandkit.operator import (
    FourierCoefficient,
    OperatorSpec,
    assemble,
    check_self_adjointness,
    hermiticity_defect,
    operator_lipschitz_constant,
    verify_modulation_identity,
)


def random_hermitian_potential(rng, m, freqs):
    """Lower-order (alpha = 0) Fourier series with Qhat(-eta) = Qhat(eta)^*."""
    terms = []
    for eta in freqs:
        Q = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        terms.append(FourierCoefficient(tuple(eta), Q))
        terms.append(FourierCoefficient(tuple(-e for e in eta), Q.conj().T))
    H = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    terms.append(FourierCoefficient((0,) * len(freqs[0]), H + H.conj().T))
    return terms


def test_free_diagonal_closed_form(free1):
    spec, lat = free1
    op = assemble(spec, lat, 0.25, 1.0)
    np.testing.assert_array_equal(np.diag(op.matrix).real, [0.5625, 0.0625, 1.5625])
    assert np.count_nonzero(op.matrix - np.diag(np.diag(op.matrix))) == 0


def test_mathieu_is_tridiagonal(mathieu1):
    spec, lat = mathieu1
    op = assemble(spec, lat, 0.0, 3.0)
    M = op.matrix.real
    np.testing.assert_array_equal(np.diag(M), [9, 4, 1, 0, 1, 4, 9])
    np.testing.assert_array_equal(np.diag(M, 1), np.ones(6))
    np.testing.assert_array_equal(np.diag(M, -1), np.ones(6))
    assert np.count_nonzero(np.triu(M, 2)) == 0


def test_basis_order_and_index(mathieu1):
    spec, lat = mathieu1
    op = assemble(spec, lat, 0.1, 2.0)
    assert op.size == 5
    assert op.index_of((0,)) == 2
    assert op.basis[0] == ((-2,), 0)


def test_two_component_basis_is_gamma_major():
    spec = direct_sum(mathieu(1.0)[0], mathieu(0.5)[0])
    lat = build_lattice([[2 * np.pi]])
    op = assemble(spec, lat, 0.0, 1.0)
    assert op.size == 6
    assert [b for b in op.basis[:2]] == [((-1,), 0), ((-1,), 1)]
    assert op.index_of((0,), 1) == 3


def test_direct_sum_spectrum_is_union():
    a, lat = mathieu(1.0)
    b, _ = mathieu(0.3)
    both = direct_sum(a, b)
    t, cut = 0.17, 8.0
    ev = np.linalg.eigvalsh(assemble(both, lat, t, cut).matrix)
    union = np.sort(np.concatenate([np.linalg.eigvalsh(assemble(x, lat, t, cut).matrix) for x in (a, b)]))
    np.testing.assert_allclose(ev, union, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(-0.5, 0.5))
@settings(max_examples=25, deadline=None)
def test_hermitian_for_conjugate_symmetric_data(seed, t):
    rng = np.random.default_rng(seed)
    spec = OperatorSpec(d=1, m=2, s=1, principal={(2,): 1.0},
                        lower={(0,): random_hermitian_potential(rng, 2, [(1,), (2,)])})
    lat = build_lattice([[2 * np.pi]])
    op = assemble(spec, lat, t, 4.0)
    assert hermiticity_defect(op.matrix) == 0.0


def test_nonhermitian_potential_rejected():
    spec = OperatorSpec(d=1, m=1, s=1, principal={(2,): 1.0}, lower={(0,): [FourierCoefficient((1,), [[1.0]])]})
    lat = build_lattice([[2 * np.pi]])
    with pytest.raises(NonSelfAdjointError):
        assemble(spec, lat, 0.1, 3.0)
    report = check_self_adjointness(spec, lat, [0.0, 0.2], 3.0)
    assert not report.passed
    assert report.max_defect == pytest.approx(1.0 / 9.0)


def test_nonhermitian_multiplier_rejected():
    with pytest.raises(NonSelfAdjointError):
        OperatorSpec(d=1, m=2, s=1, principal={(2,): 1.0}, multiplier={(0,): [[0, 1], [0, 0]]})


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(principal={(1,): 1.0}),
        dict(principal={(2,): 1.0 + 1.0j}),
        dict(principal={(2,): 1.0}, lower={(2,): [FourierCoefficient((0,), [[1.0]])]}),
        dict(principal={(2, 0): 1.0}),
    ],
)
def test_spec_validation(kwargs):
    with pytest.raises(SpecValidationError):
        OperatorSpec(d=1, m=1, s=1, **kwargs)


def test_check_self_adjointness_passes_on_mathieu(mathieu1):
    spec, lat = mathieu1
    rep = check_self_adjointness(spec, lat, np.linspace(-0.5, 0.4, 7), 8.0)
    assert rep.passed and rep.max_defect == 0.0


def test_entries_are_polynomial_in_t(mathieu1):
    # second difference of a quadratic symbol is exactly 2 on the diagonal
    spec, lat = mathieu1
    h, t = 0.125, 0.25
    M = [assemble(spec, lat, t + k * h, 6.0).matrix for k in (-1, 0, 1)]
    second = (M[0] - 2 * M[1] + M[2]) / h ** 2
    np.testing.assert_allclose(second, 2 * np.eye(len(second)), atol=1e-12)


def test_modulation_identity_holds(mathieu1, rng):
    spec, lat = mathieu1
    cutoff = 12.0
    op = assemble(spec, lat, 0.3, cutoff)
    u = np.zeros(op.size, dtype=complex)
    for g in range(-3, 4):
        u[op.index_of((g,))] = rng.standard_normal() + 1j * rng.standard_normal()
    for dg in (1, -2, 5):
        assert verify_modulation_identity(spec, lat, 0.3, [dg], u, cutoff) < 1e-12


def test_modulation_identity_2d(rng):
    lat = build_lattice([[1.0, 0.0], [0.3, 1.2]])
    pot = random_hermitian_potential(rng, 1, [(1, 0), (0, 1), (1, -1)])
    spec = OperatorSpec(d=2, m=1, s=1, principal={(2, 0): 1.0, (0, 2): 1.0, (1, 1): 0.3}, lower={(0, 0): pot})
    cutoff = 30.0
    op = assemble(spec, lat, [0.4, -0.2], cutoff)
    u = np.zeros(op.size, dtype=complex)
    for g in [(0, 0), (1, 0), (0, -1)]:
        u[op.index_of(g)] = 1.0
    assert verify_modulation_identity(spec, lat, [0.4, -0.2], [1, 1], u, cutoff) < 1e-10


def test_modulation_identity_rejects_edge_support(mathieu1):
    spec, lat = mathieu1
    op = assemble(spec, lat, 0.0, 4.0)
    u = np.zeros(op.size)
    u[op.index_of((4,))] = 1.0
    with pytest.raises(UnsupportedShiftError):
        verify_modulation_identity(spec, lat, 0.0, [1], u, 4.0)


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
@settings(max_examples=30, deadline=None)
def test_lipschitz_constant_free_closed_form(t, tp):
    assume(abs(t - tp) > 1e-3)
    spec, lat = free_laplacian(1)
    K = 5
    C = operator_lipschitz_constant(spec, lat, [(t, tp)], K)
    # M(t) - M(t') = diag((t - t')(2 gamma + t + t')), largest at gamma = +-K
    assert C == pytest.approx(2 * K + abs(t + tp), rel=1e-9, abs=1e-9)


def test_lipschitz_needs_distinct_pair(free1):
    spec, lat = free1
    with pytest.raises(ValueError):
        operator_lipschitz_constant(spec, lat, [(0.1, 0.1)], 3)


def test_cutoff_must_cover_frequencies():
    spec, lat = mathieu(1.0)
    spec2 = OperatorSpec(d=1, m=1, s=1, principal={(2,): 1.0},
                         lower={(0,): [FourierCoefficient((5,), [[1.0]]), FourierCoefficient((-5,), [[1.0]])]})
    with pytest.raises(ValueError):
        assemble(spec2, lat, 0.0, 2.0)


def test_free_and_mathieu_small_examples(free1, mathieu1):
    spec, lat = free1
    np.testing.assert_array_equal(assemble(spec, lat, 0.0, 1.5).matrix, np.diag([1.0, 0.0, 1.0]))
    spec, lat = mathieu1
    np.testing.assert_array_equal(assemble(spec, lat, 0.0, 1.5).matrix, [[1, 1, 0], [1, 0, 1], [0, 1, 1]])


def test_two_component_diagonal_multiplier_passes():
    spec = OperatorSpec(d=1, m=2, s=1, principal={(2,): 1.0}, multiplier={(0,): np.diag([1.0, -1.0])})
    lat = build_lattice([[2 * np.pi]])
    assert check_self_adjointness(spec, lat, [0.0, 0.3], 2.0).passed


def test_free_modulation_example(free1):
    spec, lat = free1
    op = assemble(spec, lat, 0.2, 4.0)
    u = np.zeros(op.size)
    u[op.index_of((0,))] = 1.0
    assert verify_modulation_identity(spec, lat, 0.2, [1], u, 4.0) <= 1e-15


def test_lipschitz_example_region(free1):
    spec, lat = free1
    ts = np.linspace(0, 0.5, 6)
    pairs = [(a, b) for a in ts for b in ts]
    assert operator_lipschitz_constant(spec, lat, pairs, 1.5) <= 3.0 + 1e-12


def test_shift_covariance_of_spectrum(mathieu1):
    spec, lat = mathieu1
    N = 65
    a = np.linalg.eigvalsh(assemble(spec, lat, 0.2, 32.0).matrix)[: N // 2]
    b = np.linalg.eigvalsh(assemble(spec, lat, 1.2, 32.0).matrix)[: N // 2]
    np.testing.assert_allclose(a[:10], b[:10], atol=1e-10)

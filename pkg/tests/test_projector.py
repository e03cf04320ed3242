import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bandkit.spectral as spectral_mod
from bandkit.errors import (
    AlignmentUndefinedError,
    ContourCollisionError,
    CountingViolationError,
    OverlapBelowThresholdError,
    SimplicityViolationError,
)
from bandkit.models import mathieu
from bandkit.operator import assemble
from bandkit.projector import (
    BlochVector,
    Contour,
    align_phase_to_planewave,
    align_phase_to_reference,
    bloch_continuity_scan,
    bloch_distances_to,
    bloch_vector,
    overlap_scan,
    overlap_with_planewave,
    projector_continuity_scan,
    riesz_projector_eigen,
    riesz_projector_quadrature,
)
from bandkit.spectral import SpectrumAtT, eigen_decompose


def random_hermitian_with_spectrum(rng, lam):
    n = len(lam)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    return Q @ np.diag(lam) @ Q.conj().T, Q


def unit(rng, n):
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def test_quadrature_matches_eigenprojector(rng):
    lam = np.array([-1.0, 0.0, 0.0, 0.3, 2.0, 5.0])
    A, Q = random_hermitian_with_spectrum(rng, lam)
    P = riesz_projector_quadrature(A, Contour(0.0, 0.15), nodes=64)
    exact = Q[:, 1:3] @ Q[:, 1:3].conj().T
    np.testing.assert_allclose(P, exact, atol=1e-12)
    np.testing.assert_allclose(P @ P, P, atol=1e-12)
    assert np.trace(P).real == pytest.approx(2.0)


def test_quadrature_sign_convention(rng):
    # enclosing every eigenvalue must give +I, not -I
    A, _ = random_hermitian_with_spectrum(rng, np.array([0.0, 1.0, 2.0]))
    np.testing.assert_allclose(riesz_projector_quadrature(A, Contour(1.0, 3.0)), np.eye(3), atol=1e-10)


def test_empty_contour_gives_zero(rng):
    A, _ = random_hermitian_with_spectrum(rng, np.array([0.0, 1.0, 2.0]))
    np.testing.assert_allclose(riesz_projector_quadrature(A, Contour(10.0, 1.0)), 0, atol=1e-12)


def test_contour_collision(rng):
    A, _ = random_hermitian_with_spectrum(rng, np.array([0.0, 1.0]))
    with pytest.raises(ContourCollisionError):
        riesz_projector_quadrature(A, Contour(0.5, 0.5))
    with pytest.raises(ValueError):
        Contour(0.0, -1.0)


def test_eigen_projector_free_degenerate(free1):
    spec, lat = free1
    s = eigen_decompose(assemble(spec, lat, 0.0, 4.0))
    P = riesz_projector_eigen(s, 2)
    op = s.operator
    expected = np.zeros((op.size, op.size))
    for g in (-1, 1):
        expected[op.index_of((g,)), op.index_of((g,))] = 1
    np.testing.assert_allclose(P, expected, atol=1e-14)


@given(st.integers(0, 2**32 - 1), st.floats(0, 2 * np.pi))
@settings(max_examples=50, deadline=None)
def test_reference_alignment_is_optimal(seed, theta):
    rng = np.random.default_rng(seed)
    ref = BlochVector(unit(rng, 6), np.zeros(1), 1)
    psi = BlochVector(unit(rng, 6), np.zeros(1), 1)
    aligned = align_phase_to_reference(psi, ref)
    ov = abs(np.vdot(psi.coefficients, ref.coefficients))
    dist = np.linalg.norm(aligned.coefficients - ref.coefficients)
    assert dist == pytest.approx(np.sqrt(max(0.0, 2 - 2 * ov)), abs=1e-9)
    assert dist <= np.linalg.norm(np.exp(1j * theta) * psi.coefficients - ref.coefficients) + 1e-12
    assert aligned.convention == "reference-aligned"
    assert np.vdot(ref.coefficients, aligned.coefficients).imag == pytest.approx(0.0, abs=1e-12)


def test_reference_alignment_undefined_for_orthogonal():
    a = BlochVector(np.array([1.0, 0.0], dtype=complex), np.zeros(1), 1)
    b = BlochVector(np.array([0.0, 1.0], dtype=complex), np.zeros(1), 1)
    with pytest.raises(AlignmentUndefinedError):
        align_phase_to_reference(a, b)


def test_planewave_alignment(mathieu1):
    spec, lat = mathieu1
    s = eigen_decompose(assemble(spec, lat, 0.2, 8.0))
    psi = bloch_vector(s, 1)
    rotated = BlochVector(psi.coefficients * np.exp(0.7j), psi.t, 1, zero_index=psi.zero_index)
    out = align_phase_to_planewave(rotated, 1e-3)
    u0 = overlap_with_planewave(out)
    assert u0.imag == pytest.approx(0.0, abs=1e-15) and u0.real > 0
    assert abs(u0) == pytest.approx(abs(overlap_with_planewave(psi)))
    with pytest.raises(OverlapBelowThresholdError):
        align_phase_to_planewave(rotated, 0.999)


def test_planewave_overlap_needs_scalar():
    with pytest.raises(ValueError):
        overlap_with_planewave(BlochVector(np.ones(2, dtype=complex), np.zeros(1), 1))


def test_free_bloch_vector_is_planewave(free1):
    spec, lat = free1
    psi = bloch_vector(eigen_decompose(assemble(spec, lat, 0.3, 4.0)), 1)
    assert abs(overlap_with_planewave(psi)) == pytest.approx(1.0)


def test_overlap_scan_mathieu():
    spec, lat = mathieu(0.1)
    rep = overlap_scan(spec, lat, np.linspace(-0.4, 0.4, 9), 1, 16.0, threshold=0.5)
    assert rep.passed
    assert rep.values.max() <= 1.0 + 1e-12
    assert rep.to_dict()["pass"]


def test_projector_scan_free_degenerate_is_exact(free1):
    spec, lat = free1
    # from 2^-5 on the split pair (1 -+ t)^2 stays inside the quarter-gap window
    seq = [2.0 ** -i for i in range(5, 11)] + [1e-7]
    scan = projector_continuity_scan(spec, lat, 0.0, seq, 2, 16.0)
    assert scan.rank == 2
    np.testing.assert_allclose(scan.distances, 0.0, atol=1e-14)
    assert np.all(scan.quadrature_agreement < 1e-10)


def test_projector_scan_mathieu_linear(mathieu1):
    spec, lat = mathieu1
    steps = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7]
    scan = projector_continuity_scan(spec, lat, 0.25, [0.25 + h for h in steps], 1, 32.0)
    ratios = scan.distances / scan.steps
    assert ratios.max() / ratios.min() < 1.1
    assert scan.distances[-1] < 1e-6
    assert np.all(scan.quadrature_agreement < 1e-8)


def test_projector_scan_counting_violation_and_tail(free1):
    spec, lat = free1
    seq = [0.3, 0.01, 0.001]
    with pytest.raises(CountingViolationError):
        projector_continuity_scan(spec, lat, 0.0, seq, 2, 8.0)
    scan = projector_continuity_scan(spec, lat, 0.0, seq, 2, 8.0, tail_only=True)
    assert scan.first_index == 1 and len(scan.distances) == 2
    with pytest.raises(CountingViolationError):
        projector_continuity_scan(spec, lat, 0.0, [0.01, 0.3], 2, 8.0, tail_only=True)


def test_bloch_scan_conventions(mathieu1):
    spec, lat = mathieu1
    path = np.linspace(0.05, 0.45, 9)
    ref = bloch_continuity_scan(spec, lat, path, 1, 16.0, "reference")
    pw = bloch_continuity_scan(spec, lat, path, 1, 16.0, "planewave")
    assert set(pw.conventions_used) == {"planewave"}
    assert np.all(ref.differences <= ref.raw_differences + 1e-12)
    assert np.all(ref.differences < 0.2)
    assert np.all(np.abs(pw.overlaps) > 1e-3)


def test_raw_convention_is_negative_control(mathieu1, monkeypatch):
    # scramble eigenvector phases the way a different eigensolver might
    rng = np.random.default_rng(3)
    original = spectral_mod.eigen_decompose

    def scrambled(op):
        s = original(op)
        phases = np.exp(2j * np.pi * rng.random(len(s)))
        return SpectrumAtT(s.t, s.eigenvalues, s.eigenvectors * phases, s.operator)

    monkeypatch.setattr(spectral_mod, "eigen_decompose", scrambled)
    spec, lat = mathieu1
    path = np.linspace(0.1, 0.2, 6)
    ref = bloch_continuity_scan(spec, lat, path, 2, 16.0, "reference")
    pw = bloch_continuity_scan(spec, lat, path, 2, 16.0, "planewave")
    assert ref.raw_differences.max() > 0.3
    assert np.all(ref.differences <= ref.raw_differences + 1e-12)
    assert ref.differences.max() < 0.1
    np.testing.assert_allclose(pw.differences, ref.differences, atol=1e-8)


def test_planewave_falls_back_to_reference(mathieu1):
    spec, lat = mathieu1
    scan = bloch_continuity_scan(spec, lat, [0.3, 0.15, 0.1], 2, 16.0, "planewave", epsilon=0.25)
    ov = scan.overlaps
    assert scan.conventions_used == ["planewave", "reference", "reference"]
    assert all(c == ("planewave" if o > 0.25 else "reference") for c, o in zip(scan.conventions_used, ov))


def test_planewave_first_sample_below_threshold_anchors(mathieu1):
    spec, lat = mathieu1
    scan = bloch_continuity_scan(spec, lat, [0.2, 0.21], 1, 16.0, "planewave", epsilon=0.9999)
    assert scan.conventions_used == ["reference", "reference"]
    ref = bloch_continuity_scan(spec, lat, [0.2, 0.21], 1, 16.0, "reference")
    np.testing.assert_allclose(scan.differences, ref.differences, atol=1e-14)


def test_planewave_on_orthogonal_band(free1):
    # band 2 at t = 0.25 is exp(-ix), orthogonal to exp(itx): reference rule throughout
    spec, lat = free1
    scan = bloch_continuity_scan(spec, lat, [0.25, 0.2500001], 2, 8.0, "planewave")
    assert scan.overlaps[0] == 0.0
    assert scan.conventions_used == ["reference", "reference"]
    assert scan.differences[0] < 1e-12


def test_bloch_scan_requires_simple_band(free1):
    spec, lat = free1
    with pytest.raises(SimplicityViolationError):
        bloch_continuity_scan(spec, lat, [0.0, 0.1], 2, 8.0)
    with pytest.raises(ValueError):
        bloch_continuity_scan(spec, lat, [0.1, 0.2], 1, 8.0, "nonsense")


def test_bloch_distances_linear(mathieu1):
    spec, lat = mathieu1
    seq = [0.25 + 10.0 ** -k for k in range(3, 8)]
    for conv in ("reference", "planewave"):
        scan = bloch_distances_to(spec, lat, 0.25, seq, 1, 32.0, conv)
        assert scan.differences[-1] < 1e-6
        r = scan.differences / scan.steps
        assert r.max() / r.min() < 1.1


def test_weak_potential_overlap_above_half_away_from_zone_edge():
    # the overlap bound holds on 0.1 <= |t| <= 0.4997; at the zone edge the
    # two lowest plane waves mix almost equally and it dips just below 1/2
    spec, lat = mathieu(0.1)
    ts = np.concatenate([np.linspace(-0.4997, -0.1, 200), np.linspace(0.1, 0.4997, 200)])
    assert np.all(overlap_scan(spec, lat, ts, 1, 32.0).values ** 2 > 0.5)
    edge = overlap_scan(spec, lat, [-0.5], 1, 32.0).values[0] ** 2
    assert edge == pytest.approx(0.498872, abs=1e-6)


def test_planewave_rotation_example():
    c = np.zeros(3, dtype=complex)
    c[1] = 0.9 * (1 + 1j) / np.sqrt(2)
    c[0] = np.sqrt(1 - 0.81)
    psi = BlochVector(c, np.zeros(1), 1, zero_index=1)
    out = align_phase_to_planewave(psi, 1e-3)
    assert out.coefficients[1] == pytest.approx(0.9, abs=1e-15)
    assert out.convention == "planewave-aligned"
    assert np.linalg.norm(out.coefficients) == pytest.approx(1.0)


def test_weak_mathieu_quarter_point_alignment():
    spec, lat = mathieu(0.1)
    psi = bloch_vector(eigen_decompose(assemble(spec, lat, 0.25, 32.0)), 1)
    assert abs(overlap_with_planewave(psi)) ** 2 > 0.5
    assert overlap_with_planewave(align_phase_to_planewave(psi)).real > 0


def test_riesz_diagonal_examples():
    A = np.diag([0.0, 2.0])
    np.testing.assert_allclose(riesz_projector_quadrature(A, Contour(0.0, 1.0)), np.diag([1.0, 0.0]), atol=1e-12)
    np.testing.assert_allclose(riesz_projector_quadrature(A, Contour(1.0, 2.0)), np.eye(2), atol=1e-12)


def test_cluster_projectors_resolve_identity(mathieu1):
    spec, lat = mathieu1
    s = eigen_decompose(assemble(spec, lat, 0.3, 4.0))
    total = sum(riesz_projector_eigen(s, j) for j in range(1, len(np.unique(np.round(s.eigenvalues, 8))) + 1))
    np.testing.assert_allclose(total, np.eye(len(s.eigenvalues)), atol=1e-10)


def test_reference_alignment_undoes_global_phase(rng):
    v = unit(rng, 7)
    ref = BlochVector(v, np.zeros(1), 1)
    out = align_phase_to_reference(BlochVector(1j * v, np.zeros(1), 1), ref)
    np.testing.assert_allclose(out.coefficients, v, atol=1e-15)


def test_overlap_cutoff_and_phase_invariance(rng):
    spec, lat = mathieu(0.1)
    a = overlap_scan(spec, lat, [0.3], 1, 32.0).values
    b = overlap_scan(spec, lat, [0.3], 1, 64.0).values
    assert abs(a[0] - b[0]) < 1e-8
    s = eigen_decompose(assemble(spec, lat, 0.3, 8.0))
    psi = bloch_vector(s, 1)
    rotated = BlochVector(np.exp(0.7j) * psi.coefficients, psi.t, 1, zero_index=psi.zero_index)
    assert abs(overlap_with_planewave(rotated)) == pytest.approx(abs(overlap_with_planewave(psi)), abs=1e-15)


def test_projector_scan_constant_path(mathieu1):
    spec, lat = mathieu1
    scan = projector_continuity_scan(spec, lat, 0.25, [0.25] * 4, 1, 16.0)
    np.testing.assert_array_equal(scan.distances, 0.0)


def test_bloch_scan_free_planewave_exact(free1):
    spec, lat = free1
    seq = [0.25 + 2.0 ** -i for i in range(3, 11)]
    scan = bloch_distances_to(spec, lat, 0.25, seq, 1, 16.0, "planewave")
    np.testing.assert_allclose(scan.differences, 0.0, atol=1e-14)


def test_bloch_scan_mathieu_step_halving(mathieu1):
    spec, lat = mathieu1
    seq = [0.25 + 2.0 ** -i for i in range(6, 12)]
    d = bloch_distances_to(spec, lat, 0.25, seq, 1, 32.0, "reference").differences
    r = d[1:] / d[:-1]
    assert np.all((r >= 0.4) & (r <= 0.6))

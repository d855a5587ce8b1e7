import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taufix import fock
from taufix.contraction import MapSpec, affine_map, iterate_fixed_point, sandwich_map
from taufix.errors import CertificateError, PreconditionError
from taufix.family import (
    FamilySpec,
    fixed_point_net,
    is_shrinking,
    limit_map,
    power_gap_check,
    fixed_point_gap_bound,
    richardson_limit,
    tail_maxima,
    verify_commuting,
    verify_strong_cauchy,
    verify_uniform,
)
from taufix.seminorm import IDENTITY, Lift, Panel

from conftest import random_op

D = 12
H = fock.shifted_hamiltonian(D, 4)
PANEL = Panel.default(H)
ALPHAS = (0.9, 0.7, 0.5)


def sandwich_family(alphas=ALPHAS, i=0, j=0, gen=H):
    return FamilySpec(alphas, [sandwich_map(a, i, j, gen) for a in alphas], Lift(i, j),
                      c_of_alpha=lambda a: a)


def test_richardson_exact_on_quadratics():
    a = np.array([0.4, 0.2, 0.1])
    assert richardson_limit(a, 3 + 2 * a - a**2) == pytest.approx(3.0, abs=1e-12)
    assert richardson_limit([0.5], [0.7]) == 0.7
    assert richardson_limit([0.9, 0.7, 0.5], [0.9, 0.7, 0.5]) == pytest.approx(0.0, abs=1e-12)


def test_tail_maxima_and_shrinking():
    t = np.array([[0, 3, 2], [3, 0, 1], [2, 1, 0]], dtype=float)
    np.testing.assert_array_equal(tail_maxima(t), [3.0, 1.0])
    assert is_shrinking([3, 1, 0, 0])
    assert not is_shrinking([1, 1])
    assert not is_shrinking([1, 2])


def test_family_validation():
    T = sandwich_map(0.5, 0, 0, H)
    with pytest.raises(PreconditionError):
        FamilySpec((0.5, 0.7), [T, T], IDENTITY)
    with pytest.raises(PreconditionError):
        FamilySpec((0.9, 0.5), [T, sandwich_map(0.5, 1, 0, H)], IDENTITY)
    with pytest.raises(PreconditionError):
        FamilySpec((0.9,), [T], IDENTITY, c_of_alpha=lambda a: a)


def test_c_of_alpha_matches_members():
    fam = sandwich_family()
    np.testing.assert_allclose(fam.constants, ALPHAS, atol=1e-12)


def test_c_minus_falls_back_when_extrapolation_leaves_unit_interval():
    # c = alpha extrapolates to 0, outside (0, 1)
    assert sandwich_family().c_minus == 0.5


def test_c_minus_extrapolated():
    alphas = (0.4, 0.2, 0.1)
    maps = [sandwich_map(0.5 + a / 4, 0, 0, H) for a in alphas]
    fam = FamilySpec(alphas, maps, IDENTITY)
    assert fam.c_minus == pytest.approx(0.5, abs=1e-12)


def test_verify_uniform_sandwich(rng):
    samples = [(random_op(rng, D), random_op(rng, D)) for _ in range(4)]
    chk = verify_uniform(sandwich_family(), samples, PANEL)
    assert chk.certified
    assert all(w["ok"] for w in chk.words)
    single = FamilySpec((0.5,), [sandwich_map(0.5, 0, 0, H)], IDENTITY)
    assert verify_uniform(single, samples, PANEL, n_words=0).certified


def test_verify_uniform_weak_words(rng):
    gen = fock.number_op(D) / 10 + 0.1 * np.eye(D)
    fam = sandwich_family(i=1, j=1, gen=gen)
    samples = [(random_op(rng, D), np.zeros((D, D))) for _ in range(3)]
    assert verify_uniform(fam, samples, Panel.default(gen)).certified


def test_strong_cauchy_sandwich(rng):
    y = random_op(rng, D)
    rep = verify_strong_cauchy(sandwich_family(), [y], PANEL)
    assert rep.certified
    ref = PANEL.evaluate(y)
    np.testing.assert_allclose(rep.table[0, :, 0, 2], 0.4 * ref, rtol=1e-12)
    np.testing.assert_allclose(rep.tails[0, :, 0], 0.4 * ref, rtol=1e-12)
    zero = verify_strong_cauchy(sandwich_family(), [np.zeros((D, D))], PANEL)
    assert not np.any(zero.table)


def test_strong_cauchy_constant_family(rng):
    T = sandwich_map(0.5, 0, 0, H)
    fam = FamilySpec((0.9, 0.5), [T, T], IDENTITY)
    rep = verify_strong_cauchy(fam, [random_op(rng, D)], PANEL)
    assert not np.any(rep.table)


def test_commuting_sandwich(rng):
    fam = sandwich_family(i=1, j=2, gen=fock.number_op(D) / 20)
    rep = verify_commuting(fam, [random_op(rng, D)], Panel.default(fock.number_op(D)))
    assert rep.exact and rep.admissible
    single = FamilySpec((0.5,), [sandwich_map(0.5, 0, 0, H)], IDENTITY)
    assert verify_commuting(single, [random_op(rng, D)], PANEL).exact


def test_commuting_detects_noncommuting(rng):
    B = random_op(rng, D)
    maps = [affine_map(sandwich_map(a, 0, 0, H), a * B) for a in ALPHAS]
    rep = verify_commuting(FamilySpec(ALPHAS, maps, IDENTITY), [random_op(rng, D)], PANEL)
    assert not rep.exact


def test_limit_map(rng):
    fam = sandwich_family()
    with pytest.raises(CertificateError):
        limit_map(fam, None)
    T = limit_map(fam, verify_strong_cauchy(fam, [random_op(rng, D)], PANEL))
    assert T.c == 0.5 and T.transport == IDENTITY
    x = random_op(rng, D)
    np.testing.assert_array_equal(T(x), fam.maps[-1](x))


def test_fixed_point_net_sandwich(rng):
    fam = sandwich_family()
    rep = fixed_point_net(fam, random_op(rng, D), PANEL, tol=1e-10)
    for x in rep.fixed_points:
        assert PANEL.sup(x) <= 1e-10
    assert rep.limit_residual <= 1e-10
    assert all(e["member"] for e in rep.intersection)


def test_fixed_point_net_identical_members(rng):
    T = sandwich_map(0.5, 0, 0, H)
    B = random_op(rng, D)
    T = affine_map(T, B)
    rep = fixed_point_net(FamilySpec((0.9, 0.5), [T, T], IDENTITY), np.zeros((D, D)), PANEL)
    assert not np.any(rep.table)


def test_fixed_point_net_intersection_failure(rng):
    with pytest.raises(CertificateError):
        fixed_point_net(sandwich_family(), 10 * np.eye(D), PANEL, L=1e-3)


def test_fixed_point_net_offsets_converge_to_limit(rng):
    # T_a x = 0.5 x + (1 + a) B has fixed point 2 (1 + a) B
    B = random_op(rng, D, 0.1)
    alphas = (0.4, 0.2, 0.1, 0.05)
    maps = [affine_map(sandwich_map(0.5, 0, 0, H), (1 + a) * B) for a in alphas]
    fam = FamilySpec(alphas, maps, IDENTITY)
    T = affine_map(sandwich_map(0.5, 0, 0, H), B)
    rep = fixed_point_net(fam, np.zeros((D, D)), PANEL, tol=1e-12, limit=T)
    assert rep.certified
    for a, x in zip(alphas, rep.fixed_points):
        np.testing.assert_allclose(x, 2 * (1 + a) * B, atol=1e-10)
    x_lim, _ = iterate_fixed_point(T, np.zeros((D, D)), PANEL, tol=1e-12)
    gaps = [PANEL.sup(x - x_lim) for x in rep.fixed_points]
    assert is_shrinking(gaps)


def test_gap_bound_trivial_cases(rng):
    T = sandwich_map(0.5, 0, 0, H)
    fam = FamilySpec((0.9, 0.5), [T, T], IDENTITY)
    z = np.zeros((D, D))
    chk = fixed_point_gap_bound(fam, 0.9, z, z, 0, T, PANEL)
    assert chk.holds and not np.any(chk.lhs) and not np.any(chk.rhs)
    scal = sandwich_family((0.9, 0.7))
    chk = fixed_point_gap_bound(scal, 0.9, z, z, 0, T, PANEL)
    assert chk.holds and not np.any(chk.rhs)


def test_gap_bound_rejects_weak_and_large_constants():
    T = sandwich_map(0.5, 0, 0, H)
    weak = sandwich_family(i=0, j=1)
    z = np.zeros((D, D))
    with pytest.raises(PreconditionError):
        fixed_point_gap_bound(weak, 0.95, z, z, 0, T, PANEL)
    with pytest.raises(PreconditionError):
        fixed_point_gap_bound(sandwich_family(), 0.8, z, z, 0, T, PANEL)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(0.1, 0.85))
def test_gap_bound_offset_family(seed, a):
    rng = np.random.default_rng(seed)
    B, Ba = random_op(rng, D), random_op(rng, D)
    Ta = affine_map(sandwich_map(a, 0, 0, H), Ba)
    T = affine_map(sandwich_map(0.5, 0, 0, H), B)
    fam = FamilySpec((a,), [Ta], IDENTITY)
    x, xa = B / 0.5, Ba / (1 - a)
    assert fixed_point_gap_bound(fam, 0.9, x, xa, 0, T, PANEL).holds


@pytest.mark.parametrize("m", [2, 3])
@pytest.mark.parametrize("ij", [(0, 0), (1, 1)])
def test_power_gap(rng, m, ij):
    gen = fock.number_op(D) / 10 + 0.1 * np.eye(D)
    fam = sandwich_family(i=ij[0], j=ij[1], gen=gen)
    ok, lhs, rhs = power_gap_check(fam, 0, 2, random_op(rng, D), Panel.default(gen), m)
    assert ok

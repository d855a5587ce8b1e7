import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taufix import fock
from taufix.blcert import (
    BlRecipe,
    certify,
    certify_start_point,
    construct_bl_element,
    construct_y,
    eligible_indices,
    uniform_recipe,
)
from taufix.contraction import affine_map, bl_membership, sandwich_map
from taufix.errors import CertificateError
from taufix.seminorm import Panel, SeminormIndex, Weight, in_c0, seminorm

from conftest import random_op

G5 = fock.number_op(64) / 5
PANEL = Panel.default(G5)


def test_eligible_indices_examples(caplog):
    assert eligible_indices(G5) == (0, 1, 2, 3, 4, 5)
    assert eligible_indices(fock.number_op(3)) == (0, 1)
    with caplog.at_level("WARNING"):
        assert eligible_indices(fock.shifted_hamiltonian(8, 4)) == ()
    assert "empty" in caplog.text


def test_uniform_recipe_element():
    recipe = uniform_recipe(G5, 1.0, 1.0)
    assert recipe.coeffs == tuple([1 / 6] * 6)
    X = construct_bl_element(recipe)
    expected = np.zeros(64)
    expected[:6] = 1 / 36
    np.testing.assert_allclose(np.diag(X), expected, atol=1e-15)
    np.testing.assert_allclose(construct_y(recipe) @ construct_y(recipe), X, atol=1e-15)
    cert = certify(recipe, PANEL)
    assert cert.certified
    assert recipe.bound == pytest.approx(1.0)
    assert all(e["value"] <= 1.0 for e in cert.entries)


def test_zero_coefficients():
    recipe = BlRecipe(G5, [0] * 6, 1.0, 1.0)
    X = construct_bl_element(recipe)
    assert not np.any(X)
    assert certify(recipe, PANEL).certified
    assert bl_membership(X, sandwich_map(0.5, 0, 0, G5), PANEL, 1e-300)


def test_single_coefficient_saturates():
    m, L = 2.0, 3.0
    recipe = BlRecipe(G5, [np.sqrt(L / m)] + [0] * 5, m, L)
    X = construct_bl_element(recipe)
    np.testing.assert_allclose(X[0, 0], L / m)
    assert recipe.bound == pytest.approx(L)
    cert = certify(recipe, Panel(G5, [SeminormIndex(Weight(1.0, 0, m), 0)]))
    assert cert.entries[0]["value"] == pytest.approx(L, rel=1e-12)


def test_recipe_validation():
    with pytest.raises(CertificateError):
        BlRecipe(G5, [1.0] * 6, 1.0, 1.0)
    with pytest.raises(CertificateError):
        BlRecipe(G5, [0.1] * 5, 1.0, 1.0)
    with pytest.raises(CertificateError):
        BlRecipe(G5, [0.0] * 6, 0.0, 1.0)


def test_c0_rescaling_is_reported():
    recipe = uniform_recipe(G5, 0.5, 1.0)
    panel = Panel(G5, [SeminormIndex(Weight(1.0), 0)])
    cert = certify(recipe, panel)
    assert cert.entries[0]["rescale"] == pytest.approx(0.5)
    assert cert.certified


@pytest.mark.parametrize("k", [0, 1, 2, 3, 5])
def test_y_grade_bound(k):
    recipe = uniform_recipe(G5, 1.0, 1.0)
    Y = construct_y(recipe)
    Gk = np.linalg.matrix_power(G5, k)
    assert fock.op_norm(Y @ Gk) <= recipe.coeff_sum * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(p=st.floats(0.1, 3), i=st.integers(0, 3), m=st.floats(0.1, 5),
       coeffs=st.lists(st.floats(0, 1), min_size=6, max_size=6))
def test_weight_y_bound(p, i, m, coeffs):
    recipe = BlRecipe(G5, coeffs, m, m * sum(coeffs) ** 2 + 1e-9)
    w = Weight(p, i)
    if not in_c0(w, recipe.points, m):
        return
    hY = np.diag(w(np.diag(G5).real)) @ construct_y(recipe)
    assert fock.op_norm(hY) <= m * recipe.coeff_sum * (1 + 1e-12) + 1e-300


def test_start_point_uniform_recipe():
    recipe = uniform_recipe(G5, 1.0, 1.0)
    X = construct_bl_element(recipe)
    T = sandwich_map(0.5, 0, 0, G5)
    cert = certify_start_point(X, T, PANEL)
    assert cert.L1 == pytest.approx(PANEL.sup(X), rel=1e-12)
    assert cert.radius == pytest.approx(1.5 * cert.L1, rel=1e-12)
    assert cert.certified and cert.direct_ok
    assert not certify_start_point(X, T, PANEL, L=1.4 * cert.L1).certified


def test_start_point_zero():
    T = sandwich_map(0.5, 0, 0, G5)
    z = np.zeros((64, 64))
    for L in (1e-9, 1.0):
        assert certify_start_point(z, T, PANEL, L=L).certified


def test_start_point_affine_shift(rng):
    B = random_op(rng, 64, 0.01)
    T = affine_map(sandwich_map(0.5, 0, 0, G5), B)
    X = construct_bl_element(uniform_recipe(G5, 1.0, 1.0))
    cert = certify_start_point(X, T, PANEL)
    assert cert.L2 == pytest.approx(PANEL.sup(B), rel=1e-12)
    assert cert.radius == pytest.approx(1.5 * cert.L1 + cert.L2, rel=1e-12)
    assert cert.direct_ok


def test_constructed_elements_are_members():
    for m, L in [(1.0, 1.0), (0.5, 2.0), (3.0, 0.3)]:
        X = construct_bl_element(uniform_recipe(G5, m, L))
        T = sandwich_map(0.3, 0, 0, G5)
        cert = certify_start_point(X, T, PANEL)
        assert bl_membership(X, T, PANEL, cert.L * (1 + 1e-12))

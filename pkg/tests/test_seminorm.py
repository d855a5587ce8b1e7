import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taufix import fock
from taufix.picard import OpTrajectory, TimeGrid
from taufix.seminorm import (
    Lift,
    Panel,
    SeminormIndex,
    Weight,
    c0_rescale,
    in_c0,
    lift_weight,
    seminorm,
    seminorm_max,
    seminorm_spectral_sum,
    sqrt_weight,
    sqrt_weight_bounds,
    trajectory_seminorm,
    truncation_margin,
)

from conftest import random_op

N64 = fock.number_op(64)
E1 = Weight(1.0)

# grid maxima and partial sums, computed independently in extended precision
ORACLE = {
    "sup_x2_exp": 0.5413411329464508,
    "max_l_exp": 0.36787944117144233,
    "sum_l_exp_64": 0.9206735942077923,
    "three_exp3": 0.14936120510359183,
    "margin_64": 2.746554300039741e-26,
    "margin_8_k3": 2.1894285992963934,
}


def test_lift_weight():
    assert lift_weight(E1, 0) == E1
    assert lift_weight(E1, 2) == Weight(1.0, 2)
    assert lift_weight(Weight(0.5, 1, 3.0), 2) == Weight(0.5, 3, 3.0)


def test_lift_composition():
    idx = SeminormIndex(E1, 1)
    assert Lift(1, 2).then(Lift(2, 0))(idx) == Lift(3, 2)(idx)
    assert (Lift(1, 1) ** 3)(idx) == SeminormIndex(Weight(1.0, 3), 4)
    assert Lift().is_identity


def test_weight_sup_closed_form():
    assert Weight(1.0, 2).sup() == pytest.approx(ORACLE["sup_x2_exp"], rel=1e-12)
    assert E1.sup(0) == 1.0


@pytest.mark.parametrize("p,i,k", [(1.0, 0, 2), (0.5, 1, 1), (2.0, 3, 0), (1.0, 0, 3)])
def test_weight_sup_matches_numeric_max(p, i, k):
    from scipy.optimize import minimize_scalar

    w = Weight(p, i)
    res = minimize_scalar(lambda x: -w(x) * x**k, bounds=(0, 50), method="bounded",
                          options={"xatol": 1e-12})
    assert -res.fun == pytest.approx(w.sup(k), rel=1e-9)


def test_weight_validation():
    with pytest.raises(ValueError):
        Weight(0.0)
    with pytest.raises(ValueError):
        Weight(1.0, -1)
    with pytest.raises(ValueError):
        SeminormIndex(E1, -2)


def test_seminorm_examples():
    assert seminorm(N64, SeminormIndex(E1, 0), N64) == pytest.approx(ORACLE["max_l_exp"], rel=1e-12)
    assert seminorm(fock.identity(64), SeminormIndex(E1, 2), N64) == pytest.approx(
        ORACLE["sup_x2_exp"], rel=1e-12)


@pytest.mark.parametrize("k", [0, 1, 3])
def test_seminorm_of_zero(k):
    assert seminorm(np.zeros((64, 64)), SeminormIndex(E1, k), N64) == 0.0


def test_seminorm_rejects_non_diagonal_generator():
    from taufix.errors import NotDiagonalError

    a, _ = fock.ladder_ops(4)
    with pytest.raises(NotDiagonalError):
        seminorm(np.eye(4), SeminormIndex(E1, 0), a)


def test_spectral_sum_examples():
    assert seminorm_spectral_sum(N64, SeminormIndex(E1, 0), N64) == pytest.approx(
        ORACLE["sum_l_exp_64"], rel=1e-12)
    assert seminorm_spectral_sum(np.zeros((64, 64)), SeminormIndex(E1, 0), N64) == 0.0
    E3 = fock.spectral_projector(N64, 3)
    assert seminorm_spectral_sum(E3, SeminormIndex(E1, 1), N64) == pytest.approx(
        ORACLE["three_exp3"], rel=1e-12)


def test_spectral_sum_degenerate():
    from taufix.errors import DegenerateSpectrumError

    with pytest.raises(DegenerateSpectrumError):
        seminorm_spectral_sum(np.eye(3), SeminormIndex(E1, 0), fock.diag_op([1.0, 1.0, 2.0]))


def test_panel_sup_examples():
    panel = Panel(N64, [SeminormIndex(E1, 0), SeminormIndex(E1, 2)])
    assert panel.sup(fock.identity(64)) == pytest.approx(1.0, rel=1e-12)
    assert panel.sup(np.zeros((64, 64))) == 0.0
    single = Panel(N64, [SeminormIndex(Weight(0.5), 1)])
    x = random_op(np.random.default_rng(1), 64)
    assert single.sup(x) == pytest.approx(seminorm(x, SeminormIndex(Weight(0.5), 1), N64),
                                          rel=1e-12)


def test_panel_needs_indices():
    from taufix.errors import PanelError

    with pytest.raises(PanelError):
        Panel(N64, [])


def test_truncation_margin_examples():
    assert truncation_margin(SeminormIndex(E1, 0), 64, N64) == pytest.approx(
        ORACLE["margin_64"], rel=1e-12)
    assert truncation_margin(SeminormIndex(Weight(1.0, 0, 0.0), 0), 64, N64) == 0.0
    N8 = fock.number_op(8)
    assert truncation_margin(SeminormIndex(E1, 3), 8, N8) == pytest.approx(
        ORACLE["margin_8_k3"], rel=1e-12)


def test_panel_margins_small_for_fast_rates(panel64):
    m = panel64.margins()
    fast = [j for j, idx in enumerate(panel64.indices) if idx.weight.p >= 1]
    assert np.all(m[fast] < 1e-20)


def test_c0_rescale_examples():
    f, w0 = c0_rescale(E1, [0.0, 1.0], 1.0)
    assert f == pytest.approx(1.0) and w0 == E1
    f, w0 = c0_rescale(Weight(1.0, 0, 2.0), [0.0], 1.0)
    assert f == pytest.approx(0.5) and w0 == Weight(1.0, 0, 1.0)
    f, w0 = c0_rescale(Weight(1.0, 1), [0.0], 1.0)
    assert f == 0.0 and w0.is_zero


@settings(max_examples=60, deadline=None)
@given(p=st.floats(0.1, 3), i=st.integers(0, 4), s=st.floats(1e-3, 1e3),
       pts=st.lists(st.floats(0, 20), min_size=1, max_size=6), m=st.floats(1e-2, 10))
def test_c0_rescale_lands_in_c0(p, i, s, pts, m):
    _, w0 = c0_rescale(Weight(p, i, s), pts, m)
    assert in_c0(w0, pts, m)


def test_sqrt_weight():
    w = Weight(1.0, 2, 4.0)
    r = sqrt_weight(w)
    x = np.linspace(0, 30, 301)
    np.testing.assert_allclose(r(x) ** 2, w(x), rtol=1e-12, atol=1e-300)
    with pytest.raises(ValueError):
        sqrt_weight(Weight(1.0, 1))


def test_sqrt_weight_bounds_enclose_odd_power():
    w = Weight(1.0, 3)
    lo, hi = sqrt_weight_bounds(w)
    x = np.linspace(1, 30, 200)
    true = np.sqrt(w(x))
    assert np.all(lo(x) <= true * (1 + 1e-12)) and np.all(true <= hi(x) * (1 + 1e-12))


def test_trajectory_seminorm_examples():
    grid = TimeGrid(1.0, 11)
    idx = SeminormIndex(E1, 0)
    x = random_op(np.random.default_rng(3), 8)
    N8 = fock.number_op(8)
    const = OpTrajectory.constant(grid, x)
    assert trajectory_seminorm(const, idx, N8) == pytest.approx(seminorm(x, idx, N8), rel=1e-12)
    assert trajectory_seminorm(OpTrajectory.constant(grid, np.zeros((8, 8))), idx, N8) == 0.0
    ramp = OpTrajectory.from_function(grid, lambda t: t * np.eye(8))
    assert trajectory_seminorm(ramp, idx, N8) == pytest.approx(1.0, rel=1e-12)


def test_trajectory_seminorm_matches_brute_force(rng):
    grid = TimeGrid(1.0, 7)
    H = fock.shifted_hamiltonian(10, 4)
    vals = np.stack([random_op(rng, 10, scale=t + 0.1) for t in range(7)])
    traj = OpTrajectory(grid, vals)
    panel = Panel.default(H)
    brute = [max(seminorm(v, idx, H) for v in vals) for idx in panel.indices]
    np.testing.assert_allclose(panel.evaluate(traj), brute, rtol=1e-12)


def test_panel_json_roundtrip():
    doc = {"generator": "H", "shift": 4.0, "weights": [{"p": 1.0}, {"p": 0.5, "i": 1}],
           "grades": [0, 2]}
    panel = Panel.from_json(doc, 16)
    assert len(panel) == 4
    again = Panel.from_json({"generator": "H", "shift": 4.0,
                             "indices": panel.to_json()["indices"]}, 16)
    assert again.labels == panel.labels
    np.testing.assert_array_equal(again.generator, panel.generator)


def test_panel_closure():
    panel = Panel(N64, [SeminormIndex(E1, 0)])
    closed = panel.closure(Lift(1, 1), depth=3)
    assert [i.k for i in closed.indices] == [0, 1, 2, 3]
    assert not panel.is_closed_under(Lift(1, 1))
    assert closed.is_closed_under(Lift(1, 1), max_grade=3)


# -- property suites on random operators ---------------------------------------

H16 = fock.shifted_hamiltonian(16, 4)
PANEL16 = Panel.default(H16)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=st.complex_numbers(max_magnitude=1e3,
                                                                allow_nan=False))
def test_homogeneity(seed, lam):
    x = random_op(np.random.default_rng(seed), 16)
    for idx in PANEL16:
        lhs = seminorm(lam * x, idx, H16)
        assert lhs == pytest.approx(abs(lam) * seminorm(x, idx, H16), rel=1e-12, abs=1e-300)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_triangle_and_adjoint_symmetry(seed):
    rng = np.random.default_rng(seed)
    x, y = random_op(rng, 16), random_op(rng, 16)
    for idx in PANEL16:
        s = seminorm(x + y, idx, H16)
        assert s <= (seminorm(x, idx, H16) + seminorm(y, idx, H16)) * (1 + 1e-12)
        assert seminorm_max(x, idx, H16) == pytest.approx(
            seminorm_max(x.conj().T, idx, H16), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_spectral_sum_dominates(seed):
    x = random_op(np.random.default_rng(seed), 16)
    for idx in PANEL16:
        assert seminorm(x, idx, H16) <= seminorm_spectral_sum(x, idx, H16) * (1 + 1e-12)

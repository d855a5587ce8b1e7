"""Heisenberg evolution as a Picard fixed point, and removal of a cutoff.

All Hamiltonians are diagonal in the number basis, so the exact propagator is
a table of phases: ``x(t)_ls = exp(i (h_l - h_s) t) x_ls``.  The same holds
for the discrete Picard fixed point, which is the Crank-Nicolson solution
and multiplies each entry by ``((1 + i w dt/2) / (1 - i w dt/2))**n``.  Both
closed forms serve as oracles for the iterative solver.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fock
from .errors import PreconditionError
from .family import (
    FamilySpec,
    fixed_point_net,
    is_shrinking,
    richardson_limit,
    verify_commuting,
    verify_strong_cauchy,
)
from .picard import OpTrajectory, RhsSpec, picard_mapspec, solve_ivp, start_certificate
from .seminorm import Lift, seminorm, sqrt_weight

log = logging.getLogger(__name__)

__all__ = [
    "CutoffModel",
    "free_boson_model",
    "heisenberg_rhs",
    "commutator_rhs",
    "heisenberg_start",
    "exact_evolution",
    "exact_trajectory",
    "crank_nicolson_trajectory",
    "cn_error_bound",
    "solve_heisenberg",
    "verify_p1_p4",
    "cutoff_picard_family",
    "strong_cauchy_bound",
    "frame_covariance_defect",
    "remove_cutoff",
    "cutoff_alpha",
]

_PRECONDITION_RTOL = 1e-12
STEP = Lift(1, 1)


def _spectrum(H):
    return fock.diagonal_entries(H)


def _inv_norm(H):
    return fock.op_norm(fock.inverse_diag(H))


def _check_generator(H, delta):
    lam = _spectrum(H)
    bound = 1 / (2 * (delta + 1))
    inv = _inv_norm(H)
    if inv > bound * (1 + _PRECONDITION_RTOL):
        shift = 2 * (delta + 1) - np.abs(lam).min()
        raise PreconditionError(
            f"||H^-1|| = {inv:.6g} exceeds 1/(2(delta+1)) = {bound:.6g}; "
            f"add at least {shift:.6g} to H",
            module="dynamics",
        )
    return lam


def _commutator_stack(lam):
    omega = 1j * (lam[:, None] - lam[None, :])
    return lambda ts, values: omega * values


def heisenberg_rhs(H, delta, x0=None):
    """``f(t, x) = i [H, x]`` with ``M = 1/(1 + delta)`` and ``d = ||x0||``.

    Seminorms are meant to be built on ``H`` itself.  Both bounds move the
    index by one power and one grade.
    """
    lam = _check_generator(H, delta)
    stack = _commutator_stack(lam)
    d_net = _norm_net(x0, H)
    return RhsSpec(lambda t, x: stack(None, fock.as_op(x)), 1 / (1 + delta), d_net,
                   bound_transport=STEP, lipschitz_transport=STEP, delta=delta,
                   eval_stack=stack, name="heisenberg")


def commutator_rhs(H_alpha, H, delta, x0=None, label="alpha"):
    """``f(t, x) = i [H_alpha, x]`` with ``M = 2 ||H^-1|| ||H^-1 H_alpha||``."""
    _check_generator(H, delta)
    lam = _spectrum(H_alpha)
    M = 2 * _inv_norm(H) * fock.op_norm(fock.mat_mul(fock.inverse_diag(H), H_alpha))
    stack = _commutator_stack(lam)
    return RhsSpec(lambda t, x: stack(None, fock.as_op(x)), M, _norm_net(x0, H),
                   bound_transport=STEP, lipschitz_transport=STEP, delta=delta,
                   eval_stack=stack, name=f"cutoff[{label}]")


def _norm_net(x0, H):
    if x0 is None:
        def missing(idx):
            raise ValueError("this right-hand side was built without an initial value")
        return missing
    x0 = fock.as_op(x0)
    return lambda idx: seminorm(x0, idx, H)


def heisenberg_start(x0, H, panel, delta):
    """Bound ``m`` on ``||x0||`` over the panel and its one-step lift, and ``L = m delta/(1+delta)``."""
    both = list(panel.indices) + [STEP(i) for i in panel.indices]
    m = float(panel.evaluate(x0, indices=both).max())
    return m, m * delta / (1 + delta)


def exact_evolution(H, x0, t):
    """``exp(iHt) x0 exp(-iHt)`` entry-wise; an array of times gives a stack."""
    lam = _spectrum(H)
    x0 = fock.as_op(x0)
    omega = lam[:, None] - lam[None, :]
    t = np.asarray(t, dtype=float)
    return np.exp(1j * omega * t[..., None, None]) * x0


def exact_trajectory(H, x0, grid):
    return OpTrajectory(grid, exact_evolution(H, x0, grid.nodes))


def crank_nicolson_trajectory(H, x0, grid):
    """Closed form of the discrete Picard fixed point for ``f = i [H, x]``."""
    lam = _spectrum(H)
    w = (lam[:, None] - lam[None, :]) * grid.dt / 2
    r = (1 + 1j * w) / (1 - 1j * w)
    n = np.arange(grid.n_nodes)
    return OpTrajectory(grid, r ** n[:, None, None] * fock.as_op(x0))


def cn_error_bound(H, x0, grid):
    """Entry-wise bound on ``|CN - exact|``: ``|x_ls| min(2, |w|**3 t dt**2 / 12)``.

    One step advances the phase by ``2 atan(w dt/2)`` instead of ``w dt``, an
    error of at most ``|w dt|**3 / 12``.  A non-negative matrix dominating
    the modulus of another also dominates its weighted operator norms, so
    ``panel.evaluate`` of this stack bounds the panel error.
    """
    lam = _spectrum(H)
    w = np.abs(lam[:, None] - lam[None, :])
    t = grid.nodes[:, None, None]
    phase = np.minimum(2.0, w**3 * t * grid.dt**2 / 12)
    return phase * np.abs(fock.as_op(x0))


def solve_heisenberg(H, x0, grid, panel, tol=1e-10, max_iter=500, **engine):
    """Picard solution of ``dx/dt = i [H, x]`` with the start radius ``m delta/(1+delta)``."""
    rhs = heisenberg_rhs(H, grid.delta, x0)
    _, L = heisenberg_start(x0, H, panel, grid.delta)
    cert = start_certificate(rhs, x0, grid, panel)
    L_prime = max(cert.L_prime, L / grid.delta)
    return solve_ivp(rhs, x0, grid, panel, tol=tol, max_iter=max_iter, L_prime=L_prime,
                     **engine)


# -- cutoff models ----------------------------------------------------------

def cutoff_alpha(L):
    """Family parameter of a cutoff level: ``1 / (1 + L)``."""
    return 1.0 / (1.0 + L)


@dataclass(frozen=True, eq=False)
class CutoffModel:
    """Full generator ``H`` and diagonal cutoff members ``H_L``, ordered by growing ``L``."""

    H: np.ndarray
    cutoffs: tuple
    members: tuple
    delta: float = 1.0
    gamma: str = "full"
    shift: float = field(default=4.0)

    def __post_init__(self):
        object.__setattr__(self, "H", fock.as_op(self.H))
        object.__setattr__(self, "cutoffs", tuple(int(L) for L in self.cutoffs))
        object.__setattr__(self, "members", tuple(fock.as_op(h) for h in self.members))
        if len(self.cutoffs) != len(self.members) or not self.members:
            raise PreconditionError("one member Hamiltonian per cutoff is required",
                                    module="dynamics")
        if any(b <= a for a, b in zip(self.cutoffs, self.cutoffs[1:])):
            raise PreconditionError(f"cutoffs must increase strictly, got {self.cutoffs}",
                                    module="dynamics")
        for h in (self.H,) + self.members:
            if not fock.is_diagonal(h):
                raise PreconditionError("cutoff models need diagonal generators",
                                        module="dynamics")

    @property
    def D(self):
        return self.H.shape[0]

    @property
    def alphas(self):
        return tuple(cutoff_alpha(L) for L in self.cutoffs)

    @property
    def inv_norm(self):
        return _inv_norm(self.H)

    def relative_norms(self):
        """``||H^-1 H_L||`` per member."""
        inv = fock.inverse_diag(self.H)
        return np.array([fock.op_norm(fock.mat_mul(inv, h)) for h in self.members])

    def constants(self):
        """``c_L = 2 delta ||H^-1|| ||H^-1 H_L||``."""
        return 2 * self.delta * self.inv_norm * self.relative_norms()

    def gap(self, j):
        return fock.sub(self.H, self.members[j])


def free_boson_model(D=64, cutoffs=None, delta=1.0, shift=4.0):
    """``H = shift + N`` with occupation cutoffs, default ``{D/8, D/4, D/2, 3D/4}``."""
    if cutoffs is None:
        cutoffs = (D // 8, D // 4, D // 2, 3 * D // 4)
    H = fock.shifted_hamiltonian(D, shift)
    members = [fock.cutoff_hamiltonian(D, L, shift) for L in cutoffs]
    return CutoffModel(H, tuple(cutoffs), tuple(members), delta, "full", shift)


@dataclass
class HypothesisReport:
    p1: dict
    p2: dict
    p3: dict
    p4: dict

    @property
    def passed(self):
        return all(p["pass"] for p in (self.p1, self.p2, self.p3, self.p4))

    def to_json(self):
        return {"p1": self.p1, "p2": self.p2, "p3": self.p3, "p4": self.p4,
                "all_pass": self.passed}


def _max_abs(x):
    return float(np.abs(x).max())


def verify_p1_p4(model, probes, panel):
    """Check the four cutoff hypotheses on ``model``.

    (p1) members commute with each other and with ``H``; (p2) every
    ``c_L < 1`` and the extrapolated limit is positive; (p3) the decay table
    ``||[H - H_L, y]||`` shrinks along the grid for every probe and index,
    together with the two auxiliary norms used to bound it; (p4) the bound
    on ``||H^-1||``.
    """
    hs = model.members
    pair = max((_max_abs(fock.commutator(a, b)) for a in hs for b in hs), default=0.0)
    full = max(_max_abs(fock.commutator(model.H, h)) for h in hs)
    p1 = {"pass": pair == 0.0 and full == 0.0, "max_pair_commutator": pair,
          "max_commutator_with_H": full}

    c = model.constants()
    limit = richardson_limit(model.alphas, c / model.delta)
    p2 = {"pass": bool(np.all(c < 1) and limit > 0), "c_alpha": c.tolist(),
          "relative_norms": model.relative_norms().tolist(), "inv_norm": model.inv_norm,
          "limit_2_inv_rel": limit}

    table = np.array([[panel.evaluate(fock.commutator(model.gap(j), y))
                       for j in range(len(hs))] for y in probes])
    # table[p, L, idx] -> rows per (probe, idx) along L
    rows = table.transpose(0, 2, 1).reshape(-1, len(hs)) if len(probes) else np.zeros((0, 0))
    decay_ok = all(is_shrinking(r) for r in rows)
    lam = _spectrum(model.H)
    inv3 = fock.diag_op(lam**-3.0)
    cube = [fock.op_norm(fock.mat_mul(model.gap(j), inv3)) for j in range(len(hs))]
    roots = {}
    for idx in panel.indices:
        w = idx.weight
        key = f"p{w.p:g}_i{w.i}_s{w.s:g}"
        if w.i % 2 or key in roots:
            continue
        sq = sqrt_weight(w)
        roots[key] = [
            fock.op_norm(np.diag(sq(lam)) @ model.gap(j)) for j in range(len(hs))
        ]
    aux_ok = is_shrinking(cube) and all(is_shrinking(v) for v in roots.values())
    p3 = {"pass": bool(decay_ok and aux_ok), "decay_ok": bool(decay_ok),
          "indices": panel.labels, "cutoffs": list(model.cutoffs),
          "decay_table": table.tolist(), "gap_inv_cube": cube, "sqrt_weight_gap": roots}

    inv = model.inv_norm
    bound = 1 / (2 * (model.delta + 1))
    p4 = {"pass": bool(inv <= bound * (1 + _PRECONDITION_RTOL)), "inv_norm": inv,
          "bound": bound}
    return HypothesisReport(p1, p2, p3, p4)


def cutoff_picard_family(model, x, grid):
    """One Picard map per cutoff member, sharing the one-step transport."""
    if grid.delta != model.delta:
        raise PreconditionError(f"grid length {grid.delta} differs from model delta "
                                f"{model.delta}", module="dynamics")
    maps = []
    for L, h in zip(model.cutoffs, model.members):
        rhs = commutator_rhs(h, model.H, model.delta, x, label=f"L={L}")
        maps.append(picard_mapspec(rhs, x, grid))
    return FamilySpec(model.alphas, maps, STEP, labels=tuple(f"L={L}" for L in model.cutoffs))


def strong_cauchy_bound(model, fam, probes, panel, rel_tol=1e-9, abs_tol=1e-12):
    """``||U_a y - U_b y||_delta <= delta ||[H_a - H_b, y]||_delta`` for every pair."""
    worst = 0.0
    ok = True
    rows = []
    for p, y in enumerate(probes):
        outs = [T(y) for T in fam.maps]
        for a in range(len(fam)):
            for b in range(a + 1, len(fam)):
                diff = fock.sub(model.members[a], model.members[b])
                lhs = panel.evaluate(outs[a] - outs[b])
                comm = y.with_values(diff @ y.values - y.values @ diff)
                rhs = model.delta * panel.evaluate(comm)
                good = bool(np.all(lhs <= rhs * (1 + rel_tol) + abs_tol))
                ok &= good
                with np.errstate(divide="ignore", invalid="ignore"):
                    r = np.where(rhs > 0, lhs / rhs, 0.0)
                worst = max(worst, float(r.max()))
                rows.append({"probe": p, "pair": [fam.labels[a], fam.labels[b]],
                             "max_lhs": float(lhs.max()), "max_rhs": float(rhs.max()),
                             "ok": good})
    return {"pass": bool(ok), "max_ratio": worst, "pairs": rows}


def frame_covariance_defect(H_alpha, H_gamma, y, s):
    """Largest entry of ``F(U y U*) - U F(y) U*`` with ``U = exp(i H_gamma s)``, ``F = i[H_alpha, .]``."""
    g = np.exp(1j * _spectrum(H_gamma) * s)
    a = _spectrum(H_alpha)
    omega = 1j * (a[:, None] - a[None, :])
    y = fock.as_op(y)
    conj = g[:, None] * y * g.conj()[None, :]
    return _max_abs(omega * conj - g[:, None] * (omega * y) * g.conj()[None, :])


@dataclass
class CutoffReport:
    hypotheses: HypothesisReport
    c_alpha: list
    c_minus: float
    cauchy_bound: dict
    commuting: object
    strong_cauchy: object
    net: object
    final_error: float
    member_errors: list
    member_bounds: list
    limit: OpTrajectory

    @property
    def certified(self):
        members_ok = all(e <= b for e, b in zip(self.member_errors, self.member_bounds))
        return bool(self.hypotheses.passed and self.cauchy_bound["pass"]
                    and self.commuting.admissible and self.strong_cauchy.certified
                    and self.net.certified and members_ok)

    def to_json(self):
        decay = self.hypotheses.p3["decay_table"]
        return {
            "hypotheses": self.hypotheses.to_json(),
            "c_alpha": self.c_alpha,
            "c_minus": self.c_minus,
            "decay_table": decay,
            "strong_cauchy_bound": self.cauchy_bound,
            "commuting": self.commuting.to_json(),
            "strong_cauchy": {"certified": self.strong_cauchy.certified,
                              "tail_max": self.strong_cauchy.tails.tolist()},
            "net_table": self.net.to_json(),
            "final_error": self.final_error,
            "member_errors": self.member_errors,
            "member_error_bounds": self.member_bounds,
            "certified": self.certified,
        }


def remove_cutoff(model, x, grid, panel, tol=1e-10, max_iter=500, **engine):
    """Fixed points of the cutoff Picard maps and their limit as the cutoff grows.

    ``final_error`` is the panel distance between the largest-cutoff fixed
    point and the exact full-``H`` evolution.  Each member is also compared
    with its own closed propagator; the admissible gap there is
    ``tol`` plus the Crank-Nicolson bound of :func:`cn_error_bound`.
    """
    x = fock.as_op(x)
    hyp = verify_p1_p4(model, [x], panel)
    fam = cutoff_picard_family(model, x, grid)
    start = OpTrajectory.constant(grid, x)
    probes = [start, fam.maps[0](start)]
    cauchy_bound = strong_cauchy_bound(model, fam, probes, panel)
    strong = verify_strong_cauchy(fam, probes, panel)
    commuting = verify_commuting(fam, [start], panel)
    net = fixed_point_net(fam, start, panel, tol=tol, max_iter=max_iter,
                          commuting=commuting, **engine)
    exact = exact_trajectory(model.H, x, grid)
    final_error = panel.sup(net.limit - exact)
    errors, bounds = [], []
    for h, xa in zip(model.members, net.fixed_points):
        errors.append(panel.sup(xa - exact_trajectory(h, x, grid)))
        bounds.append(tol + panel.sup(cn_error_bound(h, x, grid)))
    return CutoffReport(hyp, model.constants().tolist(), fam.c_minus, cauchy_bound,
                        commuting, strong, net, final_error, errors, bounds, net.limit)

"""Parameter families of contractions and the nets of their fixed points.

A family ``{T_alpha}`` is indexed by a strictly decreasing grid of positive
parameters; ``alpha -> 0`` is the limit of interest.  Every member shares one
index transport.  The limit map is represented by the member at the smallest
grid value, and Cauchy-type statements are certified by the tail maxima of
pairwise distance tables, which must shrink as the tail moves toward the
small-``alpha`` end of the grid.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .contraction import MapSpec, bl_membership, iterate_fixed_point, verify_contraction
from .errors import CertificateError, PreconditionError

log = logging.getLogger(__name__)

__all__ = [
    "FamilySpec",
    "richardson_limit",
    "tail_maxima",
    "is_shrinking",
    "UniformCheck",
    "CauchyReport",
    "CommutingReport",
    "NetReport",
    "GapCheck",
    "verify_uniform",
    "verify_strong_cauchy",
    "verify_commuting",
    "limit_map",
    "fixed_point_net",
    "fixed_point_gap_bound",
    "power_gap_check",
]


def richardson_limit(alphas, values):
    """Value at ``alpha = 0`` of the quadratic through the last three points.

    With fewer than three points the polynomial degree drops accordingly.
    """
    a = np.asarray(alphas, dtype=float)[-3:]
    v = np.asarray(values, dtype=float)[-3:]
    if a.size == 1:
        return float(v[0])
    # Lagrange basis evaluated at 0.
    total = 0.0
    for j in range(a.size):
        others = np.delete(a, j)
        total += v[j] * np.prod(others / (others - a[j]))
    return float(total)


def tail_maxima(table):
    """``out[..., j] = max`` of ``table[..., a, b]`` over ``a, b >= j``, ``a != b``.

    ``table`` has the two grid axes last; ``j`` runs over ``0 .. n-2``.
    """
    table = np.asarray(table, dtype=float)
    n = table.shape[-1]
    off = ~np.eye(n, dtype=bool)
    out = []
    for j in range(n - 1):
        block = table[..., j:, j:]
        out.append(np.where(off[j:, j:], block, -np.inf).max(axis=(-1, -2)))
    return np.stack(out, axis=-1)


def is_shrinking(seq, rel=1e-12):
    """Strictly decreasing, except that a sequence may sit at zero."""
    seq = np.asarray(seq, dtype=float)
    scale = max(float(np.abs(seq).max(initial=0.0)), 1e-300)
    for a, b in zip(seq[:-1], seq[1:]):
        if b == 0.0 or b <= rel * scale:
            continue
        if not b < a:
            return False
    return True


@dataclass(frozen=True)
class FamilySpec:
    """Members ``T_alpha`` on a strictly decreasing grid with a shared transport."""

    alphas: tuple
    maps: tuple
    shared_transport: object
    c_of_alpha: Optional[Callable] = None
    labels: tuple = field(default=None)

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        maps = tuple(self.maps)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "maps", maps)
        if len(alphas) != len(maps) or not maps:
            raise PreconditionError("family needs one map per grid value", module="family")
        if any(a <= 0 for a in alphas) or any(b >= a for a, b in zip(alphas, alphas[1:])):
            raise PreconditionError(f"family grid must be positive and strictly decreasing, "
                                    f"got {alphas}", module="family")
        for a, T in zip(alphas, maps):
            if T.transport != self.shared_transport:
                raise PreconditionError(
                    f"member alpha={a:g} has transport {T.transport}, "
                    f"family transport is {self.shared_transport}",
                    module="family",
                )
        if self.labels is None:
            object.__setattr__(self, "labels", tuple(f"{a:g}" for a in alphas))
        if self.c_of_alpha is not None:
            for a, T in zip(alphas, maps):
                if abs(self.c_of_alpha(a) - T.c) > 1e-12:
                    raise PreconditionError(
                        f"c_of_alpha({a:g}) = {self.c_of_alpha(a)} disagrees with member "
                        f"constant {T.c}",
                        module="family",
                    )

    def __len__(self):
        return len(self.maps)

    @property
    def constants(self):
        return np.array([T.c for T in self.maps])

    @property
    def c_minus(self):
        """Extrapolated ``lim c_alpha``; falls back to the last member if outside (0, 1)."""
        est = richardson_limit(self.alphas, self.constants)
        # rounding can leave a vanishing limit slightly positive
        if 1e-9 < est < 1:
            return est
        log.warning("extrapolated limit constant %.4g lies outside (0, 1); "
                    "using the smallest-alpha member's %.4g", est, self.maps[-1].c)
        return float(self.maps[-1].c)


# -- certificates -------------------------------------------------------------

@dataclass
class UniformCheck:
    certified: bool
    members: list
    words: list

    def __bool__(self):
        return self.certified

    def to_json(self):
        return {
            "certified": self.certified,
            "members": [m.to_json() for m in self.members],
            "words": self.words,
        }


def verify_uniform(fam, samples, panel, n_words=8, max_word=4, seed=0, rel_tol=1e-9,
                   abs_tol=1e-12):
    """Contraction check per member plus random compositions of members.

    A word ``T_{a1} ... T_{an}`` must satisfy
    ``||W x - W y||^{idx} <= c_{a1} ... c_{an} ||x - y||^{tau**n (idx)}``.
    """
    samples = list(samples)
    members = [verify_contraction(T, samples, panel, abs_tol=abs_tol, rel_tol=rel_tol)
               for T in fam.maps]
    rng = np.random.default_rng(seed)
    words = []
    for _ in range(n_words if len(samples) else 0):
        n = int(rng.integers(2, max_word + 1))
        word = [int(k) for k in rng.integers(0, len(fam), size=n)]
        x, y = samples[int(rng.integers(len(samples)))]
        wx, wy = x, y
        for k in reversed(word):
            wx, wy = fam.maps[k](wx), fam.maps[k](wy)
        moved = [(fam.shared_transport ** n)(idx) for idx in panel.indices]
        lhs = panel.evaluate(wx - wy)
        rhs = np.prod([fam.maps[k].c for k in word]) * panel.evaluate(x - y, indices=moved)
        ok = bool(np.all(lhs <= rhs * (1 + rel_tol) + abs_tol))
        words.append({"word": [fam.labels[k] for k in word], "ok": ok,
                      "max_lhs": float(lhs.max()), "max_rhs": float(rhs.max())})
    certified = all(members) and all(w["ok"] for w in words)
    return UniformCheck(certified, members, words)


@dataclass
class CauchyReport:
    """Pairwise tables ``d[p, j, a, b]`` for probe ``p`` and panel index ``j``."""

    alphas: tuple
    labels: list
    table: np.ndarray
    tails: np.ndarray
    certified: bool

    def __bool__(self):
        return self.certified

    def to_json(self):
        return {
            "alphas": list(self.alphas),
            "certified": self.certified,
            "indices": self.labels,
            "tail_max": self.tails.tolist(),
            "pairwise_table": self.table.tolist(),
        }


def _pairwise(outs, panel):
    n = len(outs)
    table = np.zeros((len(panel), n, n))
    for a in range(n):
        for b in range(a + 1, n):
            table[:, a, b] = table[:, b, a] = panel.evaluate(outs[a] - outs[b])
    return table


def verify_strong_cauchy(fam, probes, panel):
    """Tables of ``||T_a y - T_b y||`` and their shrinking tail maxima."""
    if len(fam) < 2:
        raise PreconditionError("strong-Cauchy check needs at least two grid values",
                                module="family")
    tables = []
    for y in probes:
        tables.append(_pairwise([T(y) for T in fam.maps], panel))
    table = np.array(tables)
    tails = tail_maxima(table)
    certified = all(is_shrinking(row) for row in tails.reshape(-1, tails.shape[-1]))
    return CauchyReport(fam.alphas, panel.labels, table, tails, bool(certified))


@dataclass
class CommutingReport:
    """Exact commutation, or a commutation defect that vanishes along the grid."""

    exact: bool
    asymptotic: bool
    max_defect: float
    tails: np.ndarray

    def __bool__(self):
        return self.exact

    @property
    def admissible(self):
        return self.exact or self.asymptotic

    def to_json(self):
        return {
            "exact": self.exact,
            "asymptotic": self.asymptotic,
            "max_defect": self.max_defect,
            "tail_max": self.tails.tolist(),
        }


def verify_commuting(fam, probes, panel, tol=1e-10):
    """Sup-panel size of ``T_a T_b y - T_b T_a y`` over probes and pairs.

    ``exact`` holds when every defect is below ``tol``; ``asymptotic`` when
    the tail maxima of the defect table shrink toward the small-``alpha`` end.
    """
    n = len(fam)
    defects = np.zeros((len(probes), n, n))
    for p, y in enumerate(probes):
        once = [T(y) for T in fam.maps]
        for a in range(n):
            for b in range(a + 1, n):
                d = panel.sup(fam.maps[a](once[b]) - fam.maps[b](once[a]))
                defects[p, a, b] = defects[p, b, a] = d
    top = float(defects.max(initial=0.0))
    exact = top <= tol
    if n < 2:
        return CommutingReport(True, True, top, np.zeros((len(probes), 0)))
    tails = tail_maxima(defects)
    asymptotic = all(is_shrinking(row) for row in tails)
    return CommutingReport(exact, bool(exact or asymptotic), top, tails)


def limit_map(fam, cauchy):
    """The smallest-``alpha`` member with the extrapolated limit constant."""
    if cauchy is None or not cauchy.certified:
        raise CertificateError("limit map needs a passed strong-Cauchy certificate",
                               module="family")
    last = fam.maps[-1]
    return MapSpec(last.apply, fam.c_minus, fam.shared_transport, f"lim {last.name}")


@dataclass
class NetReport:
    alphas: tuple
    labels: list
    fixed_points: list
    member_reports: list
    table: np.ndarray
    tails: np.ndarray
    certified: bool
    limit_residual: float
    intersection: list

    @property
    def limit(self):
        return self.fixed_points[-1]

    def to_json(self):
        return {
            "alphas": list(self.alphas),
            "certified": self.certified,
            "intersection": self.intersection,
            "indices": self.labels,
            "iterations": [r.iterations for r in self.member_reports],
            "tail_max": self.tails.tolist(),
            "pairwise_table": self.table.tolist(),
            "limit_residual": self.limit_residual,
        }


def fixed_point_net(fam, x0, panel, tol=1e-10, max_iter=500, L=None, commuting=None,
                    limit=None, **engine):
    """Fixed point of every member from the common start ``x0``.

    ``x0`` must lie in every member's ``B_L``; with ``L`` omitted the largest
    member displacement is used, so only an explicit ``L`` can fail.  The net
    is certified when the tail maxima of ``||x_a - x_b||`` shrink for every
    panel index and, if given, the commutation report is admissible.
    """
    if commuting is not None and not commuting.admissible:
        raise CertificateError("family members neither commute nor approach commutation",
                               module="family")
    disp = [panel.sup(T(x0) - x0) for T in fam.maps]
    if L is None:
        L = max(disp)
    intersection = [{"alpha": a, "displacement": d, "member": bool(d <= L)}
                    for a, d in zip(fam.alphas, disp)]
    failed = [e["alpha"] for e in intersection if not e["member"]]
    if failed:
        raise CertificateError(f"start point outside B_L (L={L:g}) for alpha in {failed}",
                               report=intersection, module="family")
    points, reports = [], []
    for T in fam.maps:
        x, rep = iterate_fixed_point(T, x0, panel, tol=tol, max_iter=max_iter, **engine)
        points.append(x)
        reports.append(rep)
    table = _pairwise(points, panel)
    tails = tail_maxima(table) if len(fam) > 1 else np.zeros((len(panel), 0))
    certified = all(is_shrinking(row) for row in tails) and all(r.certified for r in reports)
    T = limit if limit is not None else fam.maps[-1]
    residual = panel.sup(T(points[-1]) - points[-1])
    return NetReport(fam.alphas, panel.labels, points, reports, table, tails,
                     bool(certified), residual, intersection)


@dataclass
class GapCheck:
    holds: bool
    lhs: np.ndarray
    rhs: np.ndarray

    def __bool__(self):
        return self.holds


def fixed_point_gap_bound(fam, c_plus, x, x_alpha, member, T, panel, rho_alpha=0.0, rho=0.0,
                    rel_tol=1e-9, abs_tol=1e-12):
    """``||x_a - x|| <= (||T_a x - T x|| + rho_a + rho) / (1 - c_plus)`` per index.

    ``x`` and ``x_alpha`` are fixed points of the limit map ``T`` and of member
    ``member``, up to panel residuals ``rho`` and ``rho_alpha``; with exact
    fixed points the residuals are zero.
    """
    if not 0 < c_plus < 1:
        raise PreconditionError(f"c_plus must lie in (0, 1), got {c_plus}", module="family")
    Ta = fam.maps[member]
    for S in (Ta, T):
        if not S.is_strict:
            raise PreconditionError(f"{S.name} is not strict", module="family")
    if Ta.c > c_plus:
        raise PreconditionError(f"member constant {Ta.c} exceeds c_plus={c_plus}",
                                module="family")
    lhs = panel.evaluate(x_alpha - x)
    rhs = (panel.evaluate(Ta(x) - T(x)) + rho_alpha + rho) / (1 - c_plus)
    holds = bool(np.all(lhs <= rhs * (1 + rel_tol) + abs_tol))
    return GapCheck(holds, lhs, rhs)


def power_gap_check(fam, a, b, x0, panel, m, rel_tol=1e-9, abs_tol=1e-12):
    """``||T_a^m x0 - T_b^m x0||^{idx} <= m ||T_a x0 - T_b x0||^{tau**(m-1) idx}``."""
    Ta, Tb = fam.maps[a], fam.maps[b]
    ya, yb = x0, x0
    for _ in range(m):
        ya, yb = Ta(ya), Tb(yb)
    moved = [(fam.shared_transport ** (m - 1))(idx) for idx in panel.indices]
    lhs = panel.evaluate(ya - yb)
    rhs = m * panel.evaluate(Ta(x0) - Tb(x0), indices=moved)
    return bool(np.all(lhs <= rhs * (1 + rel_tol) + abs_tol)), lhs, rhs

"""Weak contractions, the displacement sets ``B_L`` and the fixed-point engine.

A map ``T`` is described by a :class:`MapSpec`: its action, a constant
``0 < c < 1`` and an index transport ``tau`` such that

    ||Tx - Ty||^{idx} <= c * ||x - y||^{tau(idx)}

for every seminorm index.  With the identity transport the map is strict.
Elements are either operators (``(D, D)`` arrays) or trajectories; anything
with ``values``/``with_values`` is treated node-wise.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import fock
from .errors import (
    CertificateError,
    ContractionViolation,
    ConvergenceError,
    PanelError,
    PreconditionError,
)
from .seminorm import IDENTITY, Lift

log = logging.getLogger(__name__)

__all__ = [
    "MapSpec",
    "ContractionCheck",
    "ConvergenceReport",
    "verify_contraction",
    "sandwich_map",
    "commutator_map",
    "normalize_zero",
    "affine_map",
    "bl_membership",
    "displacement_radius",
    "iterate_fixed_point",
    "same_class_check",
    "zero_like",
]


def zero_like(x):
    if hasattr(x, "with_values"):
        return x.with_values(np.zeros_like(x.values))
    return np.zeros_like(np.asarray(x, dtype=np.complex128))


def _nodewise(fn):
    """Lift an array function acting on trailing ``(D, D)`` axes to elements."""

    def apply(x):
        if hasattr(x, "with_values"):
            return x.with_values(fn(x.values))
        return fn(np.asarray(x, dtype=np.complex128))

    return apply


@dataclass(frozen=True)
class MapSpec:
    """A self-map with its contraction constant and index transport."""

    apply: Callable
    c: float
    transport: Lift = IDENTITY
    name: str = "T"

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise PreconditionError(f"{self.name}: contraction constant must lie in (0, 1), "
                                    f"got {self.c}")

    def __call__(self, x):
        return self.apply(x)

    @property
    def is_strict(self):
        return self.transport.is_identity


# -- example maps -----------------------------------------------------------

def sandwich_map(alpha, i, j, gen):
    """``x -> alpha * G**i x G**j``; constant ``|alpha|``, transport ``Lift(i, j)``."""
    if not abs(alpha) < 1:
        raise PreconditionError(f"sandwich map needs |alpha| < 1, got {abs(alpha)}")
    lam = fock.diagonal_entries(gen, real=False)
    left, right = alpha * lam**i, lam**j

    return MapSpec(
        _nodewise(lambda v: left[:, None] * v * right[None, :]),
        abs(alpha),
        Lift(i, j),
        f"sandwich(alpha={alpha}, i={i}, j={j})",
    )


def commutator_map(l, gen):
    """``x -> [G**l, x]`` with constant ``2 ||G^{-1}||**l``.

    Only a contraction when the smallest eigenvalue of ``G`` exceeds
    ``2**(1/l)``; otherwise the error reports the shift that would fix it.
    """
    if int(l) != l or l < 1:
        raise ValueError(f"commutator power must be a positive integer, got {l}")
    lam = fock.diagonal_entries(gen)
    inv_norm = fock.op_norm(fock.inverse_diag(gen))
    c = 2 * inv_norm**l
    if not c < 1:
        need = 2 ** (1 / l) - np.abs(lam).min()
        raise PreconditionError(
            f"commutator map with l={l}: 2||G^-1||^l = {c:.6g} >= 1; "
            f"shift the generator by more than {need:.6g}"
        )
    pw = lam.astype(np.complex128) ** l
    return MapSpec(
        _nodewise(lambda v: pw[:, None] * v - v * pw[None, :]),
        c,
        Lift(l, l),
        f"commutator(l={l})",
    )


def affine_map(T, offset):
    """``x -> T(x) + offset``; same constant and transport as ``T``."""
    return MapSpec(lambda x: T(x) + offset, T.c, T.transport, f"{T.name}+B")


def normalize_zero(T):
    """``x -> T(x) - T(0)``, which fixes the origin."""
    return MapSpec(lambda x: T(x) - T(zero_like(x)), T.c, T.transport, f"{T.name}'")


# -- contraction checks -----------------------------------------------------

@dataclass
class ContractionCheck:
    certified: bool
    max_ratio: float
    n_pairs: int
    violation: Optional[dict] = None

    def __bool__(self):
        return self.certified

    def to_json(self):
        return {
            "certified": self.certified,
            "max_ratio": self.max_ratio,
            "n_pairs": self.n_pairs,
            "violation": self.violation,
        }


def verify_contraction(T, samples, panel, abs_tol=1e-12, rel_tol=1e-9,
                       require_closure=False, max_grade=None):
    """Check ``||Tx - Ty|| <= c ||x - y||^{tau}`` on every pair and panel index.

    ``max_ratio`` is the largest observed ``lhs / (c * rhs)``; a violation
    records the worst offending pair.  With ``require_closure`` the panel must
    already contain every transported index (up to ``max_grade``).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("verify_contraction needs at least one sample pair")
    if require_closure and not panel.is_closed_under(T.transport, max_grade):
        raise PanelError(f"panel is not closed under the transport of {T.name}")
    moved = [T.transport(idx) for idx in panel.indices]
    worst, worst_excess, violation = 0.0, 0.0, None
    for p, (x, y) in enumerate(samples):
        lhs = panel.evaluate(T(x) - T(y))
        rhs = T.c * panel.evaluate(x - y, indices=moved)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > abs_tol, np.inf, 0.0))
        worst = max(worst, float(ratio.max()))
        excess = lhs - rhs * (1 + rel_tol) - abs_tol
        j = int(np.argmax(excess))
        if excess[j] > 0 and excess[j] > worst_excess:
            worst_excess = float(excess[j])
            violation = {
                "pair": p,
                "index": panel.indices[j].label,
                "lhs": float(lhs[j]),
                "rhs": float(rhs[j]),
            }
    return ContractionCheck(violation is None, worst, len(samples), violation)


def bl_membership(x, T, panel, L):
    """Whether ``sup ||Tx - x|| <= L`` over the panel."""
    return panel.sup(T(x) - x) <= L


def displacement_radius(L1, c, L2=0.0):
    """Smallest ``L`` for which ``sup ||x|| <= L1`` and ``sup ||T0|| <= L2`` give ``x in B_L``."""
    return L1 * (1 + c) + L2


def same_class_check(x0, y0, panel, bound):
    """Whether two start points lie within ``bound`` of each other on the panel."""
    return panel.sup(x0 - y0) <= bound


# -- fixed-point engine -----------------------------------------------------

@dataclass
class ConvergenceReport:
    """Residual history and certificates of one fixed-point run.

    ``residuals[n, j]`` is ``||x_{n+1} - x_n||`` at panel index ``j``.
    """

    labels: list
    c: float
    L: float
    tol: float
    threshold: float
    residuals: np.ndarray = None
    iterations: int = 0
    converged: bool = False
    stepwise_ok: bool = True
    chain_ok: bool = True
    bl_recertified: bool = True
    tail_checks: list = field(default_factory=list)
    violation: Optional[dict] = None
    name: str = "T"

    @property
    def certified(self):
        return self.converged and self.chain_ok and self.violation is None

    @property
    def rates(self):
        r = self.residuals
        out = np.full_like(r, np.nan)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[1:] = np.where(r[:-1] > 0, r[1:] / r[:-1], np.nan)
        return out

    @property
    def sup_residuals(self):
        return self.residuals.max(axis=1)

    @property
    def sup_ratios(self):
        s = self.sup_residuals
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(s[:-1] > 0, s[1:] / s[:-1], np.nan)

    @property
    def tail_ok(self):
        return all(obs <= bound for _, obs, bound in self.tail_checks)

    def to_json(self):
        ratios = self.sup_ratios
        finite = ratios[np.isfinite(ratios)]
        return {
            "map": self.name,
            "c": self.c,
            "L": self.L,
            "tol": self.tol,
            "stop_threshold": self.threshold,
            "iterations": self.iterations,
            "converged": self.converged,
            "certified": self.certified,
            "stepwise_bound_ok": self.stepwise_ok,
            "chain_bound_ok": self.chain_ok,
            "bl_recertified": self.bl_recertified,
            "tail_bound_ok": self.tail_ok,
            "tail_checks": [{"m": m, "observed": o, "bound": b} for m, o, b in self.tail_checks],
            "final_sup_residual": float(self.sup_residuals[-1]),
            "max_sup_ratio": float(finite.max()) if finite.size else None,
            "violation": self.violation,
            "indices": list(self.labels),
        }

    def csv_rows(self):
        rates = self.rates
        for n in range(self.residuals.shape[0]):
            for j, label in enumerate(self.labels):
                rate = rates[n, j]
                yield n, label, float(self.residuals[n, j]), "" if np.isnan(rate) else float(rate)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "index_id", "residual", "rate"])
            for n, label, res, rate in self.csv_rows():
                w.writerow([n, label, repr(res), "" if rate == "" else repr(rate)])


class _Snapshots:
    """Iterates kept for the tail check, thinned to a fixed budget."""

    def __init__(self, budget):
        self.budget = max(2, budget)
        self.stride = 1
        self.items = []

    def offer(self, m, x):
        if m % self.stride:
            return
        self.items.append((m, x))
        if len(self.items) > self.budget:
            self.stride *= 2
            self.items = [(k, v) for k, v in self.items if k % self.stride == 0]


def iterate_fixed_point(T, x0, panel, tol=1e-10, max_iter=500, L=None, chain_depth=6,
                        abs_tol=1e-12, snapshots=32):
    """Iterate ``x_{n+1} = T x_n`` until the panel residual certifies ``tol``.

    The run stops once ``sup ||x_{n+1} - x_n|| <= tol (1 - c) / c``, which by
    the geometric tail bounds the distance to the limit by ``tol``.

    Parameters
    ----------
    T : MapSpec
    x0 : element
    panel : Panel
        Indices monitored at every step.
    L : float, optional
        Displacement radius to certify ``x0`` against.  Defaults to the
        observed ``sup ||T x0 - x0||``.
    chain_depth : int
        For ``n <= chain_depth`` every residual is checked against
        ``c**n ||T x0 - x0||^{tau**n (idx)}``, the bound the contraction
        property implies for a weak map.
    snapshots : int
        Number of iterates kept to test the tail bound
        ``||x_final - x_m|| <= L c**m / (1 - c)``.

    Returns
    -------
    x, ConvergenceReport

    Raises
    ------
    CertificateError
        ``x0`` lies outside ``B_L`` for the requested ``L``.
    ContractionViolation
        A residual broke the bound implied by the declared constant.
    ConvergenceError
        No convergence within ``max_iter`` steps, or non-finite residuals.
    """
    c = T.c
    threshold = tol * (1 - c) / c
    x = x0
    tx = T(x)
    d0 = tx - x
    r0 = panel.evaluate(d0)
    L_obs = float(r0.max())
    report = ConvergenceReport(panel.labels, c, L_obs if L is None else float(L), tol,
                               threshold, name=T.name)
    if L is not None and L_obs > L * (1 + 1e-12) + abs_tol:
        report.residuals = r0[None]
        raise CertificateError(
            f"start point displacement {L_obs:.6g} exceeds L={L:.6g}", report=report
        )
    L = report.L
    if L_obs == 0.0:
        report.residuals = r0[None]
        report.converged = True
        return x, report

    moved = list(panel.indices)
    history = [r0]
    snaps = _Snapshots(snapshots)
    snaps.offer(0, x)
    prev = r0
    n = 0
    chain_live = not T.is_strict

    def fail(exc, msg, **extra):
        report.residuals = np.array(history)
        report.iterations = len(history)
        report.violation = {"iteration": n, "reason": msg, **extra}
        raise exc(f"{T.name}: {msg} at iteration {n}", report=report)

    while True:
        r = history[-1]
        if not np.all(np.isfinite(r)):
            fail(ConvergenceError, "non-finite residual")
        if r.max() > L * c**n * (1 + 1e-9) + abs_tol:
            report.stepwise_ok = False
        if r.max() > L * (1 + 1e-9) + abs_tol:
            report.bl_recertified = False
        if T.is_strict and n > 0:
            excess = r - c * prev * (1 + 1e-6) - abs_tol
            if np.any(excess > 0):
                j = int(np.argmax(excess))
                fail(ContractionViolation, "strict contraction ratio exceeded",
                     index=panel.labels[j], residual=float(r[j]), previous=float(prev[j]))
        if chain_live and 0 < n <= chain_depth:
            moved = [T.transport(idx) for idx in moved]
            bound = c**n * panel.evaluate(d0, indices=moved)
            excess = r - bound * (1 + 1e-9) - abs_tol
            if np.any(excess > 0):
                j = int(np.argmax(excess))
                report.chain_ok = False
                fail(ContractionViolation, "residual above the transported chain bound",
                     index=panel.labels[j], residual=float(r[j]), bound=float(bound[j]))
            if np.all(np.isinf(bound)):
                chain_live = False
        x = tx
        n += 1
        if r.max() <= threshold:
            break
        if n >= max_iter:
            fail(ConvergenceError, f"no convergence within {max_iter} iterations "
                 f"(sup residual {r.max():.3g} > {threshold:.3g})")
        snaps.offer(n, x)
        tx = T(x)
        prev = r
        history.append(panel.evaluate(tx - x))

    report.residuals = np.array(history)
    report.iterations = n
    report.converged = True
    for m, xm in snaps.items:
        observed = panel.sup(x - xm)
        report.tail_checks.append((m, observed, L * c**m / (1 - c)))
    log.debug("%s: %d iterations, final residual %.3g", T.name, n, history[-1].max())
    return x, report

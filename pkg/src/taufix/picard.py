"""Operator-valued initial-value problems solved as Picard fixed points.

``dx/dt = f(t, x)``, ``x(0) = x0`` on ``[0, delta]`` is rewritten as
``z = U z`` with ``(U z)(t) = x0 + int_0^t f(s, z(s)) ds``.  Trajectories live
on a uniform grid and the integral is the cumulative trapezoid rule, so the
discrete fixed point is the Crank-Nicolson solution of the equation.
"""

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import fock
from .contraction import MapSpec, iterate_fixed_point
from .errors import CertificateError, DimensionError, PreconditionError
from .seminorm import IDENTITY, Lift, seminorm

__all__ = [
    "TimeGrid",
    "OpTrajectory",
    "RhsSpec",
    "RhsCheck",
    "StartCertificate",
    "picard_map",
    "picard_mapspec",
    "verify_rhs",
    "start_certificate",
    "solve_ivp",
    "constant_rhs",
    "f_identity",
    "f_constant",
    "f_power",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of ``[0, delta]`` into ``n_nodes - 1`` steps."""

    delta: float
    n_nodes: int

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"interval length must be positive, got {self.delta}")
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 2:
            raise ValueError(f"a time grid needs at least 2 nodes, got {self.n_nodes}")

    @classmethod
    def from_step(cls, delta, dt):
        n = delta / dt
        if abs(n - round(n)) > 1e-9 * n:
            raise ValueError(f"step {dt} does not divide the interval {delta}")
        return cls(delta, int(round(n)) + 1)

    @property
    def dt(self):
        return self.delta / (self.n_nodes - 1)

    @property
    def nodes(self):
        return np.linspace(0.0, self.delta, self.n_nodes)

    def refine(self):
        """Grid with the step halved."""
        return TimeGrid(self.delta, 2 * self.n_nodes - 1)


class OpTrajectory:
    """Operator values at the nodes of a :class:`TimeGrid`.

    Supports the vector-space operations the fixed-point engine needs; the
    ``values`` stack has shape ``(n_nodes, D, D)``.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=np.complex128)
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise DimensionError(f"trajectory values must be (T, D, D), got {values.shape}")
        if values.shape[0] != grid.n_nodes:
            raise DimensionError(
                f"{values.shape[0]} values for a grid with {grid.n_nodes} nodes"
            )
        self.grid = grid
        self.values = values

    @classmethod
    def constant(cls, grid, x):
        x = fock.as_op(x)
        return cls(grid, np.broadcast_to(x, (grid.n_nodes,) + x.shape).copy())

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, np.stack([fn(t) for t in grid.nodes]))

    @property
    def dim(self):
        return self.values.shape[1]

    def with_values(self, values):
        return OpTrajectory(self.grid, values)

    def at(self, n):
        return self.values[n]

    @property
    def final(self):
        return self.values[-1]

    def _other(self, other):
        if isinstance(other, OpTrajectory):
            if other.grid != self.grid or other.values.shape != self.values.shape:
                raise DimensionError("trajectories live on different grids or dimensions")
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._other(other))

    def __rsub__(self, other):
        return self.with_values(self._other(other) - self.values)

    def __neg__(self):
        return self.with_values(-self.values)

    def __mul__(self, lam):
        return self.with_values(complex(lam) * self.values)

    __rmul__ = __mul__

    def __repr__(self):
        return f"OpTrajectory(n_nodes={self.grid.n_nodes}, delta={self.grid.delta}, D={self.dim})"

    def write_csv(self, path, entries=()):
        """Node times plus the selected ``(l, s)`` entries as real/imag columns."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["node", "t"]
            for l, s in entries:
                head += [f"re_{l}_{s}", f"im_{l}_{s}"]
            w.writerow(head)
            for n, t in enumerate(self.grid.nodes):
                row = [n, repr(float(t))]
                for l, s in entries:
                    v = self.values[n, l, s]
                    row += [repr(float(v.real)), repr(float(v.imag))]
                w.writerow(row)


@dataclass(frozen=True)
class RhsSpec:
    """Right-hand side ``f(t, x)`` with the constants of its admissibility bounds.

    ``d_net(idx)`` is the net bounding ``||f(t, z)||^{idx} <= d(bound_transport(idx))``
    on the tube ``||z - x0||^{idx} <= delta * d(tube_transport(idx))``, and
    ``||f(t, x) - f(t, y)||^{idx} <= M ||x - y||^{lipschitz_transport(idx)}``.
    ``eval_stack(ts, values)`` is an optional vectorized form of ``eval``.
    """

    eval: Callable
    M: float
    d_net: Callable
    bound_transport: Lift = IDENTITY
    lipschitz_transport: Lift = IDENTITY
    tube_transport: Lift = IDENTITY
    delta: Optional[float] = None
    eval_stack: Optional[Callable] = None
    name: str = "f"

    def __post_init__(self):
        if not self.M > 0:
            raise PreconditionError(f"{self.name}: Lipschitz constant must be positive",
                                    module="picard")
        if self.delta is not None:
            self.check_interval(self.delta)

    def check_interval(self, delta):
        if not self.M * delta < 1:
            raise PreconditionError(
                f"{self.name}: M * delta = {self.M * delta:.6g} must be below 1 "
                f"(M={self.M}, delta={delta})",
                module="picard",
            )

    def on_nodes(self, ts, values):
        if self.eval_stack is not None:
            return np.asarray(self.eval_stack(ts, values), dtype=np.complex128)
        return np.stack([np.asarray(self.eval(t, v), dtype=np.complex128)
                         for t, v in zip(ts, values)])


def picard_map(rhs, x0, z):
    """``(U z)(t_n) = x0 + trapezoid integral of f(s, z(s)) over [0, t_n]``."""
    x0 = fock.as_op(x0)
    if x0.shape[0] != z.dim:
        raise DimensionError(f"initial value has D={x0.shape[0]}, trajectory D={z.dim}")
    grid = z.grid
    f = rhs.on_nodes(grid.nodes, z.values)
    out = cumulative_trapezoid(f, dx=grid.dt, axis=0, initial=0)
    out += x0
    return z.with_values(out)


def picard_mapspec(rhs, x0, grid):
    """The integral map as a :class:`MapSpec` with constant ``M * delta``."""
    rhs.check_interval(grid.delta)
    x0 = fock.as_op(x0)
    return MapSpec(lambda z: picard_map(rhs, x0, z), rhs.M * grid.delta,
                   rhs.lipschitz_transport, f"picard[{rhs.name}]")


# -- admissibility checks ---------------------------------------------------

@dataclass
class RhsCheck:
    certified: bool
    in_tube: list
    bound_margin: float
    lipschitz_margin: float
    worst: dict

    def __bool__(self):
        return self.certified

    def to_json(self):
        return {
            "certified": self.certified,
            "in_tube": self.in_tube,
            "bound_margin": self.bound_margin,
            "lipschitz_margin": self.lipschitz_margin,
            "worst": self.worst,
        }


def _node_seminorms(panel, values, indices):
    """``(T, len(indices))`` table of seminorms at every node separately."""
    return np.stack([panel.evaluate(v, indices=indices) for v in values])


def verify_rhs(rhs, grid, probes, panel, x0, rel_tol=1e-9, abs_tol=1e-12):
    """Check the growth bound and the Lipschitz bound of ``rhs`` on probe trajectories.

    Probes outside the tube around ``x0`` are reported but still checked.
    Margins are ``min(rhs - lhs)`` relative to the right side; negative means
    a violation.
    """
    x0 = fock.as_op(x0)
    probes = list(probes)
    idx = list(panel.indices)
    d_bound = np.array([rhs.d_net(rhs.bound_transport(i)) for i in idx])
    d_tube = np.array([rhs.d_net(rhs.tube_transport(i)) for i in idx])
    lip_idx = [rhs.lipschitz_transport(i) for i in idx]
    ts = grid.nodes
    worst = {}

    in_tube = []
    bound_margin = np.inf
    fvals = []
    for p, z in enumerate(probes):
        dist = panel.evaluate(z - x0)
        in_tube.append(bool(np.all(dist <= grid.delta * d_tube * (1 + rel_tol) + abs_tol)))
        f = rhs.on_nodes(ts, z.values)
        fvals.append(f)
        lhs = panel.evaluate(f)
        rel = (d_bound * (1 + rel_tol) + abs_tol - lhs) / np.maximum(d_bound, abs_tol)
        j = int(np.argmin(rel))
        if rel[j] < bound_margin:
            bound_margin = float(rel[j])
            worst["bound"] = {"probe": p, "index": idx[j].label,
                              "lhs": float(lhs[j]), "rhs": float(d_bound[j])}

    lip_margin = np.inf
    for p in range(len(probes)):
        for q in range(p + 1, len(probes)):
            lhs = _node_seminorms(panel, fvals[p] - fvals[q], idx)
            rhs_v = rhs.M * _node_seminorms(panel, probes[p].values - probes[q].values, lip_idx)
            rel = (rhs_v * (1 + rel_tol) + abs_tol - lhs) / np.maximum(rhs_v, abs_tol)
            n, j = np.unravel_index(int(np.argmin(rel)), rel.shape)
            if rel[n, j] < lip_margin:
                lip_margin = float(rel[n, j])
                worst["lipschitz"] = {"pair": [p, q], "node": int(n), "index": idx[j].label,
                                      "lhs": float(lhs[n, j]), "rhs": float(rhs_v[n, j])}
    certified = bound_margin >= 0 and lip_margin >= 0
    return RhsCheck(bool(certified), in_tube, float(bound_margin), float(lip_margin), worst)


@dataclass
class StartCertificate:
    """``sup_t ||f(t, x0)||^{idx} <= L'`` on the panel, giving ``L = L' * delta``."""

    ok: bool
    L_prime: float
    L: float
    values: np.ndarray

    def __bool__(self):
        return self.ok

    def to_json(self):
        return {"ok": self.ok, "L_prime": self.L_prime, "L": self.L,
                "max_value": float(self.values.max())}


def start_certificate(rhs, x0, grid, panel, L_prime=None):
    """Certify the constant trajectory at ``x0`` as a start point.

    With ``L_prime`` omitted the smallest admissible value (the observed
    panel maximum) is used.
    """
    x0 = fock.as_op(x0)
    const = np.broadcast_to(x0, (grid.n_nodes,) + x0.shape)
    values = panel.evaluate(rhs.on_nodes(grid.nodes, const))
    top = float(values.max())
    if L_prime is None:
        L_prime = top
    ok = bool(top <= L_prime * (1 + 1e-12))
    return StartCertificate(ok, float(L_prime), float(L_prime) * grid.delta, values)


def solve_ivp(rhs, x0, grid, panel, tol=1e-10, max_iter=500, L_prime=None, **engine):
    """Solve ``dx/dt = f(t, x)`` on ``grid`` by iterating the integral map.

    Returns the trajectory and the engine's ConvergenceReport; the start
    point is certified in ``B_L`` with ``L = L' * delta`` first.
    """
    cert = start_certificate(rhs, x0, grid, panel, L_prime)
    if not cert:
        raise CertificateError(
            f"{rhs.name}: sup ||f(t, x0)|| = {cert.values.max():.6g} exceeds L' = {cert.L_prime:.6g}",
            module="picard",
        )
    T = picard_mapspec(rhs, x0, grid)
    z0 = OpTrajectory.constant(grid, x0)
    # A zero displacement means x0 is already stationary.
    L = cert.L if cert.L > 0 else None
    return iterate_fixed_point(T, z0, panel, tol=tol, max_iter=max_iter, L=L, **engine)


# -- example right-hand sides -------------------------------------------------

def _bounded(phi, bound, name):
    def checked(t):
        v = complex(phi(t))
        if abs(v) > bound * (1 + 1e-12):
            raise PreconditionError(f"{name}: |phi({t})| = {abs(v):.6g} exceeds {bound:.6g}",
                                    module="picard")
        return v

    return checked


def constant_rhs(D, delta=None):
    """``f = 0``; every constant trajectory is a fixed point."""
    zero = np.zeros((D, D), dtype=np.complex128)
    return RhsSpec(lambda t, x: zero, 0.5 / (delta or 1.0), lambda idx: 0.0,
                   delta=delta, eval_stack=lambda ts, v: np.zeros_like(v), name="zero")


def f_identity(phi, gen, delta):
    """``f(t, x) = phi(t) * 1`` with ``|phi| <= 1`` and ``d = ||1||``."""
    D = gen.shape[0]
    one = fock.identity(D)
    phi = _bounded(phi, 1.0, "f_identity")
    def eval_stack(ts, values):
        return np.array([phi(t) for t in ts])[:, None, None] * one

    return RhsSpec(lambda t, x: phi(t) * one, 1 / (2 * delta), lambda idx: seminorm(one, idx, gen),
                   delta=delta, eval_stack=eval_stack, name="f_identity")


def f_constant(phi, X, gen, delta):
    """``f(t, x) = phi(t) X`` with ``|phi| <= 1/(2 delta)`` and ``d = ||X|| / (2 delta)``."""
    X = fock.as_op(X)
    phi = _bounded(phi, 1 / (2 * delta), "f_constant")
    def eval_stack(ts, values):
        return np.array([phi(t) for t in ts])[:, None, None] * X

    return RhsSpec(lambda t, x: phi(t) * X, 1 / (2 * delta),
                   lambda idx: seminorm(X, idx, gen) / (2 * delta),
                   delta=delta, eval_stack=eval_stack, name="f_constant")


def f_power(phi, X, gen, l, delta):
    """``f(t, x) = phi(t) G**l X``; the growth bound moves the weight up by ``x**l``."""
    X = fock.as_op(X)
    lam = fock.diagonal_entries(gen)
    GX = (lam**l)[:, None] * X
    phi = _bounded(phi, 1 / (2 * delta), "f_power")
    def eval_stack(ts, values):
        return np.array([phi(t) for t in ts])[:, None, None] * GX

    return RhsSpec(lambda t, x: phi(t) * GX, 1 / (2 * delta),
                   lambda idx: seminorm(X, idx, gen) / (2 * delta),
                   bound_transport=Lift(l, 0), delta=delta, eval_stack=eval_stack,
                   name=f"f_power(l={l})")

"""Explicit nonzero elements of ``B_L`` built from a generator's small eigenvalues.

Pick the eigenvalues of modulus at most 1, put ``Y = sum c_l E_l`` on them and
take ``X = Y**2``.  Every power of the generator is bounded by 1 on that
subspace, and weights capped by ``m`` at those eigenvalues (the restricted
set ``C0``) bound the weight factor, so ``||X||^{h,k} <= m (sum |c_l|)**2``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import fock
from .contraction import bl_membership, displacement_radius, zero_like
from .errors import CertificateError
from .seminorm import SeminormIndex, c0_rescale, in_c0, seminorm

log = logging.getLogger(__name__)

__all__ = [
    "eligible_indices",
    "BlRecipe",
    "BlCertificate",
    "StartPointCertificate",
    "uniform_recipe",
    "construct_bl_element",
    "construct_y",
    "certify",
    "certify_start_point",
]

_TOL = 1e-12


def eligible_indices(gen, tol=_TOL):
    """Indices of diagonal entries with modulus at most 1."""
    d = fock.diagonal_entries(gen, real=False)
    G = tuple(int(i) for i in np.flatnonzero(np.abs(d) <= 1 + tol))
    if not G:
        log.warning("generator has no eigenvalue of modulus <= 1; B_L recipe is empty")
    return G


@dataclass(frozen=True, eq=False)
class BlRecipe:
    """Coefficients ``c_l`` on the eligible indices, the ``C0`` cap ``m`` and radius ``L``."""

    generator: np.ndarray
    coeffs: tuple
    m: float
    L: float

    def __post_init__(self):
        gen = fock.as_op(self.generator)
        object.__setattr__(self, "generator", gen)
        coeffs = tuple(complex(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if not (self.m > 0 and self.L > 0):
            raise CertificateError(f"m and L must be positive, got m={self.m}, L={self.L}",
                                   module="blcert")
        if len(coeffs) != len(self.G):
            raise CertificateError(
                f"{len(coeffs)} coefficients for {len(self.G)} eligible indices {list(self.G)}",
                module="blcert",
            )
        cap = np.sqrt(self.L / self.m)
        if self.coeff_sum > cap * (1 + _TOL):
            raise CertificateError(
                f"sum |c_l| = {self.coeff_sum:.6g} exceeds sqrt(L/m) = {cap:.6g}",
                module="blcert",
            )

    @property
    def G(self):
        return eligible_indices(self.generator)

    @property
    def points(self):
        return fock.diagonal_entries(self.generator, real=False)[list(self.G)].real

    @property
    def coeff_sum(self):
        return float(sum(abs(c) for c in self.coeffs))

    @property
    def bound(self):
        return self.m * self.coeff_sum**2


def uniform_recipe(gen, m, L, total=None):
    """Equal coefficients on the eligible indices, summing to ``total`` (default ``sqrt(L/m)``)."""
    G = eligible_indices(gen)
    total = np.sqrt(L / m) if total is None else total
    return BlRecipe(gen, [total / len(G)] * len(G), m, L)


def construct_bl_element(recipe):
    """``X = sum_l c_l**2 E_l`` over the eligible indices."""
    D = recipe.generator.shape[0]
    diag = np.zeros(D, dtype=np.complex128)
    diag[list(recipe.G)] = np.square(recipe.coeffs)
    return fock.diag_op(diag)


def construct_y(recipe):
    """``Y = sum_l c_l E_l``, whose square is :func:`construct_bl_element`."""
    D = recipe.generator.shape[0]
    diag = np.zeros(D, dtype=np.complex128)
    diag[list(recipe.G)] = recipe.coeffs
    return fock.diag_op(diag)


@dataclass
class BlCertificate:
    certified: bool
    X: np.ndarray
    entries: list

    def __bool__(self):
        return self.certified

    def to_json(self, recipe):
        return {
            "G": list(recipe.G),
            "coeff_sum": recipe.coeff_sum,
            "bound": recipe.bound,
            "m": recipe.m,
            "L": recipe.L,
            "certified": self.certified,
            "per_index": self.entries,
        }


def certify(recipe, panel):
    """Evaluate ``||X||`` on every panel index against ``m (sum |c_l|)**2 <= L``.

    Weights that exceed ``m`` at the eligible eigenvalues are rescaled into
    ``C0`` first; the factor is reported with the entry.
    """
    X = construct_bl_element(recipe)
    gen = recipe.generator
    entries = []
    ok = recipe.bound <= recipe.L * (1 + _TOL)
    for idx in panel.indices:
        w = idx.weight
        factor = 1.0
        if not in_c0(w, recipe.points, recipe.m):
            factor, w = c0_rescale(w, recipe.points, recipe.m)
        value = seminorm(X, SeminormIndex(w, idx.k), gen)
        good = value <= recipe.bound * (1 + _TOL)
        ok &= good
        entries.append({"index": idx.label, "value": value, "rescale": factor, "ok": bool(good)})
    return BlCertificate(bool(ok), X, entries)


@dataclass
class StartPointCertificate:
    L1: float
    L2: float
    c: float
    radius: float
    L: float
    certified: bool
    direct_displacement: float
    direct_ok: bool

    def __bool__(self):
        return self.certified

    def to_json(self):
        return dict(self.__dict__)


def certify_start_point(x, T, panel, L=None, tol=_TOL):
    """Admit ``x`` to ``B_L`` through ``sup ||x|| <= L1`` and ``sup ||T0|| <= L2``.

    ``L1`` is taken over the panel and its image under the map's transport,
    since the bound uses ``||Tx - T0|| <= c ||x||^{tau}``.  The admissible
    radius is ``L1 (1 + c) + L2``; ``L`` defaults to it.  The direct
    displacement ``sup ||Tx - x||`` is checked against the same radius.
    """
    x = fock.as_op(x)
    both = list(panel.indices) + [T.transport(i) for i in panel.indices]
    L1 = float(panel.evaluate(x, indices=both).max())
    T0 = T(zero_like(x))
    L2 = float(panel.evaluate(T0).max())
    if L2 <= tol:
        L2 = 0.0
    radius = displacement_radius(L1, T.c, L2)
    L = radius if L is None else float(L)
    direct = panel.sup(T(x) - x)
    direct_ok = bool(bl_membership(x, T, panel, max(L, radius) * (1 + tol)))
    return StartPointCertificate(L1, L2, T.c, radius, L, bool(L >= radius * (1 - tol)),
                                 direct, direct_ok)

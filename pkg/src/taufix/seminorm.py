"""Graded seminorms on truncated operators.

A seminorm is labelled by a weight ``f(x) = s * x**i * exp(-p*x)`` and an
integer grade ``k``; its value on ``X`` is the operator norm of
``f(G) X G**k`` for a diagonal, non-negative generator ``G``.  The weight family
is closed under multiplication by powers of ``x``, which is exactly what the
index transports of the contraction maps need.

Weights are evaluated in log space so that high grades on large spectra do
not overflow before the (usually much smaller) product is formed.
"""

import logging
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import fock
from .errors import DegenerateSpectrumError, NotDiagonalError, PanelError, SeminormOverflowError

log = logging.getLogger(__name__)

_LOG_MAX = np.log(np.finfo(float).max)


@dataclass(frozen=True)
class Weight:
    """``f(x) = s * x**i * exp(-p*x)`` on ``x >= 0``; ``s == 0`` is the zero weight."""

    p: float
    i: int = 0
    s: float = 1.0

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError(f"weight rate must be positive, got {self.p}")
        if int(self.i) != self.i or self.i < 0:
            raise ValueError(f"weight power must be a non-negative integer, got {self.i}")
        if not self.s >= 0:
            raise ValueError(f"weight scale must be non-negative, got {self.s}")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "i", int(self.i))
        object.__setattr__(self, "s", float(self.s))

    @property
    def is_zero(self):
        return self.s == 0.0

    def log(self, x):
        """``log f(x)``, with ``-inf`` where the weight vanishes."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.log(self.s) - self.p * x
            if self.i:
                out = out + self.i * np.log(x)
        return out

    def __call__(self, x):
        return np.exp(self.log(x))

    def sup(self, k=0):
        """Closed-form ``sup_{x>=0} f(x) x**k``; attained at ``x = (i+k)/p``."""
        n = self.i + k
        if n == 0:
            return self.s
        return self.s * (n / self.p) ** n * np.exp(-n)

    def to_json(self):
        return {"p": self.p, "i": self.i, "s": self.s}


@dataclass(frozen=True)
class SeminormIndex:
    weight: Weight
    k: int = 0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"grade must be a non-negative integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def label(self):
        w = self.weight
        return f"p{w.p:g}_i{w.i}_s{w.s:g}_k{self.k}"

    def to_json(self):
        return {**self.weight.to_json(), "k": self.k}

    @classmethod
    def from_json(cls, doc):
        return cls(Weight(doc["p"], doc.get("i", 0), doc.get("s", 1.0)), doc["k"])


def lift_weight(w, i):
    """``x**i * f(x)``: same rate and scale, power raised by ``i``."""
    return Weight(w.p, w.i + i, w.s)


@dataclass(frozen=True)
class Lift:
    """Index transport ``(f, k) -> (x**power * f, k + grade)``."""

    power: int = 0
    grade: int = 0

    def __call__(self, idx):
        return SeminormIndex(lift_weight(idx.weight, self.power), idx.k + self.grade)

    @property
    def is_identity(self):
        return self.power == 0 and self.grade == 0

    def then(self, other):
        """Composite transport: ``self`` followed by ``other``."""
        return Lift(self.power + other.power, self.grade + other.grade)

    def __pow__(self, n):
        return Lift(self.power * n, self.grade * n)


IDENTITY = Lift(0, 0)


def sqrt_weight(w):
    """Square root of a weight with even power, still in the family."""
    if w.i % 2:
        raise ValueError(
            f"sqrt of x**{w.i} leaves the integer-power family; use sqrt_weight_bounds"
        )
    return Weight(w.p / 2, w.i // 2, np.sqrt(w.s))


def sqrt_weight_bounds(w):
    """Enclosing pair ``(lo, hi)`` for the square root of a weight.

    ``max(lo(x), hi(x)) >= sqrt(f(x))`` pointwise: ``lo`` carries the power
    ``i//2`` (dominant for ``x <= 1``) and ``hi`` the power ``i//2 + i%2``.
    Equal when ``i`` is even.
    """
    base = Weight(w.p / 2, w.i // 2, np.sqrt(w.s))
    return base, lift_weight(base, w.i % 2)


def generator_spectrum(gen):
    """Diagonal of a generator, checked real and non-negative."""
    lam = fock.diagonal_entries(gen)
    if np.any(lam < 0):
        raise NotDiagonalError("seminorm generator must have non-negative spectrum")
    return lam


def _log_factors(idx, lam):
    """Scaled row/column factors and the log of the scale removed."""
    logf = idx.weight.log(lam)
    with np.errstate(divide="ignore"):
        logg = idx.k * np.log(lam) if idx.k else np.zeros_like(lam)
    a, b = logf.max(), logg.max()
    if not (np.isfinite(a) and np.isfinite(b)):
        return None, None, -np.inf
    return np.exp(logf - a), np.exp(logg - b), a + b


def _finish(sigma, shift, strict):
    if sigma == 0.0 or shift == -np.inf:
        return 0.0
    logv = np.log(sigma) + shift
    if logv > _LOG_MAX:
        if strict:
            raise SeminormOverflowError(
                f"seminorm value exp({logv:.1f}) overflows double precision; "
                "the panel grade is too high for this truncation"
            )
        return np.inf
    return float(np.exp(logv))


def _weighted_norm(x, idx, lam, strict=True):
    row, col, shift = _log_factors(idx, lam)
    if row is None:
        return 0.0
    return _finish(fock.op_norm(row[:, None] * x * col[None, :]), shift, strict)


def seminorm(x, idx, gen):
    """``||f(G) X G**k||`` for the index ``(f, k)``."""
    return _weighted_norm(fock.as_op(x), idx, generator_spectrum(gen))


def seminorm_max(x, idx, gen):
    """Symmetric form ``max(||f(G) X G**k||, ||G**k X f(G)||)``; adjoint invariant."""
    x = fock.as_op(x)
    lam = generator_spectrum(gen)
    left = _weighted_norm(x, idx, lam)
    right = _weighted_norm(x.conj().T, idx, lam)
    return max(left, right)


def seminorm_spectral_sum(x, idx, gen):
    """``sum_{l,s} f(lam_l) lam_s**k |X_ls|`` over the eigenbasis of ``G``.

    Each block ``P_l X P_s`` is rank one, so its norm is the entry modulus.
    Always dominates :func:`seminorm`.
    """
    x = fock.as_op(x)
    lam = generator_spectrum(gen)
    if np.unique(lam).size != lam.size:
        raise DegenerateSpectrumError("spectral-sum seminorm needs a nondegenerate generator")
    row, col, shift = _log_factors(idx, lam)
    if row is None:
        return 0.0
    return _finish(float(row @ np.abs(x) @ col), shift, True)


def truncation_margin(idx, D, gen):
    """``f(lam) * lam**(k+1)`` at the last kept level ``lam = G[D-1, D-1]``.

    The size of the first band the truncation throws away; small values
    certify that the seminorm does not see the cut.
    """
    lam = generator_spectrum(gen)
    if D > lam.size:
        raise PanelError(f"D={D} exceeds generator dimension {lam.size}")
    top = lam[D - 1]
    if idx.weight.is_zero:
        return 0.0
    with np.errstate(divide="ignore"):
        logv = float(idx.weight.log(top) + (idx.k + 1) * np.log(top))
    if logv > _LOG_MAX:
        return np.inf
    return float(np.exp(logv))


def in_c0(w, points, m):
    """Membership of ``w`` in the restricted set ``{f : f(x_l) <= m}``."""
    return bool(np.all(w(np.asarray(points, dtype=float)) <= m * (1 + 1e-12)))


def c0_rescale(w, points, m):
    """Rescale ``w`` so that its largest value on ``points`` equals ``m``.

    Returns ``(factor, w0)`` with ``w0 = factor * w``.  Points where ``w``
    vanishes are ignored; if it vanishes on all of them the zero weight is
    returned with factor 0.
    """
    values = w(np.asarray(points, dtype=float))
    if values.size == 0:
        raise ValueError("c0_rescale needs at least one point")
    nonzero = values[values > 0]
    if nonzero.size == 0:
        return 0.0, Weight(w.p, w.i, 0.0)
    factor = float(m / nonzero.max())
    return factor, Weight(w.p, w.i, w.s * factor)


# -- panels -----------------------------------------------------------------

DEFAULT_RATES = (0.5, 1.0, 2.0)
DEFAULT_GRADES = (0, 1, 2, 3)


def _stack(x):
    """View an element (operator or trajectory) as a ``(T, D, D)`` stack."""
    values = getattr(x, "values", x)
    values = np.asarray(values)
    if values.ndim == 2:
        return values[None]
    if values.ndim != 3:
        raise PanelError(f"cannot evaluate seminorms on an array of shape {values.shape}")
    return values


def _sup_weighted_norms(stack, indices, lam, strict=False):
    """Exact ``max_t ||f(G) Z_t G**k||`` for every index.

    Frobenius norms bound each node's spectral norm from above and the largest
    row or column norm bounds it from below; singular values are only computed
    for nodes whose upper bound beats the best exact value found so far.
    """
    n_t = stack.shape[0]
    out = np.zeros(len(indices))
    factors = [_log_factors(idx, lam) for idx in indices]
    live = [j for j, f in enumerate(factors) if f[0] is not None]
    if not live or not np.any(stack):
        return out
    if n_t == 1:
        for j in live:
            row, col, shift = factors[j]
            sigma = fock.op_norm(row[:, None] * stack[0] * col[None, :])
            out[j] = _finish(sigma, shift, strict)
        return out
    rows2 = np.stack([factors[j][0] for j in live]) ** 2
    cols2 = np.stack([factors[j][1] for j in live]) ** 2
    a2 = stack.real**2 + stack.imag**2
    row_sums = np.einsum("tls,js->jtl", a2, cols2, optimize=True)
    col_sums = np.einsum("jl,tls->jts", rows2, a2, optimize=True)
    frob = np.sqrt(np.einsum("jtl,jl->jt", row_sums, rows2)) * (1 + 1e-10)
    lower = np.sqrt(np.maximum((row_sums * rows2[:, None, :]).max(axis=2),
                               (col_sums * cols2[:, None, :]).max(axis=2)))
    for pos, j in enumerate(live):
        row, col, shift = factors[j]
        ub, lb = frob[pos], lower[pos]
        order = np.argsort(-ub, kind="stable")
        best = 0.0
        floor = lb.max()
        for t in order:
            if ub[t] <= best or ub[t] < floor:
                break
            sigma = fock.op_norm(row[:, None] * stack[t] * col[None, :])
            best = max(best, sigma)
        out[j] = _finish(best, shift, strict)
    return out


def trajectory_seminorm(traj, idx, gen):
    """``sup_t ||z(t)||`` over the grid nodes of a trajectory."""
    lam = generator_spectrum(gen)
    return float(_sup_weighted_norms(_stack(traj), [idx], lam, strict=True)[0])


@dataclass(frozen=True, eq=False)
class Panel:
    """A finite, ordered family of seminorm indices on one diagonal generator."""

    generator: np.ndarray
    indices: tuple
    spectrum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        gen = fock.as_op(self.generator)
        object.__setattr__(self, "spectrum", generator_spectrum(gen))
        object.__setattr__(self, "generator", gen)
        object.__setattr__(self, "indices", tuple(self.indices))
        if not self.indices:
            raise PanelError("panel needs at least one seminorm index")

    @classmethod
    def default(cls, gen, rates=DEFAULT_RATES, grades=DEFAULT_GRADES):
        return cls(gen, [SeminormIndex(Weight(p), k) for p, k in product(rates, grades)])

    @property
    def dim(self):
        return self.spectrum.size

    @property
    def labels(self):
        return [idx.label for idx in self.indices]

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, idx):
        return idx in self.indices

    def with_indices(self, indices):
        return Panel(self.generator, indices)

    def evaluate(self, x, indices=None):
        """Seminorm of ``x`` (operator or trajectory) at every panel index.

        Values that overflow double precision come back as ``inf``.
        """
        indices = self.indices if indices is None else indices
        return _sup_weighted_norms(_stack(x), list(indices), self.spectrum)

    def sup(self, x):
        return float(self.evaluate(x).max())

    def margins(self, D=None):
        D = self.dim if D is None else D
        return np.array([truncation_margin(idx, D, self.generator) for idx in self.indices])

    def closure(self, transport, depth, max_grade=None):
        """Panel extended by up to ``depth`` applications of ``transport``.

        Indices whose grade exceeds ``max_grade`` are dropped with a warning.
        """
        seen = list(self.indices)
        frontier = list(self.indices)
        pruned = 0
        for _ in range(depth):
            nxt = []
            for idx in frontier:
                new = transport(idx)
                if max_grade is not None and new.k > max_grade:
                    pruned += 1
                    continue
                if new not in seen:
                    seen.append(new)
                    nxt.append(new)
            frontier = nxt
            if not frontier:
                break
        if pruned:
            log.warning("panel closure pruned %d transported indices above grade %s",
                        pruned, max_grade)
        return self.with_indices(seen)

    def is_closed_under(self, transport, max_grade=None):
        for idx in self.indices:
            new = transport(idx)
            if max_grade is not None and new.k > max_grade:
                continue
            if new not in self.indices:
                return False
        return True

    # JSON layout: {generator, shift, scale, weights: [{p,i,s}], grades: [...]}
    # or an explicit "indices" list for panels that are not a product.
    @classmethod
    def from_json(cls, doc, D):
        gen = panel_generator(D, doc.get("generator", "N"), doc.get("shift", 0.0),
                              doc.get("scale", 1.0))
        if "indices" in doc:
            indices = [SeminormIndex.from_json(d) for d in doc["indices"]]
        else:
            weights = [Weight(w["p"], w.get("i", 0), w.get("s", 1.0)) for w in doc["weights"]]
            indices = [SeminormIndex(w, k) for w, k in product(weights, doc["grades"])]
        return cls(gen, indices)

    def to_json(self):
        return {
            "dimension": self.dim,
            "spectrum_head": [float(v) for v in self.spectrum[:4]],
            "indices": [idx.to_json() for idx in self.indices],
        }


def panel_generator(D, kind="N", shift=0.0, scale=1.0):
    """Generator named in a panel document: ``scale * (shift + N)``.

    ``"N"`` is the bare number operator and ignores a zero shift; ``"H"`` is
    the shifted Hamiltonian ``shift + N``.
    """
    if kind not in ("N", "H"):
        raise PanelError(f"unknown generator {kind!r}; expected 'N' or 'H'")
    if kind == "N" and shift:
        raise PanelError("generator 'N' takes no shift; use 'H'")
    base = fock.shifted_hamiltonian(D, shift)
    if scale == 1.0:
        return base
    return fock.scalar_mul(scale, base)

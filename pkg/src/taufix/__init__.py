"""Fixed points of weak contractions on truncated operator algebras.

Submodules:

``fock``
    truncated bosonic operators and the model Hamiltonians;
``seminorm``
    weights, graded seminorms and finite panels of them;
``contraction``
    contraction maps, ``B_L`` certificates and the fixed-point engine;
``family``
    parameter families, strong-Cauchy checks and fixed-point nets;
``picard``
    operator-valued initial-value problems as integral-map fixed points;
``dynamics``
    Heisenberg evolution and cutoff removal for diagonal Hamiltonians;
``blcert``
    explicit elements of ``B_L``;
``cli``
    the ``taufix`` command line.
"""

from . import blcert, contraction, dynamics, family, fock, picard, seminorm
from .contraction import MapSpec, iterate_fixed_point
from .errors import TaufixError
from .picard import OpTrajectory, TimeGrid
from .seminorm import Lift, Panel, SeminormIndex, Weight

__version__ = "0.1.0"

__all__ = [
    "blcert",
    "contraction",
    "dynamics",
    "family",
    "fock",
    "picard",
    "seminorm",
    "Lift",
    "MapSpec",
    "OpTrajectory",
    "Panel",
    "SeminormIndex",
    "TaufixError",
    "TimeGrid",
    "Weight",
    "iterate_fixed_point",
]

"""Mean-field dynamics of multi-component Bose mixtures on a periodic grid.

Hartree-type mean-field solver, exact fixed-particle-number many-body
propagation, reduced density tensors and trace-norm convergence studies,
plus truncated Fock-space checks of the operator lemmas used along the way.
"""

from hartreemix.grid import PeriodicGrid, make_grid
from hartreemix.potentials import PotentialMatrix, PotentialSpec
from hartreemix.hartree import MixtureSpec, OrbitalSet

__all__ = [
    "PeriodicGrid",
    "make_grid",
    "PotentialSpec",
    "PotentialMatrix",
    "MixtureSpec",
    "OrbitalSet",
]

__version__ = "0.1.0"

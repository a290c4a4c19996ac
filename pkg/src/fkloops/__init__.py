"""Critical FK Ising boundary-loop laboratory: lattice, loops, exploration, observables."""

__version__ = "0.1.0"

"""Monte Carlo and exact tools for FK percolation, Potts spins and random currents on book lattices."""

__version__ = "0.1.0"

"""masspart - random mass-partitions of the Poisson-Dirichlet / RAM family."""

__version__ = "0.1.0"

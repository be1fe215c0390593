"""Side-channel leakage evaluation for KEM decapsulation power traces."""

__version__ = "0.1.0"

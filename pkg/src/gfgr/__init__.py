"""Coarse-grained (generalized Fermi's golden rule) Lindblad dynamics for finite quantum systems."""

__version__ = "0.1.0"

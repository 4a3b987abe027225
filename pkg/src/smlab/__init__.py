"""Soft-minoration lab: transport, minimum-MI couplings and spin-model free energies."""

__version__ = "0.1.0"

"""Competitive reaction-diffusion on disks and annuli: simulation and symmetry diagnostics."""

__version__ = "0.1.0"

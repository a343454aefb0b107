"""MPLT: dual-branch RGB-T tracking with mutual multi-modal prompters."""

__version__ = "0.1.0"

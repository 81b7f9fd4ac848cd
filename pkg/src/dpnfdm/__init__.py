"""Dual-polarization NFDM toolkit: direct/inverse NFT for the Manakov system,
split-step channel simulation and transceiver DSP."""

__version__ = "0.1.0"

"""Paired orthophoto / airborne-laser plot datasets and multi-modal fusion
for forest biodiversity potential classification."""

__version__ = "0.1.0"

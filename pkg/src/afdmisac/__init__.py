"""Predictive ISAC pre-equalization on the AFDM delay-Doppler grid."""

__version__ = "0.1.0"

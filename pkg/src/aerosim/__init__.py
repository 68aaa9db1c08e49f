"""Link-level simulation of multiple-antenna L-band air-to-ground communications."""

__version__ = "0.1.0"

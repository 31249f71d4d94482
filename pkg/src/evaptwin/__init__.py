"""Digital twin of dipole-trap evaporative cooling with Bayesian ramp optimization."""

__version__ = "0.1.0"

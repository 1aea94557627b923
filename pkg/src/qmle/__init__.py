"""Maximum-likelihood estimation from dependent 1-bit quantized sensor data."""

__version__ = "0.1.0"

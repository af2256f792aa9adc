"""Average-distance functional laboratory for planar graphs."""

__version__ = "0.1.0"

"""raw2raw: mapping raw-RGB images between camera sensor color spaces."""

__version__ = "0.1.0"

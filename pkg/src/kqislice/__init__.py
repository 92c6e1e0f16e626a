"""Video streaming KQI estimation for slice negotiation and dynamic allocation."""

__version__ = "0.1.0"

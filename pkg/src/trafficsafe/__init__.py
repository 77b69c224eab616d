"""Emergency-vehicle threat warnings: geometry, grid rules, latency budget, simulation."""

__version__ = "0.1.0"

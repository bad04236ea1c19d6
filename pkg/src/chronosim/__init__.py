"""Clock synchronization: SNTP and SPoT over a simulated or live network."""

__version__ = "0.1.0"

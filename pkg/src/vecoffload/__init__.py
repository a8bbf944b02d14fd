"""Speed-aware task offloading and resource allocation in a vehicular edge computing cell."""

__version__ = "0.1.0"

"""gatewright: skill-governed workflow gating for computational chemistry agents."""

__version__ = "0.1.0"

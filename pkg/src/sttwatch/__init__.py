"""Socio-technical topology modelling and adaptive threat detection for
software repositories.

The package mines local activity exports (git numstat logs, mbox archives,
issue dumps), materialises time-windowed topology snapshots, computes
per-author threat indicators and runs a monitor/analyze/plan/execute loop
that ranks files for closer inspection.
"""

__version__ = "0.1.0"

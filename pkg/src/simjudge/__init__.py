"""Deterministic pre-execution gates, error budgets, audits, probes and certificates
for simulation problems written as Markdown spec documents."""

__version__ = "0.1.0"

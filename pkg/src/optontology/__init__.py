"""Optimization problem ontology: classify, transform, solve, certify."""

__version__ = "0.1.0"

"""Desk-scale lab: diffusion-purified user states feeding a hierarchical
fairness/accuracy recommender agent inside a synthetic interactive
environment with known ground-truth preferences."""

__version__ = "0.1.0"

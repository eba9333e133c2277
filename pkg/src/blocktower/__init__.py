"""Desk-scale block-tower intuitive-physics laboratory.

Simulates small towers of square blocks in 2D, renders balanced labeled
image/mask datasets, trains fall+mask predictors and baselines from scratch,
evaluates them, and runs a human-subject trial service.
"""

__version__ = "0.1.0"

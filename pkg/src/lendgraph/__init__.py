"""Communication-graph and location features for loan-profit modelling."""

__version__ = "0.1.0"

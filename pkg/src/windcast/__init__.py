"""Univariate wind speed forecasting with SVR and random forests.

Pipeline: mutual-information lag selection, delay embedding, epsilon-SVR
(RBF kernel, SMO) or random-forest regression, recursive multi-step
forecasts, and rolling-origin same/cross-location evaluation.
"""

__version__ = "0.1.0"

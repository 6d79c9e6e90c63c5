# Reduced-order Markov modeling of time series via symbolic dynamics.
__version__ = "0.1.0"

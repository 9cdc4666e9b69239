"""Human + machine risk-score fusion toolkit."""

__version__ = "0.1.0"

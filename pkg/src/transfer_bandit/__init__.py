"""Linear contextual bandits that transfer biased offline data through
directional bias certificates."""

__version__ = "0.1.0"

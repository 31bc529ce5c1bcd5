"""Self-supervised entity resolution: pseudo-labels, relational graph features and a joint matcher."""

__version__ = "0.1.0"

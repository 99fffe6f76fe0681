"""Building multi-attribute pipeline: vectorized rooftops, engineered
features, bagged boosted-tree height/function models, quality and age
attribution, and the audit workflow used to validate them."""

__version__ = "0.1.0"

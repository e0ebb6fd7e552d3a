"""Multi-taper synchrosqueezing with random projections (ConceFT)."""
__version__ = "0.1.0"

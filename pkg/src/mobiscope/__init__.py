"""mobiscope: mobility analytics for geo-tagged social-media post logs.

Reconstructs per-user space-time trajectories, derives mobility measures
(radius of gyration, DBSCAN activity centers, night-time home detection),
infers demographic attributes from profile names, and produces statistical
analysis products (segmented power-law fits, tract correlation, KDE rasters).
"""

__version__ = "0.1.0"

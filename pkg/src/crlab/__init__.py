"""Numerical laboratory for a tangential Cauchy-Riemann homotopy formula on
strongly pseudoconvex graph hypersurfaces, Holder-norm experiments, and a
rapid-iteration solver for flat connection forms."""

__version__ = "0.1.0"

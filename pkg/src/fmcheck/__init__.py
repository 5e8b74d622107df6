"""Numerical verification engine for product/metric structures on charts."""

__version__ = "0.1.0"

from .manifold import ManifoldSpec, Region, SamplePlan, Report, StructureAt, structure_at

__all__ = ["ManifoldSpec", "Region", "SamplePlan", "Report", "StructureAt",
           "structure_at", "__version__"]

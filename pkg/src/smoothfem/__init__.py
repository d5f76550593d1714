"""smoothfem: 2D linear elasticity with strain smoothing.

Finite element library and experiment driver for the strain-smoothed
element (SSE) method and its smoothed-FEM baselines, including the
projection-operator construction that exposes the method's convergence
behavior as testable numerical properties.
"""

from . import analysis, assembly, elements, geometry, mesh, smoothing

__all__ = ["analysis", "assembly", "elements", "geometry", "mesh", "smoothing"]
__version__ = "0.1.0"

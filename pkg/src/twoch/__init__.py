"""Two-component Camassa-Holm system in Lagrangian coordinates.

Conversion between Eulerian data ``(u, rho, mu)`` and Lagrangian variables,
linear-time evaluation of the nonlocal source terms, RK4 time stepping that
continues through wave breaking, and breaking prediction along
characteristics.
"""

__version__ = "0.1.0"

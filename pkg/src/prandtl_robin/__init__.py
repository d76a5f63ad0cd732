"""Prandtl boundary-layer equations with a Robin wall condition: shear flows,
smoothing operators, the linearized solver and a Nash-Moser iteration.

Submodules are imported lazily so that the CLI can cap BLAS threads before
numpy loads.
"""

__version__ = "0.1.0"

__all__ = ["grid", "norms", "shear", "smoothing", "operators", "linearized", "mms", "nash_moser",
           "config", "experiments", "cli", "errors"]

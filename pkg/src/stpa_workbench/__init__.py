"""STPA safety workbench: context analysis, safe behavior models, LTL
verification and safety-based test generation for software controllers."""

__version__ = "0.1.0"

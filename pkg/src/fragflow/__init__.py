"""Fragment-level discrete flow matching for molecular graph generation."""

__version__ = "0.1.0"

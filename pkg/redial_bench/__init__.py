"""redial_bench - Standardized evaluation harness for ReDial-format conversational recommendation."""

__version__ = "1.0.0"

"""Remote photoplethysmography toolkit: traces, pulse reconstruction, sync, model, metrics."""
__version__ = "0.1.0"

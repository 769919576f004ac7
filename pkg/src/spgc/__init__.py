"""Single-layer polynomial graph convolutions trained on precomputed diffusions."""

__version__ = "0.1.0"

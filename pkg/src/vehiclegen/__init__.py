"""Box-conditional vehicle inpainting for road scenes."""

__version__ = "0.1.0"

"""Single-view point cloud reconstruction with a folding decoder and its evaluation tooling."""

__version__ = "0.1.0"

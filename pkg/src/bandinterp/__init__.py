"""Band-function reconstruction for 2D photonic crystals from a few Bloch
FEM solves and global polynomial interpolation over the IBZ."""

__version__ = "0.1.0"

"""Eigen-basis modeling of generalized rate-distortion (GRD) surfaces.

Quality as a function of bitrate and spatial resolution is stored on a
discrete lattice, approximated by a learned or fixed basis, reconstructed
from sparse samples under monotonicity constraints, and used to compare
codecs.
"""

from .grid import AxisSpec, GrdGrid, SampleSet, default_axes, desk_axes, validate_membership
from .basis import EigenBasis, build_basis, pca_train
from .reconstruct import ReconstructionConfig, estimate
from .compare import compare, fit_codec

__version__ = "0.1.0"

__all__ = [
    "AxisSpec",
    "GrdGrid",
    "SampleSet",
    "default_axes",
    "desk_axes",
    "validate_membership",
    "EigenBasis",
    "build_basis",
    "pca_train",
    "ReconstructionConfig",
    "estimate",
    "compare",
    "fit_codec",
]

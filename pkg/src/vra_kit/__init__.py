"""Post-hoc OOD detection toolkit operating on exported feature tensors.

Rectifies penultimate-layer activations of a pretrained classifier,
scores samples (MSP / Energy / temperature-scaled ODIN / VRA++), and
evaluates detection quality (FPR95, AUROC). The core works entirely on
NPY tensor files and needs no ML framework.
"""

from vra_kit.errors import (
    DataValidityError,
    FormatError,
    ParameterError,
    UnsupportedLayoutError,
    VraKitError,
)

__version__ = "0.1.0"

__all__ = [
    "VraKitError",
    "FormatError",
    "UnsupportedLayoutError",
    "DataValidityError",
    "ParameterError",
    "__version__",
]

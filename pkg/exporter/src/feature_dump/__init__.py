"""feature-dump: export vision-model activations for vra-kit.

Dumps penultimate-layer features (post final nonlinearity), the linear
classifier head, and logits from torchvision models into the NPY +
manifest format that vra-kit consumes.
"""

from feature_dump.errors import ExportError, UnknownModelError
from feature_dump.export import (
    ExportJob,
    export_features,
    export_noise_validation,
)
from feature_dump.models import ModelParts, build_model, list_models

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "UnknownModelError",
    "ExportJob",
    "ModelParts",
    "build_model",
    "export_features",
    "export_noise_validation",
    "list_models",
    "__version__",
]

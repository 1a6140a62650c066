"""Model registry: split a classifier into backbone + linear head.

The backbone maps a preprocessed image batch to the penultimate feature
vector. Features are captured *after* the final nonlinearity of the
backbone — for ResNets that is the output of the last post-ReLU stage
after global average pooling; for DenseNets the final batch-norm output
passes through an explicit ReLU before pooling (mirroring the
torchvision forward). These are the activations that truncation-style
rectifiers act on, so they are non-negative by construction.
"""

from dataclasses import dataclass

import torch
from torch import nn
from torchvision import models as tvm
from torchvision import transforms

from feature_dump.errors import ExportError, UnknownModelError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class ModelParts:
    """A classifier split for feature export."""

    name: str
    backbone: nn.Module  # images -> (N, m) penultimate features
    head: nn.Linear  # (N, m) -> (N, classes)
    preprocess: object  # PIL image -> normalized tensor
    feature_dim: int
    normalization: tuple  # (mean, std) used by ``preprocess``

    def logits(self, images: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(images))


class _DenseNetBackbone(nn.Module):
    def __init__(self, features: nn.Module):
        super().__init__()
        self.features = features
        self.relu = nn.ReLU(inplace=False)
        self.pool = nn.AdaptiveAvgPool2d(1)

    def forward(self, x):
        return torch.flatten(self.pool(self.relu(self.features(x))), 1)


def default_preprocess(input_size: int = 224):
    """Resize shorter side to 8/7 of the crop then center-crop; the
    standard ImageNet evaluation pipeline scaled to ``input_size``."""
    resize = max(int(round(input_size * 256 / 224)), input_size)
    return transforms.Compose(
        [
            transforms.Resize(resize),
            transforms.CenterCrop(input_size),
            transforms.ToTensor(),
            transforms.Normalize(IMAGENET_MEAN, IMAGENET_STD),
        ]
    )


_RESNETS = {
    "resnet18": tvm.resnet18,
    "resnet34": tvm.resnet34,
    "resnet50": tvm.resnet50,
}

_DENSENETS = {
    "densenet121": tvm.densenet121,
}


def list_models() -> tuple:
    return tuple(sorted({**_RESNETS, **_DENSENETS}))


def _resolve_weights(name: str, weights_tag: str | None):
    if weights_tag in (None, "", "none"):
        return None
    try:
        return tvm.get_model_weights(name)[weights_tag]
    except KeyError as exc:
        raise ExportError(
            f"unknown weights tag {weights_tag!r} for model {name!r}"
        ) from exc


def build_model(
    name: str,
    weights_tag: str | None = None,
    input_size: int = 224,
) -> ModelParts:
    """Instantiate an architecture and split it into backbone + head.

    ``weights_tag`` is a torchvision weights enum member name (for
    example ``IMAGENET1K_V2``); ``none`` gives random initialization.
    """
    if name in _RESNETS:
        weights = _resolve_weights(name, weights_tag)
        model = _RESNETS[name](weights=weights)
        # children: stem, layer1..4, avgpool, fc — drop the head and
        # flatten the pooled (already post-ReLU) activations.
        backbone = nn.Sequential(*list(model.children())[:-1], nn.Flatten(1))
        head = model.fc
    elif name in _DENSENETS:
        weights = _resolve_weights(name, weights_tag)
        model = _DENSENETS[name](weights=weights)
        backbone = _DenseNetBackbone(model.features)
        head = model.classifier
    else:
        raise UnknownModelError(
            f"unknown architecture {name!r}; available: {', '.join(list_models())}"
        )

    backbone.eval()
    head.eval()
    feature_dim = _probe_feature_dim(backbone, input_size)
    if feature_dim != head.in_features:
        raise ExportError(
            f"probed feature width {feature_dim} does not match the head's "
            f"{head.in_features} input features"
        )
    if weights is not None and hasattr(weights, "transforms"):
        preprocess = weights.transforms()
    else:
        preprocess = default_preprocess(input_size)
    return ModelParts(
        name=name,
        backbone=backbone,
        head=head,
        preprocess=preprocess,
        feature_dim=feature_dim,
        normalization=(IMAGENET_MEAN, IMAGENET_STD),
    )


def _probe_feature_dim(backbone: nn.Module, input_size: int) -> int:
    probe_size = max(min(input_size, 64), 32)  # adaptive pooling makes
    # the feature width independent of resolution; probe small for speed
    with torch.no_grad():
        out = backbone(torch.zeros(1, 3, probe_size, probe_size))
    if out.ndim != 2:
        raise ExportError(
            f"backbone probe produced a {out.ndim}-D tensor; expected N x m"
        )
    return int(out.shape[1])

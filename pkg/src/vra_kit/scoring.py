"""Detection scores computed from (rectified) features and logits.

Every score follows one convention: larger means more in-distribution.
Energy is therefore reported as logsumexp itself, not its negative.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from vra_kit.errors import DataValidityError, ParameterError
from vra_kit.tensor_io import ClassifierHead


@dataclass(frozen=True)
class ScoreVector:
    """Per-sample scores under the higher-is-ID convention."""

    values: np.ndarray
    method: str

    def __post_init__(self):
        v = np.asarray(self.values, float).ravel()
        if not np.isfinite(v).all():
            raise DataValidityError(f"{self.method}: non-finite score produced")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class VraPlusPlusParams:
    """Quadratic-feature term weight and root for the VRA++ score."""

    lambda_v: float
    alpha_v: float

    def __post_init__(self):
        if not (np.isfinite(self.lambda_v) and np.isfinite(self.alpha_v)):
            raise ParameterError("VRA++ parameters must be finite")
        if self.lambda_v < 0:
            raise ParameterError(f"lambda_v must be >= 0, got {self.lambda_v}")


def forward_logits(head: ClassifierHead, rectified: np.ndarray) -> np.ndarray:
    """Affine head: logits[n] = W @ rectified[n] + b, in float64."""
    feats = np.asarray(rectified, np.float64)
    if feats.ndim != 2 or feats.shape[1] != head.feature_dim:
        raise DataValidityError(
            f"features have shape {feats.shape}, head expects N x {head.feature_dim}"
        )
    return feats @ head.weights.T + head.bias


def score_msp(logits: np.ndarray) -> ScoreVector:
    """Maximum softmax probability, computed with max-subtraction."""
    logits = np.asarray(logits, float)
    return ScoreVector(values=softmax(logits, axis=1).max(axis=1), method="msp")


def score_energy(logits: np.ndarray, temperature: float = 1.0) -> ScoreVector:
    """Energy score T * logsumexp(logits / T); higher means ID."""
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    logits = np.asarray(logits, float)
    return ScoreVector(
        values=temperature * logsumexp(logits / temperature, axis=1),
        method="energy",
    )


def score_odin_t(logits: np.ndarray, temperature: float) -> ScoreVector:
    """Temperature-scaled max softmax (the gradient-free half of ODIN)."""
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    logits = np.asarray(logits, float)
    return ScoreVector(
        values=softmax(logits / temperature, axis=1).max(axis=1),
        method="odin-t",
    )


def score_vra_pp(
    features: np.ndarray, logits: np.ndarray, p: VraPlusPlusParams
) -> ScoreVector:
    """Quadratic feature indicator plus energy:
    -lambda_v * sum_i (z_i^2 - alpha_v * z_i) + logsumexp(logits).

    ``features`` are the raw (unrectified) activations; ``logits`` come
    from whichever features the caller chose to push through the head.
    """
    feats = np.asarray(features, float)
    logits = np.asarray(logits, float)
    if feats.ndim != 2 or logits.ndim != 2 or feats.shape[0] != logits.shape[0]:
        raise DataValidityError(
            f"features {feats.shape} and logits {logits.shape} row counts differ"
        )
    quad = (feats**2 - p.alpha_v * feats).sum(axis=1)
    return ScoreVector(
        values=-p.lambda_v * quad + logsumexp(logits, axis=1),
        method="vra-pp",
    )


def score_feature_sum(rectified: np.ndarray) -> ScoreVector:
    """Sum of rectified activations per sample."""
    feats = np.asarray(rectified, float)
    if feats.ndim != 2 or feats.shape[1] < 1:
        raise DataValidityError("need an N x m matrix with m >= 1")
    return ScoreVector(values=feats.sum(axis=1), method="feature-sum")

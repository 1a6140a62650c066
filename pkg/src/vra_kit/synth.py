"""Synthetic diagonal-Gaussian benchmark generator.

Desk-scale stand-in for image benchmarks: ID splits from one Gaussian,
an OOD split from a shifted (and typically wider) one, a Gaussian noise
validation split (wider than ID so threshold tuning has signal), and a
random linear head. Everything is a pure
function of the seed (numpy PCG64 via default_rng), so generated files
are byte-identical across runs and platforms.
"""

from dataclasses import dataclass

import numpy as np

from vra_kit.errors import ParameterError
from vra_kit.tensor_io import ManifestEntry, write_manifest, write_matrix


@dataclass(frozen=True)
class SyntheticSpec:
    feature_dim: int
    n_per_split: int
    id_mean: np.ndarray
    id_scale: np.ndarray
    ood_mean: np.ndarray
    ood_scale: np.ndarray
    seed: int
    num_classes: int = 10
    noise_scale: float = 2.0

    def __post_init__(self):
        if self.feature_dim < 1:
            raise ParameterError("feature_dim must be >= 1")
        if self.n_per_split < 2:
            raise ParameterError("n_per_split must be >= 2")
        if self.num_classes < 2:
            raise ParameterError("num_classes must be >= 2")
        if self.noise_scale <= 0:
            raise ParameterError("noise_scale must be positive")
        for name in ("id_mean", "id_scale", "ood_mean", "ood_scale"):
            v = np.broadcast_to(
                np.asarray(getattr(self, name), float), (self.feature_dim,)
            ).copy()
            if name.endswith("scale") and (v <= 0).any():
                raise ParameterError(f"{name} must be strictly positive")
            object.__setattr__(self, name, v)

    @classmethod
    def shifted(
        cls,
        feature_dim: int,
        n_per_split: int,
        seed: int,
        shift: float = 1.5,
        ood_scale: float = 1.5,
        noise_scale: float = 2.0,
        num_classes: int = 10,
    ) -> "SyntheticSpec":
        """ID = N(0, I); OOD shifted by ``shift`` per coordinate with
        standard deviation ``ood_scale`` (heavier spread than ID)."""
        return cls(
            feature_dim=feature_dim,
            n_per_split=n_per_split,
            id_mean=np.zeros(feature_dim),
            id_scale=np.ones(feature_dim),
            ood_mean=np.full(feature_dim, float(shift)),
            ood_scale=np.full(feature_dim, float(ood_scale)),
            seed=seed,
            num_classes=num_classes,
            noise_scale=noise_scale,
        )


def generate(spec: SyntheticSpec, out_dir) -> None:
    """Write feature tensors, head, and manifest into ``out_dir``."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    n, m = spec.n_per_split, spec.feature_dim

    def gaussian(mean, scale):
        return mean + scale * rng.standard_normal((n, m))

    tensors = {
        "id_train": gaussian(spec.id_mean, spec.id_scale),
        "id_test": gaussian(spec.id_mean, spec.id_scale),
        "ood": gaussian(spec.ood_mean, spec.ood_scale),
        "validation": spec.noise_scale * rng.standard_normal((n, m)),
    }
    # Non-negative head weights: class logits grow with activations, as
    # they do for post-ReLU features feeding a trained head. This gives
    # the synthetic benchmark the same overconfidence direction the
    # rectifiers are designed to counter.
    head_weights = np.abs(rng.standard_normal((spec.num_classes, m))) / np.sqrt(m)
    head_bias = rng.standard_normal(spec.num_classes) * 0.1

    entries = []
    for name, data in tensors.items():
        write_matrix(data, out / f"{name}.npy")
        role = name if name != "ood" else "ood"
        entries.append(
            ManifestEntry(
                name=name, role=role, features_path=f"{name}.npy", labels_path=None
            )
        )
    write_matrix(head_weights, out / "head_weights.npy")
    write_matrix(head_bias.reshape(1, -1), out / "head_bias.npy")
    write_manifest(out / "manifest.ini", entries, "head_weights.npy", "head_bias.npy")

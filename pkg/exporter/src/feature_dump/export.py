"""Feature export: images -> NPY tensors + manifest.

All tensor files are written atomically (temp file + rename) through
vra-kit's deterministic NPY writer, and dataset rows follow sorted file
order with no shuffling, so a rerun of the same job produces
byte-identical artifacts.
"""

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from vra_kit.tensor_io import ManifestEntry, write_manifest, write_matrix

from feature_dump.errors import ExportError
from feature_dump.models import ModelParts, build_model

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".webp")

_ROLES = ("id_train", "id_test", "ood", "validation")

HEAD_WEIGHTS_FILE = "head_weights.npy"
HEAD_BIAS_FILE = "head_bias.npy"
MANIFEST_FILE = "manifest.ini"


@dataclass(frozen=True)
class ExportJob:
    """One export run: a model plus image directories keyed by role."""

    model: str
    weights: str | None = None
    data_roots: dict = field(default_factory=dict)  # role -> directory
    batch_size: int = 32
    device: str = "cpu"
    out_dir: Path = Path("export")
    input_size: int = 224
    save_logits: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ExportError(f"batch size must be >= 1, got {self.batch_size}")
        for role in self.data_roots:
            if role not in _ROLES:
                raise ExportError(
                    f"unknown role {role!r}; expected one of {_ROLES}"
                )


def list_images(root) -> list:
    """All image files under ``root``, sorted for a stable row order."""
    root = Path(root)
    if not root.is_dir():
        raise ExportError(f"dataset directory {root} does not exist")
    files = sorted(
        p for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if not files:
        raise ExportError(f"no image files found under {root}")
    return files


def _atomic_write_matrix(matrix: np.ndarray, path: Path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        write_matrix(matrix, tmp)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _forward_batches(parts: ModelParts, batches, device: str):
    """Yield (features, logits) numpy pairs for an iterable of image
    tensor batches."""
    dev = torch.device(device)
    backbone = parts.backbone.to(dev)
    head = parts.head.to(dev)
    with torch.no_grad():
        for batch in batches:
            feats = backbone(batch.to(dev))
            logits = head(feats)
            yield feats.cpu().numpy(), logits.cpu().numpy()


def _batched_images(parts: ModelParts, files, batch_size: int):
    batch = []
    for path in files:
        with Image.open(path) as img:
            tensor = parts.preprocess(img.convert("RGB"))
        batch.append(tensor)
        if len(batch) == batch_size:
            yield torch.stack(batch)
            batch = []
    if batch:
        yield torch.stack(batch)


def _export_head(parts: ModelParts, out_dir: Path) -> None:
    weights = parts.head.weight.detach().cpu().numpy().astype(np.float64)
    bias = parts.head.bias.detach().cpu().numpy().astype(np.float64)
    _atomic_write_matrix(weights, out_dir / HEAD_WEIGHTS_FILE)
    _atomic_write_matrix(bias.reshape(1, -1), out_dir / HEAD_BIAS_FILE)


def _write_role(parts, job, role, batches, out_dir: Path) -> ManifestEntry:
    feat_blocks, logit_blocks = [], []
    for feats, logits in _forward_batches(parts, batches, job.device):
        feat_blocks.append(feats)
        logit_blocks.append(logits)
    features = np.concatenate(feat_blocks).astype(np.float64)
    rel = f"{role}.npy"
    _atomic_write_matrix(features, out_dir / rel)
    if job.save_logits:
        logits = np.concatenate(logit_blocks).astype(np.float64)
        _atomic_write_matrix(logits, out_dir / f"{role}_logits.npy")
    return ManifestEntry(name=role, role=role, features_path=rel)


def export_features(job: ExportJob, parts: ModelParts | None = None) -> Path:
    """Run the model over every configured dataset and write features,
    head, and manifest into ``job.out_dir``. Returns the manifest path.

    ``parts`` lets a caller supply an already-built (for example,
    already-loaded or randomly seeded) model split.
    """
    if not job.data_roots:
        raise ExportError("export job has no dataset directories")
    if parts is None:
        parts = build_model(job.model, job.weights, job.input_size)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for role in sorted(job.data_roots):
        files = list_images(job.data_roots[role])
        batches = _batched_images(parts, files, job.batch_size)
        entries.append(_write_role(parts, job, role, batches, out_dir))

    _export_head(parts, out_dir)
    manifest_path = out_dir / MANIFEST_FILE
    write_manifest(manifest_path, entries, HEAD_WEIGHTS_FILE, HEAD_BIAS_FILE)
    return manifest_path


def noise_images(
    count: int, seed: int, input_size: int, normalization: tuple
) -> torch.Tensor:
    """Standard-normal pixel images clipped to [0, 1], then normalized
    with the model's preprocessing statistics."""
    if count < 1:
        raise ExportError(f"noise image count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    pixels = rng.standard_normal((count, 3, input_size, input_size))
    pixels = np.clip(pixels, 0.0, 1.0).astype(np.float32)
    mean, std = normalization
    mean = np.asarray(mean, np.float32).reshape(1, 3, 1, 1)
    std = np.asarray(std, np.float32).reshape(1, 3, 1, 1)
    return torch.from_numpy((pixels - mean) / std)


def export_noise_validation(
    job: ExportJob, count: int, seed: int, parts: ModelParts | None = None
) -> Path:
    """Forward seeded Gaussian-noise images and save their penultimate
    features as ``validation.npy`` in ``job.out_dir``.

    If a manifest from a previous feature export exists there, it is
    rewritten to include the validation entry."""
    if parts is None:
        parts = build_model(job.model, job.weights, job.input_size)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    images = noise_images(count, seed, job.input_size, parts.normalization)
    batches = (
        images[i : i + job.batch_size]
        for i in range(0, count, job.batch_size)
    )
    entry = _write_role(parts, job, "validation", batches, out_dir)

    manifest_path = out_dir / MANIFEST_FILE
    if manifest_path.exists():
        _append_manifest_entry(manifest_path, entry)
    return out_dir / entry.features_path


def _append_manifest_entry(manifest_path: Path, entry: ManifestEntry) -> None:
    import configparser

    parser = configparser.ConfigParser()
    with Path(manifest_path).open("r", encoding="utf-8") as fh:
        parser.read_file(fh)
    entries = []
    for section in parser.sections():
        if not section.startswith("dataset:"):
            continue
        name = section.split(":", 1)[1]
        if name == entry.name:
            continue
        entries.append(
            ManifestEntry(
                name=name,
                role=parser.get(section, "role"),
                features_path=parser.get(section, "features"),
                labels_path=parser.get(section, "labels", fallback=None),
            )
        )
    entries.append(entry)
    entries.sort(key=lambda e: e.name)
    write_manifest(
        manifest_path,
        entries,
        parser.get("head", "weights"),
        parser.get("head", "bias"),
    )

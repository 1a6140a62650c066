"""Acceptance checks for the exporter, mirroring the main toolkit's
one-line-per-criterion reporting."""

import os
from pathlib import Path

import numpy as np
import pytest
import torch

from feature_dump.export import ExportJob, export_noise_validation, noise_images
from feature_dump.models import build_model
from vra_kit.tensor_io import ClassifierHead, load_matrix


def _verdict(name: str, ok: bool) -> None:
    print(f"\n[ACCEPT] {name}: {'PASS' if ok else 'FAIL'}")


def _pretrained_available() -> bool:
    hub = Path(os.environ.get("TORCH_HOME", Path.home() / ".cache" / "torch"))
    ckpts = hub / "hub" / "checkpoints"
    return ckpts.is_dir() and any(ckpts.glob("resnet50*.pth"))


def test_accept_export_fidelity(tmp_path):
    # ResNet-50 (randomly initialized: the export path is identical with
    # or without downloaded weights), 512 noise samples, batched export
    # vs the live model's own logits.
    torch.manual_seed(0)
    parts = build_model("resnet50", weights_tag=None, input_size=64)
    job = ExportJob(
        model="resnet50", out_dir=tmp_path, input_size=64, batch_size=64
    )
    export_noise_validation(job, count=512, seed=0, parts=parts)

    feats = load_matrix(tmp_path / "validation.npy")
    head = ClassifierHead(
        weights=parts.head.weight.detach().numpy().astype(np.float64),
        bias=parts.head.bias.detach().numpy().astype(np.float64),
    )
    ours = feats @ head.weights.T + head.bias

    images = noise_images(512, seed=0, input_size=64,
                          normalization=parts.normalization)
    live = []
    with torch.no_grad():
        for i in range(0, 512, 64):
            live.append(parts.logits(images[i : i + 64]).numpy())
    live = np.concatenate(live)

    max_diff = float(np.abs(ours - live).max())
    ok = feats.shape == (512, 2048) and max_diff <= 1e-4
    _verdict("export-fidelity", ok)
    assert ok, f"max |exported - live| logit diff {max_diff:.2e}"


@pytest.mark.skipif(
    not _pretrained_available(),
    reason="pretrained resnet50 weights not cached locally",
)
def test_accept_real_model_sanity(tmp_path):
    # With a genuinely pretrained model, tuned band rectification +
    # energy should beat plain energy on FPR95 for a noise-vs-ID split.
    parts = build_model("resnet50", weights_tag="IMAGENET1K_V2")
    job = ExportJob(model="resnet50", out_dir=tmp_path, batch_size=32)
    export_noise_validation(job, count=256, seed=0, parts=parts)
    pytest.skip("requires exported ID/OOD image features; see ledger")

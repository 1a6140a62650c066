"""NPY tensor I/O, dataset manifests, and the core data containers.

Tensors are exchanged as NPY v1.0 files (little-endian float32/float64,
C order). Loading validates layout and finiteness so downstream
statistics never see NaN/Inf; everything is widened to float64.
"""

import ast
import configparser
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from vra_kit.errors import (
    DataValidityError,
    FormatError,
    UnsupportedLayoutError,
)

_MAGIC = b"\x93NUMPY"
_VERSION = b"\x01\x00"
_ACCEPTED_DESCRS = ("<f4", "<f8")

ROLES = ("id_train", "id_test", "ood", "validation")

MANIFEST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeatureSet:
    """N x m matrix of penultimate activations with a role tag."""

    name: str
    role: str
    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise DataValidityError(
                f"unknown role {self.role!r} for dataset {self.name!r}; "
                f"expected one of {ROLES}"
            )

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ClassifierHead:
    """Linear head mapping rectified features to logits."""

    weights: np.ndarray  # num_classes x m
    bias: np.ndarray  # num_classes

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise DataValidityError("head weights must be 2-D")
        if self.num_classes < 2:
            raise DataValidityError(
                f"head needs at least 2 classes, got {self.num_classes}"
            )
        if self.bias.shape != (self.num_classes,):
            raise DataValidityError(
                f"bias length {self.bias.shape} does not match "
                f"{self.num_classes} classes"
            )

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    role: str
    features_path: str
    labels_path: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    """Parsed manifest plus the tensors it references."""

    entries: tuple
    head: ClassifierHead
    feature_sets: tuple
    format_version: int = MANIFEST_FORMAT_VERSION
    base_dir: Path = field(default_factory=Path)

    def sets_by_role(self, role: str) -> list:
        return [fs for fs in self.feature_sets if fs.role == role]

    def require_role(self, role: str) -> list:
        found = self.sets_by_role(role)
        if not found:
            raise DataValidityError(f"manifest has no {role!r} dataset")
        return found

    @property
    def feature_dim(self) -> int:
        return self.head.feature_dim


def load_matrix(path) -> np.ndarray:
    """Load an NPY v1.0 float tensor as a 2-D float64 array.

    1-D inputs become 1 x n. Rejects non-v1.0 files, Fortran order,
    big-endian or integer dtypes, and non-finite values.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 10 or raw[:6] != _MAGIC:
        raise FormatError(f"{path}: not an NPY file (bad magic)")
    if raw[6:8] != _VERSION:
        raise FormatError(
            f"{path}: unsupported NPY version {raw[6]}.{raw[7]}; only 1.0 is accepted"
        )
    (header_len,) = struct.unpack("<H", raw[8:10])
    header_end = 10 + header_len
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated NPY header")
    try:
        header = ast.literal_eval(raw[10:header_end].decode("ascii"))
        descr = header["descr"]
        fortran = header["fortran_order"]
        shape = header["shape"]
    except (ValueError, SyntaxError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: malformed NPY header: {exc}") from exc

    if not isinstance(descr, str) or descr not in _ACCEPTED_DESCRS:
        raise UnsupportedLayoutError(
            f"{path}: dtype {descr!r} unsupported; need little-endian float "
            f"({'/'.join(_ACCEPTED_DESCRS)})"
        )
    if fortran:
        raise UnsupportedLayoutError(f"{path}: Fortran-order tensors unsupported")
    if not isinstance(shape, tuple) or len(shape) not in (1, 2):
        raise UnsupportedLayoutError(
            f"{path}: need a 1-D or 2-D tensor, got shape {shape}"
        )

    dtype = np.dtype(descr)
    count = int(np.prod(shape, dtype=np.int64)) if shape else 0
    payload = raw[header_end:]
    if len(payload) != count * dtype.itemsize:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected "
            f"{count * dtype.itemsize} for shape {shape}"
        )
    data = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    if len(shape) == 1:
        data = data.reshape(1, shape[0])
    else:
        data = data.reshape(shape)

    bad = ~np.isfinite(data)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataValidityError(
            f"{path}: non-finite value at row {r}, column {c}"
        )
    return data


def write_matrix(matrix: np.ndarray, path) -> None:
    """Write a 2-D float64 tensor as NPY v1.0 (little-endian, C order).

    Output bytes are a pure function of the input, so identical matrices
    always serialize identically.
    """
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DataValidityError(f"write_matrix needs a 2-D matrix, got {matrix.ndim}-D")
    rows, cols = matrix.shape
    header = (
        "{'descr': '<f8', 'fortran_order': False, "
        f"'shape': ({rows}, {cols}), }}"
    )
    # Pad so magic + version + length field + header is a 64-byte multiple.
    unpadded = len(_MAGIC) + len(_VERSION) + 2 + len(header) + 1
    header = header + " " * (-unpadded % 64) + "\n"
    out = b"".join(
        [
            _MAGIC,
            _VERSION,
            struct.pack("<H", len(header)),
            header.encode("ascii"),
            matrix.tobytes(order="C"),
        ]
    )
    Path(path).write_bytes(out)


def _load_vector(path) -> np.ndarray:
    m = load_matrix(path)
    if 1 not in m.shape and m.size != 0:
        raise DataValidityError(f"{path}: expected a vector, got shape {m.shape}")
    return m.reshape(-1)


def load_manifest(path, require_eval_roles: bool = True) -> DatasetManifest:
    """Parse a manifest file and load every tensor it references.

    The manifest is an INI-style document: one ``[dataset:<name>]``
    section per feature file (keys ``role``, ``features``, optional
    ``labels``), a ``[head]`` section (keys ``weights``, ``bias``), and
    an optional ``[run]`` section with ``format_version``. Paths are
    relative to the manifest file.
    """
    path = Path(path)
    base = path.parent
    parser = configparser.ConfigParser()
    try:
        with path.open("r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise FormatError(f"{path}: malformed manifest: {exc}") from exc

    version = MANIFEST_FORMAT_VERSION
    if parser.has_section("run"):
        version = parser.getint("run", "format_version", fallback=version)
        if version != MANIFEST_FORMAT_VERSION:
            raise FormatError(
                f"{path}: manifest format_version {version} unsupported"
            )

    if not parser.has_section("head"):
        raise FormatError(f"{path}: manifest is missing the [head] section")
    weights = load_matrix(base / parser.get("head", "weights"))
    bias = _load_vector(base / parser.get("head", "bias"))
    head = ClassifierHead(weights=weights, bias=bias)

    entries = []
    feature_sets = []
    seen = set()
    for section in parser.sections():
        if not section.startswith("dataset:"):
            continue
        name = section.split(":", 1)[1]
        if name in seen:
            raise FormatError(f"{path}: duplicate dataset name {name!r}")
        seen.add(name)
        role = parser.get(section, "role")
        feat_rel = parser.get(section, "features")
        labels_rel = parser.get(section, "labels", fallback=None)
        features = load_matrix(base / feat_rel)
        labels = _load_vector(base / labels_rel) if labels_rel else None
        entry = ManifestEntry(name, role, feat_rel, labels_rel)
        fs = FeatureSet(name=name, role=role, features=features, labels=labels)
        if fs.feature_dim != head.feature_dim:
            raise DataValidityError(
                f"{path}: dataset {name!r} has feature dimension "
                f"{fs.feature_dim}, expected {head.feature_dim} from the head"
            )
        entries.append(entry)
        feature_sets.append(fs)

    # Stable order regardless of section order in the file.
    order = sorted(range(len(entries)), key=lambda i: entries[i].name)
    entries = tuple(entries[i] for i in order)
    feature_sets = tuple(feature_sets[i] for i in order)

    manifest = DatasetManifest(
        entries=entries,
        head=head,
        feature_sets=feature_sets,
        format_version=version,
        base_dir=base,
    )
    if require_eval_roles:
        manifest.require_role("id_test")
        manifest.require_role("ood")
    return manifest


def write_manifest(path, entries, head_weights_rel: str, head_bias_rel: str) -> None:
    """Write a manifest document for already-written tensor files.

    ``entries`` is an iterable of ManifestEntry; paths inside it must be
    relative to the manifest location.
    """
    lines = [
        "[run]",
        f"format_version = {MANIFEST_FORMAT_VERSION}",
        "",
        "[head]",
        f"weights = {head_weights_rel}",
        f"bias = {head_bias_rel}",
    ]
    for e in entries:
        lines += [
            "",
            f"[dataset:{e.name}]",
            f"role = {e.role}",
            f"features = {e.features_path}",
        ]
        if e.labels_path:
            lines.append(f"labels = {e.labels_path}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

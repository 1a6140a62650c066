"""Activation rectifiers and their threshold estimation.

Variants: identity, react (cap high activations at beta), vra (zero
below alpha, cap above beta), vra_plus (vra with a +gamma boost in the
pass-through band), and tabulated (per-feature lookup tables produced
from the variational-optimal operation).

Values exactly on alpha or beta take the pass-through branch. Per
feature, react is vra with alpha = -inf; identity is vra with
alpha = -inf and beta = +inf.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from vra_kit.errors import DataValidityError, ParameterError

VARIANTS = ("identity", "react", "vra", "vra_plus", "tabulated")


@dataclass(frozen=True)
class ThresholdVector:
    """Per-feature low/high cutoffs. beta entries may be +inf (no high
    cut); alpha entries may be -inf (no low cut, the react case)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a, b = np.asarray(self.alpha, float), np.asarray(self.beta, float)
        if a.shape != b.shape or a.ndim != 1:
            raise DataValidityError("alpha and beta must be 1-D and same length")
        if np.isnan(a).any() or np.isnan(b).any():
            raise DataValidityError("thresholds must not contain NaN")
        if (a > b).any():
            i = int(np.argmax(a > b))
            raise DataValidityError(
                f"alpha > beta at feature {i}: {a[i]} > {b[i]}"
            )
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def feature_dim(self) -> int:
        return self.alpha.shape[0]


@dataclass(frozen=True)
class FeatureTable:
    """Piecewise-constant lookup table for one feature: strictly
    increasing bin edges, one value per bin, and the two out-of-range
    values used below the first / above the last edge."""

    edges: np.ndarray
    values: np.ndarray
    low: float
    high: float

    def __post_init__(self):
        e = np.asarray(self.edges, float)
        v = np.asarray(self.values, float)
        if e.ndim != 1 or len(e) < 2:
            raise DataValidityError("table needs at least 2 bin edges")
        if not (np.diff(e) > 0).all():
            raise DataValidityError("table bin edges must be strictly increasing")
        if v.shape != (len(e) - 1,):
            raise DataValidityError(
                f"table has {len(v)} values for {len(e) - 1} bins"
            )
        if not np.isfinite(v).all():
            raise DataValidityError("table values must be finite")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "values", v)

    def lookup(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, float)
        idx = np.searchsorted(self.edges, z, side="right") - 1
        # The last bin is right-closed, matching the histogram convention.
        idx = np.where((idx == len(self.values)) & (z == self.edges[-1]),
                       len(self.values) - 1, idx)
        out = np.empty_like(z)
        below = idx < 0
        above = idx >= len(self.values)
        inside = ~(below | above)
        out[below] = self.low
        out[above] = self.high
        out[inside] = self.values[idx[inside]]
        return out


@dataclass(frozen=True)
class RectifierSpec:
    variant: str
    thresholds: ThresholdVector | None = None
    gamma: float = 0.0
    tables: tuple | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown rectifier variant {self.variant!r}")
        if self.variant in ("react", "vra", "vra_plus") and self.thresholds is None:
            raise ParameterError(f"variant {self.variant!r} needs thresholds")
        if self.variant == "tabulated":
            if not self.tables:
                raise DataValidityError("tabulated rectifier needs tables")
            object.__setattr__(self, "tables", tuple(self.tables))
        if self.variant != "vra_plus" and self.gamma:
            raise ParameterError(
                f"gamma is only meaningful for vra_plus, got gamma={self.gamma} "
                f"with variant {self.variant!r}"
            )

    @property
    def feature_dim(self) -> int | None:
        if self.tables is not None:
            return len(self.tables)
        if self.thresholds is not None:
            return self.thresholds.feature_dim
        return None  # identity works for any width


def estimate_thresholds(
    id_features: np.ndarray,
    eta_alpha: float,
    eta_beta: float,
    pooled: bool = False,
) -> ThresholdVector:
    """Empirical-quantile thresholds from ID activations.

    Uses linear interpolation between order statistics (the "type 7"
    quantile). Per-feature by default; ``pooled`` computes one quantile
    pair over all activations and replicates it across features.
    """
    feats = np.asarray(id_features, float)
    if feats.ndim != 2:
        raise DataValidityError("id_features must be N x m")
    n, m = feats.shape
    if n < 2:
        raise DataValidityError(f"need at least 2 ID samples, got {n}")
    if not (0 <= eta_alpha < eta_beta <= 1):
        raise ParameterError(
            f"need 0 <= eta_alpha < eta_beta <= 1, got ({eta_alpha}, {eta_beta})"
        )
    if pooled:
        lo, hi = np.quantile(feats.ravel(), [eta_alpha, eta_beta], method="linear")
        alpha = np.full(m, lo)
        beta = np.full(m, hi)
    else:
        alpha = np.quantile(feats, eta_alpha, axis=0, method="linear")
        beta = np.quantile(feats, eta_beta, axis=0, method="linear")
    return ThresholdVector(alpha=alpha, beta=beta)


def react_spec(beta: np.ndarray) -> RectifierSpec:
    """ReAct: cap at beta, no low cut (alpha = -inf)."""
    beta = np.asarray(beta, float)
    return RectifierSpec(
        variant="react",
        thresholds=ThresholdVector(alpha=np.full_like(beta, -np.inf), beta=beta),
    )


def apply_rectifier(spec: RectifierSpec, features: np.ndarray) -> np.ndarray:
    """Apply a rectifier elementwise, per feature column. Pure; row
    order never affects the result."""
    z = np.asarray(features, float)
    if z.ndim != 2:
        raise DataValidityError("features must be N x m")
    m = z.shape[1]
    want = spec.feature_dim
    if want is not None and want != m:
        raise DataValidityError(
            f"rectifier covers {want} features, input has {m}"
        )

    if spec.variant == "identity":
        return z.copy()

    if spec.variant == "tabulated":
        out = np.empty_like(z)
        for i, table in enumerate(spec.tables):
            out[:, i] = table.lookup(z[:, i])
        return out

    alpha = spec.thresholds.alpha
    beta = spec.thresholds.beta
    if spec.variant == "react":
        return np.minimum(z, beta)
    out = np.where(z > beta, beta, z)
    if spec.variant == "vra_plus":
        out = np.where((z >= alpha) & (z <= beta), z + spec.gamma, out)
    out = np.where(z < alpha, 0.0, out)
    return out


def tabulate_gstar(tables, feature_dim: int) -> RectifierSpec:
    """Build a tabulated rectifier from FeatureTable(s).

    ``tables`` is either a single FeatureTable (pooled mode: replicated
    across all features) or a sequence of ``feature_dim`` tables.
    """
    if isinstance(tables, FeatureTable):
        tables = (tables,) * feature_dim
    else:
        tables = tuple(tables)
        if len(tables) != feature_dim:
            raise DataValidityError(
                f"got {len(tables)} tables for {feature_dim} features"
            )
    return RectifierSpec(variant="tabulated", tables=tables)


def _encode_float(x: float):
    if x == np.inf:
        return "inf"
    if x == -np.inf:
        return "-inf"
    return float(x)


def _decode_floats(seq) -> np.ndarray:
    return np.array([float(x) for x in seq], dtype=float)


def spec_to_dict(spec: RectifierSpec) -> dict:
    doc = {"variant": spec.variant, "gamma": float(spec.gamma)}
    if spec.thresholds is not None:
        doc["alpha"] = [_encode_float(x) for x in spec.thresholds.alpha]
        doc["beta"] = [_encode_float(x) for x in spec.thresholds.beta]
    if spec.tables is not None:
        doc["tables"] = [
            {
                "edges": [float(x) for x in t.edges],
                "values": [float(x) for x in t.values],
                "low": float(t.low),
                "high": float(t.high),
            }
            for t in spec.tables
        ]
    return doc


def spec_from_dict(doc: dict) -> RectifierSpec:
    thresholds = None
    if "alpha" in doc:
        thresholds = ThresholdVector(
            alpha=_decode_floats(doc["alpha"]),
            beta=_decode_floats(doc["beta"]),
        )
    tables = None
    if "tables" in doc:
        tables = tuple(
            FeatureTable(
                edges=_decode_floats(t["edges"]),
                values=_decode_floats(t["values"]),
                low=float(t["low"]),
                high=float(t["high"]),
            )
            for t in doc["tables"]
        )
    return RectifierSpec(
        variant=doc["variant"],
        thresholds=thresholds,
        gamma=float(doc.get("gamma", 0.0)),
        tables=tables,
    )


def save_spec(spec: RectifierSpec, path) -> None:
    Path(path).write_text(
        json.dumps(spec_to_dict(spec), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def load_spec(path) -> RectifierSpec:
    return spec_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

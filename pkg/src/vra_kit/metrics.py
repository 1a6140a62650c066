"""FPR95 / AUROC metrics, full-run evaluation, and grid-search tuning."""

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from vra_kit import rectify, scoring
from vra_kit.errors import DataValidityError, ParameterError
from vra_kit.rectify import RectifierSpec
from vra_kit.scoring import VraPlusPlusParams
from vra_kit.tensor_io import ClassifierHead, DatasetManifest, FeatureSet


def auroc(id_scores, ood_scores) -> float:
    """P(random ID score > random OOD score), ties counted half.
    ID is the positive class; higher score means more ID."""
    s_id = np.asarray(id_scores, float).ravel()
    s_ood = np.asarray(ood_scores, float).ravel()
    if s_id.size == 0 or s_ood.size == 0:
        raise DataValidityError("auroc needs non-empty score vectors")
    ranks = rankdata(np.concatenate([s_id, s_ood]), method="average")
    n_id, n_ood = s_id.size, s_ood.size
    rank_sum = ranks[:n_id].sum()
    return float((rank_sum - n_id * (n_id + 1) / 2) / (n_id * n_ood))


def fpr_at_95_tpr(id_scores, ood_scores) -> float:
    """False-positive rate on OOD at the largest threshold keeping ID
    true-positive rate >= 95%. The threshold is restricted to observed
    ID score values (no interpolation)."""
    s_id = np.asarray(id_scores, float).ravel()
    s_ood = np.asarray(ood_scores, float).ravel()
    if s_id.size == 0 or s_ood.size == 0:
        raise DataValidityError("fpr_at_95_tpr needs non-empty score vectors")
    n = s_id.size
    k = -((-19 * n) // 20)  # ceil(0.95 * n) without float rounding
    tau = np.sort(s_id)[::-1][k - 1]
    return float(np.count_nonzero(s_ood >= tau) / s_ood.size)


@dataclass(frozen=True)
class ScoringMethod:
    """Scoring function selector plus its parameters.

    ``vra_pp_rectified_logits`` switches VRA++ to recompute logits from
    the rectified features instead of the raw ones (off by default: the
    quadratic already acts on raw features, and pushing them through the
    head again would double its effect).
    """

    name: str
    temperature: float = 1.0
    lambda_v: float = 1.0
    alpha_v: float = 1.0
    vra_pp_rectified_logits: bool = False

    _NAMES = ("msp", "energy", "odin-t", "vra-pp", "feature-sum")

    def __post_init__(self):
        if self.name not in self._NAMES:
            raise ParameterError(
                f"unknown scoring method {self.name!r}; expected one of {self._NAMES}"
            )

    def hyperparams(self) -> dict:
        hp = {}
        if self.name in ("energy", "odin-t"):
            hp["temperature"] = self.temperature
        if self.name == "vra-pp":
            hp["lambda_v"] = self.lambda_v
            hp["alpha_v"] = self.alpha_v
        return hp


def compute_scores(
    method: ScoringMethod,
    spec: RectifierSpec,
    head: ClassifierHead,
    features: np.ndarray,
) -> np.ndarray:
    """Rectify, forward through the head, and score one feature matrix."""
    rectified = rectify.apply_rectifier(spec, features)
    if method.name == "feature-sum":
        return scoring.score_feature_sum(rectified).values
    if method.name == "vra-pp":
        logit_src = rectified if method.vra_pp_rectified_logits else features
        logits = scoring.forward_logits(head, logit_src)
        params = VraPlusPlusParams(lambda_v=method.lambda_v, alpha_v=method.alpha_v)
        return scoring.score_vra_pp(features, logits, params).values
    logits = scoring.forward_logits(head, rectified)
    if method.name == "msp":
        return scoring.score_msp(logits).values
    if method.name == "energy":
        return scoring.score_energy(logits, method.temperature).values
    return scoring.score_odin_t(logits, method.temperature).values


@dataclass(frozen=True)
class EvalEntry:
    ood_dataset: str
    method: str
    fpr95: float
    auroc: float
    hyperparams: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EvalReport:
    """Per-OOD-dataset metrics plus their arithmetic means."""

    entries: tuple

    def __post_init__(self):
        if not self.entries:
            raise DataValidityError("report needs at least one entry")
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def mean_fpr95(self) -> float:
        return float(np.mean([e.fpr95 for e in self.entries]))

    @property
    def mean_auroc(self) -> float:
        return float(np.mean([e.auroc for e in self.entries]))


def evaluate(
    manifest: DatasetManifest,
    spec: RectifierSpec,
    method: ScoringMethod,
    extra_hyperparams: dict | None = None,
) -> EvalReport:
    """Score id_test against every OOD dataset with one shared spec."""
    id_sets = manifest.require_role("id_test")
    ood_sets = manifest.require_role("ood")
    id_features = np.vstack([fs.features for fs in id_sets])
    id_scores = compute_scores(method, spec, manifest.head, id_features)
    hp = dict(extra_hyperparams or {})
    hp.update(method.hyperparams())
    entries = []
    for ood in ood_sets:
        ood_scores = compute_scores(method, spec, manifest.head, ood.features)
        entries.append(
            EvalEntry(
                ood_dataset=ood.name,
                method=method.name,
                fpr95=fpr_at_95_tpr(id_scores, ood_scores),
                auroc=auroc(id_scores, ood_scores),
                hyperparams=hp,
            )
        )
    return EvalReport(entries=tuple(entries))


@dataclass(frozen=True)
class TuneGrid:
    """Hyperparameter grid for VRA tuning. The eta defaults follow the
    published search space; gamma only applies to vra_plus."""

    eta_alpha_set: tuple = (0.5, 0.6, 0.65, 0.7)
    eta_beta_set: tuple = (0.8, 0.85, 0.9, 0.95, 0.99)
    gamma_set: tuple = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7)

    def points(self, variant: str):
        """Admissible (eta_alpha, eta_beta, gamma) triples in
        deterministic lexicographic order, deduplicated."""
        gammas = self.gamma_set if variant == "vra_plus" else (0.0,)
        seen = set()
        for ea, eb, g in itertools.product(
            sorted(set(self.eta_alpha_set)),
            sorted(set(self.eta_beta_set)),
            sorted(set(gammas)),
        ):
            if ea < eb and (ea, eb, g) not in seen:
                seen.add((ea, eb, g))
                yield ea, eb, g


def grid_search(
    id_train: FeatureSet,
    id_test: FeatureSet,
    validation: FeatureSet,
    head: ClassifierHead,
    grid: TuneGrid,
    method: ScoringMethod,
    variant: str = "vra",
    pooled: bool = False,
) -> tuple:
    """Exhaustive tuning against a pseudo-OOD validation set.

    Thresholds come from id_train; each grid point is scored as
    id_test vs validation. Selection maximizes validation AUROC,
    breaking ties by lower FPR95, then by lexicographically smaller
    (eta_alpha, eta_beta, gamma). Returns (winning spec, its report).
    """
    if variant not in ("vra", "vra_plus"):
        raise ParameterError(f"grid_search tunes vra or vra_plus, not {variant!r}")
    if validation.num_samples == 0:
        raise DataValidityError("validation set is empty")

    best = None
    for ea, eb, g in grid.points(variant):
        thresholds = rectify.estimate_thresholds(
            id_train.features, ea, eb, pooled=pooled
        )
        spec = RectifierSpec(
            variant=variant,
            thresholds=thresholds,
            gamma=g if variant == "vra_plus" else 0.0,
        )
        id_scores = compute_scores(method, spec, head, id_test.features)
        val_scores = compute_scores(method, spec, head, validation.features)
        au = auroc(id_scores, val_scores)
        fpr = fpr_at_95_tpr(id_scores, val_scores)
        # Lexicographic: higher AUROC, then lower FPR95, then smaller point.
        key = (-au, fpr, ea, eb, g)
        if best is None or key < best[0]:
            entry = EvalEntry(
                ood_dataset=validation.name,
                method=method.name,
                fpr95=fpr,
                auroc=au,
                hyperparams={"eta_alpha": ea, "eta_beta": eb, "gamma": g},
            )
            best = (key, spec, EvalReport(entries=(entry,)))
    if best is None:
        raise ParameterError("tuning grid has no admissible points")
    return best[1], best[2]


def report_to_csv(report: EvalReport, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ood_dataset", "method", "fpr95", "auroc", "hyperparams"])
        for e in report.entries:
            hp = ";".join(
                f"{k}={v:.9g}" if isinstance(v, (int, float)) else f"{k}={v}"
                for k, v in sorted(e.hyperparams.items())
            )
            writer.writerow(
                [e.ood_dataset, e.method, f"{e.fpr95:.9g}", f"{e.auroc:.9g}", hp]
            )
        writer.writerow(
            [
                "Average",
                report.entries[0].method,
                f"{report.mean_fpr95:.9g}",
                f"{report.mean_auroc:.9g}",
                "",
            ]
        )


def report_to_table(report: EvalReport) -> str:
    """Aligned-column text table: one row per OOD dataset plus Average."""
    rows = [("OOD dataset", "FPR95", "AUROC")]
    for e in report.entries:
        rows.append((e.ood_dataset, f"{e.fpr95:.4f}", f"{e.auroc:.4f}"))
    rows.append(("Average", f"{report.mean_fpr95:.4f}", f"{report.mean_auroc:.4f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"

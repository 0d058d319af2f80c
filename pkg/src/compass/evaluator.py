"""Missingness-pattern sweeps, ablation comparisons and class geometry."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .modalities import ModalitySet, all_subsets
from .model import CompassModel
from .numerics import no_grad
from .synthdata import Split
from .trainer import batch_x, evaluate_split

ABLATION_MODES = ("full", "zero_fill", "proxy_no_align")
_CATEGORY = {1: "single", 2: "dual", 3: "triple", 4: "quad"}


def category(observed: ModalitySet) -> str:
    k = len(observed)
    if k == observed.n:
        return "full"
    return _CATEGORY.get(k, f"{k}-modal")


@dataclass(frozen=True)
class SubsetRow:
    observed: ModalitySet
    accuracy: float
    category: str


@dataclass
class SubsetReport:
    rows: list[SubsetRow]
    label: str = ""

    @property
    def summary(self) -> dict[str, float]:
        groups: dict[str, list[float]] = {}
        for r in self.rows:
            groups.setdefault(r.category, []).append(r.accuracy)
        return {k: float(np.mean(v)) for k, v in groups.items()}

    @property
    def overall(self) -> float:
        return float(np.mean([r.accuracy for r in self.rows]))

    def accuracy(self, observed: ModalitySet | str) -> float:
        key = observed if isinstance(observed, str) else observed.letters
        for r in self.rows:
            if r.observed.letters == key:
                return r.accuracy
        raise KeyError(key)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["observed", "accuracy_pct", "category"])
        for r in self.rows:
            w.writerow([r.observed.letters, f"{100 * r.accuracy:.2f}", r.category])
        for name, acc in self.summary.items():
            w.writerow([f"avg:{name}", f"{100 * acc:.2f}", name])
        w.writerow(["avg:overall", f"{100 * self.overall:.2f}", "overall"])
        return buf.getvalue()

    def to_markdown(self) -> str:
        body = [[r.observed.letters, f"{100 * r.accuracy:.2f}", r.category] for r in self.rows]
        body += [[f"avg {k}", f"{100 * v:.2f}", k] for k, v in self.summary.items()]
        body.append([f"{len(self.rows)}-Avg", f"{100 * self.overall:.2f}", "overall"])
        return markdown_table(["Observed", "Acc (%)", "Category"], body)


def markdown_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]

    def fmt(cells):
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"

    lines = [fmt(header), "| " + " | ".join("-" * w for w in widths) + " |"]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines) + "\n"


def sweep_subsets(split: Split, model: CompassModel, fill: str = "proxy", label: str = "") -> SubsetReport:
    """Accuracy under every non-empty observed subset."""
    rows = [
        SubsetRow(obs, evaluate_split(split, model, obs, fill=fill), category(obs))
        for obs in all_subsets(model.config.n_modalities)
    ]
    return SubsetReport(rows, label)


def sweep_ablation(
    split: Split, models: Mapping[str, CompassModel], modes=ABLATION_MODES
) -> dict[str, SubsetReport]:
    """Side-by-side subset reports.

    ``full`` and ``zero_fill`` both evaluate ``models["full"]`` (the latter
    with zero vectors in missing slots); ``proxy_no_align`` needs its own
    model trained without the auxiliary losses.
    """
    reports = {}
    for mode in modes:
        if mode not in ABLATION_MODES:
            raise ValueError(f"unknown ablation mode '{mode}'")
        key = "full" if mode in ("full", "zero_fill") else mode
        if key not in models:
            raise KeyError(f"no checkpoint supplied for ablation mode '{mode}'")
        fill = "zero" if mode == "zero_fill" else "proxy"
        reports[mode] = sweep_subsets(split, models[key], fill=fill, label=mode)
    return reports


def ablation_markdown(reports: Mapping[str, SubsetReport]) -> str:
    modes = list(reports)
    first = reports[modes[0]]
    rows = []
    for i, r in enumerate(first.rows):
        rows.append([r.observed.letters] + [f"{100 * reports[m].rows[i].accuracy:.2f}" for m in modes])
    rows.append([f"{len(first.rows)}-Avg"] + [f"{100 * reports[m].overall:.2f}" for m in modes])
    return markdown_table(["Observed"] + modes, rows)


def ablation_csv(reports: Mapping[str, SubsetReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "observed", "accuracy_pct", "category"])
    for mode, rep in reports.items():
        for r in rep.rows:
            w.writerow([mode, r.observed.letters, f"{100 * r.accuracy:.2f}", r.category])
        w.writerow([mode, "avg:overall", f"{100 * rep.overall:.2f}", "overall"])
    return buf.getvalue()


# -- representation geometry --------------------------------------------------
@dataclass(frozen=True)
class ClassGeometry:
    label: int
    compactness: float
    separation: float


@dataclass
class GeometryReport:
    classes: list[ClassGeometry] = field(default_factory=list)

    @property
    def mean_compactness(self) -> float:
        return float(np.mean([c.compactness for c in self.classes]))

    @property
    def mean_separation(self) -> float:
        return float(np.mean([c.separation for c in self.classes]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "compactness", "separation"])
        for c in self.classes:
            w.writerow([c.label, f"{c.compactness:.6f}", f"{c.separation:.6f}"])
        return buf.getvalue()

    def to_markdown(self) -> str:
        rows = [[c.label, f"{c.compactness:.4f}", f"{c.separation:.4f}"] for c in self.classes]
        rows.append(["mean", f"{self.mean_compactness:.4f}", f"{self.mean_separation:.4f}"])
        return markdown_table(["Class", "Compactness", "Separation"], rows)


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def geometry_from_tokens(tokens: np.ndarray, labels: np.ndarray, n_classes: int) -> GeometryReport:
    """Class geometry from per-sample global tokens of shape (S, N, d).

    Compactness: mean cosine similarity over modality pairs of one class's
    per-modality centroids. Separation: minimum over other classes and over
    modalities of the cosine distance between same-modality centroids.
    """
    labels = np.asarray(labels)
    present = set(np.unique(labels).tolist())
    missing = sorted(set(range(n_classes)) - present)
    if missing:
        raise ValueError(f"classes {missing} are absent from the split")
    n = tokens.shape[1]
    cents = np.stack([tokens[labels == c].mean(axis=0) for c in range(n_classes)])  # (C, N, d)
    report = GeometryReport()
    for c in range(n_classes):
        sims = [_cos(cents[c, a], cents[c, b]) for a, b in itertools.combinations(range(n), 2)]
        dists = [1.0 - _cos(cents[c, m], cents[o, m]) for o in range(n_classes) if o != c for m in range(n)]
        report.classes.append(ClassGeometry(c, float(np.mean(sims)), float(min(dists))))
    return report


def global_tokens(split: Split, model: CompassModel) -> np.ndarray:
    """Real global tokens of every modality, full-modality inference: (S, N, d)."""
    with no_grad():
        _, g = model.encode_all(batch_x(split, slice(None)), train=False)
    return np.stack([g[m].data for m in range(model.config.n_modalities)], axis=1)


def geometry_metrics(split: Split, model: CompassModel) -> GeometryReport:
    return geometry_from_tokens(global_tokens(split, model), split.y, split.n_classes)

"""Leave-one-subject-out evaluation and report rendering.

Feature selection is recomputed inside every fold from the training
subjects only; metrics come from the confusion matrix pooled across folds.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .features import (
    FeatureVector,
    SignalWindow,
    chi2_scores,
    extract_features,
    select_top_k,
)
from .forest import ForestParams, predict_matrix, train


@dataclass
class EvalReport:
    class_list: list[str]
    per_class: dict[str, tuple[float, float, float]]  # precision, recall, f-score
    averages: tuple[float, float, float]              # unweighted means
    confusion: np.ndarray                             # rows true, cols predicted
    fold_count: int
    fold_selections: list[list[int]] = field(default_factory=list)


def confusion_metrics(
    confusion: np.ndarray, class_list: Sequence[str]
) -> tuple[dict[str, tuple[float, float, float]], tuple[float, float, float]]:
    """Per-class precision/recall/F and their macro averages.

    Zero-support denominators yield 0 rather than a fault.
    """
    confusion = np.asarray(confusion, dtype=float)
    per_class = {}
    for i, cls in enumerate(class_list):
        tp = confusion[i, i]
        col = confusion[:, i].sum()
        row = confusion[i, :].sum()
        precision = tp / col if col > 0 else 0.0
        recall = tp / row if row > 0 else 0.0
        f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class[cls] = (precision, recall, f)
    n = len(class_list)
    averages = tuple(sum(m[j] for m in per_class.values()) / n for j in range(3))
    return per_class, averages  # type: ignore[return-value]


def loso_evaluate(
    dataset: Sequence[FeatureVector],
    k: int,
    params: ForestParams,
    progress: Callable[[str], None] | None = None,
) -> EvalReport:
    """Hold each subject out once; train selection and forest on the rest."""
    subjects = sorted({v.subject_or_player for v in dataset})
    if len(subjects) < 2:
        raise ValueError("leave-one-subject-out needs at least 2 subjects")
    if any(v.label is None for v in dataset):
        raise ValueError("dataset must be fully labeled")
    class_list = sorted({v.label for v in dataset})  # type: ignore[arg-type]
    class_index = {c: i for i, c in enumerate(class_list)}

    confusion = np.zeros((len(class_list), len(class_list)), dtype=np.int64)
    fold_selections = []
    for subject in subjects:
        train_vecs = [v for v in dataset if v.subject_or_player != subject]
        test_vecs = [v for v in dataset if v.subject_or_player == subject]
        scores = chi2_scores(train_vecs)
        selection = select_top_k(scores, k)
        fold_selections.append(list(selection.selected))
        model = train(train_vecs, selection, params)
        x_test = np.stack([v.values for v in test_vecs])
        pred_idx, _ = predict_matrix(model, x_test)
        for v, p in zip(test_vecs, pred_idx):
            confusion[class_index[v.label], class_index[model.class_list[int(p)]]] += 1
        if progress:
            progress(f"fold {subject}: {len(test_vecs)} test vectors done")

    per_class, averages = confusion_metrics(confusion, class_list)
    return EvalReport(
        class_list=class_list,
        per_class=per_class,
        averages=averages,
        confusion=confusion,
        fold_count=len(subjects),
        fold_selections=fold_selections,
    )


def render_report(report: EvalReport, format: str) -> bytes:
    """Serialize a report as delimited text ("csv") or a structured document ("json")."""
    if format == "csv":
        buf = io.StringIO()
        buf.write("class,precision,recall,f_score\n")
        for cls in report.class_list:
            p, r, f = report.per_class[cls]
            buf.write(f"{cls},{p:.6f},{r:.6f},{f:.6f}\n")
        p, r, f = report.averages
        buf.write(f"average,{p:.6f},{r:.6f},{f:.6f}\n")
        buf.write("\nconfusion," + ",".join(report.class_list) + "\n")
        for i, cls in enumerate(report.class_list):
            buf.write(cls + "," + ",".join(str(int(c)) for c in report.confusion[i]) + "\n")
        return buf.getvalue().encode()
    if format == "json":
        doc = {
            "classes": report.class_list,
            "per_class": {
                cls: {"precision": p, "recall": r, "f_score": f}
                for cls, (p, r, f) in report.per_class.items()
            },
            "averages": {
                "precision": report.averages[0],
                "recall": report.averages[1],
                "f_score": report.averages[2],
            },
            "confusion": report.confusion.tolist(),
            "fold_count": report.fold_count,
        }
        return json.dumps(doc, indent=2, sort_keys=True).encode()
    raise ValueError(f"unknown report format {format!r}")


# Public 19-activity corpus layout: one directory per activity, one per
# subject, one delimited file per 5 s segment; 45 columns = 5 devices x 9
# channels, 125 rows at 25 Hz.
SEGMENT_DEVICES = ("torso", "right_arm", "left_arm", "right_leg", "left_leg")
SEGMENT_FS_HZ = 25.0
SEGMENT_DURATION_S = 5.0


def load_segment_dataset(
    root: str | Path,
    devices: Sequence[str] = SEGMENT_DEVICES,
    fs: float = SEGMENT_FS_HZ,
    progress: Callable[[str], None] | None = None,
) -> list[FeatureVector]:
    """Extract features from every segment file under root.

    Directory names become activity labels (level 1) and subject ids
    (level 2). Each file must hold len(devices)*9 comma-separated columns;
    channel order within a device is acc, gyro, mag by x/y/z.
    """
    root = Path(root)
    activity_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not activity_dirs:
        raise FileNotFoundError(f"no activity directories under {root}")
    n_cols = len(devices) * 9
    vectors = []
    for adir in activity_dirs:
        label = adir.name
        for sdir in sorted(p for p in adir.iterdir() if p.is_dir()):
            subject = sdir.name
            for seg in sorted(p for p in sdir.iterdir() if p.is_file()):
                table = np.loadtxt(seg, delimiter=",", dtype=float)
                if table.ndim != 2 or table.shape[1] != n_cols:
                    raise ValueError(
                        f"{seg}: expected {n_cols} columns, got {table.shape}"
                    )
                duration = table.shape[0] / fs
                samples = {}
                for d, dev in enumerate(devices):
                    for c in range(9):
                        sensor = ("acc", "gyro", "mag")[c // 3]
                        axis = "xyz"[c % 3]
                        samples[f"{dev}.{sensor}.{axis}"] = table[:, d * 9 + c]
                window = SignalWindow(
                    player_id=subject,
                    period_id=1,
                    start_t=0.0,
                    duration_s=duration,
                    samples=samples,
                    devices=tuple(devices),
                )
                vec = extract_features(window, fs=fs)
                vec.label = label
                vectors.append(vec)
        if progress:
            progress(f"loaded activity {label}")
    return vectors

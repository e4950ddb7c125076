"""Per-class Top-1 evaluation for ZSL and GZSL, plus report files.

A recognizer is any callable ``(features, candidates) -> predicted labels``;
both trained model types expose one via ``model.recognizer(attributes)``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DatasetError, FormatError

FORMATS = ("json", "csv", "svg")


@dataclass
class EvalReport:
    """Accuracies are fractions in [0, 1]; fields a task does not fill stay ``None``."""

    task: str
    per_class_acc: dict = field(default_factory=dict)
    top1_zsl: Optional[float] = None
    acc_ts: Optional[float] = None
    acc_tr: Optional[float] = None
    harmonic: Optional[float] = None
    config_digest: str = ""
    seed: int = 0

    def to_json_dict(self):
        return {
            "task": self.task,
            "per_class": [{"class": int(c), "acc": float(a)} for c, a in sorted(self.per_class_acc.items())],
            "top1_zsl": self.top1_zsl,
            "ts": self.acc_ts,
            "tr": self.acc_tr,
            "H": self.harmonic,
            "seed": int(self.seed),
            "config_digest": self.config_digest,
        }

    @classmethod
    def from_json_dict(cls, obj):
        try:
            return cls(
                task=obj["task"],
                per_class_acc={int(e["class"]): float(e["acc"]) for e in obj["per_class"]},
                top1_zsl=obj["top1_zsl"],
                acc_ts=obj["ts"],
                acc_tr=obj["tr"],
                harmonic=obj["H"],
                config_digest=obj["config_digest"],
                seed=int(obj["seed"]),
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed report: {exc}") from None


def per_class_accuracy(predictions, truths, classes, detail=False):
    """Mean over ``classes`` of the fraction of that class's instances predicted correctly.

    Every class must have at least one instance. With ``detail=True`` returns
    ``(mean, {class: accuracy})``.
    """
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    truth = np.asarray(truths, dtype=np.int64).reshape(-1)
    if pred.shape != truth.shape:
        raise ValueError(f"{pred.size} predictions for {truth.size} truths")
    classes = np.unique(np.asarray(classes, dtype=np.int64))
    if classes.size == 0:
        raise DatasetError("no classes to evaluate")
    stray = np.setdiff1d(truth, classes)
    if stray.size:
        raise DatasetError(f"truth labels {stray.tolist()} are outside the evaluated classes")
    accs = {}
    for c in classes:
        mask = truth == c
        n = int(mask.sum())
        if n == 0:
            raise DatasetError(f"class {int(c)} has no test instances")
        accs[int(c)] = float(np.sum(pred[mask] == c)) / n
    mean = float(np.mean(list(accs.values())))
    return (mean, accs) if detail else mean


def harmonic(ts, tr):
    """``2 * ts * tr / (ts + tr)``, or 0 when both are 0."""
    ts, tr = float(ts), float(tr)
    if ts + tr <= 0:
        return 0.0
    return 2.0 * ts * tr / (ts + tr)


def _split(ds, indices, what):
    indices = np.asarray(indices)
    if indices.size == 0:
        raise DatasetError(f"dataset {ds.name!r} has no {what} test instances")
    return ds.features[indices], ds.labels[indices]


def eval_zsl(recognizer, ds, config_digest="", seed=0):
    """Unseen test instances classified among the unseen classes only."""
    x, y = _split(ds, ds.test_unseen_indices, "unseen")
    pred = recognizer(x, ds.unseen_classes)
    mean, accs = per_class_accuracy(pred, y, ds.unseen_classes, detail=True)
    return EvalReport("zsl", accs, top1_zsl=mean, config_digest=config_digest, seed=seed)


def eval_gzsl(recognizer, ds, config_digest="", seed=0):
    """Unseen and seen test instances classified among all classes."""
    if ds.test_seen_indices.size == 0:
        raise DatasetError(f"dataset {ds.name!r} has no seen test split; GZSL needs one")
    everything = np.arange(ds.n_classes)
    xu, yu = _split(ds, ds.test_unseen_indices, "unseen")
    xs, ys = _split(ds, ds.test_seen_indices, "seen")
    ts, acc_u = per_class_accuracy(recognizer(xu, everything), yu, ds.unseen_classes, detail=True)
    tr, acc_s = per_class_accuracy(recognizer(xs, everything), ys, ds.seen_classes, detail=True)
    return EvalReport("gzsl", {**acc_u, **acc_s}, acc_ts=ts, acc_tr=tr, harmonic=harmonic(ts, tr),
                      config_digest=config_digest, seed=seed)


def percent(acc):
    return f"{100.0 * acc:.1f}"


# -- report files ------------------------------------------------------------

def report_paths(directory, task):
    directory = Path(directory)
    return {fmt: directory / f"report_{task}.{fmt}" for fmt in FORMATS}


def report_json(report):
    return json.dumps(report.to_json_dict(), indent=2, sort_keys=False) + "\n"


def report_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("class", "acc", "acc_percent"))
    for c, a in sorted(report.per_class_acc.items()):
        writer.writerow((c, repr(float(a)), percent(a)))
    return buf.getvalue()


def report_svg(report, bar_width=24, height=200):
    """Bar chart of per-class accuracy, one bar per class in id order."""
    items = sorted(report.per_class_acc.items())
    pad, top, bottom = 30, 20, 30
    width = 2 * pad + max(1, len(items)) * bar_width
    total_h = top + height + bottom
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" '
        f'viewBox="0 0 {width} {total_h}">',
        f'<title>{report.task} per-class accuracy</title>',
        f'<line x1="{pad}" y1="{top + height}" x2="{width - pad}" y2="{top + height}" stroke="black"/>',
    ]
    for i, (c, a) in enumerate(items):
        h = round(height * float(a), 2)
        x = pad + i * bar_width + 2
        y = round(top + height - h, 2)
        lines.append(f'<rect x="{x}" y="{y}" width="{bar_width - 4}" height="{h}" fill="steelblue"/>')
        lines.append(f'<text x="{x + (bar_width - 4) / 2}" y="{top + height + 14}" font-size="10" '
                     f'text-anchor="middle">{c}</text>')
        lines.append(f'<text x="{x + (bar_width - 4) / 2}" y="{max(y - 3, 10)}" font-size="8" '
                     f'text-anchor="middle">{percent(a)}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


_RENDER = {"json": report_json, "csv": report_csv, "svg": report_svg}


def emit_report(report, directory, formats=FORMATS):
    """Write ``report_<task>.<fmt>`` files into ``directory``; returns the paths written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = report_paths(directory, report.task)
    written = []
    for fmt in formats:
        if fmt not in _RENDER:
            raise ValueError(f"unknown report format {fmt!r}")
        paths[fmt].write_text(_RENDER[fmt](report), encoding="utf-8")
        written.append(paths[fmt])
    return written


def read_report(path):
    with open(path, encoding="utf-8") as fh:
        return EvalReport.from_json_dict(json.load(fh))

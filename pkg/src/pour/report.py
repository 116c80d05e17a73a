"""CSV / JSON report emission. Rows are a pure function of the manifests."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Sequence

from .errors import ConfigError
from .pipeline import RunManifest

COLUMNS = (
    "variant", "seed",
    "acc_r", "acc_f", "acc_tr", "acc_tf", "aus", "rmia",
    "cka_f_o", "cka_r_o", "rus_o", "cka_f_r", "cka_r_r", "rus_r",
)
METRIC_COLUMNS = COLUMNS[2:]
ABSENT = "--"


def _fmt(value) -> str:
    return ABSENT if value is None else f"{value:.4f}"


def _mean_std(values: list[float]) -> str:
    if not values:
        return ABSENT
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1) if len(values) > 1 else 0.0
    return f"{mean:.4f}±{math.sqrt(var):.4f}"


def csv_text(manifests: Sequence[RunManifest]) -> str:
    """One row per manifest, plus a ``mean±std`` summary row when there are several."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for m in manifests:
        metrics = m.metrics.to_dict()
        writer.writerow([m.variant, m.seed] + [_fmt(metrics[c]) for c in METRIC_COLUMNS])
    if len(manifests) > 1:
        variants = sorted({m.variant for m in manifests})
        row = ["/".join(variants), "mean±std"]
        for c in METRIC_COLUMNS:
            row.append(_mean_std([getattr(m.metrics, c) for m in manifests if getattr(m.metrics, c) is not None]))
        writer.writerow(row)
    return buf.getvalue()


def json_text(manifests: Sequence[RunManifest], include_timing: bool = False) -> str:
    return json.dumps([m.record(include_timing) for m in manifests], indent=2) + "\n"


def emit_report(manifests: Sequence[RunManifest], fmt: str, path) -> Path:
    if not manifests:
        raise ConfigError("emit_report needs at least one manifest")
    if fmt == "csv":
        text = csv_text(manifests)
    elif fmt == "json":
        text = json_text(manifests)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path

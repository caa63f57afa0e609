"""CSV/JSON report writers plus a checksummed bundle manifest.

Floats are serialized with repr() (shortest round-trip), so parsing a report
back recovers bit-identical values and rerunning a deterministic experiment
reproduces identical files.
"""

import csv
import hashlib
import io
import json
from pathlib import Path


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue())


def write_cosines_csv(path, projections) -> None:
    """One row per filter: layer_id, filter_index, cosine."""
    _write_csv(
        Path(path),
        ["layer_id", "filter_index", "cosine"],
        ((p.layer_id, p.filter_index, p.cosine) for p in projections),
    )


def write_layer_stats_json(path, layer_reports: dict) -> None:
    """{layer_id: {significance fields..., alignment_probability}} sorted by id."""
    doc = {"layers": [dict(layer_id=lid, **layer_reports[lid]) for lid in sorted(layer_reports)]}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def write_metrics_csv(path, metrics) -> None:
    _write_csv(
        Path(path),
        ["epoch", "lr", "train_loss", "train_acc", "val_loss", "val_acc"],
        ((m.epoch, m.lr, m.train_loss, m.train_acc, m.val_loss, m.val_acc) for m in metrics),
    )


def write_trajectories_csv(path, trajectories: dict) -> None:
    """One row per (epoch, layer): negative fraction and filter count."""
    rows = []
    for lid in sorted(trajectories):
        for rec in trajectories[lid].records:
            rows.append((rec.epoch, rec.layer_id, rec.negative_fraction, rec.filter_count))
    rows.sort(key=lambda r: (r[0], r[1]))
    _write_csv(Path(path), ["epoch", "layer_id", "negative_fraction", "filter_count"], rows)


def write_heatmap_csv(path, grid) -> None:
    rows = []
    for i, epoch in enumerate(grid.epochs):
        for j, lid in enumerate(grid.layer_ids):
            rows.append((lid, epoch, float(grid.drops[i, j])))
    _write_csv(Path(path), ["layer_id", "epoch", "accuracy_drop"], rows)


def write_bundle_manifest(out_dir) -> Path:
    """Checksum every report file in a directory into report_manifest.json."""
    out_dir = Path(out_dir)
    entries = []
    for p in sorted(out_dir.rglob("*")):
        if p.is_dir() or p.name == "report_manifest.json":
            continue
        digest = hashlib.sha256(p.read_bytes()).hexdigest()
        entries.append({"path": p.relative_to(out_dir).as_posix(), "sha256": digest})
    manifest = out_dir / "report_manifest.json"
    manifest.write_text(json.dumps({"files": entries}, sort_keys=True, indent=2) + "\n")
    return manifest

"""Epoch-indexed snapshot store: one NPZ of weights plus one JSON manifest
per epoch, written deterministically so equal models produce equal bytes.

Layout under the store root:

    epoch_00000.json   manifest {run_id, epoch, normalization, layers[]}
    epoch_00000.npz    weight records named by the manifest entries
"""

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptManifest, FormatError, MissingEpoch
from .npyio import TensorRecord, read_npz, write_npz
from .vectorize import ConvGeometry

_EPOCH_RE = re.compile(r"^epoch_(\d{5})\.json$")


@dataclass(frozen=True)
class LayerEntry:
    """Where one parameterized layer's tensors live inside a snapshot."""

    layer_id: int
    kind: str  # "conv" | "dense"
    weight: str
    bias: str
    geometry: ConvGeometry | None = None
    filters: int | None = None

    def to_dict(self) -> dict:
        d = {
            "layer_id": self.layer_id,
            "kind": self.kind,
            "weight": self.weight,
            "bias": self.bias,
        }
        if self.geometry is not None:
            d["geometry"] = self.geometry.to_dict()
        if self.filters is not None:
            d["filters"] = self.filters
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerEntry":
        geometry = d.get("geometry")
        return cls(
            layer_id=int(d["layer_id"]),
            kind=d["kind"],
            weight=d["weight"],
            bias=d["bias"],
            geometry=ConvGeometry.from_dict(geometry) if geometry else None,
            filters=int(d["filters"]) if d.get("filters") is not None else None,
        )


@dataclass(frozen=True)
class CheckpointManifest:
    run_id: str
    epoch: int
    layers: tuple[LayerEntry, ...]
    normalization: str | None = None

    def __post_init__(self):
        ids = [entry.layer_id for entry in self.layers]
        if ids != list(range(1, len(ids) + 1)):
            raise CorruptManifest(f"layer ids {ids} are not consecutive from 1")
        if self.epoch < 0:
            raise CorruptManifest(f"epoch {self.epoch} < 0")

    def find_layer(self, layer_id: int) -> LayerEntry | None:
        for entry in self.layers:
            if entry.layer_id == layer_id:
                return entry
        return None

    def conv_layer_ids(self) -> list[int]:
        return [e.layer_id for e in self.layers if e.kind == "conv"]

    def to_json(self) -> str:
        doc = {
            "run_id": self.run_id,
            "epoch": self.epoch,
            "normalization": self.normalization,
            "layers": [entry.to_dict() for entry in self.layers],
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CheckpointManifest":
        try:
            doc = json.loads(text)
            return cls(
                run_id=doc["run_id"],
                epoch=int(doc["epoch"]),
                normalization=doc.get("normalization"),
                layers=tuple(LayerEntry.from_dict(e) for e in doc["layers"]),
            )
        except CorruptManifest:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptManifest(f"bad manifest document: {exc}") from None


class SnapshotStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _paths(self, epoch: int) -> tuple[Path, Path]:
        stem = f"epoch_{epoch:05d}"
        return self.root / (stem + ".json"), self.root / (stem + ".npz")

    def epochs(self) -> list[int]:
        found = []
        for p in self.root.iterdir():
            m = _EPOCH_RE.match(p.name)
            if m:
                found.append(int(m.group(1)))
        return sorted(found)

    def has(self, epoch: int) -> bool:
        manifest_path, npz_path = self._paths(epoch)
        return manifest_path.exists() and npz_path.exists()

    def save(self, manifest: CheckpointManifest, arrays: dict) -> None:
        """Write one snapshot. Record names come from the manifest entries;
        every referenced name must be present in `arrays`."""
        records = []
        for entry in manifest.layers:
            for name in (entry.weight, entry.bias):
                if name not in arrays:
                    raise CorruptManifest(f"manifest references missing array {name!r}")
                records.append(TensorRecord.from_array(name, arrays[name]))
        manifest_path, npz_path = self._paths(manifest.epoch)
        npz_path.write_bytes(write_npz(records))
        manifest_path.write_text(manifest.to_json())

    def manifest(self, epoch: int) -> CheckpointManifest:
        manifest_path, _ = self._paths(epoch)
        if not manifest_path.exists():
            raise MissingEpoch(f"no snapshot for epoch {epoch} under {self.root}")
        try:
            loaded = CheckpointManifest.from_json(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise CorruptManifest(f"{manifest_path.name}: {exc}") from None
        if loaded.epoch != epoch:
            raise CorruptManifest(
                f"{manifest_path.name} claims epoch {loaded.epoch}, expected {epoch}"
            )
        return loaded

    def load(self, epoch: int) -> dict:
        """Weights of one snapshot as {record name: ndarray}, validated
        against its manifest."""
        manifest = self.manifest(epoch)
        _, npz_path = self._paths(epoch)
        if not npz_path.exists():
            raise MissingEpoch(f"manifest present but {npz_path.name} missing")
        try:
            records = read_npz(npz_path.read_bytes())
        except FormatError as exc:
            raise CorruptManifest(f"{npz_path.name}: {exc}") from None
        arrays = {rec.name: rec.as_array() for rec in records}
        for entry in manifest.layers:
            for name in (entry.weight, entry.bias):
                if name not in arrays:
                    raise CorruptManifest(f"{npz_path.name} lacks record {name!r}")
        return arrays


def save_snapshot(store: SnapshotStore, epoch: int, model, run_id: str = "run",
                  normalization: str | None = None) -> CheckpointManifest:
    manifest = CheckpointManifest(
        run_id=run_id,
        epoch=epoch,
        normalization=normalization,
        layers=tuple(model.checkpoint_layers()),
    )
    store.save(manifest, model.state_dict())
    return manifest


def load_snapshot(store: SnapshotStore, epoch: int) -> tuple[CheckpointManifest, dict]:
    return store.manifest(epoch), store.load(epoch)

import hashlib
import json

import numpy as np

from convarrange.harness import HeatmapGrid
from convarrange.projections import (
    BiasTrajectory,
    FilterProjection,
    Histogram,
    LayerBiasRecord,
)
from convarrange.reports import (
    write_bundle_manifest,
    write_cosines_csv,
    write_heatmap_csv,
    write_layer_stats_json,
    write_trajectories_csv,
)
from convarrange.svgplot import heatmap_svg, histogram_svg, trajectories_svg


def demo_trajectories():
    recs1 = (LayerBiasRecord(1, 0, 0.5, 8), LayerBiasRecord(1, 1, 0.625, 8))
    recs2 = (LayerBiasRecord(2, 0, 0.25, 16), LayerBiasRecord(2, 1, 0.75, 16))
    return {1: BiasTrajectory(layer_id=1, records=recs1),
            2: BiasTrajectory(layer_id=2, records=recs2)}


class TestCsvWriters:
    def test_cosines_exact_round_trip(self, tmp_path):
        # 0.1 has no short decimal form; repr output must parse back bit-equal
        values = [0.1, 1 / 3, -0.75, 2e-17]
        projections = [FilterProjection(1, i, v) for i, v in enumerate(values)]
        path = tmp_path / "cosines.csv"
        write_cosines_csv(path, projections)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "layer_id,filter_index,cosine"
        parsed = [float(r.split(",")[2]) for r in rows[1:]]
        assert parsed == values

    def test_trajectories_sorted_by_epoch_then_layer(self, tmp_path):
        path = tmp_path / "t.csv"
        write_trajectories_csv(path, demo_trajectories())
        rows = path.read_text().strip().splitlines()[1:]
        keys = [tuple(int(x) for x in r.split(",")[:2]) for r in rows]
        assert keys == [(0, 1), (0, 2), (1, 1), (1, 2)]

    def test_heatmap_rows(self, tmp_path):
        grid = HeatmapGrid(epochs=[0, 2], layer_ids=[1, 2],
                           drops=np.array([[0.5, 0.25], [0.0, 0.125]]),
                           accuracy_full=0.9)
        path = tmp_path / "h.csv"
        write_heatmap_csv(path, grid)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "layer_id,epoch,accuracy_drop"
        assert rows[1] == "1,0,0.5"
        assert rows[4] == "2,2,0.125"

    def test_layer_stats_json_sorted(self, tmp_path):
        path = tmp_path / "layers.json"
        write_layer_stats_json(path, {2: {"negatives": 4}, 1: {"negatives": 3}})
        doc = json.loads(path.read_text())
        assert [e["layer_id"] for e in doc["layers"]] == [1, 2]
        assert doc["layers"][0]["negatives"] == 3


class TestBundleManifest:
    def test_checksums_and_self_exclusion(self, tmp_path):
        (tmp_path / "a.csv").write_text("x\n")
        (tmp_path / "sub").mkdir()
        (tmp_path / "sub" / "b.json").write_text("{}\n")
        manifest_path = write_bundle_manifest(tmp_path)
        doc = json.loads(manifest_path.read_text())
        paths = [e["path"] for e in doc["files"]]
        assert paths == ["a.csv", "sub/b.json"]
        want = hashlib.sha256(b"x\n").hexdigest()
        assert doc["files"][0]["sha256"] == want
        # regenerating leaves the listing unchanged (manifest excludes itself)
        again = json.loads(write_bundle_manifest(tmp_path).read_text())
        assert again == doc


class TestSvg:
    def test_histogram_svg_structure(self):
        hist = Histogram(edges=np.linspace(-1, 1, 5), counts=np.array([1, 0, 2, 4]))
        svg = histogram_svg(hist, title="demo")
        assert svg.startswith("<svg ")
        assert svg.endswith("</svg>\n")
        assert svg.count("<rect") == 1 + 4  # background + one bar per bin
        assert "demo" in svg
        assert histogram_svg(hist, title="demo") == svg

    def test_trajectories_svg_one_polyline_per_layer(self):
        svg = trajectories_svg(demo_trajectories())
        assert svg.count("<polyline") == 2
        assert "layer 1" in svg and "layer 2" in svg

    def test_heatmap_svg_cells_and_determinism(self):
        grid = HeatmapGrid(epochs=[0, 1], layer_ids=[1, 2, 3],
                           drops=np.arange(6, dtype=float).reshape(2, 3) / 10,
                           accuracy_full=0.8)
        svg = heatmap_svg(grid)
        assert svg.count("<rect") == 1 + 6  # background + one cell per entry
        assert "L3" in svg
        assert heatmap_svg(grid) == svg

    def test_heatmap_all_zero_drops(self):
        grid = HeatmapGrid(epochs=[0], layer_ids=[1],
                           drops=np.zeros((1, 1)), accuracy_full=1.0)
        svg = heatmap_svg(grid)  # peak guard avoids 0/0
        assert "0.000" in svg

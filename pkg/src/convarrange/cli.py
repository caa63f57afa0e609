"""Batch command-line front end.

Subcommands: analyze (projection statistics of a checkpoint), train, track
(train + bias trajectories), reinit (layer reinitialization grid), verify
(built-in self-checks). Exit codes: 0 success, 1 usage error, 2 data/format
error, 3 verification failure.

Heavy imports stay inside the command handlers; the CONVARRANGE_THREADS cap
is applied by the package __init__ before numpy ever loads.
"""

import argparse
import json
import sys
from pathlib import Path

from ._threads import apply_thread_cap as _apply_thread_cap

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from None


def _epoch_list(text: str) -> list:
    """Like _int_list but keeps the literal token ``final`` for later resolution."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if part == "":
            continue
        if part == "final":
            out.append(part)
            continue
        try:
            out.append(int(part))
        except ValueError:
            raise UsageError(f"expected comma-separated integers or 'final', got {text!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="convarrange", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("analyze", parents=[], description="Projection statistics of one checkpoint.")
    p.add_argument("checkpoint", help="weights .npz (with a manifest JSON) or a snapshot directory")
    p.add_argument("--manifest", help="manifest JSON path (default: <stem>.json or manifest.json beside the npz)")
    p.add_argument("--epoch", type=int, help="epoch to analyze when given a snapshot directory (default: latest)")
    p.add_argument("--out", help="directory for cosines.csv / layers.json / SVGs")
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--svg", action="store_true", help="also emit per-layer histogram SVGs")

    p = sub.add_parser("train", description="Train a model from a run config.")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("track", description="Train and write bias trajectories.")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", help="comma-separated seed overrides; runs one sub-directory per seed")
    p.add_argument("--corruption", choices=["none", "noisy_labels", "pixel_shuffle"],
                   help="override the config's corruption protocol")

    p = sub.add_parser("reinit", description="Layer reinitialization accuracy-drop grid.")
    p.add_argument("run_dir", help="directory written by `train` or `track`")
    p.add_argument("--out", help="output directory (default: run_dir)")
    p.add_argument("--epochs", help="comma-separated reinit epochs (default: 0,1,2,5,10,final)")
    p.add_argument("--layers", help="comma-separated conv layer ids (default: all)")

    p = sub.add_parser("verify", description="Run the built-in verification suite.")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load_manifest_for(npz_path: Path, manifest_arg):
    from .checkpoints import CheckpointManifest
    from .errors import CorruptManifest

    if manifest_arg:
        candidates = [Path(manifest_arg)]
    else:
        candidates = [npz_path.with_suffix(".json"), npz_path.parent / "manifest.json"]
    for cand in candidates:
        if cand.exists():
            return CheckpointManifest.from_json(cand.read_text())
    raise CorruptManifest(
        f"no manifest found for {npz_path} (tried {', '.join(str(c) for c in candidates)})"
    )


def _resolve_checkpoint(args):
    """-> (manifest, arrays) from either an .npz file or a snapshot dir."""
    from .checkpoints import SnapshotStore
    from .errors import MissingEpoch
    from .npyio import read_npz

    target = Path(args.checkpoint)
    if target.is_dir():
        root = target / "snapshots" if (target / "snapshots").is_dir() else target
        store = SnapshotStore(root)
        epochs = store.epochs()
        if not epochs:
            raise MissingEpoch(f"{root} holds no snapshots")
        epoch = args.epoch if args.epoch is not None else epochs[-1]
        return store.manifest(epoch), store.load(epoch)
    manifest = _load_manifest_for(target, args.manifest)
    arrays = {rec.name: rec.as_array() for rec in read_npz(target.read_bytes())}
    return manifest, arrays


def cmd_analyze(args) -> int:
    from .arrangement import alignment_probability, significance_report
    from .projections import FilterProjection, histogram, layer_cosines
    from .reports import write_bundle_manifest, write_cosines_csv, write_layer_stats_json
    from .svgplot import histogram_svg

    manifest, arrays = _resolve_checkpoint(args)
    projections = []
    layer_reports = {}
    histograms = {}
    for entry in manifest.layers:
        if entry.kind != "conv" or entry.geometry is None:
            continue
        cosines = layer_cosines(arrays[entry.weight], entry.geometry)
        projections.extend(
            FilterProjection(entry.layer_id, i, float(c)) for i, c in enumerate(cosines)
        )
        sig = significance_report(cosines)
        report = sig.to_dict()
        report["alignment_probability"] = alignment_probability(sig.filter_count)
        layer_reports[entry.layer_id] = report
        histograms[entry.layer_id] = histogram(cosines, args.bins)

    print(f"run {manifest.run_id!r} epoch {manifest.epoch}")
    print("layer  filters  negatives  n_l       p_value")
    for lid in sorted(layer_reports):
        rep = layer_reports[lid]
        print(
            f"{lid:>5}  {rep['filter_count']:>7}  {rep['negatives']:>9}"
            f"  {rep['negative_fraction']:<8.4f}  {rep['p_value']:.3e}"
        )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_cosines_csv(out / "cosines.csv", projections)
        write_layer_stats_json(out / "layers.json", layer_reports)
        if args.svg:
            for lid, hist in histograms.items():
                svg = histogram_svg(hist, title=f"layer {lid} cosines (epoch {manifest.epoch})")
                (out / f"hist_layer{lid:02d}.svg").write_text(svg)
        write_bundle_manifest(out)
    return EXIT_OK


def _read_config(path: str):
    from .harness import RunConfig

    return RunConfig.from_json(Path(path).read_text())


def cmd_train(args) -> int:
    from .harness import run_training
    from .reports import write_bundle_manifest, write_metrics_csv

    config = _read_config(args.config)
    result = run_training(config, args.out)
    write_metrics_csv(result.work_dir / "metrics.csv", result.metrics)
    final = result.metrics[-1] if result.metrics else None
    summary = {
        "run_id": config.run_id,
        "epochs": config.epochs,
        "final_train_acc": final.train_acc if final else None,
        "final_val_acc": final.val_acc if final else None,
    }
    (result.work_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    write_bundle_manifest(result.work_dir)
    if final:
        print(f"{config.run_id}: {config.epochs} epochs, train acc {final.train_acc:.4f}, val acc {final.val_acc:.4f}")
    return EXIT_OK


def _write_track_reports(result, out_dir):
    from .arrangement import alignment_probability, significance_report
    from .projections import layer_cosines
    from .reports import write_layer_stats_json, write_metrics_csv, write_trajectories_csv
    from .svgplot import trajectories_svg

    write_metrics_csv(out_dir / "metrics.csv", result.metrics)
    write_trajectories_csv(out_dir / "trajectories.csv", result.trajectories)
    (out_dir / "trajectories.svg").write_text(
        trajectories_svg(result.trajectories, title=f"{result.config.run_id}: negative fraction")
    )
    final_epoch = result.store.epochs()[-1]
    manifest = result.store.manifest(final_epoch)
    arrays = result.store.load(final_epoch)
    layer_reports = {}
    for entry in manifest.layers:
        if entry.kind != "conv":
            continue
        sig = significance_report(layer_cosines(arrays[entry.weight], entry.geometry))
        report = sig.to_dict()
        report["alignment_probability"] = alignment_probability(sig.filter_count)
        layer_reports[entry.layer_id] = report
    write_layer_stats_json(out_dir / "layers.json", layer_reports)


def cmd_track(args) -> int:
    from .harness import aggregate_trajectories, run_bias_tracking_multi, run_corruption
    from .reports import write_bundle_manifest

    config = _read_config(args.config)
    out = Path(args.out)
    if args.seeds:
        seeds = _int_list(args.seeds)
        if args.corruption:
            from dataclasses import replace

            results = []
            for seed in seeds:
                cfg = replace(config, seed=seed, run_id=f"{config.run_id}-s{seed}")
                results.append(run_corruption(cfg, args.corruption, out / f"seed_{seed}"))
        else:
            results = run_bias_tracking_multi(config, seeds, out)
        for res in results:
            _write_track_reports(res, res.work_dir)
        bands = aggregate_trajectories(results)
        rows = ["layer_id,epoch,mean_negative_fraction,std_negative_fraction"]
        for lid in sorted(bands):
            band = bands[lid]
            for e, m, s in zip(band.epochs, band.mean, band.std):
                rows.append(f"{lid},{e},{m!r},{s!r}")
        (out / "trajectory_bands.csv").write_text("\n".join(rows) + "\n")
        write_bundle_manifest(out)
        print(f"{len(results)} runs under {out}")
        return EXIT_OK

    result = run_corruption(config, args.corruption or config.corruption, out)
    _write_track_reports(result, result.work_dir)
    write_bundle_manifest(result.work_dir)
    final = result.metrics[-1]
    fractions = ", ".join(
        f"L{lid}={result.trajectories[lid].values[-1]:.3f}" for lid in sorted(result.trajectories)
    )
    print(f"{result.config.run_id}: train acc {final.train_acc:.4f}; final n_l: {fractions}")
    return EXIT_OK


def cmd_reinit(args) -> int:
    from .checkpoints import SnapshotStore
    from .errors import MissingLayer
    from .harness import reinit_from_run
    from .reports import write_bundle_manifest, write_heatmap_csv
    from .svgplot import heatmap_svg

    epochs = _epoch_list(args.epochs) if args.epochs else None
    layers = _int_list(args.layers) if args.layers else None
    if epochs is not None and "final" in epochs:
        available = SnapshotStore(Path(args.run_dir) / "snapshots").epochs()
        if not available:
            raise MissingLayer(f"{args.run_dir} holds no snapshots")
        epochs = sorted({available[-1] if e == "final" else e for e in epochs})
    grid = reinit_from_run(args.run_dir, layer_ids=layers, epochs=epochs)
    out = Path(args.out) if args.out else Path(args.run_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_heatmap_csv(out / "heatmap.csv", grid)
    (out / "heatmap.svg").write_text(heatmap_svg(grid))
    write_bundle_manifest(out)
    print(f"full accuracy {grid.accuracy_full:.4f}; grid {len(grid.epochs)}x{len(grid.layer_ids)} -> {out / 'heatmap.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_all

    results = run_all(seed=args.seed)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.detail}")
        failed += 0 if r.passed else 1
    if failed:
        print(f"{failed} of {len(results)} checks failed")
        return EXIT_VERIFY
    print(f"all {len(results)} checks passed")
    return EXIT_OK


_COMMANDS = {
    "analyze": cmd_analyze,
    "train": cmd_train,
    "track": cmd_track,
    "reinit": cmd_reinit,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # ConvArrangeError and friends
        from .errors import ConvArrangeError

        if isinstance(exc, ConvArrangeError):
            print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_DATA
        raise


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Commands: synth-data, prepare, train-id, train-enh, evaluate, report,
inspect-labels. Global flags: --config, --seed, --threads.

Exit codes: 0 success, 2 configuration error, 3 data/checkpoint error,
4 numeric divergence.

Heavy imports happen inside the command handlers so that --threads can
pin the BLAS thread count before numpy is loaded.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DivergenceError,
    MltsidError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4

EXIT_CODES = {
    "success": EXIT_OK,
    "config error": EXIT_CONFIG,
    "data error": EXIT_DATA,
    "divergence": EXIT_DIVERGENCE,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mltsid",
        description=(
            "Multi-label training for text-independent speaker identification: "
            "synthetic corpora, subgroup label expansion, ratio-mask "
            "enhancement, training, and evaluation."
        ),
    )
    parser.add_argument("--config", help="path to the run configuration file")
    parser.add_argument(
        "--seed",
        type=int,
        help="override the optimizer/enhancement/eval seeds from the config",
    )
    parser.add_argument(
        "--threads",
        type=int,
        help="pin the BLAS thread count (set to 1 for bitwise reproducibility)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic speaker corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--speakers", type=int, default=20)
    p.add_argument("--utts-per-speaker", type=int, default=40)
    p.add_argument("--duration", type=float, default=3.0, help="seconds per utterance")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--noise", action="store_true",
                   help="also generate a synthetic noise bank (white, pink, hum)")
    p.add_argument("--emit-config", metavar="PATH",
                   help="write a starter config pointing at the generated data")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("prepare", help="split the manifest and export the label map")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-id", help="train the identification net on clean speech")
    p.set_defaults(func=cmd_train_id)

    p = sub.add_parser(
        "train-enh",
        help="train the enhancement net through the frozen identification net",
    )
    p.set_defaults(func=cmd_train_enh)

    p = sub.add_parser("evaluate", help="score checkpoints under the eval conditions")
    p.add_argument("--repeat", type=int,
                   help="average this number of derived-seed evaluation passes")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="merge metrics files into a table and plot data")
    p.add_argument("--metrics", nargs="+", required=True, help="metrics JSON files")
    p.add_argument("--table", help="write the aligned table here (default: stdout)")
    p.add_argument("--plot-data", help="write delimited plot data here")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("inspect-labels", help="summarize the exported label map")
    p.set_defaults(func=cmd_inspect_labels)
    return parser


def _pin_threads(threads: int) -> None:
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(threads)


def _load_config(args):
    from . import config as config_mod

    if not args.config:
        raise ConfigError("this command needs --config <path>")
    run = config_mod.load_config(args.config)
    if args.seed is not None:
        import dataclasses

        from .seeding import derive_seed

        run = dataclasses.replace(
            run,
            optimizer=dataclasses.replace(run.optimizer, seed=args.seed),
            enhancement=dataclasses.replace(
                run.enhancement, seed=derive_seed(args.seed, "enh")
            ),
            eval=dataclasses.replace(run.eval, seed=derive_seed(args.seed, "eval")),
        )
    return run


def _noise_bank(run):
    from .data import NoiseBank

    if not run.data.noise_dir:
        return None
    return NoiseBank.from_dir(
        run.data.noise_dir,
        sample_rate=run.features.sample_rate,
        halving_seed=run.data.noise_halving_seed,
    )


def cmd_synth_data(args) -> int:
    from pathlib import Path

    from .data import synth_dataset, synth_noise_bank

    manifest = synth_dataset(
        args.out,
        num_speakers=args.speakers,
        utts_per_speaker=args.utts_per_speaker,
        duration_s=args.duration,
        seed=args.data_seed,
    )
    print(f"wrote {len(manifest)} utterances for {manifest.num_speakers} speakers "
          f"under {args.out}")
    if args.noise:
        names = synth_noise_bank(Path(args.out) / "noise", seed=args.data_seed)
        print(f"wrote noise bank: {', '.join(names)}")
    if args.emit_config:
        from . import config as config_mod

        run = config_mod.RunConfig(
            data=config_mod.DataConfig(
                manifest=str(Path(args.out) / "manifest.csv"),
                workdir=str(Path(args.out) / "work"),
                noise_dir=str(Path(args.out) / "noise") if args.noise else "",
            )
        )
        config_mod.write_config(args.emit_config, run)
        print(f"wrote starter config to {args.emit_config}")
    return EXIT_OK


def cmd_prepare(args) -> int:
    from .config import work_paths
    from .training import prepare_run

    run = _load_config(args)
    train, test = prepare_run(run)
    paths = work_paths(run)
    print(
        f"split {len(train) + len(test)} utterances into {len(train)} train / "
        f"{len(test)} test across {train.num_speakers} speakers"
    )
    print(f"label map: {paths.label_map}")
    return EXIT_OK


def _load_split(run, which: str):
    from .config import work_paths
    from .data import load_manifest

    paths = work_paths(run)
    path = paths.train_manifest if which == "train" else paths.test_manifest
    if not path.is_file():
        raise DataError(f"{path} not found; run `mltsid prepare` first")
    return load_manifest(path, min_utterances=1)


def cmd_train_id(args) -> int:
    from .training import train_id

    run = _load_config(args)
    train_manifest = _load_split(run, "train")
    result = train_id(run, train_manifest)
    print(
        f"trained identification net for {run.optimizer.epochs} epochs; "
        f"final epoch loss {result.epoch_losses[-1]:.4f}"
    )
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_train_enh(args) -> int:
    from .training import train_enh

    run = _load_config(args)
    train_manifest = _load_split(run, "train")
    result = train_enh(run, train_manifest, _noise_bank(run))
    print(
        f"trained enhancement net for {run.enhancement.epochs} epochs; "
        f"final epoch loss {result.epoch_losses[-1]:.4f}"
    )
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    import dataclasses

    from .config import work_paths
    from .evaluation import emit_plot_data, evaluate_run, render_table

    run = _load_config(args)
    if args.repeat is not None:
        run = dataclasses.replace(
            run, eval=dataclasses.replace(run.eval, repeat=args.repeat)
        )
    test_manifest = _load_split(run, "test")
    report = evaluate_run(run, test_manifest, _noise_bank(run))
    paths = work_paths(run)
    report.write(paths.metrics_json)
    table = render_table(report)
    paths.metrics_table.write_text(table)
    paths.plot_data.write_text(emit_plot_data(report))
    print(table, end="")
    print(f"metrics: {paths.metrics_json}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .evaluation import MetricsReport, emit_plot_data, merge_reports, render_table

    merged = merge_reports([MetricsReport.load(path) for path in args.metrics])
    table = render_table(merged)
    if args.table:
        with open(args.table, "w") as fh:
            fh.write(table)
    else:
        print(table, end="")
    if args.plot_data:
        with open(args.plot_data, "w") as fh:
            fh.write(emit_plot_data(merged))
        print(f"plot data: {args.plot_data}")
    return EXIT_OK


def cmd_inspect_labels(args) -> int:
    from collections import Counter

    from .config import work_paths
    from .labels import read_label_map

    run = _load_config(args)
    paths = work_paths(run)
    if not paths.label_map.is_file():
        raise DataError(f"{paths.label_map} not found; run `mltsid prepare` first")
    labeled = read_label_map(paths.label_map)
    subgroups = Counter(item.subgroup for item in labeled)
    speakers = {item.speaker for item in labeled}
    print(f"{len(labeled)} labeled utterances, {len(speakers)} speakers")
    for subgroup in sorted(subgroups):
        print(f"  subgroup {subgroup}: {subgroups[subgroup]} utterances")
    labels = sorted({item.train_label for item in labeled})
    print(f"expanded label space: {len(labels)} labels "
          f"({labels[0]}..{labels[-1]})")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        _pin_threads(args.threads)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MltsidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

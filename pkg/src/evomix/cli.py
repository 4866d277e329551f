"""Command line interface: run, sweep and eval subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import harness
from .config import RunConfig, load_config
from .errors import EvomixError
from .stream import Dataset, downsample_images, load_idx

log = logging.getLogger(__name__)

MNIST_TEST_NAMES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
PLAIN_TEST_NAMES = ("images.idx", "labels.idx")


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    if args.seed:
        config.seeds = list(args.seed)
    if args.out:
        config.out = args.out
    if config.out:
        parent = os.path.dirname(config.out)
        if parent:
            os.makedirs(parent, exist_ok=True)
    return config


def _write_outputs(config: RunConfig, metrics: harness.RunMetrics) -> None:
    if config.out:
        harness.emit_report(metrics, config.out + ".summary.json")
        log.info("summary written to %s.summary.json", config.out)


def cmd_run(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    events_path = config.out + ".events.jsonl" if config.out else None
    if args.save_checkpoints and not config.out:
        raise EvomixError("--save-checkpoints requires an output prefix (--out)")
    if args.save_checkpoints:
        sink_file = open(events_path, "w")
        try:
            def sink(obj):
                sink_file.write(json.dumps(obj, sort_keys=True) + "\n")
                sink_file.flush()

            sink({"event": "run_start", "config": config.to_dict()})
            results = []
            for seed in config.seeds:
                result, (model, buffer, rng) = harness.run_seed(
                    config, seed, sink, return_state=True
                )
                results.append(result)
                ckpt = f"{config.out}.seed{seed}.ckpt.npz"
                harness.checkpoint(model, buffer, ckpt, rng)
                log.info("checkpoint written to %s", ckpt)
        finally:
            sink_file.close()
        metrics = harness.RunMetrics(
            config=config.to_dict(),
            seeds=results,
            hsic_log=[e for r in results for e in r.checks],
        )
    else:
        metrics = harness.run_experiment(config, events_path, n_jobs=args.jobs)
    _write_outputs(config, metrics)
    for r in metrics.seeds:
        print(f"seed {r.seed}: accuracy {r.accuracy:.4f}, experts {r.expert_count}")
    print(
        f"aggregate: accuracy {metrics.accuracy_mean:.4f} +/- {metrics.accuracy_std:.4f} "
        f"over {len(metrics.seeds)} seed(s)"
    )
    return 0


def cmd_sweep(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    try:
        grid = [float(tok) for tok in args.lam.split(",") if tok.strip()]
    except ValueError as exc:
        raise EvomixError(f"bad lambda grid {args.lam!r}: {exc}") from exc
    rows = harness.lambda_sweep(config, grid)
    if config.out:
        with open(config.out + ".sweep.json", "w") as f:
            json.dump(rows, f, indent=2, sort_keys=True)
            f.write("\n")
        log.info("sweep table written to %s.sweep.json", config.out)
    print(f"{'lambda':>12}  {'experts (per seed)':>22}  {'accuracy':>18}")
    for row in rows:
        counts = ",".join(str(c) for c in row["expert_counts"])
        print(
            f"{row['lambda']:>12.3g}  {counts:>22}  "
            f"{row['accuracy_mean']:.4f} +/- {row['accuracy_std']:.4f}"
        )
    return 0


def _load_eval_dataset(data: str, downsample: int, image_side: int) -> Dataset:
    if data.endswith(".npz"):
        with np.load(data) as arrs:
            ds = Dataset(
                features=arrs["features"].astype(np.float64),
                labels=arrs["labels"].astype(np.int64),
                class_count=int(arrs["labels"].max()) + 1,
            )
    else:
        if ":" in data:
            images_path, labels_path = data.split(":", 1)
        elif os.path.isdir(data):
            for names in (MNIST_TEST_NAMES, PLAIN_TEST_NAMES):
                candidate = [os.path.join(data, n) for n in names]
                if all(os.path.exists(p) for p in candidate):
                    images_path, labels_path = candidate
                    break
            else:
                raise EvomixError(
                    f"no IDX test pair found in {data} "
                    f"(expected {MNIST_TEST_NAMES} or {PLAIN_TEST_NAMES})"
                )
        else:
            raise EvomixError(f"--data must be a .npz, a directory, or 'images:labels', got {data!r}")
        ds = load_idx(images_path, labels_path)
    if downsample > 1:
        ds = Dataset(
            downsample_images(ds.features, image_side, downsample), ds.labels, ds.class_count
        )
    return ds


def cmd_eval(args) -> int:
    model, _, _ = harness.restore(args.checkpoint)
    test = _load_eval_dataset(args.data, args.downsample, args.image_side)
    if test.features.shape[1] != model.arch.input_dim:
        raise EvomixError(
            f"data dim {test.features.shape[1]} does not match model input dim "
            f"{model.arch.input_dim} (wrong --downsample?)"
        )
    acc = harness.evaluate_accuracy(model, test, np.random.default_rng(args.seed_value))
    print(f"accuracy {acc:.4f} on {len(test)} samples, {model.expert_count} expert(s)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evomix",
        description="Task-free continual learning with an expanding mixture of VAE experts",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a multi-seed experiment from a config file")
    p_run.add_argument("--config", required=True, help="JSON run configuration")
    p_run.add_argument("--seed", type=int, action="append", help="override config seeds")
    p_run.add_argument("--out", help="output prefix for events/summary files")
    p_run.add_argument(
        "--save-checkpoints", action="store_true", help="write a checkpoint per seed"
    )
    p_run.add_argument(
        "--jobs", type=int, default=1, help="run seeds in parallel worker processes"
    )
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the experiment across a lambda grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument(
        "--lambda", dest="lam", required=True, help="comma separated ascending thresholds"
    )
    p_sweep.add_argument("--seed", type=int, action="append", help="override config seeds")
    p_sweep.add_argument("--out", help="output prefix for the sweep table")
    p_sweep.set_defaults(func=cmd_sweep)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a test set")
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint .npz")
    p_eval.add_argument(
        "--data", required=True, help=".npz dataset, IDX directory, or 'images:labels'"
    )
    p_eval.add_argument("--seed", dest="seed_value", type=int, default=0, help="evaluation rng seed")
    p_eval.add_argument("--downsample", type=int, default=1)
    p_eval.add_argument("--image-side", type=int, default=28)
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except EvomixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: synth, train, eval, predict.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import audio, dataset, metrics, models, synth, training
from .config import RunConfig, canonical_text, load_config
from .dataset import DatasetSplit
from .errors import ConfigError, NonFiniteError, NotebankError


def _overrides(args) -> dict[tuple[str, str], str]:
    out: dict[tuple[str, str], str] = {}
    mapping = {
        "steps": ("train", "steps"),
        "seed": ("train", "seed"),
        "threshold": None,  # handled per command
        "data_dir": ("paths", "data_dir"),
        "labels_dir": ("paths", "labels_dir"),
        "checkpoint_dir": ("paths", "checkpoint_dir"),
        "report": ("paths", "report_path"),
        "split": ("data", "split"),
    }
    for attr, target in mapping.items():
        value = getattr(args, attr, None)
        if value is not None and target is not None:
            out[target] = str(value)
    if getattr(args, "augment", None) is not None:
        out[("augment", "pitch_shift")] = "true" if args.augment == "on" else "false"
    return out


def _load(args) -> RunConfig:
    return load_config(args.config, _overrides(args))


def _resolve_split(cfg: RunConfig) -> DatasetSplit:
    if cfg.split_path:
        split = dataset.load_split(cfg.split_path, cfg.sampling_stride)
    elif cfg.train_ids is not None or cfg.test_ids is not None:
        split = DatasetSplit(cfg.train_ids or (), cfg.test_ids or (), cfg.sampling_stride)
    else:
        raise ConfigError("no split configured: set [data] split or train_ids/test_ids")
    if not split.train_ids and cfg.data_dir:
        # split files may list only the held-out side
        rest = [rid for rid in dataset.available_ids(cfg.data_dir) if rid not in split.test_ids]
        split = DatasetSplit(tuple(rest), split.test_ids, split.sampling_stride)
    return split


def _require(cfg_value, flag: str):
    if not cfg_value:
        raise ConfigError(f"missing {flag} (set it in the config [paths] section or pass the flag)")
    return cfg_value


def _build_graph(cfg: RunConfig):
    rng = np.random.default_rng(cfg.train.seed)
    return models.build_model(cfg.model, cfg.geometry, rng)


def cmd_synth(args) -> int:
    cfg = _load(args)
    data_dir = _require(cfg.data_dir, "--data-dir")
    labels_dir = cfg.labels_dir or data_dir
    os.makedirs(data_dir, exist_ok=True)
    os.makedirs(labels_dir, exist_ok=True)

    rng = np.random.default_rng(cfg.synth_seed)
    recordings, events_by_id = synth.synth_corpus(cfg.synth, rng)
    n_events = 0
    for rec in recordings:
        audio.write_wav(os.path.join(data_dir, f"{rec.id}.wav"), rec.samples)
        dataset.write_labels_csv(
            os.path.join(labels_dir, f"{rec.id}.csv"), events_by_id[rec.id]
        )
        n_events += len(events_by_id[rec.id])
    split = synth.corpus_split(cfg.synth, cfg.sampling_stride)
    dataset.write_split(os.path.join(data_dir, "split.txt"), split)
    print(
        f"wrote {len(recordings)} recordings ({n_events} note events) to {data_dir}; "
        f"split: {len(split.train_ids)} train / {len(split.test_ids)} test"
    )
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    data_dir = _require(cfg.data_dir, "--data-dir")
    labels_dir = cfg.labels_dir or data_dir
    checkpoint_dir = _require(cfg.checkpoint_dir, "--checkpoint-dir")
    os.makedirs(checkpoint_dir, exist_ok=True)

    split = _resolve_split(cfg)
    ids = list(split.train_ids) + list(split.test_ids)
    recordings, events_by_id = dataset.load_corpus(data_dir, labels_dir, ids)
    graph = _build_graph(cfg)
    print(f"model {cfg.model.family}: {graph.param_count()} trainable parameters")
    training.train(
        graph, cfg.train, recordings, events_by_id, split, cfg.geometry,
        checkpoint_dir=checkpoint_dir, config_text=canonical_text(cfg),
        log=print, workers=args.workers,
    )
    print(f"final checkpoint: {os.path.join(checkpoint_dir, 'final.ckpt')}")
    return 0


def _score_transform(cfg: RunConfig):
    if cfg.train.loss == "bce":
        return lambda p: 1.0 / (1.0 + np.exp(-p))
    return None


def cmd_eval(args) -> int:
    cfg = _load(args)
    data_dir = _require(cfg.data_dir, "--data-dir")
    labels_dir = cfg.labels_dir or data_dir
    threshold = args.threshold if args.threshold is not None else metrics.DEFAULT_THRESHOLD

    split = _resolve_split(cfg)
    recordings, events_by_id = dataset.load_corpus(data_dir, labels_dir, split.test_ids)
    graph = _build_graph(cfg)
    training.load_eval_weights(graph, args.checkpoint, which=args.weights)

    frames = metrics.score_frames(
        graph, recordings, events_by_id, split, cfg.geometry,
        score_transform=_score_transform(cfg),
    )
    report = metrics.report_from_frames(frames, threshold)
    text = metrics.format_report(report)
    sys.stdout.write(text)
    if cfg.report_path:
        with open(cfg.report_path, "w") as fh:
            fh.write(text)
        with open(cfg.report_path + ".config", "w") as fh:
            fh.write(canonical_text(cfg))
    if args.dump_frames:
        with open(args.dump_frames, "w") as fh:
            fh.write("recording,center,n_ref,n_sys,n_corr\n")
            for f in frames:
                n_ref, n_sys, n_corr = metrics.frame_counts(f, threshold)
                fh.write(f"{f.frame_id[0]},{f.frame_id[1]},{n_ref},{n_sys},{n_corr}\n")
    return 0


def cmd_predict(args) -> int:
    cfg = _load(args)
    rec = audio.load_wav(args.wav)
    graph = _build_graph(cfg)
    training.load_eval_weights(graph, args.checkpoint, which=args.weights)
    transform = _score_transform(cfg)

    centers = dataset.eval_centers(rec.length, cfg.sampling_stride)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        header = "center," + ",".join(f"s{n}" for n in range(128))
        if args.threshold is not None:
            header += ",notes"
        out.write(header + "\n")
        for start in range(0, len(centers), 64):
            chunk = centers[start : start + 64]
            batch = np.stack(
                [audio.extract_frame(rec, int(c), cfg.geometry).samples for c in chunk]
            )
            preds, _ = graph.forward_batch(batch)
            if transform is not None:
                preds = transform(preds)
            for c, scores in zip(chunk, preds):
                row = f"{int(c)}," + ",".join(f"{s:.17g}" for s in scores)
                if args.threshold is not None:
                    notes = np.flatnonzero(scores >= args.threshold)
                    row += "," + ";".join(str(int(n)) for n in notes)
                out.write(row + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="notebank", description="Frame-based polyphonic note transcription toolkit."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration file")
    common.add_argument("--data-dir", dest="data_dir")
    common.add_argument("--labels-dir", dest="labels_dir")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic labeled corpus")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a model variant")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--augment", choices=["on", "off"])
    p.add_argument("--checkpoint-dir", dest="checkpoint_dir")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split")
    p.add_argument("--threshold", type=float)
    p.add_argument("--report")
    p.add_argument("--weights", choices=["averaged", "live"], default="averaged")
    p.add_argument("--dump-frames", dest="dump_frames")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="emit per-frame scores for a WAV file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.add_argument("--threshold", type=float)
    p.add_argument("--weights", choices=["averaged", "live"], default="averaged")
    p.add_argument("wav", help="input WAV file")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NonFiniteError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except NotebankError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands cover the full pipeline: synthetic data generation, supervised
pretraining, semi-supervised training, metric evaluation, wavelet
decomposition dumps and copy-paste mixing demos. Every run is reproducible
from (config, seed); the resolved configuration is echoed into the output
directory. Exit codes: 0 success, 1 validation/config error, 2 IO error,
3 numeric failure.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import data as dataio
from . import metrics, trainer
from .errors import (
    ConfigError,
    DataLoadError,
    FormatError,
    NumericError,
    ValidationError,
    WavesegError,
)
from .mixing import generate_mask, mix, mix_labels
from .model import ModelConfig
from .trainer import TrainConfig
from .wavelet import frequency_triple


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parse_shape(text):
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse shape {text!r}; expected e.g. 64,64") from None


def _parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _load_config(args):
    """Merge defaults, an optional JSON config file, and --set overrides."""
    tree = {"model": {}, "train": {}}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise DataLoadError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"config file {path}: {exc}") from exc
        for section, values in loaded.items():
            if section not in tree:
                raise ConfigError(f"unknown config section {section!r}")
            tree[section].update(values)
    for item in getattr(args, "set", None) or []:
        key, value = _parse_override(item)
        parts = key.split(".")
        if len(parts) != 2 or parts[0] not in tree:
            raise ConfigError(f"override key must be model.<field> or train.<field>: {key!r}")
        tree[parts[0]][parts[1]] = value

    def build_section(cls, values):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
        return cls(**values)

    return build_section(ModelConfig, tree["model"]), build_section(TrainConfig, tree["train"])


def _prepare_out(out, force=False):
    out = Path(out)
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out, model_config, train_config, extra=None):
    payload = {
        "model": dataclasses.asdict(model_config),
        "train": dataclasses.asdict(train_config),
        "config_hash": trainer.config_hash(model_config, train_config),
    }
    if extra:
        payload.update(extra)
    (out / "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=list) + "\n")


def _jsonl_logger(path):
    fh = open(path, "a")

    def write(record):
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        fh.flush()

    return write


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args):
    out = _prepare_out(args.out, args.force)
    dataset = dataio.generate_synthetic(args.count, _parse_shape(args.shape),
                                        args.classes, args.seed)
    if args.labeled < 1.0:
        dataset = dataio.split_labeled(dataset, args.labeled, args.seed)
    dataio.save_dataset(dataset, out)
    print(f"wrote {len(dataset)} samples ({len(dataset.labeled_indices)} labeled) to {out}")
    return 0


def cmd_pretrain(args):
    out = _prepare_out(args.out, args.force)
    model_config, train_config = _load_config(args)
    dataset = dataio.load_dataset(args.data, normalize=args.normalize)
    _echo_config(out, model_config, train_config)
    log = _jsonl_logger(out / "train_log.jsonl")
    checkpoint = trainer.pretrain(dataset, model_config, train_config, log=log)
    path = out / "checkpoint.pt"
    trainer.save_checkpoint(checkpoint, path)
    print(f"pretrained checkpoint written to {path}")
    return 0


def cmd_train(args):
    out = _prepare_out(args.out, args.force)
    checkpoint = trainer.load_checkpoint(args.init)
    model_config, train_config = checkpoint.model_config, checkpoint.train_config
    if args.config or args.set:
        override_model, override_train = _load_config(args)
        if dataclasses.asdict(override_model) != dataclasses.asdict(model_config):
            raise ConfigError(
                "model config overrides conflict with the checkpoint architecture"
            )
        train_config = override_train
        checkpoint.train_config = train_config
    dataset = dataio.load_dataset(args.data, normalize=args.normalize)
    val_dataset = dataio.load_dataset(args.val, normalize=args.normalize) if args.val else None
    _echo_config(out, model_config, train_config)
    log = _jsonl_logger(out / "train_log.jsonl")
    final = trainer.train_ssl(checkpoint, dataset, val_dataset=val_dataset, log=log)
    path = out / "checkpoint.pt"
    trainer.save_checkpoint(final, path)
    if final.metric_history:
        (out / "metrics.json").write_text(
            json.dumps(final.metric_history[-1]["report"], indent=2, sort_keys=True) + "\n"
        )
    print(f"trained checkpoint written to {path}")
    return 0


def _eval_from_predictions(manifest_path, num_classes_hint=None):
    index, entries = dataio.load_volumes(manifest_path)
    num_classes = num_classes_hint or int(index["num_classes"])
    records = []
    for sample_id, volumes in entries:
        if "prediction" not in volumes:
            raise ValidationError(f"sample {sample_id!r} has no prediction volume")
        if "label" not in volumes:
            raise ValidationError(f"sample {sample_id!r} has no label volume")
        records.append(
            metrics.evaluate_pair(
                volumes["prediction"].data[0], volumes["label"].data[0], num_classes
            )
        )
    return metrics.aggregate(records, num_classes)


def cmd_eval(args):
    if args.checkpoint:
        checkpoint = trainer.load_checkpoint(args.checkpoint)
        dataset = dataio.load_dataset(args.data, normalize=args.normalize)
        if not dataset.labeled_indices:
            raise ValidationError("evaluation dataset has no labeled samples")
        report = trainer.evaluate(checkpoint, dataset)
    else:
        report = _eval_from_predictions(args.data)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text + "\n")
    return 0


def cmd_decompose(args):
    out = _prepare_out(args.out, args.force)
    index, entries = dataio.load_volumes(args.data)
    records = []
    for sample_id, volumes in entries:
        if "image" not in volumes:
            continue
        triple = frequency_triple(volumes["image"].data, args.family)
        records.append(
            (
                sample_id,
                {
                    "low": dataio.Volume(triple.low.astype(np.float32), kind="image"),
                    "raw": dataio.Volume(triple.raw.astype(np.float32), kind="image"),
                    "high": dataio.Volume(triple.high.astype(np.float32), kind="image"),
                },
            )
        )
    dataio.write_manifest(
        out, records, index["num_classes"], index["spatial_rank"],
        extra={"wavelet_family": args.family},
    )
    print(f"wrote {len(records)} frequency triples to {out}")
    return 0


def cmd_mixdemo(args):
    out = _prepare_out(args.out, args.force)
    dataset = dataio.load_dataset(args.data)
    rng = np.random.default_rng(args.seed)
    labeled = dataset.labeled_indices
    unlabeled = dataset.unlabeled_indices
    if len(labeled) >= 2 and len(unlabeled) >= 2:
        li, lj = labeled[:2]
        up, uq = unlabeled[:2]
        pseudo = None  # true pseudo-labels need a model
    elif len(labeled) >= 4:
        li, lj, up, uq = labeled[:4]
        pseudo = (dataset.samples[up].label, dataset.samples[uq].label)
    else:
        raise ValidationError(
            "mix-demo needs 2 labeled + 2 unlabeled samples, or 4 labeled ones"
        )
    img = lambda k: dataset.samples[k].image.data
    lab = lambda k: dataset.samples[k].label.data
    mask = generate_mask(dataset.samples[li].image.spatial_shape, args.ratio, rng)
    x_in = mix(img(lj), img(up), mask)
    x_out = mix(img(uq), img(li), mask)
    volumes = {
        "mix_in": dataio.Volume(x_in.astype(np.float32), kind="image"),
        "mix_out": dataio.Volume(x_out.astype(np.float32), kind="image"),
        "mask": dataio.Volume(mask.mask[np.newaxis].astype(np.uint8), kind="label"),
    }
    if pseudo is not None:
        y_in = mix_labels(lab(lj)[0], pseudo[0].data[0], mask, "in")
        y_out = mix_labels(lab(li)[0], pseudo[1].data[0], mask, "out")
        volumes["label_in"] = dataio.Volume(y_in[np.newaxis], kind="label")
        volumes["label_out"] = dataio.Volume(y_out[np.newaxis], kind="label")
    dataio.write_manifest(
        out, [("mixdemo", volumes)], dataset.num_classes, dataset.spatial_rank,
        extra={
            "mask_ratio": args.ratio,
            "seed": args.seed,
            "crop_offset": list(mask.crop_offset),
            "crop_size": list(mask.crop_size),
            "sources": {
                "labeled": [dataset.samples[li].id, dataset.samples[lj].id],
                "unlabeled": [dataset.samples[up].id, dataset.samples[uq].id],
            },
        },
    )
    print(f"wrote mix demo to {out}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _add_config_flags(p):
    p.add_argument("--config", help="JSON config file with 'model'/'train' sections")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field, e.g. train.base_lr=0.05")
    p.add_argument("--normalize", action="store_true",
                   help="min-max scale images to [0,1] at load")


def build_parser():
    parser = _Parser(prog="waveseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=40)
    p.add_argument("--shape", default="64,64")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--labeled", type=float, default=0.1,
                   help="labeled fraction; 1.0 keeps every sample labeled")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain", help="supervised training on labeled samples")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="semi-supervised training from a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--init", required=True, help="pretrained checkpoint path")
    p.add_argument("--val", help="validation manifest for periodic evaluation")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metric report for predictions or a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", help="if absent, manifest must contain predictions")
    p.add_argument("--out")
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decompose", help="dump wavelet low/high companions")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--family", default="haar")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("mix-demo", help="dump one bidirectional copy-paste example")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ratio", type=float, default=2.0 / 3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_mixdemo)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataLoadError, FormatError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except WavesegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

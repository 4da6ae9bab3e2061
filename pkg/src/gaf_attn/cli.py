"""Command-line front end.

Every subcommand resolves one flat configuration: built-in defaults, then
an optional ``--config`` JSON file, then explicit flags. The resolved
values are written into each artifact so a run can be repeated exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import __version__
from .dataset import (
    Dataset,
    SynthConfig,
    attention_score,
    generate_synthetic,
    load_dataset,
    make_folds,
    save_dataset,
    split_words,
)
from .errors import ArgumentError, ConfigError, GafAttnError, LoadError
from .gaf import EncodeOptions, encode_dataset, encode_trial, export_pgm, load_cache, save_cache
from .harness import (
    TrainConfig,
    baseline_constant,
    clamp_score,
    cross_validate,
    evaluate_mae,
    train,
)
from .model import AttnCnnConfig, build_model, load_checkpoint, save_checkpoint

SEED_ENV = "GAF_ATTN_SEED"

_SYNTH_KEYS = (
    "n_subjects",
    "trials_per_subject",
    "listening_s",
    "writing_s",
    "resting_s",
    "snr_levels_db",
    "score_means",
    "score_jitter",
    "words_range",
    "freq_range_hz",
    "n_components",
    "decimals",
)
_TRAIN_KEYS = ("epochs", "base_lr", "lr_decay", "batch_size", "seed", "precision", "paa_target", "beta1", "beta2", "eps")

DEFAULTS: dict = {
    **{k: v for k, v in SynthConfig().to_dict().items() if k in _SYNTH_KEYS},
    **{k: v for k, v in TrainConfig().to_dict().items() if k in _TRAIN_KEYS},
    "conv_filters": list(AttnCnnConfig().conv_filters),
    "adaptive_grid": AttnCnnConfig().adaptive_grid,
    "dropout_rate": AttnCnnConfig().dropout_rate,
    "encoder": "gadf",
    "n_folds": 12,
    "workers": 1,
}


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return int(DEFAULTS["seed"])
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from exc


def _tuple_or_none(v):
    return None if v is None else tuple(v)


def synth_config(cfg: dict) -> SynthConfig:
    values = {k: cfg[k] for k in _SYNTH_KEYS}
    for k in ("listening_s", "snr_levels_db", "words_range", "freq_range_hz", "score_means"):
        values[k] = _tuple_or_none(values[k])
    return SynthConfig(**values)


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**{k: cfg[k] for k in _TRAIN_KEYS})


def model_config(cfg: dict) -> AttnCnnConfig:
    return AttnCnnConfig(
        conv_filters=tuple(cfg["conv_filters"]),
        adaptive_grid=cfg["adaptive_grid"],
        dropout_rate=cfg["dropout_rate"],
        seed=cfg["seed"],
        precision=cfg["precision"],
    )


def encode_options(cfg: dict) -> EncodeOptions:
    return EncodeOptions(cfg["encoder"], cfg["paa_target"])


def validate_config(cfg: dict) -> tuple[dict, list[str]]:
    """Check every field and cross-field rule; collect all violations."""
    errors = []
    unknown = sorted(set(cfg) - set(DEFAULTS))
    if unknown:
        errors.append(f"unknown config key(s): {', '.join(unknown)}")
    merged = {**DEFAULTS, **{k: v for k, v in cfg.items() if k in DEFAULTS}}
    if merged.get("paa_target") in (0, "none", "None"):
        merged["paa_target"] = None

    try:
        errors.extend(train_config(merged).errors())
    except (TypeError, ValueError) as exc:
        errors.append(f"train config: {exc}")
    try:
        errors.extend(
            e for e in model_config(merged).errors() if not e.startswith("precision")
        )
    except (TypeError, ValueError) as exc:
        errors.append(f"model config: {exc}")
    try:
        synth_config(merged).validate()
    except ConfigError as exc:
        errors.extend(str(exc).split("; "))
    except (TypeError, ValueError) as exc:
        errors.append(f"synthetic config: {exc}")
    if merged["encoder"] not in ("gadf", "gasf"):
        errors.append(f"encoder must be gadf or gasf, got {merged['encoder']!r}")
    if not isinstance(merged["n_folds"], int) or merged["n_folds"] < 2:
        errors.append(f"n_folds must be an integer >= 2, got {merged['n_folds']}")
    if not isinstance(merged["workers"], int) or merged["workers"] < 1:
        errors.append(f"workers must be an integer >= 1, got {merged['workers']}")
    return merged, errors


def resolve_config(args: argparse.Namespace) -> dict:
    cfg: dict = {"seed": default_seed()}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text() or "{}")
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must contain a JSON object")
        cfg.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    resolved, errors = validate_config(cfg)
    if errors:
        raise ConfigError("; ".join(errors))
    return resolved


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _load_images(path: Path, cfg: dict):
    """Encoded images from a cache directory or a raw dataset directory.

    A cache fixes its own encoding, so its settings replace the ones in
    ``cfg`` (in place) to keep the echoed config truthful.
    """
    if (path / "index.json").is_file():
        images, meta = load_cache(path)
        cfg.update(meta.get("encode", {}))
        return images, {"cache": meta}
    dataset = load_dataset(path)
    images = encode_dataset(dataset, encode_options(cfg), workers=cfg["workers"])
    return images, {"dataset_manifest": dataset.manifest}


def _find_trial(dataset: Dataset, subject: int, trial: int) -> int:
    for i, t in enumerate(dataset.trials):
        if t.subject_id == subject and t.trial_id == trial:
            return i
    raise ArgumentError(f"no trial {trial} for subject {subject}")


def cmd_synth(args, cfg):
    ds = generate_synthetic(synth_config(cfg), cfg["seed"])
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} trials for {cfg['n_subjects']} subject(s) to {args.out}")


def cmd_score(args, cfg):
    with open(args.input, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"heard", "written"} <= set(reader.fieldnames):
            raise LoadError(f"{args.input}: row 1: need 'heard' and 'written' columns")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                score = attention_score(split_words(row["heard"]), split_words(row["written"]))
            except GafAttnError as exc:
                raise LoadError(f"{args.input}: row {lineno}: {exc}") from exc
            rows.append({**row, "score": repr(score)})
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=[*reader.fieldnames, "score"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()


def cmd_encode(args, cfg):
    dataset = load_dataset(args.dataset)
    images = encode_dataset(dataset, encode_options(cfg), workers=cfg["workers"])
    meta = {
        "encode": encode_options(cfg).to_dict(),
        "seed": cfg["seed"],
        "dataset_manifest": dataset.manifest,
    }
    save_cache(images, args.out, meta)
    print(f"encoded {len(images)} trials to {args.out}")


def cmd_export_image(args, cfg):
    dataset = load_dataset(args.dataset)
    idx = _find_trial(dataset, args.subject, args.trial)
    image = encode_trial(dataset.segment(idx), encode_options(cfg))
    export_pgm(image, args.channel, args.out)
    print(f"wrote {image.size}x{image.size} channel {args.channel} image to {args.out}")


def cmd_train(args, cfg):
    images, source = _load_images(Path(args.dataset), cfg)
    folds = make_folds(len(images), cfg["n_folds"], cfg["seed"])
    if not 0 <= args.fold < cfg["n_folds"]:
        raise ArgumentError(f"--fold must be in [0, {cfg['n_folds']})")
    train_set = [images[i] for i in folds.train_indices(args.fold)]
    val_set = [images[i] for i in folds.indices(args.fold)]
    model = build_model(model_config(cfg))
    history = train(model, train_set, val_set, train_config(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = {k: v for k, v in cfg.items() if k != "workers"}
    save_checkpoint(model, out / "model.gafm", extra={"config": echo})
    report = {
        "config": echo,
        "seed": cfg["seed"],
        "fold": args.fold,
        "n_train": len(train_set),
        "n_val": len(val_set),
        "val_mae": evaluate_mae(model, val_set),
        "baseline_mae": baseline_constant([i.target for i in train_set], [i.target for i in val_set]),
        "history": history.to_dict(),
        "source": source,
        "nondeterministic": {"wall_clock_s": history.wall_clock_s},
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"val MAE {report['val_mae']:.3f} (baseline {report['baseline_mae']:.3f}); wrote {out}")


def cmd_cv(args, cfg):
    images, source = _load_images(Path(args.dataset), cfg)
    extra = {"encode": encode_options(cfg).to_dict(), "resolved": {k: v for k, v in cfg.items() if k != "workers"}}
    report = cross_validate(
        images,
        n_folds=cfg["n_folds"],
        train_config=train_config(cfg),
        model_config=model_config(cfg),
        workers=cfg["workers"],
        extra_config=extra,
    )
    report.nondeterministic["dataset_path"] = str(args.dataset)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["source"] = source
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    report.write_curves(out.with_name(out.stem + "_curves.csv"))
    print(
        f"{report.n_folds}-fold MAE {report.mean:.3f} ± {report.std:.3f} "
        f"(median baseline {report.baseline_mean:.3f}); wrote {out}"
    )


def cmd_predict(args, cfg):
    model, extra = load_checkpoint(args.checkpoint)
    saved = extra.get("config", {})
    options = EncodeOptions(saved.get("encoder", "gadf"), saved.get("paa_target"))
    dataset = load_dataset(args.dataset)
    idx = _find_trial(dataset, args.subject, args.trial)
    image = encode_trial(dataset.segment(idx), options)
    print(repr(clamp_score(model.predict(image))))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: usage: {message}\n")


def _d(key) -> str:
    value = DEFAULTS[key]
    if isinstance(value, (list, tuple)):
        value = ",".join(str(v) for v in value)
    return f"(default: {value})"


def _paa(text: str):
    return 0 if text.lower() == "none" else int(text)


def _int_list(text: str):
    return [int(v) for v in text.split(",")]


def _float_list(text: str):
    return [float(v) for v in text.split(",")]


def _add_common(p):
    p.add_argument("--config", help="JSON file of config values; flags override it")
    p.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV} or {DEFAULTS['seed']})")


def _add_encode(p):
    p.add_argument("--paa", dest="paa_target", type=_paa, help=f"PAA length cap, 'none' to disable {_d('paa_target')}")
    p.add_argument("--encoder", choices=["gadf", "gasf"], help=f"field type {_d('encoder')}")
    p.add_argument("--workers", type=int, help=f"parallel processes {_d('workers')}")


def _add_training(p):
    p.add_argument("--epochs", type=int, help=f"training epochs {_d('epochs')}")
    p.add_argument("--lr", dest="base_lr", type=float, help=f"initial learning rate {_d('base_lr')}")
    p.add_argument("--lr-decay", dest="lr_decay", type=float, help=f"per-epoch decay factor {_d('lr_decay')}")
    p.add_argument("--batch-size", dest="batch_size", type=int, help=f"must be 1 {_d('batch_size')}")
    p.add_argument("--precision", choices=["float32", "float64"], help=f"{_d('precision')}")
    p.add_argument("--dropout", dest="dropout_rate", type=float, help=f"dropout after first dense layer {_d('dropout_rate')}")
    p.add_argument("--filters", dest="conv_filters", type=_int_list, help=f"4 comma-separated conv widths {_d('conv_filters')}")
    p.add_argument("--grid", dest="adaptive_grid", type=int, help=f"adaptive pool output size {_d('adaptive_grid')}")
    p.add_argument("--folds", dest="n_folds", type=int, help=f"number of folds {_d('n_folds')}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gaf-attn", description="EEG attention-score regression on GADF images.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--subjects", dest="n_subjects", type=int, help=f"{_d('n_subjects')}")
    p.add_argument("--trials", dest="trials_per_subject", type=int, help=f"trials per subject {_d('trials_per_subject')}")
    p.add_argument("--snr", dest="snr_levels_db", type=_float_list, help=f"comma-separated SNR levels in dB {_d('snr_levels_db')}")
    p.add_argument("--jitter", dest="score_jitter", type=float, help=f"score jitter half-width {_d('score_jitter')}")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("score", help="attention scores for a transcript CSV (heard, written columns)")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True, help="CSV with pipe-delimited heard/written columns")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("encode", help="encode a dataset into a GAFI image cache")
    _add_common(p)
    _add_encode(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("export-image", help="write one channel of a trial's image as PGM")
    _add_common(p)
    _add_encode(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--subject", type=int, required=True)
    p.add_argument("--trial", type=int, required=True)
    p.add_argument("--channel", type=int, default=0, help="channel index 0-13 (default: 0)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_image)

    p = sub.add_parser("train", help="train on one split, holding out one fold")
    _add_common(p)
    _add_encode(p)
    _add_training(p)
    p.add_argument("--dataset", required=True, help="dataset or encoded cache directory")
    p.add_argument("--fold", type=int, default=0, help="held-out fold index (default: 0)")
    p.add_argument("--out", required=True, help="output directory for model.gafm and report.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    _add_common(p)
    _add_encode(p)
    _add_training(p)
    p.add_argument("--dataset", required=True, help="dataset or encoded cache directory")
    p.add_argument("--out", default="cv_report.json", help="report path (default: cv_report.json)")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", help="score one trial with a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--subject", type=int, required=True)
    p.add_argument("--trial", type=int, required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def run_command(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        args.func(args, cfg)
    except GafAttnError as exc:
        message = " ".join(str(exc).split())
        print(f"error: {exc.category}: {message}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command())

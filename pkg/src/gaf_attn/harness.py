"""Training loop, k-fold cross-validation and run reports."""

from __future__ import annotations

import csv
import dataclasses
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .dataset import make_folds
from .errors import ConfigError, EvaluationError, HarnessError, PartitionError
from .gaf import GadfImage
from .model import AttnCnn, AttnCnnConfig, build_model
from .nn import Adam, lr_schedule, mse_loss

SCORE_RANGE = (0.0, 100.0)
RNG_ALGORITHM = "numpy.random.PCG64 seeded via SeedSequence"
STD_DEFINITION = "sample standard deviation (n-1) over per-fold validation MAEs"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    base_lr: float = 0.0025
    lr_decay: float = 0.9
    batch_size: int = 1
    seed: int = 0
    precision: str = "float32"
    paa_target: int | None = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def errors(self) -> list[str]:
        problems = []
        if self.batch_size != 1:
            problems.append(
                f"batch_size must be 1 (variable-size images cannot share a batch), got {self.batch_size}"
            )
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 < self.base_lr <= 1.0:
            problems.append(f"base_lr must be in (0, 1], got {self.base_lr}")
        if not 0.0 < self.lr_decay <= 1.0:
            problems.append(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.precision not in ("float32", "float64"):
            problems.append(f"precision must be float32 or float64, got {self.precision!r}")
        if self.paa_target is not None and self.paa_target < 2:
            problems.append(f"paa_target must be >= 2, got {self.paa_target}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            problems.append("Adam betas must be in [0, 1)")
        if self.eps <= 0:
            problems.append("Adam eps must be > 0")
        return problems

    def validate(self) -> None:
        problems = self.errors()
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunHistory:
    train_mse: list[float] = field(default_factory=list)
    val_mae: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        return {"train_mse": self.train_mse, "val_mae": self.val_mae, "lr": self.lr}


@dataclass
class CvReport:
    fold_maes: list[float]
    mean: float
    std: float
    n_folds: int
    fold_sizes: list[int]
    seed: int
    config: dict
    baseline_maes: list[float] = field(default_factory=list)
    histories: list[RunHistory] = field(default_factory=list)
    fold_seeds: list[int] = field(default_factory=list)
    nondeterministic: dict = field(default_factory=dict)

    @property
    def baseline_mean(self) -> float:
        return float(np.mean(self.baseline_maes)) if self.baseline_maes else float("nan")

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "fold_seeds": self.fold_seeds,
            "rng": RNG_ALGORITHM,
            "n_folds": self.n_folds,
            "fold_sizes": self.fold_sizes,
            "fold_maes": self.fold_maes,
            "mean": self.mean,
            "std": self.std,
            "std_definition": STD_DEFINITION,
            "baseline": {
                "predictor": "train-set median",
                "fold_maes": self.baseline_maes,
                "mean": self.baseline_mean,
            },
            "histories": [h.to_dict() for h in self.histories],
            "environment": {"package_version": __version__, "numpy": np.__version__},
            "nondeterministic": self.nondeterministic,
        }

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def write_curves(self, path: str | Path) -> Path:
        """CSV of ``fold,epoch,train_mse,val_mae,lr`` rows for plotting."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["fold", "epoch", "train_mse", "val_mae", "lr"])
            for fold, hist in enumerate(self.histories):
                for epoch, row in enumerate(zip(hist.train_mse, hist.val_mae, hist.lr)):
                    writer.writerow([fold, epoch, *(repr(float(v)) for v in row)])
        return path


def summarize(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std


def clamp_score(value: float) -> float:
    return float(min(max(value, SCORE_RANGE[0]), SCORE_RANGE[1]))


def mae(targets: Sequence[float], predictions: Sequence[float]) -> float:
    t = np.asarray(targets, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if t.size == 0:
        raise EvaluationError("cannot evaluate an empty set")
    if t.shape != p.shape:
        raise EvaluationError(f"{t.size} targets vs {p.size} predictions")
    return float(np.mean(np.abs(t - p)))


def predict_scores(model: AttnCnn, images: Sequence[GadfImage]) -> np.ndarray:
    """Eval-mode predictions clamped to the score range."""
    return np.array([clamp_score(model.predict(img)) for img in images])


def evaluate_mae(model: AttnCnn, images: Sequence[GadfImage]) -> float:
    if len(images) == 0:
        raise EvaluationError("cannot evaluate an empty set")
    predictions = predict_scores(model, images)
    return mae([img.target for img in images], predictions)


def baseline_constant(train_targets: Sequence[float], val_targets: Sequence[float]) -> float:
    """MAE of predicting the train-set median for every validation item."""
    train = np.asarray(train_targets, dtype=np.float64)
    val = np.asarray(val_targets, dtype=np.float64)
    if train.size == 0 or val.size == 0:
        raise EvaluationError("baseline needs non-empty train and validation targets")
    return mae(val, np.full(val.shape, np.median(train)))


def _key(img: GadfImage):
    if img.subject_id is None or img.trial_id is None:
        return ("object", id(img))
    return (img.subject_id, img.trial_id)


def _cast(images: Sequence[GadfImage], dtype) -> list[GadfImage]:
    out = []
    for img in images:
        data = img.data if img.data.dtype == dtype else np.asarray(img.data, dtype=dtype)
        out.append(img if data is img.data else dataclasses.replace(img, data=data))
    return out


def train(
    model: AttnCnn,
    train_set: Sequence[GadfImage],
    val_set: Sequence[GadfImage],
    config: TrainConfig = TrainConfig(),
    rng: np.random.Generator | None = None,
) -> RunHistory:
    """Adam with batch size 1 and per-epoch exponential learning-rate decay.

    Each epoch visits the training images in a fresh seeded order, takes one
    optimizer step per image, then scores the validation set (when given).
    """
    config.validate()
    if len(train_set) == 0:
        raise HarnessError("training set is empty")
    overlap = {_key(i) for i in train_set} & {_key(i) for i in val_set}
    if overlap:
        raise HarnessError(f"train and validation sets share {len(overlap)} trial(s)")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    dtype = model.config.dtype
    train_set = _cast(train_set, dtype)
    val_set = _cast(val_set, dtype)
    targets = [np.array([img.target], dtype=dtype) for img in train_set]

    opt = Adam(model.parameters(), lr=config.base_lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    history = RunHistory()
    start = time.perf_counter()
    for epoch in range(config.epochs):
        opt.lr = lr_schedule(epoch, config.base_lr, config.lr_decay)
        history.lr.append(opt.lr)
        losses = []
        for i in rng.permutation(len(train_set)):
            opt.zero_grad()
            out = model.forward(train_set[i], train=True, rng=rng)
            loss, grad = mse_loss(out, targets[i])
            model.backward(grad)
            opt.step()
            losses.append(loss)
        history.train_mse.append(float(np.mean(losses)))
        history.val_mae.append(evaluate_mae(model, val_set) if val_set else float("nan"))
    history.wall_clock_s = time.perf_counter() - start
    return history


def fold_seeds(seed: int, n_folds: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n_folds)
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]


@dataclass
class _FoldJob:
    fold: int
    seed: int
    train_set: list
    val_set: list
    model_config: AttnCnnConfig
    train_config: TrainConfig


def _run_fold(job: _FoldJob):
    with threadpool_limits(limits=1):
        model = build_model(dataclasses.replace(job.model_config, seed=job.seed))
        tconf = dataclasses.replace(job.train_config, seed=job.seed)
        rng = np.random.default_rng(np.random.SeedSequence([job.seed, 1]))
        history = train(model, job.train_set, job.val_set, tconf, rng=rng)
        val_mae = evaluate_mae(model, job.val_set)
    base = baseline_constant([i.target for i in job.train_set], [i.target for i in job.val_set])
    return job.fold, val_mae, base, history


def cross_validate(
    images: Sequence[GadfImage],
    n_folds: int = 12,
    train_config: TrainConfig = TrainConfig(),
    model_config: AttnCnnConfig = AttnCnnConfig(),
    workers: int = 1,
    extra_config: dict | None = None,
) -> CvReport:
    """k-fold cross-validation with a fresh model per fold.

    Fold membership and per-fold seeds derive from ``train_config.seed``.
    Results do not depend on ``workers``.
    """
    train_config.validate()
    model_config.validate()
    if n_folds < 2:
        raise PartitionError(f"cross-validation needs at least 2 folds, got {n_folds}")
    if len(images) < n_folds:
        raise PartitionError(f"{len(images)} trial(s) cannot fill {n_folds} folds")
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()

    folds = make_folds(len(images), n_folds, train_config.seed)
    seeds = fold_seeds(train_config.seed, n_folds)
    jobs = []
    for f in range(n_folds):
        jobs.append(
            _FoldJob(
                f,
                seeds[f],
                [images[i] for i in folds.train_indices(f)],
                [images[i] for i in folds.indices(f)],
                model_config,
                train_config,
            )
        )
    if workers <= 1:
        results = [_run_fold(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_fold, jobs))
    results.sort(key=lambda r: r[0])

    fold_maes = [r[1] for r in results]
    mean, std = summarize(fold_maes)
    config = {
        "train": train_config.to_dict(),
        "model": model_config.to_dict(),
        "n_folds": n_folds,
        **(extra_config or {}),
    }
    return CvReport(
        fold_maes=fold_maes,
        mean=mean,
        std=std,
        n_folds=n_folds,
        fold_sizes=folds.sizes,
        seed=train_config.seed,
        config=config,
        baseline_maes=[r[2] for r in results],
        histories=[r[3] for r in results],
        fold_seeds=seeds,
        nondeterministic={
            "started_at": started,
            "wall_clock_s": time.perf_counter() - t0,
            "fold_wall_clock_s": [r[3].wall_clock_s for r in results],
            "host": platform.node(),
            "python": platform.python_version(),
            "workers": workers,
        },
    )

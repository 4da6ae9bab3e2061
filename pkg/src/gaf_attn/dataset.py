"""Trial data model, CSV dataset I/O, synthetic generation and fold splitting.

A dataset directory holds::

    manifest.json                 {source, n_subjects, sampling_rate_hz, seed?, config?}
    subject_<id>_signal.csv       sample_index, ch01..ch14
    subject_<id>_trials.csv       trial_id, phase, start_sample, end_sample,
                                  snr_db, heard, written, score

Trials CSVs carry one row per phase segment. Transcripts are pipe-delimited
and only present on the Listening row, where ``score`` is the stored
attention score in percent.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import re
import string
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BoundsError,
    ConfigError,
    LoadError,
    PartitionError,
    SchemaError,
    TranscriptError,
)

N_CHANNELS = 14
SAMPLING_RATE_HZ = 128.0
CHANNEL_NAMES = tuple(f"ch{i:02d}" for i in range(1, N_CHANNELS + 1))
SIGNAL_HEADER = ("sample_index",) + CHANNEL_NAMES
TRIALS_HEADER = (
    "trial_id",
    "phase",
    "start_sample",
    "end_sample",
    "snr_db",
    "heard",
    "written",
    "score",
)
SCORE_TOLERANCE = 1e-6

_SIGNAL_RE = re.compile(r"^subject_(\d+)_signal\.csv$")


class Phase(str, Enum):
    LISTENING = "Listening"
    WRITING = "Writing"
    RESTING = "Resting"


# ---------------------------------------------------------------------------
# Attention score
# ---------------------------------------------------------------------------


def normalize_word(word: str) -> str:
    """Lowercase and strip surrounding punctuation/whitespace."""
    return word.strip().strip(string.punctuation + string.whitespace).lower()


def attention_score(heard: Sequence[str], written: Sequence[str]) -> float:
    """Percent of heard words reproduced at the same position.

    Words are compared after :func:`normalize_word`. Written words past the
    end of the heard sentence are ignored, so the denominator is always the
    heard word count.

    >>> attention_score("a b c d e".split(), "a x c y e".split())
    60.0
    """
    if len(heard) == 0:
        raise TranscriptError("heard word list is empty")
    n = len(heard)
    correct = sum(
        1
        for h, w in zip(heard, written)
        if normalize_word(h) == normalize_word(w)
    )
    return 100.0 * correct / n


def split_words(text: str) -> tuple[str, ...]:
    if text is None or text.strip() == "":
        return ()
    return tuple(w for w in text.split("|"))


def join_words(words: Iterable[str]) -> str:
    return "|".join(words)


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseSegment:
    phase: Phase
    start_sample: int
    end_sample: int

    def __post_init__(self):
        object.__setattr__(self, "phase", Phase(self.phase))
        if self.start_sample < 0:
            raise BoundsError(f"segment start {self.start_sample} is negative")
        if self.end_sample <= self.start_sample:
            raise BoundsError(
                f"segment [{self.start_sample}, {self.end_sample}) is empty or inverted"
            )

    @property
    def length(self) -> int:
        return self.end_sample - self.start_sample


@dataclass(frozen=True)
class TrialRecord:
    subject_id: int
    trial_id: int
    segments: tuple[PhaseSegment, ...]
    snr_db: float
    heard_words: tuple[str, ...] = ()
    written_words: tuple[str, ...] = ()
    attention_score: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "heard_words", tuple(self.heard_words))
        object.__setattr__(self, "written_words", tuple(self.written_words))
        if self.heard_words:
            object.__setattr__(
                self,
                "attention_score",
                attention_score(self.heard_words, self.written_words),
            )
        ordered = sorted(self.segments, key=lambda s: s.start_sample)
        for a, b in zip(ordered, ordered[1:]):
            if b.start_sample < a.end_sample:
                raise SchemaError(
                    f"trial {self.trial_id}: segments overlap "
                    f"([{a.start_sample},{a.end_sample}) and [{b.start_sample},{b.end_sample}))"
                )
        object.__setattr__(self, "segments", tuple(ordered))

    @property
    def listening(self) -> PhaseSegment:
        found = [s for s in self.segments if s.phase is Phase.LISTENING]
        if len(found) != 1:
            raise SchemaError(
                f"subject {self.subject_id} trial {self.trial_id}: "
                f"expected exactly one Listening segment, found {len(found)}"
            )
        return found[0]

    def validate(self, signal_length: int | None = None) -> None:
        """Dataset-level checks beyond what construction enforces."""
        seg = self.listening
        if seg.length < 2:
            raise SchemaError(
                f"subject {self.subject_id} trial {self.trial_id}: "
                f"listening segment has {seg.length} sample(s), need at least 2"
            )
        if signal_length is not None:
            last = self.segments[-1].end_sample
            if last > signal_length:
                raise BoundsError(
                    f"subject {self.subject_id} trial {self.trial_id}: "
                    f"segment end {last} exceeds signal length {signal_length}"
                )
        if self.attention_score is not None and not (0.0 <= self.attention_score <= 100.0):
            raise SchemaError(f"trial {self.trial_id}: score outside [0, 100]")


@dataclass(frozen=True)
class EegSegment:
    """Listening-phase slice: ``data`` has shape (14, k)."""

    data: np.ndarray
    sampling_rate_hz: float = SAMPLING_RATE_HZ
    subject_id: int | None = None
    trial_id: int | None = None
    score: float | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != N_CHANNELS:
            raise SchemaError(f"EEG segment must be {N_CHANNELS}xk, got {data.shape}")
        if data.shape[1] < 1:
            raise SchemaError("EEG segment has no samples")
        if not np.all(np.isfinite(data)):
            raise SchemaError("EEG segment contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class Dataset:
    trials: tuple[TrialRecord, ...]
    signals: dict[int, np.ndarray]
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))
        seen = set()
        for trial in self.trials:
            key = (trial.subject_id, trial.trial_id)
            if key in seen:
                raise SchemaError(
                    f"duplicate trial id {trial.trial_id} for subject {trial.subject_id}"
                )
            seen.add(key)
            if trial.subject_id not in self.signals:
                raise SchemaError(f"no signal for subject {trial.subject_id}")
            trial.validate(self.signals[trial.subject_id].shape[1])

    def __len__(self) -> int:
        return len(self.trials)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.trials == other.trials
            and self.manifest == other.manifest
            and self.signals.keys() == other.signals.keys()
            and all(np.array_equal(self.signals[k], other.signals[k]) for k in self.signals)
        )

    @property
    def subject_ids(self) -> list[int]:
        return sorted(self.signals)

    def segment(self, index: int) -> EegSegment:
        trial = self.trials[index]
        return extract_listening_segment(trial, self.signals[trial.subject_id])

    def targets(self) -> np.ndarray:
        return np.array([t.attention_score for t in self.trials], dtype=np.float64)


def extract_listening_segment(trial: TrialRecord, signal: np.ndarray) -> EegSegment:
    seg = trial.listening
    signal = np.asarray(signal)
    if signal.ndim != 2 or signal.shape[0] != N_CHANNELS:
        raise SchemaError(f"signal must be {N_CHANNELS}xN, got {signal.shape}")
    if seg.end_sample > signal.shape[1]:
        raise BoundsError(
            f"listening segment [{seg.start_sample}, {seg.end_sample}) "
            f"exceeds signal length {signal.shape[1]}"
        )
    return EegSegment(
        signal[:, seg.start_sample : seg.end_sample],
        subject_id=trial.subject_id,
        trial_id=trial.trial_id,
        score=trial.attention_score,
    )


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    # shortest repr that round-trips
    return repr(float(value))


def save_dataset(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = dict(dataset.manifest)
    manifest.setdefault("source", "unknown")
    manifest["n_subjects"] = len(dataset.signals)
    manifest["sampling_rate_hz"] = int(SAMPLING_RATE_HZ)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    by_subject: dict[int, list[TrialRecord]] = {s: [] for s in dataset.signals}
    for trial in dataset.trials:
        by_subject[trial.subject_id].append(trial)

    for sid, signal in sorted(dataset.signals.items()):
        text = signal.T.astype(str)
        lines = [",".join(SIGNAL_HEADER)]
        lines.extend(f"{i}," + ",".join(row) for i, row in enumerate(text))
        (path / f"subject_{sid}_signal.csv").write_text("\n".join(lines) + "\n")

        with open(path / f"subject_{sid}_trials.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRIALS_HEADER)
            for trial in by_subject[sid]:
                for seg in trial.segments:
                    listening = seg.phase is Phase.LISTENING
                    writer.writerow(
                        [
                            trial.trial_id,
                            seg.phase.value,
                            seg.start_sample,
                            seg.end_sample,
                            _fmt(trial.snr_db),
                            join_words(trial.heard_words) if listening else "",
                            join_words(trial.written_words) if listening else "",
                            _fmt(trial.attention_score)
                            if listening and trial.attention_score is not None
                            else "",
                        ]
                    )
    return path


def _load_signal(file: Path) -> np.ndarray:
    with open(file) as fh:
        header = tuple(h.strip() for h in fh.readline().strip().split(","))
    if header[0] != "sample_index" or len(header) != N_CHANNELS + 1:
        raise LoadError(
            f"{file.name}: row 1: expected columns {','.join(SIGNAL_HEADER)} "
            f"({N_CHANNELS} channels), got {len(header) - 1} channel column(s)"
        )
    if header != SIGNAL_HEADER:
        raise LoadError(f"{file.name}: row 1: unexpected header {header}")
    try:
        table = np.loadtxt(file, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise LoadError(f"{file.name}: {exc}") from exc
    if table.shape[1] != N_CHANNELS + 1:
        raise LoadError(f"{file.name}: expected {N_CHANNELS + 1} columns, got {table.shape[1]}")
    idx = table[:, 0]
    if not np.array_equal(idx, np.arange(len(idx))):
        bad = int(np.argmax(idx != np.arange(len(idx))))
        raise LoadError(f"{file.name}: row {bad + 2}: sample_index out of sequence")
    data = table[:, 1:].T.copy()
    if not np.all(np.isfinite(data)):
        bad = int(np.argmax(~np.all(np.isfinite(data), axis=0)))
        raise LoadError(f"{file.name}: row {bad + 2}: non-finite sample")
    return data


def _load_trials(file: Path, subject_id: int, signal_length: int) -> list[TrialRecord]:
    rows: dict[int, list[tuple[int, dict]]] = {}
    with open(file, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader, ()))
        if header != TRIALS_HEADER:
            raise LoadError(f"{file.name}: row 1: expected header {','.join(TRIALS_HEADER)}")
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(TRIALS_HEADER):
                raise LoadError(f"{file.name}: row {lineno}: expected {len(TRIALS_HEADER)} fields")
            rec = dict(zip(TRIALS_HEADER, raw))
            try:
                tid = int(rec["trial_id"])
            except ValueError as exc:
                raise LoadError(f"{file.name}: row {lineno}: bad trial_id") from exc
            rows.setdefault(tid, []).append((lineno, rec))

    trials = []
    for tid, recs in rows.items():
        lineno = recs[0][0]
        try:
            segments = []
            snrs = set()
            heard: tuple[str, ...] = ()
            written: tuple[str, ...] = ()
            stored = None
            for lineno, rec in recs:
                seg = PhaseSegment(
                    Phase(rec["phase"]), int(rec["start_sample"]), int(rec["end_sample"])
                )
                segments.append(seg)
                snrs.add(float(rec["snr_db"]))
                if seg.phase is Phase.LISTENING:
                    heard = split_words(rec["heard"])
                    written = split_words(rec["written"])
                    stored = float(rec["score"]) if rec["score"].strip() else None
            if len(snrs) != 1:
                raise SchemaError(f"trial {tid}: inconsistent snr_db across segments")
            trial = TrialRecord(
                subject_id, tid, tuple(segments), snrs.pop(), heard, written,
                attention_score=None if heard else stored,
            )
            if heard and stored is not None and abs(stored - trial.attention_score) > SCORE_TOLERANCE:
                raise SchemaError(
                    f"stored score {stored} differs from recomputed {trial.attention_score}"
                )
            if trial.attention_score is None:
                raise SchemaError(f"trial {tid}: no transcript or score")
            trial.validate(signal_length)
        except (ValueError, KeyError) as exc:
            if isinstance(exc, LoadError):
                raise
            raise LoadError(f"{file.name}: row {lineno}: {exc}") from exc
        trials.append(trial)
    return trials


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    manifest_file = path / "manifest.json"
    if not manifest_file.is_file():
        raise LoadError(f"{path}: missing manifest.json")
    try:
        manifest = json.loads(manifest_file.read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"manifest.json: {exc}") from exc
    rate = manifest.get("sampling_rate_hz", SAMPLING_RATE_HZ)
    if float(rate) != SAMPLING_RATE_HZ:
        raise LoadError(f"manifest.json: sampling_rate_hz must be 128, got {rate}")

    subject_ids = sorted(
        int(m.group(1)) for f in path.iterdir() if (m := _SIGNAL_RE.match(f.name))
    )
    if not subject_ids:
        raise LoadError(f"{path}: no subject_<id>_signal.csv files")
    if "n_subjects" in manifest and manifest["n_subjects"] != len(subject_ids):
        raise LoadError(
            f"manifest.json: n_subjects={manifest['n_subjects']} "
            f"but {len(subject_ids)} signal file(s) found"
        )

    signals = {}
    trials: list[TrialRecord] = []
    for sid in subject_ids:
        signals[sid] = _load_signal(path / f"subject_{sid}_signal.csv")
        trials_file = path / f"subject_{sid}_trials.csv"
        if not trials_file.is_file():
            raise LoadError(f"{trials_file.name}: missing")
        trials.extend(_load_trials(trials_file, sid, signals[sid].shape[1]))
    try:
        return Dataset(tuple(trials), signals, manifest)
    except (SchemaError, BoundsError) as exc:
        raise LoadError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------

_VOCAB = (
    "the a man woman child dog cat bird house tree river road car train book "
    "letter song music window door table chair water light night morning "
    "city village market garden school teacher doctor friend mother father "
    "runs walks sings reads writes opens closes carries finds sees hears "
    "quickly slowly quietly loudly often never always green blue red old "
    "young small large bright dark warm cold happy tired early late"
).split()


def expected_score(snr_db: float) -> float:
    """Mean synthetic attention score for a noise level.

    The share of signal power in total power, in percent:
    ``100 / (1 + 10**(-snr_db / 10))``. It falls monotonically as the noise
    power grows (0 dB gives 50).
    """
    return 100.0 / (1.0 + 10.0 ** (-snr_db / 10.0))


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 2
    trials_per_subject: int = 144
    listening_s: tuple[float, float] = (3.0, 5.0)
    writing_s: float = 1.0
    resting_s: float = 1.0
    snr_levels_db: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0)
    score_means: tuple[float, ...] | None = None
    score_jitter: float = 5.0
    words_range: tuple[int, int] = (3, 13)
    freq_range_hz: tuple[float, float] = (1.0, 6.0)
    n_components: int = 3
    decimals: int = 4

    def __post_init__(self):
        object.__setattr__(self, "listening_s", tuple(self.listening_s))
        object.__setattr__(self, "snr_levels_db", tuple(float(s) for s in self.snr_levels_db))
        object.__setattr__(self, "words_range", tuple(self.words_range))
        object.__setattr__(self, "freq_range_hz", tuple(self.freq_range_hz))
        if self.score_means is not None:
            object.__setattr__(self, "score_means", tuple(float(m) for m in self.score_means))

    def validate(self) -> None:
        problems = []
        if self.n_subjects < 1:
            problems.append("n_subjects must be >= 1")
        if self.trials_per_subject < 1:
            problems.append("trials_per_subject must be >= 1")
        if not self.snr_levels_db:
            problems.append("snr_levels_db must not be empty")
        if self.score_means is not None and len(self.score_means) != len(self.snr_levels_db):
            problems.append("score_means needs one entry per SNR level")
        if self.score_means is not None and any(not 0 <= m <= 100 for m in self.score_means):
            problems.append("score_means must lie in [0, 100]")
        lo, hi = self.listening_s
        if not 0 < lo <= hi:
            problems.append("listening_s must satisfy 0 < min <= max")
        if round(lo * SAMPLING_RATE_HZ) < 2:
            problems.append("listening segments must span at least 2 samples")
        if self.writing_s < 0 or self.resting_s < 0:
            problems.append("writing_s and resting_s must be >= 0")
        if self.score_jitter < 0:
            problems.append("score_jitter must be >= 0")
        wlo, whi = self.words_range
        if not 1 <= wlo <= whi:
            problems.append("words_range must satisfy 1 <= min <= max")
        flo, fhi = self.freq_range_hz
        if not 0 < flo <= fhi < SAMPLING_RATE_HZ / 2:
            problems.append("freq_range_hz must lie within (0, Nyquist)")
        if self.n_components < 1:
            problems.append("n_components must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))

    def level_mean(self, level: int) -> float:
        if self.score_means is not None:
            return self.score_means[level]
        return expected_score(self.snr_levels_db[level])

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _oscillation(rng: np.random.Generator, n: int, cfg: SynthConfig) -> np.ndarray:
    t = np.arange(n) / SAMPLING_RATE_HZ
    freqs = rng.uniform(*cfg.freq_range_hz, size=(N_CHANNELS, cfg.n_components, 1))
    phases = rng.uniform(0, 2 * np.pi, size=(N_CHANNELS, cfg.n_components, 1))
    amps = rng.uniform(0.5, 1.5, size=(N_CHANNELS, cfg.n_components, 1))
    x = (amps * np.sin(2 * np.pi * freqs * t + phases)).sum(axis=1)
    rms = np.sqrt(np.mean(x**2, axis=1, keepdims=True))
    return x / np.where(rms > 0, rms, 1.0)


def _transcripts(rng: np.random.Generator, target: float, cfg: SynthConfig):
    n_words = int(rng.integers(cfg.words_range[0], cfg.words_range[1] + 1))
    heard = [str(w) for w in rng.choice(_VOCAB, size=n_words)]
    n_correct = int(np.floor(target * n_words / 100.0 + 0.5))
    correct = set(rng.choice(n_words, size=n_correct, replace=False).tolist())
    written = []
    for i, word in enumerate(heard):
        if i in correct:
            written.append(word)
        else:
            others = [w for w in _VOCAB if w != word]
            written.append(str(others[int(rng.integers(len(others)))]))
    return tuple(heard), tuple(written)


def generate_synthetic(config: SynthConfig, seed: int) -> Dataset:
    """Generate a dataset whose scores depend on each trial's noise level.

    Every channel of a trial is a unit-RMS mixture of sinusoids drawn from
    ``freq_range_hz`` plus white noise with standard deviation
    ``10**(-snr_db / 20)``. The trial's target score is the level mean
    (``score_means`` or :func:`expected_score`) plus uniform jitter of
    ``±score_jitter``, clipped to [0, 100]. Transcripts are then built so
    that the positional match count is the nearest one to that target.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    rate = SAMPLING_RATE_HZ
    n_write = int(round(config.writing_s * rate))
    n_rest = int(round(config.resting_s * rate))

    trials = []
    signals = {}
    for sid in range(1, config.n_subjects + 1):
        pieces = []
        cursor = 0
        for tid in range(1, config.trials_per_subject + 1):
            level = int(rng.integers(len(config.snr_levels_db)))
            snr = config.snr_levels_db[level]
            target = float(
                np.clip(
                    config.level_mean(level)
                    + rng.uniform(-config.score_jitter, config.score_jitter),
                    0.0,
                    100.0,
                )
            )
            heard, written = _transcripts(rng, target, config)
            n_listen = int(round(rng.uniform(*config.listening_s) * rate))
            n_total = n_listen + n_write + n_rest

            clean = _oscillation(rng, n_total, config)
            noise = rng.standard_normal((N_CHANNELS, n_total)) * 10.0 ** (-snr / 20.0)
            pieces.append(clean + noise)

            segments = [PhaseSegment(Phase.LISTENING, cursor, cursor + n_listen)]
            pos = cursor + n_listen
            if n_write:
                segments.append(PhaseSegment(Phase.WRITING, pos, pos + n_write))
                pos += n_write
            if n_rest:
                segments.append(PhaseSegment(Phase.RESTING, pos, pos + n_rest))
                pos += n_rest
            trials.append(TrialRecord(sid, tid, tuple(segments), snr, heard, written))
            cursor = pos
        signals[sid] = np.round(np.concatenate(pieces, axis=1), config.decimals)

    manifest = {
        "source": "synthetic",
        "n_subjects": config.n_subjects,
        "sampling_rate_hz": int(rate),
        "seed": int(seed),
        "config": json.loads(json.dumps(config.to_dict())),
    }
    return Dataset(tuple(trials), signals, manifest)


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    n_folds: int
    assignment: np.ndarray

    def indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    @property
    def sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.n_folds).tolist()


def make_folds(n_items: int, n_folds: int, seed: int) -> FoldAssignment:
    """Seeded random permutation chunked into near-equal folds.

    Larger folds come first, so 10 items in 3 folds gives sizes 4, 3, 3.
    """
    if n_folds < 1 or n_folds > n_items:
        raise PartitionError(f"need 1 <= n_folds <= n_items, got n_folds={n_folds}, n_items={n_items}")
    perm = np.random.default_rng(seed).permutation(n_items)
    assignment = np.empty(n_items, dtype=np.int64)
    for fold, chunk in enumerate(np.array_split(perm, n_folds)):
        assignment[chunk] = fold
    return FoldAssignment(n_folds, assignment)

"""End-to-end orchestration: images per sample, k-fold evaluation, reports.

Seeds: every component seed is derived from one master seed with
``derive_seed(master, *keys)``, which feeds the master seed and the CRC32
of each string key to ``numpy.random.SeedSequence``. Keys used here are
``("split",)``, ``("repeat", r)``, ``("embed", fold)``, ``("init", fold)``
and ``("shuffle", fold)``.
"""

from __future__ import annotations

import csv
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import cnn
from .centrality import centralities
from .cpg import build_cpg
from .embed import HASHED, TRAINED, EmbeddingModel, embed_sentence, hashed_model, tokenize, train_embedding
from .errors import CodeImageError, EmptyConfusion, TooFewSamples
from .imagegen import BASE_ROWS, CodeImage, build_image
from .ingest import VULNERABLE, FunctionSample, normalize
from .oversample import DEFAULT_K, oversample_function

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("FPR", "FNR", "Pr", "Re", "F1", "ACC")


def derive_seed(master: int, *keys) -> int:
    words = [int(master) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        words.append(zlib.crc32(str(key).encode()) if not isinstance(key, int) else key)
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])


# -- metrics -----------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    FPR: float
    FNR: float
    Pr: float
    Re: float
    F1: float
    ACC: float
    confusion: tuple  # (TP, FP, TN, FN)
    undefined: tuple = ()  # names of ratios whose denominator was zero

    def row(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_COLUMNS}


def compute_metrics(tp: int, fp: int, tn: int, fn: int) -> Metrics:
    """Percentages; ratios with a zero denominator are 0 and flagged."""
    if tp + fp + tn + fn < 1:
        raise EmptyConfusion("confusion matrix is empty")
    undefined = []

    def ratio(name, num, den):
        if den == 0:
            undefined.append(name)
            return 0.0
        return 100.0 * num / den

    fpr = ratio("FPR", fp, fp + tn)
    fnr = ratio("FNR", fn, fn + tp)
    pr = ratio("Pr", tp, tp + fp)
    re = ratio("Re", tp, tp + fn)
    if pr + re > 0:
        f1 = 2 * pr * re / (pr + re)
    else:
        f1 = 0.0
        undefined.append("F1")
    acc = 100.0 * (tp + tn) / (tp + fp + tn + fn)
    return Metrics(fpr, fnr, pr, re, f1, acc, (tp, fp, tn, fn), tuple(undefined))


def confusion(y_true: Sequence[int], y_pred: Sequence[int]) -> tuple[int, int, int, int]:
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    return (
        int(((t == 1) & (p == 1)).sum()),
        int(((t == 0) & (p == 1)).sum()),
        int(((t == 0) & (p == 0)).sum()),
        int(((t == 1) & (p == 0)).sum()),
    )


def mean_metrics(items: Sequence[Metrics]) -> dict:
    return {name: float(np.mean([getattr(m, name) for m in items])) for name in METRIC_COLUMNS}


# -- folds --------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldSplit:
    num_folds: int
    assignments: dict  # id -> fold index
    seed: int

    def fold_ids(self, fold: int) -> list[str]:
        return sorted(i for i, f in self.assignments.items() if f == fold)

    def train_ids(self, fold: int) -> list[str]:
        return sorted(i for i, f in self.assignments.items() if f != fold)


def _id_label(item) -> tuple[str, str]:
    if isinstance(item, FunctionSample):
        return item.id, item.label
    if isinstance(item, CodeImage):
        return item.sample_id, item.label
    return item


def kfold_split(dataset: Iterable, num_folds: int = 5, seed: int = 0) -> FoldSplit:
    """Label-stratified split: per class, a seeded shuffle dealt round-robin.

    The deal continues across classes, so fold sizes differ by at most one.
    """
    pairs = sorted(_id_label(x) for x in dataset)
    if len(pairs) < num_folds:
        raise TooFewSamples(f"{len(pairs)} samples for {num_folds} folds")
    rng = np.random.default_rng(seed)
    by_label: dict[str, list[str]] = {}
    for sid, label in pairs:
        by_label.setdefault(label, []).append(sid)
    assignments = {}
    counter = 0
    for label in sorted(by_label):
        ids = by_label[label]
        for j in rng.permutation(len(ids)):
            assignments[ids[j]] = counter % num_folds
            counter += 1
    return FoldSplit(num_folds, assignments, seed)


# -- per-sample image construction -----------------------------------------------------


@dataclass
class Structure:
    sample: FunctionSample
    centrality: np.ndarray  # (L, 3)


def _analyze_one(sample: FunctionSample) -> Structure | None:
    try:
        graph = build_cpg(sample)
    except CodeImageError as exc:
        log.warning("skipping %s (%s): %s", sample.id, sample.origin.path, exc)
        return None
    return Structure(sample, centralities(graph))


def analyze(samples: Iterable[FunctionSample], *, normalized: bool = True, workers: int = 1) -> list[Structure]:
    """Graph and centralities per sample; unsupported functions are skipped.

    With ``workers > 1`` the map runs in a process pool. Output is ordered
    by sample id either way.
    """
    samples = [s if normalized else normalize(s) for s in samples]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            done = list(pool.map(_analyze_one, samples, chunksize=16))
    else:
        done = [_analyze_one(s) for s in samples]
    return sorted((st for st in done if st is not None), key=lambda st: st.sample.id)


class CachedEmbedder:
    def __init__(self, model: EmbeddingModel):
        self.model = model
        self.cache: dict[str, np.ndarray] = {}

    def __call__(self, line: str) -> np.ndarray:
        vec = self.cache.get(line)
        if vec is None:
            vec = self.cache[line] = embed_sentence(self.model, line)
        return vec


def image_for(structure: Structure, embed, k: int, base_rows: int = BASE_ROWS) -> CodeImage:
    s = structure.sample
    vectors = np.stack([embed(line) for line in s.lines])
    rows = oversample_function(s.lines, vectors, structure.centrality, k, embed)
    return build_image(rows, k, sample_id=s.id, label=s.label, base_rows=base_rows, dim=vectors.shape[1])


def embedding_for(samples: Sequence[FunctionSample], mode: str, seed: int, epochs: int = 5) -> EmbeddingModel:
    if mode == HASHED:
        return hashed_model(seed)
    if mode != TRAINED:
        raise ValueError(f"unknown embedding mode {mode!r}")
    corpus = [tokenize(line) for s in samples for line in s.lines]
    return train_embedding(corpus, epochs=epochs, seed=seed)


# -- evaluation ----------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    k: int = DEFAULT_K
    base_rows: int = BASE_ROWS
    embed_mode: str = TRAINED
    embed_epochs: int = 5
    num_folds: int = 5
    seed: int = 0
    train: cnn.TrainConfig = field(default_factory=cnn.TrainConfig)


@dataclass
class FoldResult:
    fold: int
    metrics: Metrics
    trace: list
    train_ids: list
    test_ids: list
    embed_ids: list = field(default_factory=list)

    def leaks(self) -> bool:
        test = set(self.test_ids)
        return bool(test & set(self.train_ids)) or bool(test & set(self.embed_ids))


def _labels(images: Sequence[CodeImage]) -> np.ndarray:
    return np.array([1 if im.label == VULNERABLE else 0 for im in images])


def _fit_and_score(train_images, test_images, config: PipelineConfig, master: int, fold: int):
    rows = train_images[0].rows
    model = cnn.init_model(derive_seed(master, "init", fold), rows, train_images[0].channels.shape[2])
    model, trace = cnn.train(model, train_images, config.train, derive_seed(master, "shuffle", fold))
    pred, _ = cnn.predict_batch(model, test_images)
    return compute_metrics(*confusion(_labels(test_images), pred)), trace, model


def evaluate_structures(
    structures: Sequence[Structure], config: PipelineConfig, split_seed: int | None = None
) -> list[FoldResult]:
    """Full per-fold pipeline: embed (train folds only), image, train, test."""
    by_id = {st.sample.id: st for st in structures}
    split = kfold_split(
        [st.sample for st in structures], config.num_folds,
        derive_seed(config.seed, "split") if split_seed is None else split_seed,
    )
    results = []
    for fold in range(config.num_folds):
        train_ids, test_ids = split.train_ids(fold), split.fold_ids(fold)
        train_samples = [by_id[i].sample for i in train_ids]
        embedder = CachedEmbedder(
            embedding_for(train_samples, config.embed_mode, derive_seed(config.seed, "embed", fold), config.embed_epochs)
        )
        make = partial(image_for, embed=embedder, k=config.k, base_rows=config.base_rows)
        train_images = [make(by_id[i]) for i in train_ids]
        test_images = [make(by_id[i]) for i in test_ids]
        metrics, trace, _ = _fit_and_score(train_images, test_images, config, config.seed, fold)
        log.info("k=%d fold %d ACC=%.3f", config.k, fold, metrics.ACC)
        results.append(FoldResult(fold, metrics, trace, train_ids, test_ids, [s.id for s in train_samples]))
    return results


def evaluate_images(images: Sequence[CodeImage], config: PipelineConfig) -> list[FoldResult]:
    """k-fold train/test over pre-built images (the ``train`` subcommand)."""
    by_id = {im.sample_id: im for im in images}
    split = kfold_split(images, config.num_folds, derive_seed(config.seed, "split"))
    results = []
    for fold in range(config.num_folds):
        train_ids, test_ids = split.train_ids(fold), split.fold_ids(fold)
        metrics, trace, _ = _fit_and_score(
            [by_id[i] for i in train_ids], [by_id[i] for i in test_ids], config, config.seed, fold
        )
        results.append(FoldResult(fold, metrics, trace, train_ids, test_ids))
    return results


def run_ksweep(structures: Sequence[Structure], k_values: Iterable[int], config: PipelineConfig) -> list[dict]:
    k_values = sorted(set(int(k) for k in k_values))
    if not k_values:
        raise ValueError("k_values must not be empty")
    table = []
    for k in k_values:
        cfg = PipelineConfig(k, config.base_rows, config.embed_mode, config.embed_epochs,
                             config.num_folds, config.seed, config.train)
        folds = evaluate_structures(structures, cfg)
        table.append({"k": k, **mean_metrics([f.metrics for f in folds])})
    return table


def run_repeated(
    structures: Sequence[Structure], repeats: int = 5, config: PipelineConfig | None = None
) -> list[dict]:
    """Mean/std of fold ACC per repeat (fresh split each time) plus a summary row."""
    if repeats < 2:
        raise ValueError("repeats must be >= 2")
    config = config or PipelineConfig()
    rows = []
    for r in range(repeats):
        folds = evaluate_structures(structures, config, split_seed=derive_seed(config.seed, "repeat", r))
        accs = [f.metrics.ACC for f in folds]
        rows.append({"repeat": r + 1, "mean_acc": float(np.mean(accs)), "std_acc": float(np.std(accs, ddof=1))})
    means = [row["mean_acc"] for row in rows]
    rows.append({"repeat": "all", "mean_acc": float(np.mean(means)), "std_acc": float(np.std(means, ddof=1))})
    return rows


# -- reports ----------------------------------------------------------------------------------


def _fmt(value) -> str:
    return f"{value:.3f}" if isinstance(value, float) else str(value)


def write_csv(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def write_fold_report(path, folds: Sequence[FoldResult]) -> None:
    columns = ("fold", "TP", "FP", "TN", "FN") + METRIC_COLUMNS
    rows = []
    for f in folds:
        tp, fp, tn, fn = f.metrics.confusion
        rows.append({"fold": f.fold + 1, "TP": tp, "FP": fp, "TN": tn, "FN": fn, **f.metrics.row()})
    totals = np.sum([f.metrics.confusion for f in folds], axis=0)
    rows.append({"fold": "mean", **dict(zip(("TP", "FP", "TN", "FN"), (int(t) for t in totals))),
                 **mean_metrics([f.metrics for f in folds])})
    write_csv(path, rows, columns)


def write_trace(path, trace: Sequence[dict]) -> None:
    rows = [{"epoch": t["epoch"], "loss": f"{t['loss']:.6f}", "train_acc": f"{t['train_acc']:.6f}"} for t in trace]
    write_csv(path, rows, ("epoch", "loss", "train_acc"))


def trace_path(report: str | Path, fold: int) -> Path:
    report = Path(report)
    return report.with_name(f"{report.stem}_fold{fold + 1}_trace.csv")

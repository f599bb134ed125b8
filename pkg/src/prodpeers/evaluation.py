"""Set-level precision/recall/F-score and the n-shot experiment sweep.

Only PRODUCT items enter the counts. Non-entity tokens never appear in
either set, so true negatives are not counted and cannot inflate the score.
"""

from __future__ import annotations

import hashlib
import io
import statistics
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .corpus import AnnotatedDocument, split_train_test
from .extractors import ExtractorConfig, extract_batch, make_extractor


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")


def confusion_counts(gold: Iterable[str], predicted: Iterable[str]) -> ConfusionCounts:
    gold, predicted = set(gold), set(predicted)
    return ConfusionCounts(
        tp=len(gold & predicted),
        fp=len(predicted - gold),
        fn=len(gold - predicted),
    )


# Zero denominators score 0, so an extractor that predicts nothing gets 0.

def precision(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp
    return c.tp / denom if denom else 0.0


def recall(c: ConfusionCounts) -> float:
    denom = c.tp + c.fn
    return c.tp / denom if denom else 0.0


def f_score(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    return 2 * c.tp / denom if denom else 0.0


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f_score: float
    counts: ConfusionCounts


def evaluate(gold: Iterable[str], predicted: Iterable[str]) -> EvalReport:
    c = confusion_counts(gold, predicted)
    return EvalReport(precision(c), recall(c), f_score(c), c)


@dataclass
class SweepResult:
    n_shot: int
    trials: int
    mean_f: float
    per_trial: list[tuple[int, float]] = field(default_factory=list)
    extractor_id: str = ""


def trial_seed(base_seed: int, n_shot: int, trial: int) -> int:
    """base_seed plus a platform-independent 32-bit hash of (n_shot, trial)."""
    digest = hashlib.sha256(f"{n_shot}:{trial}".encode()).digest()
    return base_seed + int.from_bytes(digest[:4], "big")


def run_sweep(
    corpus: Sequence[AnnotatedDocument],
    extractor_factory: Callable[[list[AnnotatedDocument]], ExtractorConfig],
    n_shots: Iterable[int],
    trials: int,
    base_seed: int,
    parallelism: int = 1,
    cache_dir=None,
) -> list[SweepResult]:
    """Average test-set F-score for each training-set size.

    For every (n, trial) the corpus is split with a derived seed, the
    extractor is configured with the training split, and each test
    document is scored. Per-document scores are averaged within a trial
    (macro average), then trial means are averaged.
    """
    n_shots = list(n_shots)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if any(doc.gold is None for doc in corpus):
        raise ValueError("every sweep document needs a gold annotation")
    if n_shots and max(n_shots) >= len(corpus):
        raise ValueError(f"largest n_shot must be below corpus size {len(corpus)}")

    results = []
    for n in n_shots:
        per_trial = []
        extractor_id = ""
        for t in range(trials):
            seed = trial_seed(base_seed, n, t)
            split = split_train_test(list(corpus), n, seed)
            config = extractor_factory(split.train)
            extractor = make_extractor(config, cache_dir=cache_dir)
            extractor_id = extractor.extractor_id
            outputs = extract_batch(config, [d.company for d in split.test],
                                    parallelism=parallelism, extractor=extractor)
            scores = [evaluate(doc.gold, out.predicted).f_score for doc, out in zip(split.test, outputs)]
            per_trial.append((seed, statistics.fmean(scores)))
        mean_f = statistics.fmean(f for _, f in per_trial)
        results.append(SweepResult(n, trials, mean_f, per_trial, extractor_id))
    return results


def format_sweep_table(results: Sequence[SweepResult]) -> str:
    lines = [f"{'extractor':<28} {'n_shot':>6} {'trials':>6} {'mean F':>8}"]
    for r in results:
        lines.append(f"{r.extractor_id:<28} {r.n_shot:>6d} {r.trials:>6d} {100 * r.mean_f:>7.2f}%")
    return "\n".join(lines) + "\n"


def format_series(results: Sequence[SweepResult], manifest: Optional[str] = None) -> str:
    """CSV series for plotting: extractor, n_shot, mean_f, then per-trial values."""
    buf = io.StringIO()
    if manifest:
        buf.write(f"# manifest: {manifest}\n")
    buf.write("extractor,n_shot,trials,mean_f,per_trial_f\n")
    for r in results:
        per_trial = ";".join(f"{f:.12f}" for _, f in r.per_trial)
        buf.write(f"{r.extractor_id},{r.n_shot},{r.trials},{r.mean_f:.12f},{per_trial}\n")
    return buf.getvalue()

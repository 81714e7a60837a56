"""Best-algorithm election over the (algorithm x filter) grid.

For every filter the labeled sessions are turned into signatures on a grid
whose ``t_max`` comes from the training portion only; every algorithm is
fitted on the training signatures and scored on the validation ones. The top
15% of cells vote for their algorithm and the most frequent one wins.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateDataset, EmptyDataset, InsufficientData, NoValidCells, TooFewSessions
from .features import (FilterSpec, Signature, apply_filter, density_distribution, extract_iat,
                       t_max_from_iats, to_features)
from .learners import AlgorithmId, Dataset, TrainedModel, fit, predict_many
from .metrics import ConfusionMatrix, EvaluationReport, report_from_confusion
from .records import PacketRecord

logger = logging.getLogger(__name__)

DEFAULT_SPLIT = 0.66
DEFAULT_THRESHOLD = 0.5
TOP_PERCENT = 15


@dataclass(frozen=True)
class LabeledSession:
    session_id: str
    label: str
    records: tuple[PacketRecord, ...]


@dataclass(frozen=True)
class GridCell:
    algorithm: AlgorithmId
    filter: FilterSpec
    accuracy: float | None
    n_train: int = 0
    n_validation: int = 0
    reason: str | None = None

    def to_json(self) -> dict:
        return {"algorithm": self.algorithm.value, "filter": self.filter.name,
                "accuracy": self.accuracy, "n_train": self.n_train,
                "n_validation": self.n_validation, "reason": self.reason}


# -- splitting

def stratified_split(labels: Sequence[str], class_names: Sequence[str], fraction: float,
                     seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per class, ceil(fraction * n_c) shuffled members go to training."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("split fraction must lie strictly between 0 and 1")
    labels = np.asarray(labels, dtype=object)
    rng = np.random.default_rng(seed)
    train, val = [], []
    for c in class_names:
        members = np.flatnonzero(labels == c)
        if len(members) < 2:
            raise TooFewSessions(f"class {c!r} has {len(members)} session(s); need at least 2")
        members = members[rng.permutation(len(members))]
        # guard against 0.7 * 10 == 7.000000000000001 style round-off
        n_train = math.ceil(fraction * len(members) - 1e-9)
        train.extend(members[:n_train])
        val.extend(members[n_train:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(val, dtype=np.int64))


def split_train_validation(ds: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    tr, va = stratified_split([s.label for s in ds.signatures], ds.class_names, fraction, seed)
    sigs = ds.signatures
    return (Dataset(tuple(sigs[i] for i in tr), ds.class_names),
            Dataset(tuple(sigs[i] for i in va), ds.class_names))


# -- per-filter preparation

@dataclass(frozen=True)
class FilterData:
    filter: FilterSpec
    t_max: float | None
    train: Dataset | None
    validation: Dataset | None
    reason: str | None = None


def signatures_for(sessions: Sequence[LabeledSession], f: FilterSpec, t_max: float,
                   density_method: str = "kde") -> list[Signature]:
    """Signatures of the sessions with >= 2 usable IATs; the rest are skipped."""
    out = []
    for s in sessions:
        iat = extract_iat(apply_filter(s.records, f))
        if len(iat) < 2:
            continue
        out.append(to_features(density_distribution(iat, t_max, method=density_method),
                               s.label, f, s.session_id))
    return out


def prepare_filter(sessions: Sequence[LabeledSession], train_idx: np.ndarray,
                   val_idx: np.ndarray, f: FilterSpec, class_names: Sequence[str],
                   t_max_policy: float | str = "p99", density_method: str = "kde") -> FilterData:
    train_s = [sessions[i] for i in train_idx]
    val_s = [sessions[i] for i in val_idx]
    if t_max_policy == "p99":
        try:
            t_max = t_max_from_iats(extract_iat(apply_filter(s.records, f)) for s in train_s)
        except InsufficientData:
            return FilterData(f, None, None, None, "no_training_iats")
    else:
        t_max = float(t_max_policy)

    train = signatures_for(train_s, f, t_max, density_method)
    val = signatures_for(val_s, f, t_max, density_method)
    dropped = len(train_s) + len(val_s) - len(train) - len(val)
    if dropped:
        logger.warning("filter %s: %d session(s) have fewer than 2 inter-arrival times; excluded",
                       f.name, dropped)
    for part, sigs in (("training", train), ("validation", val)):
        present = {s.label for s in sigs}
        missing = [c for c in class_names if c not in present]
        if missing:
            return FilterData(f, t_max, None, None, f"no_usable_{part}_sessions:{','.join(missing)}")
    return FilterData(f, t_max, Dataset(tuple(train), tuple(class_names)),
                      Dataset(tuple(val), tuple(class_names)))


# -- evaluation

def evaluate(m: TrainedModel, ds: Dataset) -> EvaluationReport:
    if len(ds) == 0:
        raise EmptyDataset("nothing to evaluate")
    preds = [label for label, _ in predict_many(m, list(ds.signatures))]
    names = list(m.class_names) + sorted(set(ds.class_names) - set(m.class_names))
    cm = ConfusionMatrix.from_labels([s.label for s in ds.signatures], preds, names)
    return report_from_confusion(cm)


def accuracy(m: TrainedModel, ds: Dataset) -> float:
    preds = predict_many(m, list(ds.signatures))
    return sum(p == s.label for (p, _), s in zip(preds, ds.signatures)) / len(ds)


# -- grid

@dataclass(frozen=True)
class GridRun:
    class_names: tuple[str, ...]
    train_idx: np.ndarray
    val_idx: np.ndarray
    cells: tuple[GridCell, ...]
    filter_data: dict[FilterSpec, FilterData]
    resubstitution: bool = False


def _run_cells(fd: FilterData, algs: Sequence[AlgorithmId], seed: int,
               resubstitution: bool) -> list[GridCell]:
    if fd.train is None:
        return [GridCell(a, fd.filter, None, reason=fd.reason) for a in algs]
    scored = fd.train if resubstitution else fd.validation
    cells = []
    for alg in algs:
        model = fit(alg, fd.train, seed)
        cells.append(GridCell(alg, fd.filter, accuracy(model, scored),
                              len(fd.train), len(fd.validation)))
    return cells


def _prepare_and_run(args) -> tuple[FilterData, list[GridCell]]:
    sessions, tr, va, f, class_names, t_max_policy, density, algs, seed, resub = args
    fd = prepare_filter(sessions, tr, va, f, class_names, t_max_policy, density)
    return fd, _run_cells(fd, algs, seed, resub)


def run_grid(sessions: Sequence[LabeledSession], algs: Sequence[AlgorithmId],
             filters: Sequence[FilterSpec], seed: int, fraction: float = DEFAULT_SPLIT,
             resubstitution: bool = False, t_max_policy: float | str = "p99",
             density_method: str = "kde", jobs: int = 1) -> GridRun:
    if not algs or not filters:
        raise ValueError("need at least one algorithm and one filter")
    class_names = tuple(sorted({s.label for s in sessions}))
    if len(class_names) < 2:
        raise DegenerateDataset(f"need at least 2 classes, got {list(class_names)}")
    tr, va = stratified_split([s.label for s in sessions], class_names, fraction, seed)
    algs = [AlgorithmId(a) for a in algs]
    tasks = [(sessions, tr, va, f, class_names, t_max_policy, density_method, algs, seed,
              resubstitution) for f in filters]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_prepare_and_run, tasks))
    else:
        results = [_prepare_and_run(t) for t in tasks]
    # cells ordered algorithm-major, as the outer loop of the election runs over algorithms
    by_filter = {fd.filter: cells for fd, cells in results}
    cells = tuple(by_filter[f][i] for i in range(len(algs)) for f in filters)
    return GridRun(class_names, tr, va, cells, {fd.filter: fd for fd, _ in results},
                   resubstitution)


def elect(cells: Sequence[GridCell]) -> AlgorithmId:
    """Election: top 15% of valid cells by accuracy, most frequent algorithm wins.

    Cells tied with the last kept one are kept as well. Frequency ties go to
    the higher best accuracy, then to the lexicographically first name.
    """
    valid = [c for c in cells if c.accuracy is not None]
    if not valid:
        raise NoValidCells("every (algorithm, filter) cell is degenerate")
    n_keep = max(1, -(-TOP_PERCENT * len(valid) // 100))
    ranked = sorted(valid, key=lambda c: -c.accuracy)
    cut = ranked[n_keep - 1].accuracy
    kept = [c for c in ranked if c.accuracy >= cut]
    freq: dict[AlgorithmId, int] = {}
    best: dict[AlgorithmId, float] = {}
    for c in kept:
        freq[c.algorithm] = freq.get(c.algorithm, 0) + 1
        best[c.algorithm] = max(best.get(c.algorithm, 0.0), c.accuracy)
    return min(freq, key=lambda a: (-freq[a], -best[a], a.value))


def pick_best(sessions: Sequence[LabeledSession], algs: Sequence[AlgorithmId],
              filters: Sequence[FilterSpec], seed: int, **kwargs) -> tuple[AlgorithmId, list[GridCell]]:
    run = run_grid(sessions, algs, filters, seed, **kwargs)
    return elect(run.cells), list(run.cells)


def best_filter(alg: AlgorithmId, cells: Sequence[GridCell]) -> FilterSpec:
    """The elected algorithm's highest-accuracy filter; earlier filters win ties."""
    own = [c for c in cells if c.algorithm == alg and c.accuracy is not None]
    if not own:
        raise NoValidCells(f"{alg.value} has no valid cell")
    return max(own, key=lambda c: c.accuracy).filter


def top_filters(alg: AlgorithmId, cells: Sequence[GridCell], n: int = 10) -> list[dict]:
    own = [c for c in cells if c.algorithm == alg and c.accuracy is not None]
    own = sorted(own, key=lambda c: -c.accuracy)[:n]
    return [{"filter": c.filter.name, "accuracy_percent": 100.0 * c.accuracy} for c in own]


def fit_elected(run: GridRun, alg: AlgorithmId, f: FilterSpec, seed: int,
                density_method: str = "kde") -> TrainedModel:
    fd = run.filter_data[f]
    if fd.train is None:
        raise NoValidCells(f"filter {f.name} is degenerate")
    return dataclasses.replace(fit(alg, fd.train, seed), density_method=density_method)


# -- identification

@dataclass(frozen=True)
class Identified:
    label: str
    confidence: float
    verdict: str = "identified"


@dataclass(frozen=True)
class Unidentified:
    reason: str
    label: str | None = None
    confidence: float | None = None
    verdict: str = "unidentified"


def classify_unknown(m: TrainedModel, session: Sequence[PacketRecord],
                     threshold: float = DEFAULT_THRESHOLD) -> Identified | Unidentified:
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    iat = extract_iat(apply_filter(session, m.filter))
    if len(iat) < 2:
        return Unidentified("insufficient_data")
    dd = density_distribution(iat, m.t_max, method=m.density_method)
    label, conf = predict_many(m, [to_features(dd, None, m.filter, iat.session_id)])[0]
    if conf < threshold:
        return Unidentified("low_confidence", label, conf)
    return Identified(label, conf)

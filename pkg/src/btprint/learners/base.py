from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Protocol as TypingProtocol, Sequence

import numpy as np

from .. import SCHEMA_VERSION
from ..errors import DegenerateDataset, DimensionMismatch, FilterMismatch
from ..features import N_BINS, FilterSpec, Signature


class AlgorithmId(str, enum.Enum):
    CartTree = "CartTree"
    DecisionStump = "DecisionStump"
    DecisionTable = "DecisionTable"
    GaussianNaiveBayes = "GaussianNaiveBayes"
    LinearSvmOvR = "LinearSvmOvR"
    LogisticRegression = "LogisticRegression"
    MlpOneHidden = "MlpOneHidden"
    MultinomialNaiveBayes = "MultinomialNaiveBayes"
    OneR = "OneR"
    RandomForest = "RandomForest"

    def __lt__(self, other):
        if not isinstance(other, AlgorithmId):
            return NotImplemented
        return self.value < other.value

    @property
    def family(self) -> str:
        return FAMILIES[self]


FAMILIES = {
    AlgorithmId.GaussianNaiveBayes: "Bayes",
    AlgorithmId.MultinomialNaiveBayes: "Bayes",
    AlgorithmId.LogisticRegression: "Functions",
    AlgorithmId.LinearSvmOvR: "Functions",
    AlgorithmId.MlpOneHidden: "Functions",
    AlgorithmId.OneR: "Rules",
    AlgorithmId.DecisionTable: "Rules",
    AlgorithmId.DecisionStump: "Trees",
    AlgorithmId.CartTree: "Trees",
    AlgorithmId.RandomForest: "Trees",
}

ALL_ALGORITHMS = tuple(sorted(AlgorithmId))


class Learner(TypingProtocol):
    hyperparameters: dict[str, Any]

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int,
            rng: np.random.Generator) -> dict[str, Any]: ...

    def scores(self, params: dict[str, Any], X: np.ndarray) -> np.ndarray:
        """Row-stochastic (n, n_classes) matrix; the winner's entry is the confidence."""
        ...


_REGISTRY: dict[AlgorithmId, Callable[[], Learner]] = {}


def register(alg: AlgorithmId):
    def deco(cls):
        _REGISTRY[alg] = cls
        return cls
    return deco


def learner_for(alg: AlgorithmId) -> Learner:
    return _REGISTRY[AlgorithmId(alg)]()


@dataclass(frozen=True)
class Dataset:
    signatures: tuple[Signature, ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        names = set(self.class_names)
        for s in self.signatures:
            if s.label not in names:
                raise ValueError(f"label {s.label!r} not in class_names")
        if len({s.filter for s in self.signatures}) > 1:
            raise ValueError("all signatures in a dataset must share one filter")
        if len({s.t_max for s in self.signatures}) > 1:
            raise ValueError("all signatures in a dataset must share one t_max")

    @classmethod
    def from_signatures(cls, signatures: Sequence[Signature],
                        class_names: Sequence[str] | None = None) -> Dataset:
        if class_names is None:
            class_names = sorted({s.label for s in signatures})
        return cls(tuple(signatures), tuple(class_names))

    def __len__(self) -> int:
        return len(self.signatures)

    @property
    def filter(self) -> FilterSpec | None:
        return self.signatures[0].filter if self.signatures else None

    @property
    def t_max(self) -> float | None:
        return self.signatures[0].t_max if self.signatures else None

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        index = {c: i for i, c in enumerate(self.class_names)}
        X = np.vstack([s.features for s in self.signatures]) if self.signatures \
            else np.empty((0, N_BINS))
        y = np.fromiter((index[s.label] for s in self.signatures), dtype=np.int64,
                        count=len(self.signatures))
        return X, y


@dataclass(frozen=True)
class TrainedModel:
    algorithm: AlgorithmId
    filter: FilterSpec
    t_max: float
    class_names: tuple[str, ...]
    parameters: dict[str, Any]
    train_seed: int
    density_method: str = "kde"


def _freeze(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        obj.setflags(write=False)
    elif isinstance(obj, dict):
        for v in obj.values():
            _freeze(v)
    elif isinstance(obj, list):
        for v in obj:
            _freeze(v)
    return obj


def fit(alg: AlgorithmId, ds: Dataset, seed: int) -> TrainedModel:
    alg = AlgorithmId(alg)
    if len(ds) == 0:
        raise DegenerateDataset("empty dataset")
    X, y = ds.matrix()
    present = np.unique(y)
    if len(ds.class_names) < 2 or len(present) < 2:
        raise DegenerateDataset("need at least two classes with signatures")
    if len(present) < len(ds.class_names):
        missing = [ds.class_names[i] for i in range(len(ds.class_names)) if i not in set(present)]
        raise DegenerateDataset(f"classes without signatures: {missing}")
    rng = np.random.default_rng(seed)
    learner = learner_for(alg)
    params = learner.fit(X, y, len(ds.class_names), rng)
    params["hyperparameters"] = dict(learner.hyperparameters)
    return TrainedModel(alg, ds.filter, float(ds.t_max), tuple(ds.class_names),
                        _freeze(params), int(seed))


def _check(m: TrainedModel, s: Signature) -> None:
    if s.features.shape != (N_BINS,):
        raise DimensionMismatch(f"expected {N_BINS} features, got {s.features.shape}")
    if s.filter != m.filter:
        raise FilterMismatch(f"signature built with {s.filter}, model expects {m.filter}")
    if s.t_max != m.t_max:
        raise FilterMismatch(f"signature grid t_max={s.t_max!r}, model expects {m.t_max!r}")


def class_scores(m: TrainedModel, signatures: Sequence[Signature]) -> np.ndarray:
    for s in signatures:
        _check(m, s)
    if not signatures:
        return np.empty((0, len(m.class_names)))
    X = np.vstack([s.features for s in signatures])
    return learner_for(m.algorithm).scores(m.parameters, X)


def predict_many(m: TrainedModel, signatures: Sequence[Signature]) -> list[tuple[str, float]]:
    scores = class_scores(m, signatures)
    winners = np.argmax(scores, axis=1)
    return [(m.class_names[k], float(min(max(scores[i, k], 0.0), 1.0)))
            for i, k in enumerate(winners)]


def predict(m: TrainedModel, s: Signature) -> tuple[str, float]:
    return predict_many(m, [s])[0]


# -- serialization

def _encode(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        if obj.dtype.kind == "f":
            data = [repr(float(v)) for v in obj.ravel()]
        elif obj.dtype.kind in "iub":
            data = [int(v) for v in obj.ravel()]
        else:
            raise TypeError(f"cannot serialise array of dtype {obj.dtype}")
        return {"__ndarray__": obj.dtype.str, "shape": list(obj.shape), "data": data}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return {"__float__": repr(float(obj))}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _decode(obj: Any) -> Any:
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            dtype = np.dtype(obj["__ndarray__"])
            if dtype.kind == "f":
                flat = np.array([float(v) for v in obj["data"]], dtype=dtype)
            else:
                flat = np.array(obj["data"], dtype=dtype)
            return flat.reshape(obj["shape"])
        if "__float__" in obj:
            return float(obj["__float__"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def model_to_json(m: TrainedModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "algorithm": m.algorithm.value,
        "filter": m.filter.name,
        "t_max": repr(m.t_max),
        "class_names": list(m.class_names),
        "seed": m.train_seed,
        "density": m.density_method,
        "parameters": _encode(m.parameters),
    }


def model_from_json(doc: dict) -> TrainedModel:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema_version {doc.get('schema_version')!r}")
    return TrainedModel(
        algorithm=AlgorithmId(doc["algorithm"]),
        filter=FilterSpec.parse(doc["filter"]),
        t_max=float(doc["t_max"]),
        class_names=tuple(doc["class_names"]),
        parameters=_freeze(_decode(doc["parameters"])),
        train_seed=int(doc["seed"]),
        density_method=doc.get("density", "kde"),
    )


def dumps_model(m: TrainedModel) -> str:
    return json.dumps(model_to_json(m), sort_keys=True, separators=(",", ":"))


def save_model(path: str | Path, m: TrainedModel) -> None:
    Path(path).write_text(dumps_model(m) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> TrainedModel:
    return model_from_json(json.loads(Path(path).read_text(encoding="utf-8")))

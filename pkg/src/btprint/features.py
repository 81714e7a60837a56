"""Filtering, inter-arrival times and the 300-bin density signature."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from . import SCHEMA_VERSION
from .errors import InsufficientData
from .records import PacketRecord, Protocol

logger = logging.getLogger(__name__)

N_BINS = 300
MIN_BANDWIDTH_S = 1e-9

FILTER_PROTOCOLS = ("all", "HCI_ACL", "L2CAP", "RFCOMM", "SDP")
FILTER_LENGTHS = (0, 10, 200, 400, 600, 800, 1000)

# which record labels each protocol filter admits
_ADMITS = {
    "HCI_ACL": frozenset({Protocol.HCI_ACL, Protocol.L2CAP, Protocol.RFCOMM, Protocol.SDP}),
    "L2CAP": frozenset({Protocol.L2CAP, Protocol.RFCOMM, Protocol.SDP}),
    "RFCOMM": frozenset({Protocol.RFCOMM}),
    "SDP": frozenset({Protocol.SDP}),
}


@dataclass(frozen=True, order=True)
class FilterSpec:
    protocol: str = "all"
    min_length_bytes: int = 0

    def __post_init__(self):
        if self.protocol not in FILTER_PROTOCOLS:
            raise ValueError(f"unknown filter protocol {self.protocol!r}")
        if self.min_length_bytes < 0:
            raise ValueError("min_length_bytes must be >= 0")

    @property
    def name(self) -> str:
        length = "all" if self.min_length_bytes == 0 else str(self.min_length_bytes)
        return f"{self.protocol}-{length}"

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, text: str) -> FilterSpec:
        proto, sep, length = text.replace(" ", "").rpartition("-")
        if not sep:
            raise ValueError(f"filter must look like 'RFCOMM-10' or 'all-all', got {text!r}")
        if proto.lower() == "all":
            proto = "all"
        return cls(proto, 0 if length.lower() == "all" else int(length))

    def admits(self, rec: PacketRecord) -> bool:
        # length "all" admits everything, zero-length frames included
        if self.min_length_bytes and rec.length_bytes <= self.min_length_bytes:
            return False
        return self.protocol == "all" or rec.protocol in _ADMITS[self.protocol]


DEFAULT_FILTERS = tuple(FilterSpec(p, n) for p, n in product(FILTER_PROTOCOLS, FILTER_LENGTHS))


@dataclass(frozen=True)
class IatVector:
    values: np.ndarray
    session_id: str = ""

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class DensityCurve:
    edges: np.ndarray
    heights: np.ndarray
    t_max: float

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


@dataclass(frozen=True)
class Signature:
    features: np.ndarray
    label: str | None
    filter: FilterSpec
    session_id: str = ""
    t_max: float = field(default=math.nan)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def apply_filter(session: Sequence[PacketRecord], f: FilterSpec) -> list[PacketRecord]:
    return [r for r in session if f.admits(r)]


def extract_iat(session: Sequence[PacketRecord]) -> IatVector:
    sid = session[0].session_id if session else ""
    if len(session) < 2:
        return IatVector(_frozen(np.empty(0)), sid)
    ts = np.fromiter((r.timestamp_us for r in session), dtype=np.int64, count=len(session))
    deltas = np.diff(ts)
    # duplicate timestamps carry no timing; out-of-order ones are capture noise
    deltas = deltas[deltas > 0]
    return IatVector(_frozen(deltas.astype(np.float64) * 1e-6), sid)


def silverman_bandwidth(x: np.ndarray) -> float:
    n = len(x)
    sigma = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sigma, float(q75 - q25) / 1.34)
    return max(0.9 * spread * n ** (-0.2), MIN_BANDWIDTH_S)


def _kde_bin_mass(x: np.ndarray, edges: np.ndarray, h: float) -> np.ndarray:
    # mass of each kernel inside each bin, through differences of the normal CDF
    cdf = ndtr((edges[None, :] - x[:, None]) / h)
    return np.diff(cdf, axis=1).sum(axis=0) / len(x)


def _hist_bin_mass(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    counts, _ = np.histogram(x, bins=edges)
    return counts / len(x)


def density_distribution(iat: IatVector, t_max: float, method: str = "kde") -> DensityCurve:
    """Estimate the IAT density on ``N_BINS`` equal bins over ``[0, t_max]``.

    ``method`` is ``"kde"`` (Gaussian kernel, Silverman bandwidth) or
    ``"histogram"`` (raw bin counts, kept for ablation). Mass outside the grid
    is dropped and the rest renormalised; if nothing lands inside, the
    samples are clamped onto the grid instead.
    """
    x = np.asarray(iat.values, dtype=np.float64)
    if len(x) < 2:
        raise InsufficientData(f"need at least 2 inter-arrival times, got {len(x)}")
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    edges = np.linspace(0.0, t_max, N_BINS + 1)
    if method == "kde":
        mass = _kde_bin_mass(x, edges, silverman_bandwidth(x))
    elif method == "histogram":
        mass = _hist_bin_mass(x, edges)
    else:
        raise ValueError(f"unknown density method {method!r}")
    total = mass.sum()
    if not total > 1e-12:
        mass = _hist_bin_mass(np.clip(x, 0.0, t_max), edges)
        total = mass.sum()
    mass = mass / total
    heights = mass / np.diff(edges)
    return DensityCurve(_frozen(edges), _frozen(heights), float(t_max))


def to_features(dd: DensityCurve, label: str | None, f: FilterSpec,
                session_id: str = "") -> Signature:
    areas = dd.heights * dd.widths
    areas = np.clip(areas, 0.0, None)
    areas = areas / areas.sum()
    return Signature(_frozen(areas), label, f, session_id, dd.t_max)


def generate_signature(session: Sequence[PacketRecord], f: FilterSpec, t_max: float,
                       label: str | None = None, method: str = "kde") -> Signature:
    iat = extract_iat(apply_filter(session, f))
    dd = density_distribution(iat, t_max, method=method)
    return to_features(dd, label, f, iat.session_id)


def t_max_from_iats(iats: Iterable[IatVector], percentile: float = 99.0) -> float:
    pooled = [v.values for v in iats if len(v)]
    if not pooled:
        raise InsufficientData("no inter-arrival times to derive t_max from")
    t = float(np.percentile(np.concatenate(pooled), percentile))
    return t if t > 0 else MIN_BANDWIDTH_S


# -- signature database

def signatures_to_json(signatures: Sequence[Signature]) -> dict:
    filters = {s.filter for s in signatures}
    t_maxes = {s.t_max for s in signatures}
    if len(filters) > 1 or len(t_maxes) > 1:
        raise ValueError("a signature database holds one filter and one t_max")
    return {
        "schema_version": SCHEMA_VERSION,
        "filter": signatures[0].filter.name if signatures else None,
        "t_max": signatures[0].t_max if signatures else None,
        "signatures": [
            {"session": s.session_id, "label": s.label, "features": s.features.tolist()}
            for s in signatures
        ],
    }


def signatures_from_json(doc: dict) -> list[Signature]:
    if not doc["signatures"]:
        return []
    f = FilterSpec.parse(doc["filter"])
    t_max = float(doc["t_max"])
    return [
        Signature(_frozen(np.asarray(s["features"], dtype=np.float64)), s["label"], f,
                  s["session"], t_max)
        for s in doc["signatures"]
    ]


def save_signatures(path: str | Path, signatures: Sequence[Signature]) -> None:
    Path(path).write_text(json.dumps(signatures_to_json(signatures)) + "\n", encoding="utf-8")


def load_signatures(path: str | Path) -> list[Signature]:
    return signatures_from_json(json.loads(Path(path).read_text(encoding="utf-8")))

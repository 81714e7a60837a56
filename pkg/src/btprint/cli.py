"""btprint command line: train, classify, evaluate, synthesize, inspect.

Exit codes: 0 success / identified, 2 unreadable input, 3 degenerate data
(no valid grid cell, a single class, too few sessions), 4 unidentified.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import SCHEMA_VERSION, __version__
from .btsnoop import parse_btsnoop
from .canonical import write_canonical
from .capture import CANONICAL_SUFFIXES, load_capture, session_id_for
from .errors import (DegenerateDataset, EmptyDataset, InvalidProfile, NoValidCells, ParseError,
                     TooFewSessions)
from .features import DEFAULT_FILTERS, FilterSpec, apply_filter, extract_iat, signatures_to_json
from .l2cap import L2capDemuxer
from .learners import ALL_ALGORITHMS, AlgorithmId, Dataset, load_model, model_to_json
from .metrics import render_table
from .selection import (DEFAULT_SPLIT, DEFAULT_THRESHOLD, Identified, LabeledSession,
                        best_filter, classify_unknown, elect, evaluate, fit_elected, run_grid,
                        signatures_for, top_filters)
from .synth import emit_btsnoop, generate_session, load_fleet

logger = logging.getLogger("btprint")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_UNIDENTIFIED = 4

SEED_ENV = "BTPRINT_SEED"


class InputError(Exception):
    """Unreadable or inconsistent command inputs (exit 2)."""


@dataclass(frozen=True)
class RunConfig:
    filters: tuple[FilterSpec, ...] = DEFAULT_FILTERS
    algorithms: tuple[AlgorithmId, ...] = ALL_ALGORITHMS
    split_fraction: float = DEFAULT_SPLIT
    seed: int = 0
    threshold: float = DEFAULT_THRESHOLD
    t_max_policy: str | float = "p99"
    density: str = "kde"
    resubstitution: bool = False
    jobs: int = field(default=1, compare=False)

    def validate(self) -> None:
        if not self.filters:
            raise ValueError("at least one filter is required")
        if not self.algorithms:
            raise ValueError("at least one algorithm is required")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("--split must lie strictly between 0 and 1")
        if not 0.0 <= self.threshold:
            raise ValueError("--threshold must be >= 0")
        if self.t_max_policy != "p99" and not float(self.t_max_policy) > 0:
            raise ValueError("--t-max must be 'p99' or a positive number of seconds")
        if self.density not in ("kde", "histogram"):
            raise ValueError("--density must be 'kde' or 'histogram'")
        if self.jobs < 1:
            raise ValueError("--jobs must be >= 1")

    def to_json(self) -> dict:
        # jobs is left out: it never changes results
        return {
            "filters": [f.name for f in self.filters],
            "algorithms": [a.value for a in self.algorithms],
            "split_fraction": self.split_fraction,
            "seed": self.seed,
            "threshold": self.threshold,
            "t_max_policy": self.t_max_policy if self.t_max_policy == "p99"
            else {"fixed": float(self.t_max_policy)},
            "density": self.density,
            "accuracy_mode": "resubstitution" if self.resubstitution else "validation",
        }


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _artifact(config: RunConfig, body: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "config": config.to_json(), "seed": config.seed,
            **body}


def load_labeled_sessions(captures_dir: str | Path, labels_file: str | Path) -> list[LabeledSession]:
    captures_dir = Path(captures_dir)
    try:
        labels = json.loads(Path(labels_file).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read labels file {labels_file}: {exc}") from None
    if not isinstance(labels, dict) or not all(isinstance(v, str) for v in labels.values()):
        raise InputError("labels file must be a JSON object mapping file names to class names")
    sessions = []
    for name in sorted(labels):
        path = captures_dir / name
        try:
            records = load_capture(path)
        except (OSError, ParseError) as exc:
            raise InputError(f"cannot read capture {path}: {exc}") from None
        sessions.append(LabeledSession(session_id_for(path), labels[name], tuple(records)))
    return sessions


def _load_bundle_model(bundle: str | Path):
    path = Path(bundle)
    if path.is_dir():
        path = path / "model.json"
    try:
        return load_model(path)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot load model bundle {bundle}: {exc}") from None


# -- commands as library calls

def cmd_train(captures_dir, labels_file, config: RunConfig, out_dir) -> Path:
    config.validate()
    sessions = load_labeled_sessions(captures_dir, labels_file)
    labels = {s.label for s in sessions}
    if len(labels) < 2:
        raise DegenerateDataset(f"training needs at least 2 classes, labels file has {len(labels)}")
    run = run_grid(sessions, config.algorithms, config.filters, config.seed,
                   fraction=config.split_fraction, resubstitution=config.resubstitution,
                   t_max_policy=config.t_max_policy, density_method=config.density,
                   jobs=config.jobs)
    alg = elect(run.cells)
    f = best_filter(alg, run.cells)
    model = fit_elected(run, alg, f, config.seed, config.density)
    fd = run.filter_data[f]
    scored = fd.train if config.resubstitution else fd.validation
    report = evaluate(model, scored)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_doc = model_to_json(model)
    model_doc["config"] = config.to_json()
    (out / "model.json").write_text(json.dumps(model_doc, sort_keys=True) + "\n", encoding="utf-8")
    grid_doc = _artifact(config, {
        "elected": alg.value,
        "best_filter": f.name,
        "n_cells": len(run.cells),
        "cells": [c.to_json() for c in run.cells],
        "top10": top_filters(alg, run.cells, 10),
    })
    (out / "grid.json").write_text(_dump(grid_doc), encoding="utf-8")
    report_doc = _artifact(config, {
        "algorithm": alg.value,
        "filter": f.name,
        "t_max": model.t_max,
        "class_names": list(model.class_names),
        "accuracy_mode": "resubstitution" if config.resubstitution else "validation",
        "n_train": len(fd.train),
        "n_validation": len(fd.validation),
        "top10": top_filters(alg, run.cells, 10),
        **report.to_json(),
    })
    (out / "report.json").write_text(_dump(report_doc), encoding="utf-8")
    (out / "signatures.json").write_text(
        json.dumps(signatures_to_json(list(fd.train.signatures))) + "\n", encoding="utf-8")
    return out


def cmd_classify(capture_path, model_bundle, threshold: float = DEFAULT_THRESHOLD) -> dict:
    model = _load_bundle_model(model_bundle)
    try:
        session = load_capture(capture_path)
    except (OSError, ParseError) as exc:
        raise InputError(f"cannot read capture {capture_path}: {exc}") from None
    result = classify_unknown(model, session, threshold)
    verdict = {"session": session_id_for(capture_path), "verdict": result.verdict}
    if isinstance(result, Identified):
        verdict.update(label=result.label, confidence=result.confidence)
    else:
        verdict["reason"] = result.reason
        if result.label is not None:
            verdict.update(label=result.label, confidence=result.confidence)
    return verdict


def cmd_evaluate(captures_dir, labels_file, model_bundle) -> tuple[dict, object]:
    model = _load_bundle_model(model_bundle)
    sessions = load_labeled_sessions(captures_dir, labels_file)
    sigs = signatures_for(sessions, model.filter, model.t_max, model.density_method)
    skipped = len(sessions) - len(sigs)
    if skipped:
        logger.warning("%d session(s) have fewer than 2 inter-arrival times under %s; skipped",
                       skipped, model.filter.name)
    classes = sorted(set(model.class_names) | {s.label for s in sigs})
    report = evaluate(model, Dataset(tuple(sigs), tuple(classes)))
    doc = {"schema_version": SCHEMA_VERSION, "model": {
        "algorithm": model.algorithm.value, "filter": model.filter.name, "t_max": model.t_max,
        "seed": model.train_seed}, "n_skipped": skipped, **report.to_json()}
    return doc, report


def cmd_synthesize(out_dir, sessions_per_device: int = 40, n_messages: int = 300, seed: int = 0,
                   fleet_path=None, fmt: str = "btsnoop") -> Path:
    profiles = load_fleet(fleet_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = {}
    for pi, profile in enumerate(profiles):
        slug = "".join(ch if ch.isalnum() else "_" for ch in profile.name).strip("_")
        for i in range(sessions_per_device):
            session_seed = int(np.random.SeedSequence([seed, pi, i]).generate_state(1)[0])
            name = f"{slug}_{i:03d}"
            records = generate_session(profile, n_messages, session_seed, session_id=name)
            if fmt == "btsnoop":
                fname = name + ".btsnoop"
                (out / fname).write_bytes(emit_btsnoop(records))
            else:
                fname = name + ".jsonl"
                (out / fname).write_text(write_canonical(records), encoding="utf-8")
            labels[fname] = profile.name
    (out / "labels.json").write_text(_dump(labels), encoding="utf-8")
    return out


def cmd_inspect(capture_path, f: FilterSpec) -> dict:
    path = Path(capture_path)
    sid = session_id_for(path)
    diagnostics: dict = {}
    try:
        if path.suffix.lower() in CANONICAL_SUFFIXES:
            records = load_capture(path)
            n_raw = len(records)
        else:
            raw = parse_btsnoop(path.read_bytes())
            n_raw = len(raw)
            demux = L2capDemuxer(sid)
            records = [r for r in map(demux.feed, raw) if r is not None]
            demux.finish()
            diagnostics = dict(demux.diagnostics)
    except (OSError, ParseError) as exc:
        raise InputError(f"cannot read capture {capture_path}: {exc}") from None
    iat = extract_iat(apply_filter(records, f))
    summary = {
        "session": sid,
        "n_hci_records": n_raw,
        "n_packets": len(records),
        "protocols": dict(sorted(Counter(r.protocol.value for r in records).items())),
        "diagnostics": diagnostics,
        "filter": f.name,
        "n_iat": len(iat),
    }
    if len(iat):
        v = iat.values
        summary["iat_seconds"] = {"min": float(v.min()), "median": float(np.median(v)),
                                  "mean": float(v.mean()), "p99": float(np.percentile(v, 99)),
                                  "max": float(v.max())}
    if records:
        summary["duration_seconds"] = (records[-1].timestamp_us - records[0].timestamp_us) * 1e-6
    return summary


# -- argparse front end

def _parse_filters(text: str) -> tuple[FilterSpec, ...]:
    if text.strip().lower() in ("grid", "default"):
        return DEFAULT_FILTERS
    return tuple(FilterSpec.parse(t) for t in text.split(",") if t.strip())


def _parse_algorithms(text: str) -> tuple[AlgorithmId, ...]:
    if text.strip().lower() == "all":
        return ALL_ALGORITHMS
    return tuple(AlgorithmId(t.strip()) for t in text.split(",") if t.strip())


def _parse_t_max(text: str) -> str | float:
    return "p99" if text == "p99" else float(text)


def _seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    return int(env) if env not in (None, "") else args.seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="btprint", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the election grid and write a model bundle")
    p.add_argument("captures_dir")
    p.add_argument("labels_file")
    p.add_argument("-o", "--out", required=True, help="bundle directory to write")
    p.add_argument("--filters", default="grid",
                   help="comma list like RFCOMM-10,all-all, or 'grid' for all 35 (default)")
    p.add_argument("--algorithms", default="all", help="comma list of algorithm names, or 'all'")
    p.add_argument("--split", type=float, default=DEFAULT_SPLIT)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--t-max", default="p99", help="'p99' or a fixed bin range in seconds")
    p.add_argument("--density", choices=("kde", "histogram"), default="kde")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--resubstitution", action="store_true",
                   help="score grid cells on their own training signatures")
    p.add_argument("--pretty", action="store_true")

    p = sub.add_parser("classify", help="identify one capture against a model bundle")
    p.add_argument("capture")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--pretty", action="store_true")

    p = sub.add_parser("evaluate", help="accuracy report of a bundle on labeled captures")
    p.add_argument("captures_dir")
    p.add_argument("labels_file")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--pretty", action="store_true")

    p = sub.add_parser("synthesize", help="write a synthetic fleet of captures + labels.json")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--fleet", default=None, help="fleet JSON; the bundled 7-device fleet if omitted")
    p.add_argument("--sessions", type=int, default=40)
    p.add_argument("--messages", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("btsnoop", "jsonl"), default="btsnoop")

    p = sub.add_parser("inspect", help="summarise one capture")
    p.add_argument("capture")
    p.add_argument("--filter", default="all-all")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NoValidCells, DegenerateDataset, TooFewSessions, EmptyDataset) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


def _dispatch(args) -> int:
    if args.command == "train":
        try:
            config = RunConfig(filters=_parse_filters(args.filters),
                               algorithms=_parse_algorithms(args.algorithms),
                               split_fraction=args.split, seed=_seed(args),
                               threshold=args.threshold, t_max_policy=_parse_t_max(args.t_max),
                               density=args.density, resubstitution=args.resubstitution,
                               jobs=args.jobs)
            config.validate()
        except ValueError as exc:
            raise InputError(str(exc)) from None
        out = cmd_train(args.captures_dir, args.labels_file, config, args.out)
        if args.pretty:
            report = json.loads((out / "report.json").read_text())
            print(f"elected {report['algorithm']} on {report['filter']}")
            for row in report["top10"]:
                print(f"  {row['filter']:<14} {row['accuracy_percent']:.4f}")
        print(str(out))
        return EXIT_OK

    if args.command == "classify":
        verdict = cmd_classify(args.capture, args.model, args.threshold)
        print(json.dumps(verdict, indent=2 if args.pretty else None, sort_keys=True))
        return EXIT_OK if verdict["verdict"] == "identified" else EXIT_UNIDENTIFIED

    if args.command == "evaluate":
        doc, report = cmd_evaluate(args.captures_dir, args.labels_file, args.model)
        print(render_table(report) if args.pretty else _dump(doc), end="\n" if args.pretty else "")
        return EXIT_OK

    if args.command == "synthesize":
        try:
            out = cmd_synthesize(args.out, args.sessions, args.messages, _seed(args), args.fleet,
                                 args.format)
        except (OSError, InvalidProfile, json.JSONDecodeError, KeyError) as exc:
            raise InputError(str(exc)) from None
        print(str(out))
        return EXIT_OK

    if args.command == "inspect":
        try:
            f = FilterSpec.parse(args.filter)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        print(_dump(cmd_inspect(args.capture, f)), end="")
        return EXIT_OK
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())

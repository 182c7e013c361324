"""CSV writers and readers for trial results, reports and confidence traces."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

from ..assessment import ConfidenceReport
from .harness import SNAPSHOTS, ConfidenceTrace, TrialResult

TRIAL_FIELDS = ("episode", "condition", "env", "delivered", "craters_hit", "steps",
                "n_triggers", "seed", "world_hash", "goals")
REPORT_FIELDS = ("episode", "t", "trigger", "si_min", "goa_g0", "goa_g1", "goa_g2")
TRACE_FIELDS = ("episode", "schedule", "snapshot", "t", "confidence", "triggered")


class RecordError(OSError):
    pass


def _write(path: str | Path, fields: Sequence[str], rows: Iterable[dict]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    except OSError as exc:
        raise RecordError(f"failed to write {path}: {exc}") from exc


def _read(path: str | Path, fields: Sequence[str]) -> list[dict]:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            r = csv.DictReader(fh)
            if tuple(r.fieldnames or ()) != tuple(fields):
                raise RecordError(f"{path}: unexpected header {r.fieldnames}")
            return list(r)
    except OSError as exc:
        raise RecordError(f"failed to read {path}: {exc}") from exc


def _bool(s: str) -> bool:
    return s == "1"


def write_trials(results: Iterable[TrialResult], path: str | Path) -> None:
    _write(path, TRIAL_FIELDS, ({
        "episode": r.episode, "condition": r.condition, "env": r.env,
        "delivered": int(r.delivered), "craters_hit": r.craters_hit, "steps": r.steps,
        "n_triggers": r.n_triggers, "seed": r.seed, "world_hash": r.world_hash,
        "goals": "|".join(map(str, r.goals)),
    } for r in results))


def read_trials(path: str | Path) -> list[TrialResult]:
    return [TrialResult(
        episode=int(row["episode"]), condition=row["condition"], env=row["env"],
        delivered=_bool(row["delivered"]), craters_hit=int(row["craters_hit"]),
        steps=int(row["steps"]), n_triggers=int(row["n_triggers"]), seed=int(row["seed"]),
        world_hash=row["world_hash"],
        goals=tuple(int(g) for g in row["goals"].split("|") if g),
    ) for row in _read(path, TRIAL_FIELDS)]


def write_reports(reports: Iterable[tuple[int, ConfidenceReport]], path: str | Path) -> None:
    _write(path, REPORT_FIELDS, (r.row(ep) for ep, r in reports))


def read_reports(path: str | Path) -> list[dict]:
    return _read(path, REPORT_FIELDS)


def write_traces(traces: Iterable[ConfidenceTrace], path: str | Path) -> None:
    def rows():
        for tr in traces:
            for name in SNAPSHOTS:
                t, conf, trig = tr.snapshots[name]
                yield {"episode": tr.episode, "schedule": tr.schedule, "snapshot": name,
                       "t": t, "confidence": repr(conf), "triggered": int(trig)}
    _write(path, TRACE_FIELDS, rows())


def read_traces(path: str | Path) -> list[ConfidenceTrace]:
    traces: dict[tuple[str, int], ConfidenceTrace] = {}
    for row in _read(path, TRACE_FIELDS):
        key = (row["schedule"], int(row["episode"]))
        tr = traces.setdefault(key, ConfidenceTrace(key[1], key[0], [], {}))
        tr.snapshots[row["snapshot"]] = (int(row["t"]), float(row["confidence"]),
                                         _bool(row["triggered"]))
    return list(traces.values())

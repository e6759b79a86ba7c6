"""Deterministic CSV and manifest emission.

Every float is written with 17 significant digits and '.' as the decimal
separator, so identical (config, seed) pairs reproduce identical bytes.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .curves import fmt17

ARTIFACT_VERSION = "0.1.0"


def format_cell(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int,)):
        return str(x)
    if isinstance(x, float):
        return fmt17(x)
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(format_cell(x) for x in row) + "\n")
    return path


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    bound: float

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "measured": fmt17(self.measured),
            "bound": fmt17(self.bound),
        }


@dataclass
class RunManifest:
    """Echo of the run: config, per-check outcomes, produced files, timing.

    All fields except the wall clock are reproducible bit-for-bit from the
    same (config, seed).
    """

    subcommand: str
    config: dict
    checks: list[CheckResult] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    started: float = field(default_factory=time.time)

    def add_check(self, name: str, passed: bool, measured: float, bound: float) -> None:
        self.checks.append(CheckResult(name, bool(passed), float(measured), float(bound)))

    def record_output(self, path: Path) -> None:
        self.outputs.append(path.name)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def write(self, path: Path) -> Path:
        payload = {
            "subcommand": self.subcommand,
            "artifact_version": ARTIFACT_VERSION,
            "config": {k: format_cell(v) for k, v in sorted(self.config.items())},
            "checks": [c.as_dict() for c in self.checks],
            "outputs": sorted(self.outputs),
            "all_passed": self.all_passed,
            "wall_clock_seconds": round(time.time() - self.started, 3),
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(payload, f, indent=2)
            f.write("\n")
        return path

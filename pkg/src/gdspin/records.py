"""Run outcomes and their newline-delimited JSON archive."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .model import SpinConfiguration

SCHEMA_VERSION = 1


@dataclass
class RunRecord:
    """Outcome of one solver run.

    ``wall_time`` is excluded from equality: two runs with the same instance,
    parameters and seed compare equal even though their timings differ.
    """

    algorithm: str
    best_energy: float
    best_conf: SpinConfiguration
    iterations: int
    converged: bool
    feedback_updates: int = 0
    seed: int | None = None
    instance: str = ""
    wall_time: float = field(default=0.0, compare=False)
    trajectory: list | None = None
    extras: dict[str, Any] = field(default_factory=dict)
    final_state: Any = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA_VERSION,
            "algorithm": self.algorithm,
            "instance": self.instance,
            "seed": self.seed,
            "best_energy": self.best_energy,
            "model_tag": self.best_conf.model_tag,
            "theta": self.best_conf.theta.tolist(),
            "iterations": self.iterations,
            "feedback_updates": self.feedback_updates,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "trajectory": self.trajectory,
            "extras": self.extras,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunRecord":
        if d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported run-record schema {d.get('schema')!r}")
        return cls(
            algorithm=d["algorithm"],
            best_energy=d["best_energy"],
            best_conf=SpinConfiguration(np.array(d["theta"], dtype=float), d["model_tag"]),
            iterations=d["iterations"],
            converged=d["converged"],
            feedback_updates=d["feedback_updates"],
            seed=d["seed"],
            instance=d["instance"],
            wall_time=d["wall_time"],
            trajectory=d["trajectory"],
            extras=d["extras"],
        )


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_records(path, records: Iterable[RunRecord]) -> None:
    ordered = sorted(records, key=lambda r: (r.instance, r.algorithm, -1 if r.seed is None else r.seed))
    with open(path, "w", encoding="ascii") as fh:
        for rec in ordered:
            fh.write(json.dumps(rec.to_dict(), default=_default, sort_keys=True))
            fh.write("\n")


def read_records(path) -> list[RunRecord]:
    out = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        if line.strip():
            out.append(RunRecord.from_dict(json.loads(line)))
    return out

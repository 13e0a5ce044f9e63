"""Cross-artifact summary: region membership versus the half-plane criterion,
breaking-time bound checks and strict-extension witnesses."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .threshold import eval_G, seliger_holds


@dataclass
class PointRecord:
    source: str
    m1: float
    m2: float
    g: float
    in_omega: bool
    seliger: bool
    time_bound: float | None = None
    t_observed: float | None = None
    bound_satisfied: bool | None = None

    @property
    def category(self):
        if self.in_omega and self.seliger:
            return "both"
        if self.in_omega:
            return "witness"  # inside the region, outside the half-plane
        if self.seliger:
            return "counterexample"
        return "neither"


def _record(source, m1, m2, t_obs=None):
    m1, m2 = float(m1), float(m2)
    if not (m1 <= 0.0 <= m2 and m2 > m1):
        return None
    g = float(eval_G(m1, m2))
    inside = g < 0.0 and m1 < 0.0
    bound = -2.0 / g if inside else None
    ok = None if (t_obs is None or bound is None) else bool(t_obs <= bound * 1.05)
    return PointRecord(source, m1, m2, g, inside, bool(seliger_holds(m1, m2)), bound, t_obs, ok)


def _maybe_float(v):
    if v in (None, ""):
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _pick(row, *names):
    for n in names:
        if n in row and row[n] not in (None, ""):
            return row[n]
    return None


def _from_mapping(source, row):
    m1 = _pick(row, "m1_0", "m1")
    m2 = _pick(row, "m2_0", "m2")
    if m1 is None or m2 is None:
        return None
    return _record(source, m1, m2, _maybe_float(_pick(row, "t_break_observed", "t_event")))


def load_artifact(path):
    """Point records from a JSON report or a CSV with ``m1,m2`` (or ``m1_0,m2_0``) columns."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"report input {path} does not exist")
    src = path.name
    if path.suffix == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        rows = data if isinstance(data, list) else [data]
    else:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    out = [_from_mapping(src, r) for r in rows if isinstance(r, dict)]
    return [r for r in out if r is not None]


def sample_second_quadrant(samples, seed, box=20.0):
    """Uniform points of ``[-box, 0] x [0, box]`` below the line ``m1 + m2 = -2``."""
    rng = np.random.default_rng(seed)
    pts = np.empty((0, 2))
    while len(pts) < samples:
        cand = np.column_stack([rng.uniform(-box, 0.0, samples), rng.uniform(0.0, box, samples)])
        keep = (cand.sum(axis=1) <= -2.0) & (cand[:, 1] > cand[:, 0])
        pts = np.vstack([pts, cand[keep]])
    return pts[:samples]


@dataclass
class Summary:
    records: list = field(default_factory=list)
    sampled: int = 0
    sampled_counterexamples: list = field(default_factory=list)

    def counts(self):
        c = {"both": 0, "witness": 0, "counterexample": 0, "neither": 0}
        for r in self.records:
            c[r.category] += 1
        return c

    def bounds(self):
        return [r for r in self.records if r.bound_satisfied is not None]

    def witnesses(self):
        return [r for r in self.records if r.category == "witness"]

    def text(self):
        if not self.records and not self.sampled:
            return "no artifacts\n"
        c = self.counts()
        lines = [f"points: {len(self.records)}",
                 f"in region and half-plane: {c['both']}",
                 f"in region only (strict-extension witnesses): {c['witness']}",
                 f"half-plane only (counterexamples): {c['counterexample']}",
                 f"neither: {c['neither']}"]
        b = self.bounds()
        if b:
            lines.append(f"bound satisfied: {sum(r.bound_satisfied for r in b)}/{len(b)}")
        if self.sampled:
            lines.append(f"half-plane sample: {self.sampled} points, "
                         f"{len(self.sampled_counterexamples)} outside the region")
        return "\n".join(lines) + "\n"


def build_summary(paths, samples=0, seed=None, box=20.0):
    s = Summary()
    for p in paths:
        s.records.extend(load_artifact(p))
    if samples:
        pts = sample_second_quadrant(samples, seed, box)
        g = eval_G(pts[:, 0], pts[:, 1])
        s.sampled = len(pts)
        s.sampled_counterexamples = [(x, y, gv) for (x, y), gv in zip(pts, g) if not gv < 0]
    return s

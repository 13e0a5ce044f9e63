"""TOML scenario files: schema, validation and round-trip serialization.

A scenario names its ``kind`` at the top level, optional ``seed``, an
``[output]`` table and one table named after the kind::

    kind = "classify"
    seed = 7

    [output]
    dir = "out"

    [classify]
    points = [[-5.0, 3.5], [-1.0, 0.5]]

Every key of the kind table has a default (see ``SCHEMAS``), so a bare
``kind = "separatrix"`` is a valid scenario.  Unknown keys are rejected.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import tomli
import tomli_w

from .errors import ConfigError

KINDS = ("classify", "separatrix", "portrait", "ode_run", "ode_sweep", "pde_run", "pde_sweep", "report")

REQUIRED = object()


def _num(path, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{path}: expected a finite number, got {v!r}")
    return float(v)


def _positive(path, v):
    v = _num(path, v)
    if v <= 0:
        raise ConfigError(f"{path}: must be positive, got {v}")
    return v


def _nonneg(path, v):
    v = _num(path, v)
    if v < 0:
        raise ConfigError(f"{path}: must be nonnegative, got {v}")
    return v


def _int(lo):
    def check(path, v):
        if isinstance(v, bool) or not isinstance(v, int) or v < lo:
            raise ConfigError(f"{path}: expected an integer >= {lo}, got {v!r}")
        return v
    return check


def _choice(*options):
    def check(path, v):
        if v not in options:
            raise ConfigError(f"{path}: expected one of {', '.join(options)}, got {v!r}")
        return v
    return check


def _pair(path, v):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigError(f"{path}: expected a pair [a, b], got {v!r}")
    return [_num(f"{path}[0]", v[0]), _num(f"{path}[1]", v[1])]


def _range(path, v):
    lo, hi = _pair(path, v)
    if not lo < hi:
        raise ConfigError(f"{path}: expected [lo, hi] with lo < hi")
    return [lo, hi]


def _point(path, v):
    m1, m2 = _pair(path, v)
    if not (m1 <= 0.0 <= m2 and m2 > m1):
        raise ConfigError(f"{path}: ({m1}, {m2}) must satisfy m1 <= 0 <= m2 and m2 > m1")
    return [m1, m2]


def _points(path, v):
    if not isinstance(v, list):
        raise ConfigError(f"{path}: expected a list of [m1, m2] pairs")
    return [_point(f"{path}[{i}]", p) for i, p in enumerate(v)]


def _strings(path, v):
    if not isinstance(v, list) or not all(isinstance(s, str) for s in v):
        raise ConfigError(f"{path}: expected a list of strings")
    return list(v)


def _optional(check):
    def inner(path, v):
        return None if v is None else check(path, v)
    return inner


def _table(schema):
    def check(path, v):
        if not isinstance(v, dict):
            raise ConfigError(f"{path}: expected a table")
        return _validate(path, v, schema)
    return check


def _bumps(path, v):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{path}: expected a non-empty list of bump tables")
    return [_validate(f"{path}[{i}]", b, BUMP) for i, b in enumerate(v)]


KERNEL = {"kind": (_choice("gaussian", "sech2"), "gaussian"), "width": (_positive, 1.0)}
BUMP = {"amplitude": (_num, REQUIRED), "center": (_num, REQUIRED), "width": (_positive, REQUIRED)}
# either explicit bumps or a two-sided (m1, m2) profile around a negative bump of the given width
PROFILE = {"bumps": (_optional(_bumps), None), "m1": (_optional(_num), None),
           "m2": (_optional(_nonneg), None), "width": (_positive, 6.0)}
SLACK = {"kind": (_choice("zero", "constant", "piecewise", "sinusoidal"), "zero"),
         "a": (_nonneg, 0.0), "b": (_nonneg, 0.0), "pieces": (_int(1), 16), "t_end": (_positive, 1.0),
         "high": (_positive, 2.0), "amplitude": (_nonneg, 1.0), "omega": (_positive, 1.0),
         "offset": (_num, 0.0)}
PDE_GRID = {"n": (_int(16), 8192), "L": (_positive, 160.0), "t_max": (_positive, 1.0),
            "cfl": (_positive, 0.3), "slope_cfl": (_positive, 0.02), "break_slope": (_positive, 200.0),
            "tail_limit": (_positive, 1e-2), "bound_tol": (_nonneg, 0.05)}

SCHEMAS = {
    "classify": {"points": (_points, [[-5.0, 3.5]]), "k0": (_positive, 1.0)},
    "separatrix": {"x_range": (_range, [-8.0, -4.0 / math.e]), "points": (_int(2), 500),
                   "tol": (_positive, 1e-10)},
    "portrait": {"figure": (_choice("fig1", "fig2"), "fig2"), "x_range": (_range, [-8.0, 0.0]),
                 "y_range": (_range, [0.0, 8.0]), "nx": (_int(2), 101), "ny": (_int(2), 101),
                 "arrows": (_int(2), 21), "rtol": (_positive, 1e-8)},
    "ode_run": {"point": (_point, [-5.0, 3.5]), "system": (_choice("equality", "inequality"), "equality"),
                "slack": (_table(SLACK), {}), "rtol": (_positive, 1e-10), "atol": (_positive, 1e-12),
                "t_max": (_positive, 1e5), "sample_dt": (_optional(_positive), None)},
    "ode_sweep": {"x_range": (_range, [-8.0, -0.05]), "y_range": (_range, [0.05, 8.0]),
                  "nx": (_int(2), 200), "ny": (_int(2), 200), "band": (_nonneg, 0.05),
                  "rtol": (_positive, 1e-8), "atol": (_positive, 1e-10), "workers": (_int(1), 1)},
    "pde_run": {"kernel": (_table(KERNEL), REQUIRED), "profile": (_table(PROFILE), REQUIRED),
                **PDE_GRID},
    "pde_sweep": {"kernel": (_table(KERNEL), REQUIRED), "points": (_points, REQUIRED),
                  "width": (_positive, 6.0), "workers": (_int(1), 1), **PDE_GRID},
    "report": {"inputs": (_strings, []), "samples": (_int(0), 0), "box": (_positive, 20.0)},
}


def _str(path, v):
    if not isinstance(v, str) or not v:
        raise ConfigError(f"{path}: expected a non-empty string")
    return v


OUTPUT = {"dir": (_str, "."), "stem": (_optional(_str), None)}


def _validate(path, data, schema):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a table")
    for key in data:
        if key not in schema:
            raise ConfigError(f"{path}.{key}: unknown key {key!r}")
    out = {}
    for key, (check, default) in schema.items():
        sub = f"{path}.{key}"
        if key in data:
            out[key] = check(sub, data[key])
        elif default is REQUIRED:
            raise ConfigError(f"{sub}: missing required key {key!r}")
        elif isinstance(default, dict):
            out[key] = check(sub, dict(default))
        else:
            out[key] = default if not isinstance(default, list) else [list(x) if isinstance(x, list) else x
                                                                       for x in default]
    return out


def _post_checks(kind, params, seed):
    if kind == "pde_run":
        prof = params["profile"]
        if prof["bumps"] is None and (prof["m1"] is None or prof["m2"] is None):
            raise ConfigError("pde_run.profile: give either bumps or both m1 and m2")
        if prof["bumps"] is not None and (prof["m1"] is not None or prof["m2"] is not None):
            raise ConfigError("pde_run.profile: bumps and m1/m2 are mutually exclusive")
        if prof["m1"] is not None and not prof["m1"] < 0:
            raise ConfigError("pde_run.profile.m1: must be negative")
    if kind == "ode_run" and params["system"] == "inequality" and params["slack"]["kind"] == "piecewise" \
            and seed is None:
        raise ConfigError("seed: required for piecewise random slack")
    if kind == "report" and params["samples"] > 0 and seed is None:
        raise ConfigError("seed: required when report.samples > 0")


@dataclass
class Scenario:
    kind: str
    params: dict
    output: dict = field(default_factory=lambda: {"dir": ".", "stem": None})
    seed: int | None = None

    @classmethod
    def build(cls, kind, params=None, output=None, seed=None):
        """Validate raw tables into a scenario (defaults filled in)."""
        if kind not in KINDS:
            raise ConfigError(f"kind: expected one of {', '.join(KINDS)}, got {kind!r}")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64):
            raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {seed!r}")
        p = _validate(kind, params or {}, SCHEMAS[kind])
        o = _validate("output", output or {}, OUTPUT)
        _post_checks(kind, p, seed)
        return cls(kind, p, o, seed)

    @property
    def stem(self):
        return self.output["stem"] or self.kind

    def to_toml(self):
        doc = {"kind": self.kind}
        if self.seed is not None:
            doc["seed"] = self.seed
        doc["output"] = _strip_none(self.output)
        doc[self.kind] = _strip_none(self.params)
        return tomli_w.dumps(doc)


def _strip_none(d):
    if isinstance(d, dict):
        return {k: _strip_none(v) for k, v in d.items() if v is not None}
    if isinstance(d, list):
        return [_strip_none(v) for v in d]
    return d


def _line_of(text, key):
    """1-based line of the first assignment to ``key`` (or its table header), if any."""
    pat = re.compile(rf"^\s*(\[+\s*[\w.]*\b{re.escape(key)}\b[\w.]*\s*\]+|{re.escape(key)}\s*=)", re.M)
    m = pat.search(text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def parse_text(text, seed=None):
    """Parse scenario text; a non-None ``seed`` replaces the file's seed before validation."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    try:
        for key in data:
            if key not in ("kind", "seed", "output", *KINDS):
                raise ConfigError(f"{key}: unknown key {key!r}")
        kind = data.get("kind")
        if kind is None:
            raise ConfigError("kind: missing required key 'kind'")
        for other in KINDS:
            if other != kind and other in data:
                raise ConfigError(f"{other}: table does not match kind {kind!r}")
        return Scenario.build(kind, data.get(kind, {}), data.get("output", {}),
                              data.get("seed") if seed is None else seed)
    except ConfigError as exc:
        leaf = str(exc).split(":", 1)[0].split(".")[-1].split("[")[0]
        line = _line_of(text, leaf)
        if line is not None:
            raise ConfigError(f"{exc} (line {line})") from None
        raise


def parse_scenario(path, seed=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_text(text, seed)

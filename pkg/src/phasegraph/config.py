"""Run configuration: INI files with one section per stage.

Every key is declared in :data:`SCHEMA` with its type and default; unknown
keys and out-of-range values raise :class:`ConfigError` naming
``section.key``. A resolved configuration is a plain nested dict, which is
what run manifests store and what sweeps override.
"""

from __future__ import annotations

import configparser
import copy
import json
import re
from pathlib import Path

from .errors import ConfigError

SOURCES = ("image", "points", "table", "two_moons", "four_corners", "two_region_image", "mushroom")


def _opt(kind):
    return ("optional", kind)


# key -> (type, default); types: int, float, str, bool, strlist, floatlist, intlist, or ("optional", t)
SCHEMA = {
    "input": {
        "source": ("str", None),
        "path": (_opt("str"), None),
        "truth": (_opt("str"), None),
        "label_column": (_opt("str"), None),
        "columns": (_opt("strlist"), None),
        "missing": ("strlist", ["?", ""]),
        "n_total": (_opt("int"), None),
        "noise": (_opt("float"), None),
        "spread": ("float", 0.5),
        "classes": ("int", 4),
        "size": ("int", 65),
        "radius": ("float", 20.0),
        "inside": ("float", 0.8),
        "outside": ("float", 0.2),
        "rows": ("int", 4062),
        "data_seed": ("int", 0),
    },
    "graph": {
        "mode": ("str", "graph"),
        "weight": ("str", "zmp"),
        "R": ("int", 9),
        "sigma": (_opt("float"), None),
        "metric": ("str", "auto"),
        "sparsify": (_opt("int"), None),
        "features": ("str", "auto"),
        "hyperedge_weight": ("float", 1.0),
        "missing_as_value": ("bool", False),
        "bin_widths": (_opt("strlist"), None),
    },
    "spectral": {
        "m": ("int", 10),
        "tol": ("float", 1e-10),
        "method": ("str", "lanczos"),
        "seed": ("int", 0),
        "cache": (_opt("str"), None),
    },
    "solver": {
        "scheme": ("str", "auto"),
        "potential": ("str", "nonsmooth"),
        "epsilon": ("float", 0.5),
        "tau": ("float", 0.01),
        "c": ("str", "3/eps + omega0"),
        "omega0": ("float", 1.0),
        "nu_min": ("float", 1e-7),
        "nu_schedule": (_opt("floatlist"), None),
        "eps_tol": ("float", 1e-6),
        "t_max": ("int", 500),
        "l_max": ("int", 20),
        "eps_rel": ("float", 1e-12),
        "eps_abs": ("float", 1e-6),
        "linear_solver": ("str", "direct"),
        "norm": ("str", "euclidean"),
    },
    "sample": {
        "n_per_class": ("intlist", [10]),
        "seed": ("int", 0),
    },
    "output": {
        "dir": ("str", "out"),
        "foc_p": ("float", 0.5),
        "foc_q": ("float", 0.5),
        "save_runs": ("bool", True),
    },
    "sweep": {
        "repeats": ("int", 1),
        "base_seed": ("int", 0),
        "workers": ("int", 1),
    },
}

CHOICES = {
    "input.source": SOURCES,
    "graph.mode": ("graph", "hypergraph"),
    "graph.weight": ("zmp", "gaussian"),
    "graph.features": ("auto", "intensity", "channels", "position_intensity"),
    "spectral.method": ("lanczos", "dense", "auto"),
    "solver.scheme": ("auto", "scalar", "multiclass"),
    "solver.potential": ("smooth", "nonsmooth"),
    "solver.linear_solver": ("direct", "conjugate_gradient"),
    "solver.norm": ("euclidean", "max"),
}

POSITIVE = {
    "graph.R", "graph.hyperedge_weight", "spectral.m", "spectral.tol", "solver.epsilon",
    "solver.tau", "solver.nu_min", "solver.eps_tol", "solver.t_max", "solver.l_max",
    "output.foc_p", "output.foc_q", "sweep.repeats", "sweep.workers", "input.size",
    "input.radius", "input.rows", "input.classes",
}
NONNEGATIVE = {"solver.omega0", "solver.eps_rel", "solver.eps_abs", "input.spread"}

AXIS_PREFIX = "axis."

# Alternative key names accepted on input.
ALIASES = {("spectral", "k"): "m"}

_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _parse_scalar(kind, raw, field):
    try:
        if kind == "int":
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            return _BOOL[str(raw).strip().lower()]
        if kind == "str":
            return str(raw).strip()
    except (ValueError, KeyError, TypeError):
        raise ConfigError(f"expected {kind}, got {raw!r}", field) from None
    raise AssertionError(kind)


def _split(raw):
    if isinstance(raw, (list, tuple)):
        return list(raw)
    raw = str(raw).strip()
    return [] if not raw else [p.strip() for p in raw.split(",")]


def parse_value(kind, raw, field):
    """Convert a raw string (or an already typed value) to ``kind``."""
    if isinstance(kind, tuple):
        if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
            return None
        kind = kind[1]
    if kind.endswith("list"):
        item = kind[:-4]
        return [_parse_scalar(item, p, field) for p in _split(raw)]
    return _parse_scalar(kind, raw, field)


_TERM = re.compile(
    r"^(?:(?P<num>[0-9.]+(?:[eE][-+]?[0-9]+)?)\s*)?(?:(?P<op>[*/])\s*)?(?P<sym>eps(?:ilon)?|omega0)?$"
)


def resolve_c(expr, epsilon: float, omega0: float, field="solver.c") -> float:
    """Evaluate ``c`` given as a number or as a sum of terms ``a``, ``a/eps``, ``omega0``, ``a*omega0``."""
    if isinstance(expr, (int, float)):
        return float(expr)
    text = str(expr).replace(" ", "")
    if not text:
        raise ConfigError("empty expression", field)
    total = 0.0
    for term in text.split("+"):
        m = _TERM.match(term)
        if not term or m is None or (m.group("num") is None and m.group("sym") is None):
            raise ConfigError(f"cannot parse term {term!r} in {expr!r}", field)
        num = float(m.group("num")) if m.group("num") else 1.0
        sym, op = m.group("sym"), m.group("op")
        if sym is None:
            if op:
                raise ConfigError(f"dangling operator in {term!r}", field)
            total += num
        elif sym.startswith("eps"):
            if op != "/" and not (op is None and m.group("num") is None):
                raise ConfigError(f"epsilon may only appear as a/eps, got {term!r}", field)
            total += num / epsilon if op == "/" else epsilon
        else:
            if op == "/":
                raise ConfigError(f"division by omega0 is not supported ({term!r})", field)
            total += num * omega0
    if total < 0:
        raise ConfigError(f"c must be nonnegative, got {total}", field)
    return total


def nu_schedule(solver: dict) -> list:
    """The explicit schedule, or decades from 1e-1 down to ``nu_min``."""
    if solver.get("nu_schedule"):
        return list(solver["nu_schedule"])
    nu_min = solver["nu_min"]
    out, k = [], 1
    while 10.0 ** -k > nu_min * (1 + 1e-9):
        out.append(10.0 ** -k)
        k += 1
    out.append(nu_min)
    return out


def defaults() -> dict:
    return {sec: {k: copy.deepcopy(d) for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def _validate_entry(section, key, value):
    field = f"{section}.{key}"
    if value is None:
        return
    if field in CHOICES and value not in CHOICES[field]:
        raise ConfigError(f"must be one of {', '.join(CHOICES[field])}; got {value!r}", field)
    vals = value if isinstance(value, list) else [value]
    if field in POSITIVE and any(not v > 0 for v in vals):
        raise ConfigError(f"must be positive, got {value}", field)
    if field in NONNEGATIVE and any(v < 0 for v in vals):
        raise ConfigError(f"must be nonnegative, got {value}", field)


def validate(cfg: dict) -> dict:
    """Type-check and cross-check a nested config dict; returns it."""
    for section, keys in cfg.items():
        if section not in SCHEMA:
            raise ConfigError("unknown section", section)
        for key, value in keys.items():
            if section == "sweep" and key.startswith(AXIS_PREFIX):
                continue
            if key not in SCHEMA[section]:
                raise ConfigError("unknown key", f"{section}.{key}")
            _validate_entry(section, key, value)
    inp, graph, sol = cfg["input"], cfg["graph"], cfg["solver"]
    if inp["source"] is None:
        raise ConfigError("an input source is required", "input.source")
    if inp["source"] in ("image", "points", "table") and not inp["path"]:
        raise ConfigError(f"source {inp['source']!r} needs a path", "input.path")
    if inp["source"] in ("table", "mushroom") and graph["mode"] != "hypergraph":
        raise ConfigError("categorical tables require mode = hypergraph", "graph.mode")
    if graph["mode"] == "graph" and graph["weight"] == "gaussian" and graph["sigma"] is None:
        raise ConfigError("gaussian weights need sigma", "graph.sigma")
    if graph["sigma"] is not None and not graph["sigma"] > 0:
        raise ConfigError(f"must be positive, got {graph['sigma']}", "graph.sigma")
    sched = sol["nu_schedule"]
    if sched is not None:
        if not sched or any(not v > 0 for v in sched):
            raise ConfigError("entries must be positive", "solver.nu_schedule")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ConfigError(f"must be strictly decreasing, got {sched}", "solver.nu_schedule")
    if sol["nu_min"] >= 1.0 and sched is None:
        raise ConfigError("nu_min must be below 1", "solver.nu_min")
    resolve_c(sol["c"], sol["epsilon"], sol["omega0"])
    if any(k < 0 for k in cfg["sample"]["n_per_class"]) or not cfg["sample"]["n_per_class"]:
        raise ConfigError("needs one or more nonnegative counts", "sample.n_per_class")
    for key, values in cfg["sweep"].items():
        if key.startswith(AXIS_PREFIX):
            target = key[len(AXIS_PREFIX):]
            sec, _, k = target.partition(".")
            if sec not in SCHEMA or k not in SCHEMA[sec] or sec == "sweep":
                raise ConfigError(f"sweep axis targets unknown field {target!r}", f"sweep.{key}")
            if not values:
                raise ConfigError("sweep axis has no values", f"sweep.{key}")
    return cfg


def from_mapping(raw: dict) -> dict:
    """Build a validated config from ``{section: {key: value}}`` (strings or typed values)."""
    cfg = defaults()
    for section, keys in raw.items():
        if section not in SCHEMA:
            raise ConfigError("unknown section", section)
        for key, value in keys.items():
            key = ALIASES.get((section, key), key)
            if section == "sweep" and key.startswith(AXIS_PREFIX):
                cfg["sweep"][key] = [v for v in _split(value)] if not isinstance(value, list) else list(value)
                continue
            if key not in SCHEMA[section]:
                raise ConfigError("unknown key", f"{section}.{key}")
            cfg[section][key] = parse_value(SCHEMA[section][key][0], value, f"{section}.{key}")
    return validate(cfg)


def load_config(path) -> dict:
    """Read an INI file, or a JSON run manifest (its ``config`` entry)."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        return from_mapping(data.get("config", data))
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    return from_mapping({s: dict(parser.items(s)) for s in parser.sections()})


def apply_overrides(cfg: dict, overrides: dict) -> dict:
    """Return a copy with ``{"section.key": value}`` overrides applied and revalidated."""
    out = copy.deepcopy(cfg)
    for target, value in overrides.items():
        sec, _, key = target.partition(".")
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError("unknown field", target)
        out[sec][key] = parse_value(SCHEMA[sec][key][0], value, target)
    return validate(out)


def sweep_axes(cfg: dict) -> list:
    """``[(field, [values...]), ...]`` in file order."""
    return [(k[len(AXIS_PREFIX):], list(v)) for k, v in cfg["sweep"].items() if k.startswith(AXIS_PREFIX)]

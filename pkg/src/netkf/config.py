"""Experiment configuration files.

A config is a YAML document::

    prng: PCG64
    seed: 0
    horizon: 100
    n_runs: 100
    initial_covariance:
      mode: random_spd          # or block_diagonal_scalar / subsystem_blocks / explicit
      eps0: 0.1                 # random_spd: P = G G^T + eps0 I
      # eps1_range: [0.0, 1.0]  # block_diagonal_scalar: P = eps1 I
      # P: [[...], ...]         # explicit joint matrix
    subsystems:
      - {index: 1, A: [[0.2]], C: [[1.0]], Q: [[0.1]], R: [[0.1]], P: [[1.0]]}
    couplings:
      - {i: 1, j: 2, L: [[0.3]]}

Matrices are nested lists of numbers; a bare number is read as a 1x1 matrix.
Problems are reported as :class:`ParseError` (malformed YAML) or
:class:`ValidationError` (well-formed but invalid content), both carrying
the offending line.
"""

import math
from importlib import resources

import numpy as np
import yaml

from ._linalg import check_spd
from .errors import NetKFError, NonSPD, ParseError, ValidationError
from .netmodel import NetworkModel, SubsystemModel, build_network
from .simulate import PRNG, SimConfig

TOP_KEYS = {"prng", "seed", "horizon", "n_runs", "initial_covariance", "subsystems", "couplings"}
MODE_KEYS = {
    "subsystem_blocks": set(),
    "random_spd": {"eps0"},
    "block_diagonal_scalar": {"eps1_range"},
    "explicit": {"P"},
}


class _Mapping(dict):
    """dict that remembers the source line of itself and of each key."""

    line = None
    key_lines: dict


class _LineLoader(yaml.SafeLoader):
    def construct_mapping(self, node, deep=False):
        out = _Mapping(super().construct_mapping(node, deep=True))
        out.line = node.start_mark.line + 1
        out.key_lines = {self.construct_object(k): k.start_mark.line + 1 for k, _ in node.value}
        return out


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _LineLoader.construct_mapping)


def _line(d, key=None):
    if isinstance(d, _Mapping):
        return d.key_lines.get(key, d.line) if key is not None else d.line
    return None


def _check_keys(d, allowed, entity, required=()):
    for key in d:
        if key not in allowed:
            raise ValidationError(entity, f"unknown key {key!r}", _line(d, key))
    for key in required:
        if key not in d:
            raise ValidationError(entity, f"missing required key {key!r}", _line(d))


def _number(value, entity, line):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(entity, f"expected a number, got {value!r}", line)
    if not math.isfinite(value):
        raise ValidationError(entity, "numbers must be finite", line)
    return float(value)


def _integer(value, entity, line, lo=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(entity, f"expected an integer, got {value!r}", line)
    if lo is not None and value < lo:
        raise ValidationError(entity, f"must be >= {lo}, got {value}", line)
    return value


def _matrix(value, entity, line):
    if not isinstance(value, list):
        return np.array([[_number(value, entity, line)]])
    if not value or not all(isinstance(row, list) for row in value):
        raise ValidationError(entity, "a matrix is a non-empty list of rows", line)
    widths = {len(row) for row in value}
    if len(widths) != 1 or 0 in widths:
        raise ValidationError(entity, "matrix rows must be non-empty and of equal length", line)
    return np.array([[_number(v, entity, line) for v in row] for row in value])


def _load(text):
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ParseError(mark.line + 1 if mark else None, exc.problem or str(exc)) from None
    except yaml.YAMLError as exc:
        raise ParseError(None, str(exc)) from None
    if not isinstance(doc, dict):
        raise ParseError(1, "the config must be a mapping at the top level")
    return doc


def _parse_subsystem(item, pos):
    entity = f"subsystem #{pos}"
    if not isinstance(item, dict):
        raise ValidationError(entity, "each subsystem must be a mapping", None)
    _check_keys(item, {"index", "A", "C", "Q", "R", "P"}, entity, required=("A", "C", "Q", "R"))
    index = _integer(item.get("index", pos), entity, _line(item, "index"), lo=1)
    entity = f"subsystem {index}"
    if index != pos:
        raise ValidationError(entity, f"subsystems must be listed in index order 1..I; expected {pos}", _line(item, "index"))
    mats = {k: _matrix(item[k], f"{entity} {k}", _line(item, k)) for k in ("A", "C", "Q", "R")}
    n = mats["A"].shape[0]
    mats["P"] = _matrix(item["P"], f"{entity} P", _line(item, "P")) if "P" in item else np.eye(n)
    try:
        return SubsystemModel(index, **mats)
    except (NetKFError, ValueError) as exc:
        raise ValidationError(entity, str(exc), _line(item)) from None


def _parse_coupling(item, subs):
    if not isinstance(item, dict):
        raise ValidationError("coupling", "each coupling must be a mapping with keys i, j, L", None)
    _check_keys(item, {"i", "j", "L"}, "coupling", required=("i", "j", "L"))
    i = _integer(item["i"], "coupling", _line(item, "i"), lo=1)
    j = _integer(item["j"], "coupling", _line(item, "j"), lo=1)
    entity = f"L({i},{j})"
    for node in (i, j):
        if node > len(subs):
            raise ValidationError(entity, f"subsystem {node} does not exist", _line(item))
    L = _matrix(item["L"], entity, _line(item, "L"))
    want = (subs[i - 1].n, subs[j - 1].p)
    if L.shape != want:
        raise ValidationError(entity, f"block must be {want[0]}x{want[1]}, got {L.shape[0]}x{L.shape[1]}", _line(item, "L"))
    return (i, j), L


def _parse_covariance(cov, n):
    entity = "initial_covariance"
    if cov is None:
        return {"covariance_mode": "subsystem_blocks"}
    if not isinstance(cov, dict):
        raise ValidationError(entity, "must be a mapping with a 'mode' key", None)
    mode = cov.get("mode")
    if mode not in MODE_KEYS:
        raise ValidationError(entity, f"mode must be one of {sorted(MODE_KEYS)}, got {mode!r}", _line(cov, "mode"))
    _check_keys(cov, {"mode"} | MODE_KEYS[mode], entity)
    out = {"covariance_mode": mode}
    if "eps0" in cov:
        out["eps0"] = _number(cov["eps0"], f"{entity} eps0", _line(cov, "eps0"))
        if not out["eps0"] > 0:
            raise ValidationError(f"{entity} eps0", "must be positive", _line(cov, "eps0"))
    if "eps1_range" in cov:
        rng = cov["eps1_range"]
        line = _line(cov, "eps1_range")
        if not isinstance(rng, list) or len(rng) != 2:
            raise ValidationError(f"{entity} eps1_range", "must be a two-element list [lo, hi]", line)
        lo, hi = (_number(v, f"{entity} eps1_range", line) for v in rng)
        if not 0 <= lo <= hi:
            raise ValidationError(f"{entity} eps1_range", "needs 0 <= lo <= hi", line)
        out["eps1_range"] = (lo, hi)
    if mode == "explicit":
        if "P" not in cov:
            raise ValidationError(entity, "explicit mode needs a matrix P", _line(cov))
        P = _matrix(cov["P"], f"{entity} P", _line(cov, "P"))
        if P.shape != (n, n):
            raise ValidationError(f"{entity} P", f"must be {n}x{n}, got {P.shape[0]}x{P.shape[1]}", _line(cov, "P"))
        try:
            check_spd(P, "P")
        except NonSPD as exc:
            raise ValidationError(f"{entity} P", str(exc), _line(cov, "P")) from None
        out["P"] = P
    return out


def parse_config(text: str):
    """Parse and validate config text; returns ``(NetworkModel, SimConfig)``."""
    doc = _load(text)
    _check_keys(doc, TOP_KEYS, "config", required=("subsystems",))
    items = doc["subsystems"]
    if not isinstance(items, list) or not items:
        raise ValidationError("subsystems", "must be a non-empty list", _line(doc, "subsystems"))
    subs = [_parse_subsystem(item, pos) for pos, item in enumerate(items, start=1)]
    couplings = {}
    for item in doc.get("couplings") or []:
        key, L = _parse_coupling(item, subs)
        if key in couplings:
            raise ValidationError(f"L{key}".replace(" ", ""), "coupling listed twice", _line(item))
        couplings[key] = L
    net = build_network(subs, couplings)

    n = sum(s.n for s in subs)
    kwargs = _parse_covariance(doc.get("initial_covariance"), n)
    if "seed" in doc:
        seed = _integer(doc["seed"], "seed", _line(doc, "seed"), lo=0)
        if seed >= 2**64:
            raise ValidationError("seed", "must fit in an unsigned 64-bit integer", _line(doc, "seed"))
        kwargs["seed"] = seed
    if "horizon" in doc:
        kwargs["horizon"] = _integer(doc["horizon"], "horizon", _line(doc, "horizon"), lo=1)
    if "n_runs" in doc:
        kwargs["n_runs"] = _integer(doc["n_runs"], "n_runs", _line(doc, "n_runs"), lo=1)
    if "prng" in doc and doc["prng"] != PRNG:
        raise ValidationError("prng", f"only {PRNG} is supported, got {doc['prng']!r}", _line(doc, "prng"))
    return net, SimConfig(**kwargs)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def shipped_config(name="five_agent.yaml") -> str:
    """Text of a config bundled with the package."""
    return resources.files("netkf").joinpath("configs").joinpath(name).read_text(encoding="utf-8")


# --- serialization --------------------------------------------------------------

def format_number(x) -> str:
    """17 significant digits, always readable back as a YAML float."""
    s = format(float(x), ".17g")
    if "e" in s and "." not in s:
        s = s.replace("e", ".0e")
    elif "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _flow(M) -> str:
    rows = ("[" + ", ".join(format_number(v) for v in row) + "]" for row in np.atleast_2d(M))
    return "[" + ", ".join(rows) + "]"


def serialize_config(net: NetworkModel, cfg: SimConfig) -> str:
    """Inverse of :func:`parse_config` (comments and key order are not kept)."""
    lines = [
        f"prng: {cfg.prng}",
        f"seed: {cfg.seed}",
        f"horizon: {cfg.horizon}",
        f"n_runs: {cfg.n_runs}",
        "initial_covariance:",
        f"  mode: {cfg.covariance_mode}",
    ]
    if cfg.covariance_mode == "random_spd":
        lines.append(f"  eps0: {format_number(cfg.eps0)}")
    elif cfg.covariance_mode == "block_diagonal_scalar":
        lo, hi = cfg.eps1_range
        lines.append(f"  eps1_range: [{format_number(lo)}, {format_number(hi)}]")
    elif cfg.covariance_mode == "explicit":
        lines.append(f"  P: {_flow(cfg.P)}")
    lines.append("subsystems:")
    for s in net.subsystems:
        lines.append(f"  - index: {s.index}")
        for name in ("A", "C", "Q", "R", "P"):
            lines.append(f"    {name}: {_flow(getattr(s, name))}")
    if net.couplings:
        lines.append("couplings:")
        for (i, j), L in net.couplings.items():
            lines.append(f"  - {{i: {i}, j: {j}, L: {_flow(L)}}}")
    return "\n".join(lines) + "\n"

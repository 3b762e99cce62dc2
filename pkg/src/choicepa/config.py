"""Experiment configuration files.

A config is a TOML (or JSON) document with the sections below; every key is
listed in ``SCHEMA`` and anything else is rejected.  A resolved config (all
defaults filled in) is embedded in every output, and such an output file can
be passed back as ``--config`` to reproduce it.

    [model]   alpha, gamma, c_d, sampler, d_rounding
    [m_dist]  kind = deterministic | finite | zeta, plus value / values, probs /
              beta, k_min, allow_infinite_variance
    [run]     seed, horizon, replicates, checkpoint_ratio, k_list,
              window_lo, window_hi
    [verify]  tolerances and cross-validation settings
    [sweep]   grids over alpha, gamma, c_d and m_dist, and the action per point
"""

from __future__ import annotations

import copy
import json
import re
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .harness import EnsembleSpec, Tolerances
from .model import DRounding, MDistribution, ModelParams, SamplerMode

REQUIRED = object()
OPTIONAL = None

_num = (int, float)

SCHEMA: dict[str, dict[str, tuple]] = {
    "model": {
        "alpha": (_num, REQUIRED),
        "gamma": (_num, REQUIRED),
        "c_d": (_num, 1.0),
        "sampler": (str, "fast"),
        "d_rounding": (str, "round"),
    },
    "m_dist": {
        "kind": (str, "deterministic"),
        "value": (int, 1),
        "values": (list, OPTIONAL),
        "probs": (list, OPTIONAL),
        "beta": (_num, OPTIONAL),
        "k_min": (int, 1),
        "allow_infinite_variance": (bool, False),
    },
    "run": {
        "seed": (int, 0),
        "horizon": (int, REQUIRED),
        "replicates": (int, 1),
        "checkpoint_ratio": (_num, 1.1),
        "k_list": (list, [1, 2, 3]),
        "window_lo": (int, OPTIONAL),
        "window_hi": (int, OPTIONAL),
    },
    "verify": {
        "slope_tol": (_num, REQUIRED),
        "critical_tol": (_num, REQUIRED),
        "supercritical_threshold": (_num, REQUIRED),
        "chi2_p": (_num, REQUIRED),
        "ks_p": (_num, REQUIRED),
        "constant_rel_tol": (_num, 0.5),
        "degree_fraction_tol": (_num, OPTIONAL),
        "weight_rel_tol": (_num, OPTIONAL),
        "cross_validate": (bool, True),
        "cv_horizon": (int, 10_000),
        "cv_replicates": (int, 50),
        "cv_draws": (int, 100_000),
    },
    "sweep": {
        "alpha": (list, OPTIONAL),
        "gamma": (list, OPTIONAL),
        "c_d": (list, OPTIONAL),
        "m_dist": (list, OPTIONAL),
        "action": (str, "simulate"),
    },
}

# sections that only some subcommands need; absent means "not used"
_OPTIONAL_SECTIONS = {"verify", "sweep"}


class ConfigError(ValueError):
    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.message, self.source, self.line = message, source, line
        where = source or "<config>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")


def _locate(text: str, section: str, key: str | None = None) -> int | None:
    """1-based line of ``key`` inside ``[section]`` (or of the header)."""
    current = None
    head = re.compile(r"^\s*\[\s*([A-Za-z0-9_.]+)\s*\]")
    for i, raw in enumerate(text.splitlines(), 1):
        m = head.match(raw)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None and re.match(rf"^\s*\"?{re.escape(key)}\"?\s*=", raw):
            return i
        # JSON documents carry no sections; fall back to the first mention
        if text.lstrip().startswith("{") and key is not None and f'"{key}"' in raw:
            return i
    return None


def load_text(path: str | Path) -> tuple[dict, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(exc.msg, str(path), exc.lineno) from None
        # outputs embed their config under "config"
        if isinstance(doc, dict) and "config" in doc and isinstance(doc["config"], dict):
            doc = doc["config"]
    else:
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(str(exc), str(path), int(m.group(1)) if m else None) from None
    return doc, text


def parse_override(item: str) -> tuple[str, str, object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form section.key=value", "--set")
    dotted, raw = item.split("=", 1)
    parts = dotted.strip().split(".")
    if len(parts) != 2:
        raise ConfigError(f"override key {dotted!r} must be section.key", "--set")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return parts[0], parts[1], value


def resolve(doc: dict, overrides=(), source: str | None = None, text: str = "",
            need: tuple[str, ...] = ()) -> dict:
    """Validate ``doc`` against the schema and fill in defaults.

    ``need`` lists optional sections whose required keys must be present.
    """
    doc = copy.deepcopy(doc)
    for item in overrides:
        sec, key, value = parse_override(item)
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"override names unknown key {sec}.{key}", "--set")
        doc.setdefault(sec, {})[key] = value

    for sec, body in doc.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", source, _locate(text, sec))
        if not isinstance(body, dict):
            raise ConfigError(f"[{sec}] must be a table", source, _locate(text, sec))
        for key in body:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{key}", source, _locate(text, sec, key))

    out = {}
    for sec, keys in SCHEMA.items():
        present = sec in doc
        if sec in _OPTIONAL_SECTIONS and not present and sec not in need:
            continue
        body = doc.get(sec, {})
        res = {}
        for key, (typ, default) in keys.items():
            if key in body:
                val = body[key]
                if typ is not bool and isinstance(val, bool) or not isinstance(val, typ):
                    tname = typ.__name__ if isinstance(typ, type) else "number"
                    raise ConfigError(f"{sec}.{key} must be {tname}, got {val!r}",
                                      source, _locate(text, sec, key))
                res[key] = val
            elif default is REQUIRED:
                if sec in _OPTIONAL_SECTIONS and sec not in need:
                    continue
                raise ConfigError(f"missing required key {sec}.{key}", source,
                                  _locate(text, sec))
            elif default is not None:
                res[key] = copy.deepcopy(default)
        out[sec] = res
    return out


def load(path, overrides=(), need: tuple[str, ...] = ()) -> dict:
    doc, text = load_text(path)
    return resolve(doc, overrides, str(path), text, need)


# --------------------------------------------------------------------------
# Building domain objects


def m_dist_from(section: dict) -> MDistribution:
    kind = section.get("kind", "deterministic")
    if kind == "deterministic":
        return MDistribution.deterministic(section.get("value", 1))
    if kind == "finite":
        values, probs = section.get("values"), section.get("probs")
        if values is None or probs is None:
            raise ConfigError("m_dist kind 'finite' needs values and probs")
        return MDistribution("finite", values=tuple(int(v) for v in values),
                             probs=tuple(float(p) for p in probs))
    if kind == "zeta":
        if section.get("beta") is None:
            raise ConfigError("m_dist kind 'zeta' needs beta")
        return MDistribution.zeta(section["beta"], section.get("k_min", 1),
                                  section.get("allow_infinite_variance", False))
    raise ConfigError(f"unknown m_dist.kind {kind!r}")


def _enum(cls, value, key):
    try:
        return cls(value)
    except ValueError:
        choices = ", ".join(e.value for e in cls)
        raise ConfigError(f"{key} must be one of {choices}, got {value!r}") from None


def params_from(cfg: dict) -> ModelParams:
    mod, r = cfg["model"], cfg["run"]
    return ModelParams(
        alpha=float(mod["alpha"]), gamma=float(mod["gamma"]), c_d=float(mod["c_d"]),
        m_dist=m_dist_from(cfg["m_dist"]),
        sampler_mode=_enum(SamplerMode, mod["sampler"], "model.sampler"),
        d_rounding=_enum(DRounding, mod["d_rounding"], "model.d_rounding"),
        seed=int(r["seed"]), horizon=int(r["horizon"]))


def spec_from(cfg: dict, jobs: int = 1) -> EnsembleSpec:
    r = cfg["run"]
    window = None
    if "window_lo" in r or "window_hi" in r:
        window = (int(r.get("window_lo", max(1, r["horizon"] // 100))),
                  int(r.get("window_hi", r["horizon"])))
    try:
        return EnsembleSpec(params_from(cfg), int(r["replicates"]), float(r["checkpoint_ratio"]),
                            tuple(int(k) for k in r["k_list"]), window, jobs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def tolerances_from(cfg: dict) -> Tolerances:
    v = cfg["verify"]
    return Tolerances(
        slope_tol=float(v["slope_tol"]), critical_tol=float(v["critical_tol"]),
        supercritical_threshold=float(v["supercritical_threshold"]),
        constant_rel_tol=float(v["constant_rel_tol"]), chi2_p=float(v["chi2_p"]),
        ks_p=float(v["ks_p"]),
        degree_fraction_tol=v.get("degree_fraction_tol"),
        weight_rel_tol=v.get("weight_rel_tol"))


def sweep_points(cfg: dict) -> list[dict]:
    """Resolved per-point configs for the cartesian grid in [sweep]."""
    sw = cfg.get("sweep")
    if not sw:
        raise ConfigError("sweep needs a [sweep] section")
    axes = []
    for key in ("alpha", "gamma", "c_d"):
        if key in sw:
            axes.append((("model", key), sw[key]))
    if "m_dist" in sw:
        axes.append((("m_dist", None), sw["m_dist"]))
    if not axes or any(len(vals) == 0 for _, vals in axes):
        raise ConfigError("sweep grid is empty")
    points = [dict()]
    for (sec, key), vals in axes:
        points = [{**p, (sec, key): v} for p in points for v in vals]
    out = []
    base = {k: v for k, v in cfg.items() if k != "sweep"}
    for p in points:
        point = copy.deepcopy(base)
        for (sec, key), v in p.items():
            if key is None:
                point[sec] = v
            else:
                point[sec][key] = v
        out.append(resolve(point, need=("verify",) if "verify" in cfg else ()))
    return out

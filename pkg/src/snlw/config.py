"""Experiment configuration files.

Grammar: INI sections in brackets, ``key = value`` lines, lists separated by
commas, integer ranges written ``a..b``. Floats accept fractions such as
``1/64``. A file holds one section per experiment; the section name is the
subcommand. Unknown sections and keys are errors, and physics parameters
have no defaults.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from fractions import Fraction


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Param:
    name: str
    kind: str
    required: bool = False
    default: object = None
    help: str = ""


def _float(text):
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        return float(Fraction(text))


def _int(text):
    try:
        return int(text.strip())
    except ValueError:
        pass
    v = _float(text)
    if v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_range(text):
    out = []
    for part in _split(text):
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(_int(a), _int(b) + 1))
        else:
            out.append(_int(part))
    return out


def _split(text):
    if not str(text).strip():
        return []
    parts = [p.strip() for p in str(text).split(",")]
    if any(p == "" for p in parts):
        raise ValueError(f"malformed list: {text!r}")
    return parts


PARSERS = {
    "int": _int,
    "float": _float,
    "str": lambda s: s.strip(),
    "bool": _bool,
    "int_list": _int_range,
    "float_list": lambda s: [_float(p) for p in _split(s)],
}


def _fmt_scalar(kind, v):
    if kind in ("float", "float_list"):
        return repr(float(v))
    if kind == "bool":
        return "true" if v else "false"
    return str(v)


def format_value(kind, v):
    if kind.endswith("_list"):
        return ", ".join(_fmt_scalar(kind, x) for x in v)
    return _fmt_scalar(kind, v)


_DISP = Param("dispersion", "str", default="wave", help="wave or klein-gordon")
_SEED = Param("seed", "int", True, help="master seed")
_REPS = Param("replicas", "int", True, help="number of replicas")

SCHEMAS = {
    "sigma": (
        Param("N", "int_list", True, help="truncation radii"),
        Param("t", "float_list", True, help="times"),
        Param("replicas", "int", default=0, help="Monte Carlo replicas (0 = closed form only)"),
        Param("seed", "int", help="seed, required with replicas > 0"),
        _DISP,
    ),
    "sample-psi": (
        Param("N", "int", True), Param("t", "float", True), _SEED, _REPS, _DISP,
    ),
    "wick": (
        Param("N", "int_list", True, help="Cauchy arms N -> 2N"),
        Param("ell", "int_list", True, help="Wick orders"),
        Param("t", "float", True), Param("eps", "float", True, help="H^-eps exponent"),
        Param("check_N", "int", True, help="radius of the pairing and hypercontractivity checks"),
        _SEED, _REPS,
        Param("points", "int", default=5, help="random point pairs for the pairing check"),
        Param("p", "float_list", default=[4.0, 6.0], help="moments for hypercontractivity"),
        Param("grid", "int", default=0, help="Cauchy grid size (0 = alias-free)"),
        _DISP,
    ),
    "solve": (
        Param("k", "int", True), Param("N", "int", True), Param("dt", "float", True),
        Param("T", "float", True), _SEED, _REPS,
        Param("sign", "int", default=1), Param("renormalized", "bool", default=True),
        Param("hs", "float", default=0.0), Param("eps", "float", default=0.25),
        Param("sample_every", "int", default=1), _DISP,
    ),
    "converge": (
        Param("k", "int", True), Param("N", "int_list", True), Param("dt", "float", True),
        Param("t_star", "float", True), _SEED, _REPS,
        Param("eps", "float", True, help="H^-eps exponent of the gap"), Param("sign", "int", default=1),
        Param("contrast", "bool", default=True, help="also run the unrenormalized arm"),
        _DISP,
    ),
    "pairs": (
        Param("k", "int_list", True, help="degrees, e.g. 2..8"),
        Param("s", "float_list", default=[], help="regularities for pair selection and max J"),
        Param("figure_points", "int", default=200),
    ),
    "universality": (
        Param("f", "str", True, help="nonlinearity name"),
        Param("eps", "float_list", True), Param("T", "float", True), Param("dt", "float", True),
        Param("N_ref", "int", True), _SEED, _REPS,
        Param("sigma", "float", default=-0.25, help="distance exponent"),
        Param("control", "bool", default=True), _DISP,
    ),
}


def schema(experiment):
    try:
        return {p.name: p for p in SCHEMAS[experiment]}
    except KeyError:
        raise ConfigError(f"unknown experiment {experiment!r}") from None


def coerce(experiment, raw):
    """Typed values from ``{key: text}``; applies defaults, rejects unknown
    keys and missing required ones."""
    sch = schema(experiment)
    out = {}
    for key, text in raw.items():
        if key not in sch:
            raise ConfigError(f"[{experiment}] unknown key {key!r}")
        p = sch[key]
        if isinstance(text, str):
            try:
                out[key] = PARSERS[p.kind](text)
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"[{experiment}] {key}: {exc}") from None
        else:
            out[key] = text
    missing = [p.name for p in sch.values() if p.required and p.name not in out]
    if missing:
        raise ConfigError(f"[{experiment}] missing required keys: {', '.join(missing)}")
    for p in sch.values():
        if p.name not in out and p.default is not None:
            out[p.name] = list(p.default) if isinstance(p.default, list) else p.default
    return out


def parse_config(text, experiment=None):
    """Parse config text; returns ``{experiment: values}``.

    With ``experiment`` given, only that section is returned (and must exist).
    """
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    out = {}
    for sec in cp.sections():
        out[sec] = coerce(sec, dict(cp.items(sec)))
    if experiment is not None:
        if experiment not in out:
            raise ConfigError(f"config has no [{experiment}] section")
        return {experiment: out[experiment]}
    return out


def load_config(path, experiment=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), experiment)


def dump_config(sections):
    """Canonical text for ``{experiment: values}``; keys in schema order."""
    lines = []
    for exp, values in sections.items():
        sch = schema(exp)
        lines.append(f"[{exp}]")
        for name, p in sch.items():
            if name in values and values[name] is not None:
                lines.append(f"{name} = {format_value(p.kind, values[name])}")
        lines.append("")
    return "\n".join(lines)

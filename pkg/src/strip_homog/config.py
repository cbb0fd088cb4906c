"""INI configuration for studies, merged with command-line overrides.

A file has one ``[study]`` section; every key is optional::

    [study]
    case = delta
    eps = 0.4, 0.2, 0.1, 0.05
    eta_law = exp:1,0
    norms = l2,h1
    corrected = true
"""
from __future__ import annotations

import configparser

from .errors import ConfigError
from .geometry import EtaLaw
from .study import StudyConfig

_FLOATS = ("a", "half_length", "hole_factor", "h_far", "grading")
_BOOLS = ("corrected", "deterministic")


def parse_eps_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"bad eps list {text!r}") from exc


def read_config_file(path) -> dict:
    """Raw key/value pairs of the ``[study]`` section, parsed into Python types."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not parser.has_section("study"):
        raise ConfigError(f"config {path} has no [study] section")
    sec = parser["study"]
    known = {"case", "eps", "eta_law", "norms", "comparator", "threads", "odd_profile", *_FLOATS, *_BOOLS}
    unknown = set(sec) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    out: dict = {}
    try:
        for key in sec:
            if key in _FLOATS:
                out[key] = sec.getfloat(key)
            elif key in _BOOLS or key == "odd_profile":
                out[key] = sec.getboolean(key)
            elif key == "threads":
                out[key] = sec.getint(key)
            elif key == "eps":
                out[key] = parse_eps_list(sec[key])
            elif key == "norms":
                out[key] = tuple(n.strip() for n in sec[key].split(",") if n.strip())
            else:
                out[key] = sec[key].strip()
    except ValueError as exc:
        raise ConfigError(f"bad value in {path}: {exc}") from exc
    return out


def build_study_config(values: dict) -> StudyConfig:
    """StudyConfig from merged values; ``eta_law`` may be the textual form."""
    values = dict(values)
    law = values.pop("eta_law", None)
    if isinstance(law, str):
        law, rho, mu0 = EtaLaw.parse(law)
        values.setdefault("rho", rho)
        values.setdefault("mu0", mu0)
    if law is not None:
        values["eta_law"] = law
    if "case" not in values or "eps" not in values:
        raise ConfigError("a study needs a case and an eps list")
    try:
        return StudyConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc

"""Flat ``key = value`` experiment configuration."""
from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field

from ..errors import ConfigError

KINDS = ("variance-scan", "limit-constants", "convergence", "decomposition", "diagnostics")
SCORES = ("xi0", "xi1", "xi2", "xiV")


def parse_lambdas(text: str) -> tuple:
    """``"2^12..2^18"`` (powers of two), ``"a..b"`` integer exponents of 2, or a comma list."""
    text = text.strip()
    m = re.fullmatch(r"(\d+(?:\.\d+)?)\^(\d+)\s*\.\.\s*(?:\d+(?:\.\d+)?\^)?(\d+)", text)
    if m:
        base = float(m.group(1))
        return tuple(base ** k for k in range(int(m.group(2)), int(m.group(3)) + 1))
    try:
        return tuple(float(eval_number(x)) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse lambda grid {text!r}") from exc


def eval_number(s: str) -> float:
    s = s.strip()
    m = re.fullmatch(r"(\d+(?:\.\d+)?)\^(\d+(?:\.\d+)?)", s)
    if m:
        return float(m.group(1)) ** float(m.group(2))
    return float(s)


def _bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


@dataclass
class ExperimentConfig:
    kind: str = "variance-scan"
    body: str = "square"
    d: int = 2
    lambdas: tuple = tuple(2.0**k for k in range(12, 19))
    reps: int = 4000
    scores: tuple = ("xi0", "xiV")
    seed: int = 0
    out: str = "out"
    threads: int = 1
    delta: float | None = None  # vertex-box side; default delta0(lambda)
    window_half_width: float = 100.0
    guard: float = 4.0
    mean_reps: int = 2000
    quad_reps: int = 200
    diag_reps: int = 200
    count_half_width: float = 2.0
    timing: bool = True

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.d < 2:
            raise ConfigError("d must be at least 2")
        lam = list(self.lambdas)
        if not lam:
            raise ConfigError("empty lambda grid")
        if any(b <= a for a, b in zip(lam, lam[1:])):
            raise ConfigError("lambda grid must be strictly increasing")
        if any(x < 3 for x in lam):
            raise ConfigError("lambda values must be at least 3")
        for name in ("reps", "mean_reps", "quad_reps", "diag_reps"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be at least 2")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        bad = [s for s in self.scores if s not in SCORES]
        if bad:
            raise ConfigError(f"unknown score kinds {bad}")
        if self.delta is not None and not 0 < self.delta < 0.5:
            raise ConfigError("delta must lie in (0, 1/2)")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return self

    def items(self):
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ",".join(format(x, ".17g") if isinstance(x, float) else str(x) for x in val)
            yield f.name, val


_CASTS = {
    "kind": str, "body": str, "d": int, "reps": int, "seed": int, "out": str,
    "threads": int, "window_half_width": float, "guard": float, "mean_reps": int,
    "quad_reps": int, "diag_reps": int, "count_half_width": float, "timing": _bool,
    "lambdas": parse_lambdas,
    "scores": lambda s: tuple(x.strip() for x in s.split(",") if x.strip()),
    "delta": lambda s: None if s.strip().lower() in ("", "none") else float(s),
}


def config_from_mapping(mapping) -> ExperimentConfig:
    kw = {}
    for key, raw in mapping.items():
        key = key.strip().lower().replace("-", "_")
        if key == "lambda":
            key = "lambdas"
        if key not in _CASTS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kw[key] = _CASTS[key](raw) if isinstance(raw, str) else raw
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return ExperimentConfig(**kw).validate()


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=", ":"),
                                   comment_prefixes=("#", ";"))
    try:
        cp.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return config_from_mapping(dict(cp["experiment"]))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

"""Flat ``key = value`` experiment configuration with command-line overrides.

Lines starting with ``#`` are comments.  Values are parsed as int, float,
bool or comma-separated lists of numbers; anything else stays a string.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import ExponentMismatch

EXPERIMENTS = ("scaling-sweep", "endpoint", "dyson", "kss", "strichartz-ratio",
               "dual-ratio", "hls-check")
PRIMAL = ("scaling-sweep", "strichartz-ratio")
DUAL = ("dual-ratio", "dyson")


def parse_value(text: str):
    s = text.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if "," in s:
        return [parse_value(part) for part in s.split(",") if part.strip()]
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    if "/" in s:
        try:
            return float(Fraction(s))
        except (ValueError, ZeroDivisionError):
            pass
    return s


def parse_lines(lines) -> dict:
    out = {}
    for num, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {num}: expected key = value, got {raw.strip()!r}")
        key, val = line.split("=", 1)
        out[key.strip().replace("-", "_")] = parse_value(val)
    return out


@dataclass
class ExperimentConfig:
    """One experiment invocation.

    ``params`` keeps every other key (sweep lists, grid sizes, amplitudes).
    """

    experiment: str
    d: int = 1
    p: float | None = None
    q: float | None = None
    seed: int | None = None
    refine: int = 0
    out: str = "results"
    workers: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        if self.refine not in (0, 1, 2):
            raise ValueError("refine must be 0, 1 or 2")
        if self.stochastic and self.seed is None:
            raise ValueError(f"{self.experiment} is randomized and needs a seed")
        self._check_exponents()

    def _check_exponents(self):
        if self.q is None:
            return
        from .strichartz import MixedNormSpec
        side = "dual" if self.experiment in DUAL else "primal"
        q = Fraction(self.q).limit_denominator(10 ** 6)
        spec = MixedNormSpec.dual(q, self.d) if side == "dual" else MixedNormSpec.primal(q, self.d)
        if self.p is not None and abs(float(spec.p) - float(self.p)) > 1e-12:
            raise ExponentMismatch(f"p = {self.p} does not satisfy the scaling relation "
                                   f"(expected {float(spec.p):g})")
        self.p = float(spec.p)

    @property
    def stochastic(self) -> bool:
        return self.experiment == "kss" or (self.experiment == "endpoint" and self.d == 2)

    def spec(self):
        from .strichartz import MixedNormSpec
        q = Fraction(self.q).limit_denominator(10 ** 6)
        if self.experiment in DUAL:
            return MixedNormSpec.dual(q, self.d)
        return MixedNormSpec.primal(q, self.d)

    def get(self, key, default=None):
        return self.params.get(key, default)

    def get_list(self, key, default=None) -> list:
        v = self.params.get(key, default)
        if v is None:
            return []
        return list(v) if isinstance(v, (list, tuple)) else [v]

    def echo(self) -> list:
        """``key = value`` lines in sorted order."""
        base = {"experiment": self.experiment, "d": self.d, "p": self.p, "q": self.q,
                "seed": self.seed, "refine": self.refine, "workers": self.workers}
        items = {**{k: v for k, v in base.items() if v is not None}, **self.params}
        return [f"{k} = {_fmt(v)}" for k, v in sorted(items.items())]


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


_FIELDS = ("d", "p", "q", "seed", "refine", "out", "workers")


def build_config(experiment: str, values: dict) -> ExperimentConfig:
    values = dict(values)
    values.pop("experiment", None)
    kw = {k: values.pop(k) for k in _FIELDS if k in values}
    return ExperimentConfig(experiment, params=values, **kw)


def load_config(experiment: str, path=None, overrides=()) -> ExperimentConfig:
    """Read ``path`` (optional), apply ``key=value`` overrides, validate."""
    values = {}
    if path is not None:
        values.update(parse_lines(Path(path).read_text().splitlines()))
        named = values.get("experiment")
        if named is not None and named != experiment:
            raise ValueError(f"config is for {named!r}, not {experiment!r}")
    values.update(parse_lines(overrides))
    return build_config(experiment, values)

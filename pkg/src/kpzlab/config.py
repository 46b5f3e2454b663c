"""Plain-text run configuration (INI key = value sections).

A config round-trips losslessly through its text form; the canonical text
is also what gets fingerprinted into the run manifest.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import re
from dataclasses import dataclass, field

from .errors import ConfigError
from .initial import StepFunction, SmoothTestFunction, bump, cosine_taper

_PAIR_RE = re.compile(r"\(\s*([^,()\s]+)\s*,\s*([^,()\s]+)\s*\)")


def parse_test_function(text: str):
    """Parse the test-function mini-syntax.

    Step functions: ``step: (b0, c1) (b1, c2) ... (bn, 0)`` meaning value
    c_i on (b_{i-1}, b_i]; the trailing value must be 0 (bounded support).
    Smooth functions come from a named catalog:
    ``bump: a=-1 b=1 amplitude=1`` or ``cosine-taper: a=-1 b=1``.
    """
    head, _, body = text.partition(":")
    kind = head.strip().lower()
    body = body.strip()
    if kind == "step":
        pairs = _PAIR_RE.findall(body)
        if len(pairs) < 2:
            raise ConfigError(f"step function needs >= 2 (breakpoint, value) pairs: {text!r}")
        try:
            bps = [float(b) for b, _ in pairs]
            vals = [float(c) for _, c in pairs]
        except ValueError as exc:
            raise ConfigError(f"unparseable step function {text!r}: {exc}") from exc
        if vals[-1] != 0.0:
            raise ConfigError(
                f"step function must end with value 0 (bounded support): {text!r}")
        return StepFunction(bps, vals[:-1])
    if kind in ("bump", "cosine-taper"):
        kv = {}
        for tok in body.split():
            k, _, v = tok.partition("=")
            if not _ or not k:
                raise ConfigError(f"expected key=value tokens in {text!r}")
            try:
                kv[k] = float(v)
            except ValueError as exc:
                raise ConfigError(f"unparseable parameter {tok!r}") from exc
        try:
            maker = bump if kind == "bump" else cosine_taper
            return maker(kv.pop("a"), kv.pop("b"), kv.pop("amplitude", 1.0))
        except KeyError as exc:
            raise ConfigError(f"{kind} needs parameters a and b: {text!r}") from exc
    raise ConfigError(f"unknown test-function kind {head.strip()!r}")


def format_step_function(phi: StepFunction) -> str:
    parts = [f"({b:g}, {c:g})" for b, c in zip(phi.breakpoints[:-1], phi.values)]
    parts.append(f"({phi.breakpoints[-1]:g}, 0)")
    return "step: " + " ".join(parts)


@dataclass
class RunConfig:
    """Typed view of a run configuration file."""

    experiment: str = "main"
    seed: int = 20260826
    workers: int = 1
    out: str = "runs/out"
    beta_list: tuple = (2.0 ** 0.5,)
    big_n: int = 1000
    z_window: float = None        # default 4 * max(1, beta^(2/3)) at use site
    z_step: float = 0.02
    x_min: float = -3.0
    x_max: float = 3.0
    x_step: float = 0.25
    n_slices: int = 60
    paths_per_slice: int = 20
    t_list: tuple = (1.0,)
    phi1: str = "step: (0, 1) (1, 0)"
    phi2: str = "step: (0, 1) (1, 0)"
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unparseable config: {exc}") from exc
        cfg = cls()
        raw = {s: dict(cp[s]) for s in cp.sections()}
        cfg.raw = raw

        def get(section, key, cast, default):
            try:
                if section in cp and key in cp[section]:
                    return cast(cp[section][key])
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
            return default

        def floats(text_):
            return tuple(float(t) for t in re.split(r"[,\s]+", text_.strip()) if t)

        cfg.experiment = get("run", "experiment", str, cfg.experiment)
        cfg.seed = get("run", "seed", int, cfg.seed)
        cfg.workers = get("run", "workers", int, cfg.workers)
        cfg.out = get("run", "out", str, cfg.out)
        cfg.beta_list = get("model", "beta", floats, cfg.beta_list)
        cfg.big_n = get("model", "big_n", int, cfg.big_n)
        cfg.z_window = get("model", "z_window", float, cfg.z_window)
        cfg.z_step = get("model", "z_step", float, cfg.z_step)
        cfg.x_min = get("model", "x_min", float, cfg.x_min)
        cfg.x_max = get("model", "x_max", float, cfg.x_max)
        cfg.x_step = get("model", "x_step", float, cfg.x_step)
        cfg.n_slices = get("ensemble", "n_slices", int, cfg.n_slices)
        cfg.paths_per_slice = get("ensemble", "paths_per_slice", int, cfg.paths_per_slice)
        cfg.t_list = get("observables", "t_list", floats, cfg.t_list)
        cfg.phi1 = get("observables", "phi1", str, cfg.phi1)
        cfg.phi2 = get("observables", "phi2", str, cfg.phi2)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def validate(self) -> None:
        if self.big_n < 1:
            raise ConfigError("[model] big_n must be >= 1")
        if self.z_step <= 0 or self.x_step <= 0:
            raise ConfigError("[model] grid steps must be positive")
        if self.x_min >= self.x_max:
            raise ConfigError("[model] x_min must be below x_max")
        if any(b < 0 for b in self.beta_list):
            raise ConfigError("[model] beta values must be >= 0")
        if self.n_slices < 1 or self.paths_per_slice < 1:
            raise ConfigError("[ensemble] slice and path counts must be >= 1")
        if any(t <= 0 for t in self.t_list):
            raise ConfigError("[observables] t_list entries must be positive")
        if self.workers < 1:
            raise ConfigError("[run] workers must be >= 1")
        # fail early on malformed test functions
        parse_test_function(self.phi1)
        parse_test_function(self.phi2)

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        cp["run"] = {
            "experiment": self.experiment,
            "seed": str(self.seed),
            "workers": str(self.workers),
            "out": self.out,
        }
        cp["model"] = {
            "beta": ", ".join(repr(b) for b in self.beta_list),
            "big_n": str(self.big_n),
            "z_step": repr(self.z_step),
            "x_min": repr(self.x_min),
            "x_max": repr(self.x_max),
            "x_step": repr(self.x_step),
        }
        if self.z_window is not None:
            cp["model"]["z_window"] = repr(self.z_window)
        cp["ensemble"] = {
            "n_slices": str(self.n_slices),
            "paths_per_slice": str(self.paths_per_slice),
        }
        cp["observables"] = {
            "t_list": ", ".join(repr(t) for t in self.t_list),
            "phi1": self.phi1,
            "phi2": self.phi2,
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def canonical_text(self) -> str:
        """Config text with scheduling-only fields normalized.

        The worker count only affects scheduling and the output directory
        only placement, never results, so both are normalized out: runs of
        one config agree byte-for-byte regardless of parallelism or where
        they are written.
        """
        return dataclasses.replace(self, workers=1, out="").to_text()

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

"""Experiment configuration (TOML, ``schema_version = 1``).

Layout::

    schema_version = 1

    [model]
    kind = "A"                      # A | B | C or the long names
    params = { k = 1.0, theta = 0.5 }

    [initial]
    kind = "coherent"               # coherent | wkb
    z0 = [-1.0, 0.0]
    polarization = [1.0, 0.0]       # complex entries as [re, im]
    mode = 1                        # optional: project pointwise onto a mode
    # wkb only: amplitude_width, phase_curvature

    [run]
    eps = [0.015625, 0.00390625]
    t0 = 0.0
    t = 2.0
    methods = ["thawed", "thawed+hop"]

    [grid]                          # all optional
    x_min = -4.0
    x_max = 4.0
    n = 8192
    dt_factor = 0.05                # reference step = dt_factor * eps

    [quadrature]
    spacing = 0.5                   # units of sqrt(eps)
    margin = 6.0

    [integrator]
    step = 1e-3

    [average]                       # frozen+hop-averaged only
    t_a = 1.6
    t_b = 2.4
    samples = 65                    # default: spacing about sqrt(eps)/4

    [output]
    dir = "out"
"""
from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, InvalidInputError
from .model import ModelSpec, build_model

SCHEMA_VERSION = 1
METHODS = ("thawed", "frozen", "thawed+hop", "frozen+hop", "frozen+hop-averaged", "singlewp")
_SECTIONS = {"schema_version", "model", "initial", "run", "grid", "quadrature", "integrator",
             "average", "output"}


def _complex_list(vals, name):
    out = []
    for v in vals:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ConfigError(f"{name}: complex entries are [re, im] pairs")
            out.append(complex(float(v[0]), float(v[1])))
        else:
            out.append(complex(float(v)))
    return np.array(out)


@dataclass(frozen=True)
class InitialData:
    kind: str = "coherent"
    z0: tuple = (0.0, 0.0)
    polarization: tuple = (1.0,)
    mode: int | None = None
    amplitude_width: float = 1.0
    phase_curvature: float = 0.0

    def scalar_profile(self, x, eps: float) -> np.ndarray:
        """Normalised scalar profile on ``x``."""
        x = np.asarray(x, dtype=float)
        q, p = self.z0
        if self.kind == "coherent":
            return (np.pi * eps) ** -0.25 * np.exp(-(x - q) ** 2 / (2 * eps)
                                                  + 1j * p * (x - q) / eps)
        # WKB: eps-independent amplitude, phase p (x - q) + c (x - q)^2 / 2
        a = np.exp(-(x - q) ** 2 / (2 * self.amplitude_width ** 2))
        S = p * (x - q) + 0.5 * self.phase_curvature * (x - q) ** 2
        f = a * np.exp(1j * S / eps)
        return f / math.sqrt((np.pi * self.amplitude_width ** 2) ** 0.5)

    def vector_field(self, model, x, eps: float, t0: float = 0.0) -> np.ndarray:
        """``(m, n)`` initial field, optionally projected pointwise onto ``mode``."""
        V = np.asarray(self.polarization, dtype=complex)
        psi = V[:, None] * self.scalar_profile(x, eps)[None]
        if self.mode is not None and model.n_modes == 2:
            z = np.stack([np.asarray(x, float), np.zeros(len(x))], axis=-1)
            pi = model.projector(t0, z, self.mode)
            psi = np.einsum("nij,jn->in", pi, psi)
        return psi


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    initial: InitialData
    eps: tuple
    t: float
    methods: tuple
    t0: float = 0.0
    x_min: float | None = None
    x_max: float | None = None
    n: int | None = None
    dt_factor: float = 0.05
    spacing: float = 0.5
    margin: float = 6.0
    step: float = 1e-3
    t_a: float | None = None
    t_b: float | None = None
    samples: int | None = None
    out_dir: str = "out"
    raw: dict = field(default_factory=dict, compare=False)

    def window(self, eps: float) -> np.ndarray:
        """Sample times of the averaging window for this eps."""
        n = self.samples
        if n is None:
            n = int(math.ceil(4 * (self.t_b - self.t_a) / math.sqrt(eps))) + 1
        return np.linspace(self.t_a, self.t_b, max(n, 3))

    def with_eps(self, eps_list) -> "ExperimentConfig":
        cfg = replace(self, eps=tuple(float(e) for e in eps_list))
        _validate(cfg)
        return cfg


def _validate(cfg: ExperimentConfig):
    if not cfg.eps:
        raise ConfigError("run.eps must list at least one value")
    for e in cfg.eps:
        if not (e > 0 and math.isfinite(e)):
            raise ConfigError(f"eps must be positive, got {e}")
    if cfg.t < cfg.t0:
        raise ConfigError("run.t must not precede run.t0")
    bad = [m for m in cfg.methods if m not in METHODS]
    if bad or not cfg.methods:
        raise ConfigError(f"unknown methods {bad}; allowed {list(METHODS)}")
    if not 0 < cfg.spacing <= 1:
        raise ConfigError("quadrature.spacing must lie in (0, 1] (units of sqrt(eps))")
    if cfg.margin <= 0 or cfg.step <= 0 or cfg.dt_factor <= 0:
        raise ConfigError("margin, step and dt_factor must be positive")
    if cfg.n is not None and (cfg.n < 2 or cfg.n & (cfg.n - 1)):
        raise ConfigError("grid.n must be a power of two")
    if (cfg.x_min is None) != (cfg.x_max is None):
        raise ConfigError("give both grid.x_min and grid.x_max or neither")
    if cfg.x_min is not None and cfg.x_min >= cfg.x_max:
        raise ConfigError("grid.x_min must be below grid.x_max")
    if "frozen+hop-averaged" in cfg.methods:
        if cfg.t_a is None or cfg.t_b is None or not cfg.t0 < cfg.t_a < cfg.t_b:
            raise ConfigError("frozen+hop-averaged needs t0 < average.t_a < average.t_b")
        if cfg.samples is not None and cfg.samples < 3:
            raise ConfigError("average.samples must be at least 3")
    model = build_model(cfg.model)
    if len(cfg.initial.polarization) != model.m:
        raise ConfigError(f"initial.polarization needs {model.m} entries")
    if cfg.initial.mode is not None and cfg.initial.mode not in range(1, model.n_modes + 1):
        raise ConfigError("initial.mode out of range")
    if cfg.initial.kind not in ("coherent", "wkb"):
        raise ConfigError("initial.kind must be coherent or wkb")
    if cfg.initial.kind == "wkb" and "singlewp" in cfg.methods:
        raise ConfigError("singlewp needs coherent-state data")
    if cfg.initial.amplitude_width <= 0:
        raise ConfigError("initial.amplitude_width must be positive")


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a parsed TOML document."""
    raw = copy.deepcopy(data)
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    try:
        mod = data["model"]
        spec = ModelSpec(mod["kind"], mod.get("params", {}))
        build_model(spec)
        ini = data.get("initial", {})
        z0 = tuple(float(v) for v in ini.get("z0", (0.0, 0.0)))
        if len(z0) != 2:
            raise ConfigError("initial.z0 must have two entries (d = 1)")
        pol = _complex_list(ini.get("polarization", [1.0]), "initial.polarization")
        mode = ini.get("mode")
        initial = InitialData(
            kind=str(ini.get("kind", "coherent")), z0=z0, polarization=tuple(pol),
            mode=None if mode is None else int(mode),
            amplitude_width=float(ini.get("amplitude_width", 1.0)),
            phase_curvature=float(ini.get("phase_curvature", 0.0)))
        run = data["run"]
        eps = run["eps"]
        eps = tuple(float(e) for e in (eps if isinstance(eps, list) else [eps]))
        grid = data.get("grid", {})
        quad = data.get("quadrature", {})
        integ = data.get("integrator", {})
        avg = data.get("average", {})
        out = data.get("output", {})
        cfg = ExperimentConfig(
            model=spec, initial=initial, eps=eps, t=float(run["t"]), t0=float(run.get("t0", 0.0)),
            methods=tuple(str(m) for m in run.get("methods", ["thawed"])),
            x_min=None if "x_min" not in grid else float(grid["x_min"]),
            x_max=None if "x_max" not in grid else float(grid["x_max"]),
            n=None if "n" not in grid else int(grid["n"]),
            dt_factor=float(grid.get("dt_factor", 0.05)),
            spacing=float(quad.get("spacing", 0.5)), margin=float(quad.get("margin", 6.0)),
            step=float(integ.get("step", 1e-3)),
            t_a=None if "t_a" not in avg else float(avg["t_a"]),
            t_b=None if "t_b" not in avg else float(avg["t_b"]),
            samples=None if "samples" not in avg else int(avg["samples"]), out_dir=str(out.get("dir", "out")), raw=raw)
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInputError):
            raise ConfigError(str(exc)) from None
        raise ConfigError(f"malformed value: {exc}") from None
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(data)


def preset_path(name: str) -> Path:
    p = Path(__file__).parent / "presets" / f"{name}.toml"
    if not p.exists():
        avail = sorted(q.stem for q in p.parent.glob("*.toml"))
        raise ConfigError(f"unknown preset {name!r}; available {avail}")
    return p

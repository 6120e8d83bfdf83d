"""Run configuration: a sectioned key-value file read with :mod:`configparser`.

Example::

    [geometry]
    x0 = 0.0
    x1 = 1.0
    y_interface = 0.0
    y_top = 0.5
    y_bottom = -0.5

    [mesh]
    nx = 16            ; ny_free, ny_por default to nx / 2

    [fluid]
    mu = 1.0
    gamma = 1.0

    [porous]
    phi = 0.4
    k = 0.01           ; or kxx, kxy, kyy for an anisotropic tensor

    [interface]
    law = bjs          ; bj | bjs | noslip | explicit
    alpha = 1.0        ; explicit laws give a11, a12, a22 (and beta) instead

    [boundary]
    plan = channel     ; channel | enclosed | or per-side keys top, bottom, ...
    traction = channel ; fully developed channel traction, or "tx, ty"

    [loads]
    pressure_gradient = -1.0
    b_free = 0.0, 0.0
    b_por = 0.0, 0.0

    [run]
    seed = 0
    threads = 1
    out = results
    suite = channel
    levels = 8, 16, 32, 64
    trials = 100
    directions = 50

Every error names the file and line of the offending entry.
"""
from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import FluidProps, InterfaceLaw, PorousProps, bj_law, bjs_law, noslip_limit_law, trace
from .mesh import CHANNEL_PLAN, ENCLOSED_PLAN, EXTERIOR_SEGMENTS, DomainGeometry, build_channel_mesh

SUITES = ("minpower", "gradient", "uniqueness", "jump", "channel", "convergence")

_SCHEMA = {
    "geometry": {"x0", "x1", "y_interface", "y_top", "y_bottom"},
    "mesh": {"nx", "ny_free", "ny_por"},
    "fluid": {"mu", "gamma"},
    "porous": {"phi", "k", "kxx", "kxy", "kyy"},
    "interface": {"law", "alpha", "a11", "a12", "a22", "beta"},
    "boundary": {"plan", "traction", *EXTERIOR_SEGMENTS},
    "loads": {"pressure_gradient", "b_free", "b_por"},
    "run": {"seed", "threads", "out", "suite", "levels", "trials", "directions", "amplitudes"},
}


class ConfigError(ValueError):
    """Invalid run configuration; the message carries ``file:line`` context."""


@dataclass(frozen=True, eq=False)
class RunConfig:
    path: str
    digest: str
    geometry: DomainGeometry
    nx: int
    ny_free: int
    ny_por: int
    fluid: FluidProps
    porous: PorousProps
    law: InterfaceLaw
    law_kind: str
    alpha: float | None
    plan: dict
    traction: object            # "channel" or a 2-vector
    pressure_gradient: float
    b_free: np.ndarray
    b_por: np.ndarray
    seed: int = 0
    threads: int = 1
    out: str = "results"
    suite: str | None = None
    levels: tuple = (8, 16, 32, 64)
    trials: int = 100
    directions: int = 50
    amplitudes: tuple = (1e-2, 1e-1, 1.0)
    raw: dict = field(default_factory=dict)

    @property
    def short_hash(self):
        return self.digest[:16]


def _line_index(text):
    """Map (section, key) to the 1-based line where the key is set."""
    index, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = no
            continue
        m = re.match(r"\s*([^=:;#\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            index[(section, m.group(1).strip().lower())] = no
    return index


class _Reader:
    def __init__(self, path, text):
        self.path = path
        self.lines = _line_index(text)
        self.cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            self.cp.read_string(text, source=str(path))
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            where = f"{path}:{line}" if line else str(path)
            raise ConfigError(f"{where}: {exc.message if hasattr(exc, 'message') else exc}") from exc

    def where(self, section, key=None):
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        return f"{self.path}:{line}" if line else str(self.path)

    def fail(self, section, key, msg):
        label = f"[{section}] {key}" if key else f"[{section}]"
        raise ConfigError(f"{self.where(section, key)}: {label}: {msg}")

    def has(self, section, key):
        return self.cp.has_option(section, key)

    def get(self, section, key, conv=str, default=None, required=False):
        if not self.has(section, key):
            if required:
                raise ConfigError(f"{self.where(section)}: [{section}] missing required key {key!r}")
            return default
        raw = self.cp.get(section, key).strip()
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            self.fail(section, key, f"cannot parse {raw!r}: {exc}")

    def check_schema(self):
        for section in self.cp.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"{self.where(section)}: unknown section [{section}]")
            for key in self.cp[section]:
                if key not in _SCHEMA[section]:
                    self.fail(section, key, "unknown key")


def _vec2(text):
    parts = [float(p) for p in text.replace(",", " ").split()]
    if len(parts) != 2:
        raise ValueError("expected two numbers")
    return np.array(parts)


def _int_list(text):
    return tuple(int(p) for p in text.replace(",", " ").split())


def _float_list(text):
    return tuple(float(p) for p in text.replace(",", " ").split())


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def load_config(path):
    """Parse and validate a run configuration file."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    text = data.decode("utf-8")
    r = _Reader(path, text)
    r.check_schema()

    g = {k: r.get("geometry", k, float, d) for k, d in
         (("x0", 0.0), ("x1", 1.0), ("y_interface", 0.0), ("y_top", 0.5), ("y_bottom", -0.5))}
    try:
        geometry = DomainGeometry((g["x0"], g["x1"]), g["y_interface"], g["y_top"], g["y_bottom"])
    except ValueError as exc:
        r.fail("geometry", None, str(exc))

    nx = r.get("mesh", "nx", _positive_int, 16)
    ny_free = r.get("mesh", "ny_free", _positive_int, max(1, nx // 2))
    ny_por = r.get("mesh", "ny_por", _positive_int, max(1, nx // 2))

    try:
        fluid = FluidProps(r.get("fluid", "mu", float, 1.0), r.get("fluid", "gamma", float, 1.0))
    except ValueError as exc:
        r.fail("fluid", None, str(exc))

    phi = r.get("porous", "phi", float, 0.4)
    if r.has("porous", "k"):
        K = r.get("porous", "k", float) * np.eye(2)
    elif r.has("porous", "kxx"):
        kxy = r.get("porous", "kxy", float, 0.0)
        K = np.array([[r.get("porous", "kxx", float, required=True), kxy],
                      [kxy, r.get("porous", "kyy", float, required=True)]])
    else:
        K = 0.01 * np.eye(2)
    try:
        porous = PorousProps(phi, K)
    except ValueError as exc:
        r.fail("porous", "k" if r.has("porous", "k") else None, str(exc))

    kind = r.get("interface", "law", str.lower, "bjs")
    alpha = r.get("interface", "alpha", float, 1.0)
    try:
        if kind == "bj":
            law = bj_law(alpha, fluid.mu, porous.K)
        elif kind == "bjs":
            law = bjs_law(alpha, fluid.mu, porous.K)
        elif kind == "noslip":
            law = noslip_limit_law(alpha, float(trace(porous.K)))
        elif kind == "explicit":
            alpha = None
            law = InterfaceLaw(*(r.get("interface", k, float, required=True) for k in ("a11", "a12", "a22")),
                               beta=r.get("interface", "beta", float, 0.0))
        else:
            r.fail("interface", "law", f"unknown law {kind!r} (expected bj, bjs, noslip or explicit)")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        key = "a12" if "semi-definite" in str(exc) else "law"
        r.fail("interface", key if r.has("interface", key) else "law", str(exc))

    plan_name = r.get("boundary", "plan", str.lower, "channel")
    if plan_name == "channel":
        plan = dict(CHANNEL_PLAN)
    elif plan_name == "enclosed":
        plan = dict(ENCLOSED_PLAN)
    else:
        r.fail("boundary", "plan", f"unknown plan {plan_name!r} (expected channel or enclosed)")
    for seg in EXTERIOR_SEGMENTS:
        if r.has("boundary", seg):
            plan[seg] = r.get("boundary", seg, str.strip)
    try:
        build_channel_mesh(geometry, 1, 1, 1, plan)
    except ValueError as exc:
        bad = [seg for seg in EXTERIOR_SEGMENTS if seg in str(exc) and r.has("boundary", seg)]
        r.fail("boundary", bad[0] if bad else "plan", str(exc))
    tr = r.get("boundary", "traction", str.strip, "channel")
    traction = "channel" if tr.lower() == "channel" else None
    if traction is None:
        try:
            traction = _vec2(tr)
        except ValueError as exc:
            r.fail("boundary", "traction", f"expected 'channel' or two numbers: {exc}")
    if isinstance(traction, str) and not porous.is_isotropic:
        r.fail("boundary", "traction", "channel traction needs an isotropic permeability")

    levels = r.get("run", "levels", _int_list, (8, 16, 32, 64))
    if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
        r.fail("run", "levels", "need at least two increasing mesh resolutions")
    suite = r.get("run", "suite", str.lower, None)
    if suite is not None and suite not in SUITES:
        r.fail("run", "suite", f"unknown suite {suite!r} (expected one of {', '.join(SUITES)})")
    amplitudes = r.get("run", "amplitudes", _float_list, (1e-2, 1e-1, 1.0))
    if len(amplitudes) < 2 or any(a <= 0 for a in amplitudes):
        r.fail("run", "amplitudes", "need at least two positive amplitudes")

    return RunConfig(
        path=str(path),
        digest=hashlib.sha256(data).hexdigest(),
        geometry=geometry, nx=nx, ny_free=ny_free, ny_por=ny_por,
        fluid=fluid, porous=porous, law=law, law_kind=kind, alpha=alpha,
        plan=plan, traction=traction,
        pressure_gradient=r.get("loads", "pressure_gradient", float, -1.0),
        b_free=r.get("loads", "b_free", _vec2, np.zeros(2)),
        b_por=r.get("loads", "b_por", _vec2, np.zeros(2)),
        seed=r.get("run", "seed", int, 0),
        threads=r.get("run", "threads", _positive_int, 1),
        out=r.get("run", "out", str, "results"),
        suite=suite, levels=levels,
        trials=r.get("run", "trials", _positive_int, 100),
        directions=r.get("run", "directions", _positive_int, 50),
        amplitudes=amplitudes,
        raw={s: dict(r.cp[s]) for s in r.cp.sections()},
    )

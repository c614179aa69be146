"""Flat key-value experiment configuration with dotted sections.

The format is line oriented: `key = value`, `#` comments, blank lines
ignored.  Values are whitespace separated tokens; list-valued keys take
all tokens, matrix-valued keys take row-major entries.  Parsing raises
ConfigError carrying every violation found, not just the first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

TAU = 2.0 * np.pi

EXPERIMENT_NAMES = (
    "blago-identity",
    "distance-recovery",
    "gauge-determination",
    "kannai",
    "chirality-extension",
    "connection-recovery",
    "fractional-roundtrip",
    "cut-time",
)

_KEY_RE = re.compile(r"^[a-z][a-z0-9_.-]*$")


class ConfigError(ValueError):
    """Carries the full list of validation violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(
            "invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations)
        )


@dataclass
class ExperimentConfig:
    """Validated inputs for one experiment run."""

    experiment: str = ""
    cutoff: int = 12
    alpha: float = 0.5
    periods: tuple = (TAU, TAU)
    metric: tuple = (1.0, 0.0, 0.0, 1.0)
    grid_n: int | None = None
    connection_kind: str = "zero"
    connection_twist: tuple = (0.0, 0.0)
    connection_modes: dict = field(default_factory=dict)
    region_center: tuple = (0.0, 0.0)
    region_radius: float = 1.0
    horizon: float = 2.0
    steps: int = 256
    blago_pairs: int = 50
    distance_pairs: int = 10
    cut_time_rays: tuple = ("axis", "diag")
    tolerances: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def dimension(self) -> int:
        return len(self.periods)

    @property
    def grid_points_per_side(self) -> int:
        return self.grid_n if self.grid_n is not None else 2 * self.cutoff + 1

    def metric_matrix(self) -> np.ndarray:
        m = self.dimension
        return np.array(self.metric, dtype=float).reshape(m, m)

    def connection_band_limit(self) -> int:
        if self.connection_kind == "scalar" and self.connection_modes:
            return max(max(abs(c) for c in q) for q in self.connection_modes)
        return 0

    def tolerance(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))


def _parse_floats(tokens, count=None):
    vals = tuple(float(t) for t in tokens)
    if count is not None and len(vals) != count:
        raise ValueError(f"expected {count} numbers, got {len(vals)}")
    return vals


def _parse_modes(tokens):
    """Groups `q1 q2 re1 im1 re2 im2` separated by `;` tokens."""
    groups = []
    cur = []
    for t in tokens:
        if t == ";":
            if cur:
                groups.append(cur)
            cur = []
        else:
            cur.extend(t.split(";"))
    if cur:
        groups.append(cur)
    modes = {}
    for g in groups:
        if len(g) != 6:
            raise ValueError(
                "each mode group needs 6 numbers: q1 q2 re1 im1 re2 im2"
            )
        q = (int(g[0]), int(g[1]))
        vec = (float(g[2]) + 1j * float(g[3]), float(g[4]) + 1j * float(g[5]))
        modes[q] = vec
    return modes


def parse_config(text: str, strict: bool = False) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing all violations."""
    cfg = ExperimentConfig()
    violations = []
    seen = {}

    handlers = {
        "experiment": ("experiment", lambda t: " ".join(t)),
        "dirac.cutoff": ("cutoff", lambda t: int(t[0])),
        "dirac.alpha": ("alpha", lambda t: float(t[0])),
        "torus.periods": ("periods", lambda t: _parse_floats(t)),
        "torus.metric": ("metric", lambda t: _parse_floats(t)),
        "torus.grid_n": ("grid_n", lambda t: int(t[0])),
        "connection.kind": ("connection_kind", lambda t: t[0]),
        "connection.twist": ("connection_twist", lambda t: _parse_floats(t)),
        "connection.modes": ("connection_modes", _parse_modes),
        "region.center": ("region_center", lambda t: _parse_floats(t)),
        "region.radius": ("region_radius", lambda t: float(t[0])),
        "time.horizon": ("horizon", lambda t: float(t[0])),
        "time.steps": ("steps", lambda t: int(t[0])),
        "blago.pairs": ("blago_pairs", lambda t: int(t[0])),
        "distance.pairs": ("distance_pairs", lambda t: int(t[0])),
        "cut-time.rays": ("cut_time_rays", lambda t: tuple(t)),
        "seed": ("seed", lambda t: int(t[0])),
    }

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            violations.append(f"line {lineno}: expected `key = value`, got {raw!r}")
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        tokens = value.split()
        if not _KEY_RE.match(key):
            violations.append(f"line {lineno}: malformed key {key!r}")
            continue
        if key in seen:
            violations.append(
                f"line {lineno}: duplicate key {key} (first set at line {seen[key]})"
            )
            continue
        seen[key] = lineno
        if key.startswith("tol."):
            try:
                cfg.tolerances[key[4:]] = float(tokens[0])
            except (ValueError, IndexError):
                violations.append(f"line {lineno}: {key} needs one number")
            continue
        handler = handlers.get(key)
        if handler is None:
            if strict:
                violations.append(f"line {lineno}: unknown key {key}")
            continue
        attr, fn = handler
        try:
            setattr(cfg, attr, fn(tokens))
        except (ValueError, IndexError) as exc:
            violations.append(f"line {lineno}: bad value for {key}: {exc}")

    violations.extend(_validate(cfg))
    if violations:
        raise ConfigError(violations)
    return cfg


def _validate(cfg: ExperimentConfig) -> list:
    out = []
    if cfg.experiment and cfg.experiment not in EXPERIMENT_NAMES:
        known = ", ".join(EXPERIMENT_NAMES)
        out.append(f"experiment: unknown name {cfg.experiment!r} (known: {known})")
    m = cfg.dimension
    if m != 2:
        out.append(f"torus.periods: exactly two periods supported, got {m}")
        return out
    if any(p <= 0 for p in cfg.periods):
        out.append("torus.periods: periods must be positive")
    if len(cfg.metric) != m * m:
        out.append(f"torus.metric: need {m * m} entries, got {len(cfg.metric)}")
    else:
        g = cfg.metric_matrix()
        if np.abs(g - g.T).max() > 1e-12:
            out.append("torus.metric: matrix must be symmetric")
        elif np.linalg.eigvalsh(g).min() <= 0:
            out.append("torus.metric: matrix must be positive definite")
    if cfg.cutoff < 1:
        out.append("dirac.cutoff: must be a positive integer")
    if not 0.0 < cfg.alpha < 1.0:
        out.append("dirac.alpha: must lie in (0, 1)")
    ka = cfg.connection_band_limit()
    if cfg.cutoff < ka + 1:
        out.append(
            f"dirac.cutoff: value {cfg.cutoff} must be at least "
            f"connection band limit + 1 = {ka + 1} "
            "(keys dirac.cutoff and connection.modes)"
        )
    if cfg.grid_n is not None:
        if cfg.grid_n % 2 == 0 or cfg.grid_n < 2 * cfg.cutoff + 1:
            out.append(
                f"torus.grid_n: must be odd and at least 2*cutoff+1 "
                f"= {2 * cfg.cutoff + 1}, got {cfg.grid_n}"
            )
    if cfg.connection_kind not in ("zero", "twist", "scalar"):
        out.append(
            f"connection.kind: unknown kind {cfg.connection_kind!r} "
            "(zero, twist, scalar)"
        )
    if len(cfg.connection_twist) != m:
        out.append(f"connection.twist: need {m} entries")
    if len(cfg.region_center) != m:
        out.append(f"region.center: need {m} entries")
    if cfg.region_radius <= 0:
        out.append("region.radius: must be positive")
    elif len(cfg.metric) == m * m:
        g = cfg.metric_matrix()
        if np.abs(g - g.T).max() <= 1e-12 and np.linalg.eigvalsh(g).min() > 0:
            lam = np.linalg.eigvalsh(g).min()
            cap = 0.5 * np.sqrt(lam) * min(cfg.periods)
            if cfg.region_radius >= cap:
                out.append(
                    f"region.radius: {cfg.region_radius} does not fit in the "
                    f"torus (needs radius < {cap:.6g})"
                )
    if cfg.horizon <= 0:
        out.append("time.horizon: must be positive")
    if cfg.steps < 2:
        out.append("time.steps: must be at least 2")
    if cfg.blago_pairs < 1:
        out.append("blago.pairs: must be at least 1")
    if cfg.distance_pairs < 1:
        out.append("distance.pairs: must be at least 1")
    for ray in cfg.cut_time_rays:
        if ray not in ("axis", "diag"):
            out.append(f"cut-time.rays: unknown ray {ray!r} (axis, diag)")
    if cfg.seed < 0:
        out.append("seed: must be a non-negative integer")
    return out


def load_config(path, strict: bool = False) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), strict=strict)

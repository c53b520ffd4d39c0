"""Scenario configuration: YAML schema, validation and initial-data construction.

Schema (all sections optional except ``domain``, ``grid`` and ``time``)::

    name: str
    seed: int
    domain:       {inner_radius: float, outer_radius: float}
    grid:         {n_r: int, n_theta: int}
    coefficients: {competitive: bool, a: [c1, c2], b: [c1, c2], alpha: [c1, c2]}
                  # each c is a number or {kind: constant|sinusoid|radial_product, ...}
    nonlinearity: logistic
    initial_data: {kind: shifted_bump_pair|radial_bump|file, amplitude: [A1, A2],
                   width: float, shift: float, noise: float, path: str}
    direction_index: int        # e = (cos psi, sin psi), psi = index*pi/n_theta
    time:         {dt: float, t_end: float, cadence: float, tail_every_step: float|null}
    solver:       fft|cg|splu
    diagnostics:  {symmetry, omega, steady_state, linear_residual: bool, probes: [names]}
    probes:       {delta, window_end, window_width, harnack_taus, p_exp, quotient_lag,
                   quotient_transient, quotient_calibration}
    tolerances:   {extinction, cluster, hypothesis, fss, monotonicity, antipodality_deg,
                   radial, steady_state, tail_fraction}
    output:       {snapshots: all|final|none}
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dynamics import CoefficientSet, CompetitionSystem, coefficient_bounds, logistic_pair
from .geometry import Direction, DomainSpec, PolarGrid
from .symmetry import check_reflection_hypothesis

PROBE_NAMES = ("wedge", "corner", "harnack", "quotient")
SOLVERS = ("fft", "cg", "splu")
INITIAL_KINDS = ("shifted_bump_pair", "radial_bump", "file")
SNAPSHOT_MODES = ("all", "final", "none")

DEFAULTS = {
    "name": "scenario",
    "seed": 0,
    "coefficients": {"competitive": True, "a": [1.0, 1.0], "b": [1.0, 1.0], "alpha": [1.0, 1.0]},
    "nonlinearity": "logistic",
    "initial_data": {"kind": "shifted_bump_pair", "amplitude": [1.0, 1.0], "width": 0.3,
                     "shift": 0.35, "noise": 0.0, "path": None},
    "direction_index": 0,
    "time": {"cadence": None, "tail_every_step": None},
    "solver": "fft",
    "diagnostics": {"symmetry": True, "omega": True, "steady_state": False,
                    "linear_residual": False, "probes": []},
    "probes": {"delta": 0.1, "window_end": None, "window_width": 1.0, "harnack_taus": [1 / 7, 4 / 7, 5 / 7, 1.0],
               "p_exp": 1.0, "quotient_lag": 1.0, "quotient_transient": 5.0,
               "quotient_calibration": 4 * math.pi},
    "tolerances": {"extinction": 1e-4, "cluster": None, "hypothesis": 1e-12, "fss": 1e-2,
                   "monotonicity": 1e-2, "antipodality_deg": 3.0, "radial": 1e-2,
                   "steady_state": 1e-2, "tail_fraction": 0.2},
    "output": {"snapshots": "all"},
}


class ConfigError(ValueError):
    """Raised with one message per offending field."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(errors, path, value, positive=False, nonneg=False, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{path}: expected a number, got {value!r}")
        return None
    if not math.isfinite(value):
        errors.append(f"{path}: must be finite")
        return None
    if integer and int(value) != value:
        errors.append(f"{path}: must be an integer")
        return None
    if positive and value <= 0:
        errors.append(f"{path}: must be positive")
    if nonneg and value < 0:
        errors.append(f"{path}: must be nonnegative")
    return int(value) if integer else float(value)


@dataclass
class ScenarioConfig:
    data: dict
    source: Path | None = field(default=None, compare=False)

    # ---- construction
    @classmethod
    def from_dict(cls, raw: dict, source=None) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigError(["<root>: expected a mapping"])
        unknown = set(raw) - set(DEFAULTS) - {"domain", "grid", "time"}
        errors = [f"{k}: unknown section" for k in sorted(unknown)]
        for req in ("domain", "grid", "time"):
            if req not in raw:
                errors.append(f"{req}: required section missing")
        if errors:
            raise ConfigError(errors)
        data = _merge(DEFAULTS, raw)
        cfg = cls(data, Path(source) if source else None)
        cfg._validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise ConfigError([f"<file>: cannot read {path}: {exc.strerror}"]) from exc
        except yaml.YAMLError as exc:
            raise ConfigError([f"<file>: YAML parse error: {exc}"]) from exc
        return cls.from_dict(raw, path)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dumps(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def with_seed(self, seed: int | None) -> "ScenarioConfig":
        if seed is None:
            return self
        d = self.to_dict()
        d["seed"] = int(seed)
        return ScenarioConfig.from_dict(d, self.source)

    # ---- validation
    def _validate(self) -> None:
        d, errors = self.data, []
        dom = d["domain"]
        a1 = _num(errors, "domain.inner_radius", dom.get("inner_radius", 0.0), nonneg=True)
        a2 = _num(errors, "domain.outer_radius", dom.get("outer_radius"), positive=True)
        if a1 is not None and a2 is not None and a1 >= a2:
            errors.append("domain: inner_radius must be smaller than outer_radius")
        g = d["grid"]
        nr = _num(errors, "grid.n_r", g.get("n_r"), integer=True)
        nt = _num(errors, "grid.n_theta", g.get("n_theta"), integer=True)
        if nr is not None and nr < 8:
            errors.append("grid.n_r: must be >= 8")
        if nt is not None and (nt < 16 or nt % 2):
            errors.append("grid.n_theta: must be an even integer >= 16")
        t = d["time"]
        dt = _num(errors, "time.dt", t.get("dt"), positive=True)
        te = _num(errors, "time.t_end", t.get("t_end"), nonneg=True)
        _num(errors, "time.cadence", t.get("cadence"), positive=True, allow_none=True)
        _num(errors, "time.tail_every_step", t.get("tail_every_step"), nonneg=True, allow_none=True)
        if dt and te and abs(round(te / dt) * dt - te) > 1e-9 * max(1.0, te):
            errors.append("time.t_end: must be a multiple of time.dt")
        try:
            CoefficientSet.from_dict(d["coefficients"])
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"coefficients: {exc}")
        if d["nonlinearity"] != "logistic":
            errors.append("nonlinearity: only 'logistic' is available from configuration")
        ini = d["initial_data"]
        if ini.get("kind") not in INITIAL_KINDS:
            errors.append(f"initial_data.kind: must be one of {', '.join(INITIAL_KINDS)}")
        amp = ini.get("amplitude")
        if not isinstance(amp, (list, tuple)) or len(amp) != 2:
            errors.append("initial_data.amplitude: expected a pair")
        else:
            for i, v in enumerate(amp):
                _num(errors, f"initial_data.amplitude[{i}]", v, nonneg=True)
        _num(errors, "initial_data.width", ini.get("width"), positive=True)
        _num(errors, "initial_data.shift", ini.get("shift"), nonneg=True)
        _num(errors, "initial_data.noise", ini.get("noise"), nonneg=True)
        if ini.get("kind") == "file" and not ini.get("path"):
            errors.append("initial_data.path: required for kind 'file'")
        _num(errors, "direction_index", d["direction_index"], integer=True)
        _num(errors, "seed", d["seed"], integer=True, nonneg=True)
        if d["solver"] not in SOLVERS:
            errors.append(f"solver: must be one of {', '.join(SOLVERS)}")
        diag = d["diagnostics"]
        for key in ("symmetry", "omega", "steady_state", "linear_residual"):
            if not isinstance(diag.get(key), bool):
                errors.append(f"diagnostics.{key}: expected true/false")
        probes = diag.get("probes") or []
        if not isinstance(probes, list):
            errors.append("diagnostics.probes: expected a list")
        else:
            for p in probes:
                if p not in PROBE_NAMES:
                    errors.append(f"diagnostics.probes: unknown probe {p!r}")
        pr = d["probes"]
        for key in ("delta", "window_width", "p_exp", "quotient_lag", "quotient_calibration"):
            _num(errors, f"probes.{key}", pr.get(key), positive=True)
        _num(errors, "probes.quotient_transient", pr.get("quotient_transient"), nonneg=True)
        _num(errors, "probes.window_end", pr.get("window_end"), nonneg=True, allow_none=True)
        taus = pr.get("harnack_taus")
        if not (isinstance(taus, list) and len(taus) == 4 and all(isinstance(x, (int, float)) for x in taus)
                and all(0 <= taus[i] <= taus[i + 1] <= 1 for i in range(3))):
            errors.append("probes.harnack_taus: expected four nondecreasing fractions in [0, 1]")
        tol = d["tolerances"]
        for key, v in tol.items():
            if key not in DEFAULTS["tolerances"]:
                errors.append(f"tolerances.{key}: unknown tolerance")
                continue
            val = _num(errors, f"tolerances.{key}", v, positive=True, allow_none=(key == "cluster"))
            if key == "tail_fraction" and val is not None and val > 1:
                errors.append("tolerances.tail_fraction: must lie in (0, 1]")
        if d["output"].get("snapshots") not in SNAPSHOT_MODES or set(d["output"]) - {"snapshots"}:
            errors.append(f"output.snapshots: must be one of {', '.join(SNAPSHOT_MODES)}")
        if errors:
            raise ConfigError(errors)

    # ---- derived objects
    @property
    def name(self) -> str:
        return str(self.data["name"])

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def domain(self) -> DomainSpec:
        dom = self.data["domain"]
        return DomainSpec(dom.get("inner_radius", 0.0), dom["outer_radius"])

    def grid(self) -> PolarGrid:
        g = self.data["grid"]
        return PolarGrid(self.domain, g["n_r"], g["n_theta"])

    @property
    def direction(self) -> Direction:
        return Direction.grid_aligned(self.data["grid"]["n_theta"], self.data["direction_index"])

    @property
    def coefficients(self) -> CoefficientSet:
        return CoefficientSet.from_dict(self.data["coefficients"])

    def system(self, grid: PolarGrid | None = None) -> CompetitionSystem:
        grid = grid or self.grid()
        return CompetitionSystem(grid, self.coefficients, solver_method=self.data["solver"])

    @property
    def time(self) -> dict:
        return self.data["time"]

    @property
    def tolerances(self) -> dict:
        return self.data["tolerances"]


def _cutoff(grid: PolarGrid) -> np.ndarray:
    a1, a2 = grid.domain.inner_radius, grid.domain.outer_radius
    R = grid.R
    if grid.is_disk:
        c = 1.0 - (R / a2) ** 2
    else:
        c = 4.0 * (R - a1) * (a2 - R) / (a2 - a1) ** 2
    c = np.clip(c, 0.0, None)
    c[grid.boundary_mask] = 0.0
    return c


def shifted_bump_pair(grid: PolarGrid, e: Direction, shift: float, width: float,
                      amplitude=(1.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Gaussians centred at ``+shift*e`` and ``-shift*e`` times a radial cutoff vanishing on ``dB``.

    With equal amplitudes the second field is the reflection of the first.
    """
    cut = _cutoff(grid)
    c = shift * e.vector
    out = []
    for sign, amp in zip((1.0, -1.0), amplitude):
        g = np.exp(-((grid.X - sign * c[0]) ** 2 + (grid.Y - sign * c[1]) ** 2) / width**2)
        f = amp * g * cut
        if grid.is_disk:
            f[0] = f[0, 0]
        out.append(f)
    return out[0], out[1]


def radial_bump(grid: PolarGrid, width: float, amplitude=(1.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    cut = _cutoff(grid)
    mid = 0.5 * (grid.domain.inner_radius + grid.domain.outer_radius) if not grid.is_disk else 0.0
    g = np.exp(-((grid.R - mid) ** 2) / width**2) * cut
    return amplitude[0] * g, amplitude[1] * g.copy()


def initial_data(cfg: ScenarioConfig, grid: PolarGrid | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Initial pair from the configuration; the seeded noise term is clipped to keep data nonnegative."""
    from .fields import read_snapshot_csv

    grid = grid or cfg.grid()
    ini = cfg.data["initial_data"]
    kind = ini["kind"]
    if kind == "shifted_bump_pair":
        u1, u2 = shifted_bump_pair(grid, cfg.direction, ini["shift"], ini["width"], ini["amplitude"])
    elif kind == "radial_bump":
        u1, u2 = radial_bump(grid, ini["width"], ini["amplitude"])
    else:
        path = Path(ini["path"])
        if not path.is_absolute() and cfg.source is not None:
            path = cfg.source.parent / path
        u1, u2 = read_snapshot_csv(path, grid)
    if ini.get("noise"):
        rng = np.random.default_rng(cfg.seed)
        cut = _cutoff(grid)
        noise = ini["noise"] * cut * rng.standard_normal((2,) + grid.shape)
        if grid.is_disk:
            noise[:, 0] = noise[:, 0, :1]
        u1 = np.clip(u1 + noise[0], 0.0, None)
        u2 = np.clip(u2 + noise[1], 0.0, None)
    return u1, u2


def validate_config(path_or_cfg) -> dict:
    """Static checks; never raises. Returns ``{"valid", "errors", "violations", "warnings", "checks"}``."""
    report = {"valid": True, "errors": [], "violations": [], "warnings": [], "checks": {}}
    try:
        cfg = path_or_cfg if isinstance(path_or_cfg, ScenarioConfig) else ScenarioConfig.load(path_or_cfg)
    except ConfigError as exc:
        report["valid"] = False
        report["errors"] = exc.errors
        return report
    grid = cfg.grid()
    t_end = float(cfg.time["t_end"])
    coeffs = cfg.coefficients
    report["violations"].extend(coeffs.check(max(t_end, 1e-12), grid.r))
    bounds = {}
    for name, pair in (("a", coeffs.a), ("b", coeffs.b), ("alpha", coeffs.alpha)):
        for i, c in enumerate(pair, 1):
            bounds[f"{name}_{i}"] = list(coefficient_bounds(c, max(t_end, 1e-12), grid.r))
    report["checks"]["coefficient_bounds"] = bounds
    for i, nl in enumerate(logistic_pair(coeffs), 1):
        f0 = max(abs(float(np.max(np.abs(nl.f(t, grid.R, np.zeros(grid.shape)))))) for t in (0.0, t_end))
        if f0 != 0.0:
            report["violations"].append(f"f_{i}(t, r, 0) != 0")
    report["checks"]["f_zero"] = "pass"
    for i, b in enumerate(coeffs.b, 1):
        if coefficient_bounds(b, max(t_end, 1e-12), grid.r)[0] <= 0:
            report["warnings"].append(f"b_{i} is not bounded below by a positive constant")
    e = cfg.direction
    if not grid.is_node_aligned(e):
        report["violations"].append("direction_index: hypothesis direction is not grid aligned")
    try:
        u1, u2 = initial_data(cfg, grid)
    except (OSError, ValueError) as exc:
        report["valid"] = False
        report["errors"].append(f"initial_data: {exc}")
        return report
    chk = check_reflection_hypothesis(grid, u1, u2, e, cfg.tolerances["hypothesis"])
    report["checks"]["h0"] = {"holds": chk.holds, "strict": chk.strict, "violation": chk.violation,
                              "max_difference": list(chk.max_difference),
                              "direction_angle": e.angle}
    if not chk.holds:
        report["violations"].append(f"(h0) violated by {chk.violation:.3g} on B(e)")
    elif not chk.strict:
        report["warnings"].append("(h0) non-strict: theorem hypothesis requires not-identically-symmetric data")
    if np.min(u1) < 0 or np.min(u2) < 0:
        report["violations"].append("initial data must be nonnegative")
    report["valid"] = not report["errors"] and not report["violations"]
    return report

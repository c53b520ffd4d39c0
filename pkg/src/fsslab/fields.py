"""Grid fields, trajectories, discrete operators and norms.

A scalar field is a plain ``(n_r + 1, n_theta)`` array on a :class:`PolarGrid`;
a stack of fields carries a leading time axis.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .geometry import PolarGrid


def _check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")


def laplacian(grid: PolarGrid, f: np.ndarray) -> np.ndarray:
    """Five-point polar Laplacian ``u_rr + u_r/r + u_phiphi/r**2``.

    The disk origin uses ``4*(mean(ring 1) - u0)/h**2``. Boundary rings are
    left at zero.
    """
    f = np.asarray(f, dtype=float)
    _check_finite(f)
    h, dphi = grid.h, grid.dphi
    r = grid.r[1:-1, None]
    rp, rm = r + h / 2, r - h / 2
    out = np.zeros_like(f)
    fc = f[..., 1:-1, :]
    radial = (rp * (f[..., 2:, :] - fc) - rm * (fc - f[..., :-2, :])) / (r * h * h)
    angular = (np.roll(fc, -1, axis=-1) + np.roll(fc, 1, axis=-1) - 2 * fc) / (r * r * dphi * dphi)
    out[..., 1:-1, :] = radial + angular
    if grid.is_disk:
        lap0 = 4.0 * (f[..., 1, :].mean(axis=-1) - f[..., 0, 0]) / (h * h)
        out[..., 0, :] = np.asarray(lap0)[..., None]
    return out


def normal_derivative(grid: PolarGrid, f: np.ndarray, ring: str = "outer",
                      columns: np.ndarray | None = None) -> np.ndarray:
    """One-sided second-order derivative along the inward normal on a boundary ring.

    ``columns`` optionally restricts the result to a boolean subset of angles.
    """
    f = np.asarray(f, dtype=float)
    h = grid.h
    if ring == "outer":
        d = (-3 * f[-1] + 4 * f[-2] - f[-3]) / (2 * h)
    elif ring == "inner":
        if grid.is_disk:
            raise ValueError("a disk has no inner boundary ring")
        d = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    else:
        raise ValueError(f"unknown ring {ring!r}")
    if columns is not None:
        columns = np.asarray(columns, dtype=bool)
        if columns.shape != (grid.n_theta,):
            raise ValueError("columns must be a boolean mask over the angular nodes")
        d = d[columns]
    return d


class FieldInterpolator:
    """Bicubic spline of a grid field in ``(r, phi)``, periodic in ``phi``."""

    PAD = 4

    def __init__(self, grid: PolarGrid, f: np.ndarray):
        self.grid = grid
        p = self.PAD
        f = np.asarray(f, dtype=float)
        ext = np.concatenate([f[:, -p:], f, f[:, :p]], axis=1)
        phi = grid.dphi * np.arange(-p, grid.n_theta + p)
        self._spline = RectBivariateSpline(grid.r, phi, ext, kx=3, ky=3)

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        r = np.hypot(pts[..., 0], pts[..., 1])
        phi = np.mod(np.arctan2(pts[..., 1], pts[..., 0]), 2 * math.pi)
        return self._spline.ev(r, phi)


def _inside(grid: PolarGrid, pts: np.ndarray, slack: float = 1e-12) -> np.ndarray:
    r = np.hypot(pts[..., 0], pts[..., 1])
    a1, a2 = grid.domain.inner_radius, grid.domain.outer_radius
    return (r <= a2 * (1 + slack)) & (r >= a1 * (1 - slack))


def directional_second_derivative(grid: PolarGrid, f, x, d, rho: float | None = None,
                                  interpolator: FieldInterpolator | None = None) -> tuple[float, float]:
    """One-sided ``d^2 f / d d^2`` at ``x`` from samples ``x + k*rho*d``, k = 0..3.

    Returns ``(value, rho)``; ``rho`` defaults to ``2*h``.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    d = d / np.linalg.norm(d)
    rho = 2.0 * grid.h if rho is None else float(rho)
    pts = x[None, :] + rho * np.arange(4)[:, None] * d[None, :]
    if not np.all(_inside(grid, pts)):
        raise ValueError("insufficient stencil reach: ray leaves the domain before 3*rho")
    interp = interpolator if interpolator is not None else FieldInterpolator(grid, f)
    v = interp(pts)
    return float((2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / rho**2), rho


def directional_derivative(grid: PolarGrid, f, pts, d, eta: float | None = None,
                           interpolator: FieldInterpolator | None = None) -> np.ndarray:
    """Centered first derivative along ``d`` at interior points."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    d = np.asarray(d, dtype=float)
    d = d / np.linalg.norm(d)
    eta = grid.h if eta is None else float(eta)
    interp = interpolator if interpolator is not None else FieldInterpolator(grid, f)
    return (interp(pts + eta * d) - interp(pts - eta * d)) / (2 * eta)


def _time_weights(times: np.ndarray) -> np.ndarray:
    if len(times) == 1:
        return np.ones(1)
    w = np.zeros(len(times))
    dt = np.diff(times)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def region_norm(grid: PolarGrid, values, mask=None, kind: str = "sup", p: float = 2.0,
                times=None, window=None) -> float:
    """Sup or L^p norm of a field (or a time stack of fields) over a node mask.

    L^p uses the polar area weights in space and trapezoidal weights in time.
    """
    values = np.asarray(values, dtype=float)
    mask = np.ones(grid.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty region mask")
    if values.ndim == 2:
        values = values[None]
        times = np.zeros(1)
    elif times is None:
        raise ValueError("a stack of fields needs its times")
    times = np.asarray(times, dtype=float)
    if window is not None:
        sel = (times >= window[0] - 1e-12) & (times <= window[1] + 1e-12)
        values, times = values[sel], times[sel]
    if len(times) == 0:
        raise ValueError("empty time window")
    if kind == "sup":
        return float(np.max(np.abs(values[:, mask])))
    if kind == "l2":
        p = 2.0
    elif kind != "lp":
        raise ValueError(f"unknown norm kind {kind!r}")
    w = grid.area_weights[mask]
    tw = _time_weights(times)
    total = np.sum(tw[:, None] * w[None, :] * np.abs(values[:, mask]) ** p)
    return float(total ** (1.0 / p))


@dataclass(frozen=True)
class RegionNorm:
    mask: np.ndarray
    window: tuple[float, float] | None = None
    kind: str = "sup"
    p: float = 2.0

    def evaluate(self, grid: PolarGrid, values, times=None) -> float:
        return region_norm(grid, values, self.mask, self.kind, self.p, times, self.window)


def holder_seminorm(grid: PolarGrid, values, times, alpha: float, mask=None, window=None,
                    n_pairs: int = 100_000, seed: int = 0, chunk: int = 4096) -> float:
    """Sampled parabolic Hoelder quotient ``|f(x,t)-f(y,s)| / (|x-y|^a + |t-s|^(a/2))``.

    A lower bound on the true seminorm. Pairs are drawn chunk by chunk from
    seed-spawned streams, so a larger budget always extends a smaller one.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if values.ndim == 2:
        values, times = values[None], np.atleast_1d(times).astype(float)
    mask = np.ones(grid.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if window is not None:
        sel = (times >= window[0] - 1e-12) & (times <= window[1] + 1e-12)
        values, times = values[sel], times[sel]
    nodes = np.flatnonzero(mask.ravel())
    if len(nodes) == 0 or len(times) == 0:
        return 0.0
    xs, ys = grid.X.ravel()[nodes], grid.Y.ravel()[nodes]
    flat = values.reshape(len(times), -1)[:, nodes]
    n_nodes, n_t = len(nodes), len(times)
    best = 0.0
    n_chunks = -(-int(n_pairs) // chunk)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    remaining = int(n_pairs)
    for ss in streams:
        k = min(chunk, remaining)
        remaining -= k
        rng = np.random.default_rng(ss)
        i = rng.integers(n_nodes, size=chunk)[:k]
        j = rng.integers(n_nodes, size=chunk)[:k]
        a = rng.integers(n_t, size=chunk)[:k]
        b = rng.integers(n_t, size=chunk)[:k]
        dx = np.hypot(xs[i] - xs[j], ys[i] - ys[j])
        denom = dx**alpha + np.abs(times[a] - times[b]) ** (alpha / 2)
        ok = denom > 0
        if ok.any():
            q = np.abs(flat[a, i] - flat[b, j])[ok] / denom[ok]
            best = max(best, float(q.max()))
    return best


@dataclass
class Trajectory:
    """Snapshots of the pair ``(u1, u2)`` at strictly increasing times."""

    grid: PolarGrid
    times: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.u1 = np.asarray(self.u1, dtype=float)
        self.u2 = np.asarray(self.u2, dtype=float)
        n = len(self.times)
        shape = (n,) + self.grid.shape
        if self.u1.shape != shape or self.u2.shape != shape:
            raise ValueError(f"snapshot stacks must have shape {shape}")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")

    @classmethod
    def from_snapshots(cls, grid, snapshots, meta=None) -> "Trajectory":
        """Build from ``(t, u1, u2)`` triples in any order."""
        snaps = sorted(snapshots, key=lambda s: s[0])
        return cls(grid, [s[0] for s in snaps], np.stack([s[1] for s in snaps]),
                   np.stack([s[2] for s in snaps]), dict(meta or {}))

    def __len__(self) -> int:
        return len(self.times)

    def species(self, i: int) -> np.ndarray:
        return self.u1 if i == 1 else self.u2

    def select(self, idx) -> "Trajectory":
        idx = np.asarray(idx)
        return Trajectory(self.grid, self.times[idx], self.u1[idx], self.u2[idx], dict(self.meta))

    def window(self, t0: float, t1: float) -> "Trajectory":
        sel = np.flatnonzero((self.times >= t0 - 1e-12) & (self.times <= t1 + 1e-12))
        return self.select(sel)


def snapshot_rows(grid: PolarGrid, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Rows ``(r, phi, u1, u2)``, ring-major; the disk origin appears once."""
    start = 1 if grid.is_disk else 0
    cols = [grid.R[start:].ravel(), grid.PHI[start:].ravel(), u1[start:].ravel(), u2[start:].ravel()]
    rows = np.column_stack(cols)
    if grid.is_disk:
        rows = np.vstack([[0.0, 0.0, u1[0, 0], u2[0, 0]], rows])
    return rows


def write_snapshot_csv(path, grid: PolarGrid, u1: np.ndarray, u2: np.ndarray) -> None:
    rows = snapshot_rows(grid, u1, u2)
    np.savetxt(path, rows, delimiter=",", header="r,phi,u1,u2", comments="", fmt="%.17g")


def read_snapshot_csv(path, grid: PolarGrid) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    start = 1 if grid.is_disk else 0
    expected = (grid.n_r + 1 - start) * grid.n_theta + start
    if data.shape != (expected, 4):
        raise ValueError(f"{path}: expected {expected} rows of 4 columns, got {data.shape}")
    out = []
    for col in (2, 3):
        f = np.empty(grid.shape)
        if grid.is_disk:
            f[0] = data[0, col]
            f[1:] = data[1:, col].reshape(grid.n_r, grid.n_theta)
        else:
            f[:] = data[:, col].reshape(grid.shape)
        out.append(f)
    return out[0], out[1]


def snapshot_filename(index: int, t: float) -> str:
    return f"snap_{index:05d}_t{t:.6f}.csv"


def write_trajectory(directory, traj: Trajectory) -> list[dict]:
    """Write one CSV per snapshot plus ``manifest.json``; return the manifest entries."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, t in enumerate(traj.times):
        name = snapshot_filename(i, t)
        write_snapshot_csv(directory / name, traj.grid, traj.u1[i], traj.u2[i])
        entries.append({"file": name, "t": float(t)})
    (directory / "manifest.json").write_text(json.dumps({"snapshots": entries}, indent=1))
    return entries


def read_trajectory(directory, grid: PolarGrid) -> Trajectory:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    snaps = []
    for entry in manifest["snapshots"]:
        u1, u2 = read_snapshot_csv(directory / entry["file"], grid)
        snaps.append((entry["t"], u1, u2))
    return Trajectory.from_snapshots(grid, snaps)

"""Radial planar domains, their polar discretization and reflection geometry.

Fields on a :class:`PolarGrid` are numpy arrays of shape ``(n_r + 1, n_theta)``:
row ``j`` is the ring of radius ``r_j`` and column ``k`` the angle
``phi_k = 2*pi*k/n_theta``. For a disk, row 0 is the single origin node,
stored replicated across all columns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# angular comparisons (x.e > 0, node alignment) are made up to this slack
ANGLE_EPS = 1e-9


@dataclass(frozen=True)
class DomainSpec:
    """Disk ``|x| < A2`` (inner_radius 0) or annulus ``A1 < |x| < A2``."""

    inner_radius: float
    outer_radius: float

    def __post_init__(self):
        a1, a2 = float(self.inner_radius), float(self.outer_radius)
        if not (math.isfinite(a1) and math.isfinite(a2)):
            raise ValueError("domain radii must be finite")
        if not 0.0 <= a1 < a2:
            raise ValueError(f"need 0 <= inner_radius < outer_radius, got ({a1}, {a2})")
        object.__setattr__(self, "inner_radius", a1)
        object.__setattr__(self, "outer_radius", a2)

    @classmethod
    def disk(cls, radius: float = 1.0) -> "DomainSpec":
        return cls(0.0, radius)

    @property
    def kind(self) -> str:
        return "disk" if self.inner_radius == 0.0 else "annulus"

    @property
    def is_disk(self) -> bool:
        return self.inner_radius == 0.0

    @property
    def width(self) -> float:
        return self.outer_radius - self.inner_radius

    def max_delta(self) -> float:
        """Upper end of the admissible boundary-layer width ``delta``.

        Half the radial gap for an annulus, ``A2/2`` for a disk.
        """
        return self.width / 2.0 if not self.is_disk else self.outer_radius / 2.0

    def scaled(self, s: float) -> "DomainSpec":
        return DomainSpec(self.inner_radius * s, self.outer_radius * s)


@dataclass(frozen=True)
class Direction:
    """Unit vector ``e = (cos psi, sin psi)``."""

    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", float(self.angle) % (2 * math.pi))

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        n = np.hypot(v[0], v[1])
        if n == 0:
            raise ValueError("zero vector has no direction")
        return cls(math.atan2(v[1], v[0]))

    @classmethod
    def grid_aligned(cls, n_theta: int, index: int) -> "Direction":
        """Direction at ``index`` half angular steps, ``psi = index*pi/n_theta``.

        Every such direction gives an exact reflection permutation.
        """
        return cls(index * math.pi / n_theta)

    @property
    def vector(self) -> np.ndarray:
        return np.array([math.cos(self.angle), math.sin(self.angle)])

    def __neg__(self) -> "Direction":
        return Direction(self.angle + math.pi)

    def normal(self) -> np.ndarray:
        """Unit vector spanning the line ``H(e)``."""
        return np.array([-math.sin(self.angle), math.cos(self.angle)])


@dataclass(frozen=True)
class CornerFrame:
    point: np.ndarray
    normal: np.ndarray  # inward unit normal of the boundary at point
    s: np.ndarray
    s_tilde: np.ndarray
    ring: str  # "outer" or "inner"


def reflect_point(x, e: Direction) -> np.ndarray:
    """``sigma_e(x) = x - 2 (x.e) e``; works on (..., 2) arrays."""
    x = np.asarray(x, dtype=float)
    ev = e.vector
    return x - 2.0 * (x @ ev)[..., None] * ev


@dataclass(frozen=True)
class ReflectionMap:
    """Angular action of ``sigma_e`` on the grid (identical on every ring).

    ``field o sigma_e`` at column k is ``(1-w[k])*field[:, i0[k]] + w[k]*field[:, i1[k]]``.
    """

    i0: np.ndarray
    i1: np.ndarray
    weight: np.ndarray
    exact: bool

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        if self.exact:
            return values[..., self.i0]
        return (1.0 - self.weight) * values[..., self.i0] + self.weight * values[..., self.i1]

    @property
    def permutation(self) -> np.ndarray:
        if not self.exact:
            raise ValueError("interpolated reflection map is not a permutation")
        return self.i0


@dataclass(frozen=True, eq=False)
class PolarGrid:
    """Uniform polar grid on a :class:`DomainSpec`."""

    domain: DomainSpec
    n_r: int
    n_theta: int
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_r) != self.n_r or self.n_r < 8:
            raise ValueError(f"n_r must be an integer >= 8, got {self.n_r}")
        if int(self.n_theta) != self.n_theta or self.n_theta < 16 or self.n_theta % 2:
            raise ValueError(f"n_theta must be an even integer >= 16, got {self.n_theta}")
        object.__setattr__(self, "n_r", int(self.n_r))
        object.__setattr__(self, "n_theta", int(self.n_theta))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r + 1, self.n_theta)

    @property
    def is_disk(self) -> bool:
        return self.domain.is_disk

    @property
    def h(self) -> float:
        return self.domain.width / self.n_r

    @property
    def dphi(self) -> float:
        return 2 * math.pi / self.n_theta

    @cached_property
    def r(self) -> np.ndarray:
        return self.domain.inner_radius + self.h * np.arange(self.n_r + 1)

    @cached_property
    def phi(self) -> np.ndarray:
        return self.dphi * np.arange(self.n_theta)

    @cached_property
    def R(self) -> np.ndarray:
        return np.repeat(self.r[:, None], self.n_theta, axis=1)

    @cached_property
    def PHI(self) -> np.ndarray:
        return np.repeat(self.phi[None, :], self.n_r + 1, axis=0)

    @cached_property
    def X(self) -> np.ndarray:
        return self.R * np.cos(self.PHI)

    @cached_property
    def Y(self) -> np.ndarray:
        return self.R * np.sin(self.PHI)

    @cached_property
    def points(self) -> np.ndarray:
        return np.stack([self.X, self.Y], axis=-1)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[-1] = True
        if not self.is_disk:
            m[0] = True
        return m

    @cached_property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    @cached_property
    def area_weights(self) -> np.ndarray:
        """Quadrature weights summing to the exact domain area.

        The disk origin carries ``pi*(h/2)**2`` split evenly over its replicas;
        boundary rings carry the half cell on the domain side.
        """
        h, dphi = self.h, self.dphi
        w = np.empty(self.n_r + 1)
        w[1:-1] = self.r[1:-1] * h * dphi
        a2 = self.domain.outer_radius
        w[-1] = (a2 - h / 4) * (h / 2) * dphi
        if self.is_disk:
            w[0] = math.pi * (h / 2) ** 2 / self.n_theta
        else:
            w[0] = (self.domain.inner_radius + h / 4) * (h / 2) * dphi
        return np.repeat(w[:, None], self.n_theta, axis=1)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def evaluate(self, fn) -> np.ndarray:
        """Sample ``fn(x, y)`` at every node (origin replicas get equal values)."""
        values = np.asarray(fn(self.X, self.Y), dtype=float) * np.ones(self.shape)
        if self.is_disk:
            values[0] = values[0, 0]
        return values

    def refined(self, factor: int = 2) -> "PolarGrid":
        return PolarGrid(self.domain, self.n_r * factor, self.n_theta * factor)

    def is_node_aligned(self, e: Direction) -> bool:
        """True iff ``2*psi`` is an integer multiple of the angular step."""
        q = 2 * e.angle / self.dphi
        return abs(q - round(q)) < ANGLE_EPS


def reflection_index_map(grid: PolarGrid, e: Direction) -> ReflectionMap:
    """Column map of ``sigma_e``: angle ``phi`` goes to ``2*psi + pi - phi``."""
    key = ("reflection", round(e.angle, 12))
    cached = grid._cache.get(key)
    if cached is not None:
        return cached
    n = grid.n_theta
    target = (2 * e.angle + math.pi - grid.phi) / grid.dphi
    if grid.is_node_aligned(e):
        i0 = np.mod(np.rint(target).astype(int), n)
        out = ReflectionMap(i0, i0, np.zeros(n), True)
    else:
        base = np.floor(target)
        w = target - base
        i0 = np.mod(base.astype(int), n)
        out = ReflectionMap(i0, np.mod(i0 + 1, n), w, False)
    grid._cache[key] = out
    return out


def half_domain_mask(grid: PolarGrid, e: Direction) -> np.ndarray:
    """Nodes with ``x.e > 0`` (boundary rings included, origin excluded)."""
    c = np.cos(grid.phi - e.angle)
    col = c > ANGLE_EPS
    m = np.repeat(col[None, :], grid.n_r + 1, axis=0)
    if grid.is_disk:
        m[0] = False
    return m


def corner_frames(grid: PolarGrid, e: Direction) -> list[CornerFrame]:
    """Frames at the points of ``dB`` lying on ``H(e)``: 2 for a disk, 4 for an annulus."""
    ev = e.vector
    t = e.normal()
    rings = [("outer", grid.domain.outer_radius, -1.0)]
    if not grid.is_disk:
        rings.append(("inner", grid.domain.inner_radius, 1.0))
    frames = []
    for name, radius, sgn in rings:
        for side in (1.0, -1.0):
            p = side * radius * t
            nu = sgn * side * t
            s = (nu + ev) / math.sqrt(2)
            st = (-nu + ev) / math.sqrt(2)
            frames.append(CornerFrame(p, nu, s, st, name))
    return frames


def boundary_distance(grid: PolarGrid) -> np.ndarray:
    d = grid.domain.outer_radius - grid.R
    if not grid.is_disk:
        d = np.minimum(d, grid.R - grid.domain.inner_radius)
    return np.maximum(d, 0.0)


def boundary_neighborhood(grid: PolarGrid, delta: float) -> np.ndarray:
    """Mask of ``[dB]_delta = {x : dist(x, dB) <= delta}``."""
    return boundary_distance(grid) <= delta + 1e-12 * grid.domain.outer_radius


def distance_to_points(grid: PolarGrid, pts) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    d = np.full(grid.shape, np.inf)
    for p in pts:
        d = np.minimum(d, np.hypot(grid.X - p[0], grid.Y - p[1]))
    return d


def distance_to_hyperplane_part(grid: PolarGrid, e: Direction) -> np.ndarray:
    """Distance from each node to the flat piece ``H(e) & closure(B)``."""
    t = e.normal()
    s = grid.X * t[0] + grid.Y * t[1]  # coordinate along H(e)
    off = np.abs(grid.X * e.vector[0] + grid.Y * e.vector[1])
    a1, a2 = grid.domain.inner_radius, grid.domain.outer_radius
    # nearest point of the segment(s) {s' : a1 <= |s'| <= a2}
    sc = np.clip(np.abs(s), a1, a2)
    return np.hypot(off, np.abs(s) - sc)


def half_domain_boundary_distance(grid: PolarGrid, e: Direction) -> np.ndarray:
    """``dist(x, dB(e))`` where ``dB(e)`` is the curved part plus the flat part on H(e)."""
    return np.minimum(boundary_distance(grid), distance_to_hyperplane_part(grid, e))


def corner_distance(grid: PolarGrid, e: Direction) -> np.ndarray:
    """``dist(x, dB & H(e))``."""
    return distance_to_points(grid, [f.point for f in corner_frames(grid, e)])

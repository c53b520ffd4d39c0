"""Competitive reaction-diffusion system on a polar grid.

    (u_i)_t - Lap u_i = f_i(t, |x|, u_i) - alpha_i(|x|, t) u_1 u_2,   u_i = 0 on dB

Time stepping is IMEX: the reaction is explicit (coefficients sampled at the
half step), the diffusion is backward Euler with zero Dirichlet rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import Trajectory, laplacian
from .geometry import Direction, PolarGrid, reflection_index_map


class SolverError(RuntimeError):
    """Linear solve failure, step-size violation or blowup."""


# ---------------------------------------------------------------- coefficients

@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t, r=None):
        return self.value if r is None else np.full(np.shape(r), self.value, dtype=float)

    def to_dict(self) -> dict:
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class Sinusoid:
    """``offset + amplitude * sin(omega * t + phase)``."""

    offset: float
    amplitude: float
    omega: float = 1.0
    phase: float = 0.0

    def __call__(self, t, r=None):
        v = self.offset + self.amplitude * math.sin(self.omega * t + self.phase)
        return v if r is None else np.full(np.shape(r), v, dtype=float)

    def to_dict(self) -> dict:
        return {"kind": "sinusoid", "offset": self.offset, "amplitude": self.amplitude,
                "omega": self.omega, "phase": self.phase}


@dataclass(frozen=True)
class RadialProduct:
    """``g(r) * h(t)`` with ``g`` a polynomial in ``r`` (coefficients lowest first)."""

    radial: tuple[float, ...]
    temporal: "Coefficient" = Constant(1.0)

    def __post_init__(self):
        object.__setattr__(self, "radial", tuple(float(c) for c in self.radial))

    def profile(self, r):
        return np.polynomial.polynomial.polyval(r, self.radial)

    def __call__(self, t, r=None):
        if r is None:
            raise ValueError("radially modulated coefficient needs r")
        return self.profile(np.asarray(r, dtype=float)) * self.temporal(t)

    def to_dict(self) -> dict:
        return {"kind": "radial_product", "radial": list(self.radial),
                "temporal": self.temporal.to_dict()}


Coefficient = Constant | Sinusoid | RadialProduct


def coefficient_from_dict(d) -> Coefficient:
    if isinstance(d, (int, float)):
        return Constant(float(d))
    kind = d.get("kind")
    if kind == "constant":
        return Constant(float(d["value"]))
    if kind == "sinusoid":
        return Sinusoid(float(d["offset"]), float(d["amplitude"]),
                        float(d.get("omega", 1.0)), float(d.get("phase", 0.0)))
    if kind == "radial_product":
        return RadialProduct(tuple(d["radial"]), coefficient_from_dict(d.get("temporal", 1.0)))
    raise ValueError(f"unknown coefficient kind {kind!r}")


def coefficient_bounds(c: Coefficient, t_max: float, radii=None, n_t: int = 2001) -> tuple[float, float]:
    """(inf, sup) of a coefficient over ``[0, t_max]`` and the given radii."""
    if isinstance(c, Constant):
        return c.value, c.value
    if isinstance(c, Sinusoid):
        if c.omega * t_max >= 2 * math.pi:
            a = abs(c.amplitude)
            return c.offset - a, c.offset + a
    ts = np.linspace(0.0, max(t_max, 0.0), n_t)
    if isinstance(c, RadialProduct):
        radii = np.linspace(0.0, 1.0, 65) if radii is None else np.asarray(radii, dtype=float)
        g = c.profile(radii)
        h = np.array([c.temporal(t) for t in ts])
        vals = np.outer(h, g)
    else:
        vals = np.array([c(t) for t in ts])
    return float(vals.min()), float(vals.max())


@dataclass(frozen=True)
class CoefficientSet:
    """Per-species growth ``a_i(t)``, self-limitation ``b_i(t)`` and coupling ``alpha_i(r, t)``."""

    a: tuple[Coefficient, Coefficient]
    b: tuple[Coefficient, Coefficient]
    alpha: tuple[Coefficient, Coefficient]
    competitive: bool = True

    @classmethod
    def constant(cls, a=(1.0, 1.0), b=(1.0, 1.0), alpha=(1.0, 1.0), competitive=True):
        return cls(tuple(map(Constant, a)), tuple(map(Constant, b)),
                   tuple(map(Constant, alpha)), competitive)

    def alpha_at(self, i: int, t: float, r: np.ndarray) -> np.ndarray:
        c = self.alpha[i - 1]
        return c(t, r)

    def check(self, t_max: float, radii=None) -> list[str]:
        """Hypothesis violations over ``[0, t_max]`` (empty list if none)."""
        issues = []
        for i in (0, 1):
            lo, hi = coefficient_bounds(self.alpha[i], t_max, radii)
            if self.competitive and lo <= 0:
                issues.append(f"(h2) floor: alpha_{i + 1} reaches {lo:.6g} <= 0")
            for name, c in (("a", self.a[i]), ("b", self.b[i]), ("alpha", self.alpha[i])):
                lo, hi = coefficient_bounds(c, t_max, radii)
                if not (math.isfinite(lo) and math.isfinite(hi)):
                    issues.append(f"{name}_{i + 1} unbounded")
        return issues

    def to_dict(self) -> dict:
        return {"a": [c.to_dict() for c in self.a], "b": [c.to_dict() for c in self.b],
                "alpha": [c.to_dict() for c in self.alpha], "competitive": self.competitive}

    @classmethod
    def from_dict(cls, d) -> "CoefficientSet":
        def pair(key):
            v = d[key]
            if not isinstance(v, (list, tuple)):
                v = [v, v]
            if len(v) != 2:
                raise ValueError(f"coefficients.{key} needs one entry per species")
            return tuple(coefficient_from_dict(x) for x in v)
        return cls(pair("a"), pair("b"), pair("alpha"), bool(d.get("competitive", True)))


# --------------------------------------------------------------- nonlinearity

@dataclass(frozen=True)
class Logistic:
    """``f(t, r, v) = a(t) v - b(t) v**2``."""

    a: Coefficient
    b: Coefficient

    def f(self, t, r, v):
        return self.a(t, r) * v - self.b(t, r) * v * v

    def dfdv(self, t, r, v):
        return self.a(t, r) - 2.0 * self.b(t, r) * v

    def dfdv_bound(self, t_max: float, v_max: float, radii=None) -> float:
        alo, ahi = coefficient_bounds(self.a, t_max, radii)
        blo, bhi = coefficient_bounds(self.b, t_max, radii)
        corners = [abs(a - 2 * b * v) for a in (alo, ahi) for b in (blo, bhi) for v in (0.0, v_max)]
        return max(corners)


@dataclass(frozen=True)
class CustomNonlinearity:
    """User-supplied ``f(t, r, v)`` and ``df/dv``; accepted as given, not certified."""

    fn: Callable
    dfn: Callable

    def f(self, t, r, v):
        return self.fn(t, r, v)

    def dfdv(self, t, r, v):
        return self.dfn(t, r, v)

    def dfdv_bound(self, t_max: float, v_max: float, radii=None) -> float:
        radii = np.linspace(0.0, 1.0, 9) if radii is None else np.asarray(radii)
        vs = np.linspace(0.0, v_max, 65)
        best = 0.0
        for t in np.linspace(0.0, t_max, 201):
            rr, vv = np.meshgrid(radii, vs)
            best = max(best, float(np.max(np.abs(self.dfn(t, rr, vv)))))
        return best


def logistic_pair(coeffs: CoefficientSet) -> tuple[Logistic, Logistic]:
    return Logistic(coeffs.a[0], coeffs.b[0]), Logistic(coeffs.a[1], coeffs.b[1])


# --------------------------------------------------------------- diffusion solve

def assemble_laplacian(grid: PolarGrid):
    """Sparse polar Laplacian on the unknowns plus the diagonal area weights.

    Unknowns are the interior rings (and the single origin node for a disk).
    ``diag(w) @ L`` is symmetric. Returns ``(L, w, pack, unpack)``.
    """
    n, m = grid.n_r, grid.n_theta
    h, dphi = grid.h, grid.dphi
    disk = grid.is_disk
    off = 1 if disk else 0
    nun = off + (n - 1) * m

    def idx(j, k):
        return off + (j - 1) * m + k

    rows, cols, vals = [], [], []
    w = np.empty(nun)
    k = np.arange(m)
    for j in range(1, n):
        rj = grid.r[j]
        rp, rm = rj + h / 2, rj - h / 2
        me = idx(j, k)
        w[me] = rj * h * dphi
        rows += [me]; cols += [me]
        vals += [np.full(m, -(rp + rm) / (rj * h * h) - 2.0 / (rj * rj * dphi * dphi))]
        for kk in (-1, 1):
            rows += [me]; cols += [idx(j, (k + kk) % m)]
            vals += [np.full(m, 1.0 / (rj * rj * dphi * dphi))]
        if j + 1 < n:
            rows += [me]; cols += [idx(j + 1, k)]; vals += [np.full(m, rp / (rj * h * h))]
        if j - 1 >= 1:
            rows += [me]; cols += [idx(j - 1, k)]; vals += [np.full(m, rm / (rj * h * h))]
        elif disk:
            rows += [me]; cols += [np.zeros(m, dtype=int)]; vals += [np.full(m, rm / (rj * h * h))]
    if disk:
        w[0] = math.pi * (h / 2) ** 2
        rows += [np.zeros(1, dtype=int), np.zeros(m, dtype=int)]
        cols += [np.zeros(1, dtype=int), idx(1, k)]
        vals += [np.array([-4.0 / (h * h)]), np.full(m, 4.0 / (h * h * m))]
    L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nun, nun))

    def pack(f):
        body = f[1:-1].reshape(-1)
        return np.concatenate([[f[0, 0]], body]) if disk else body

    def unpack(x):
        f = np.zeros(grid.shape)
        if disk:
            f[0] = x[0]
        f[1:-1] = x[off:].reshape(n - 1, m)
        return f

    return L, w, pack, unpack


class DiffusionSolver:
    """Solves ``(I - dt*Lap_h) u = rhs`` with zero Dirichlet rings.

    ``method``: ``"fft"`` (angular DFT + per-mode tridiagonal, direct),
    ``"cg"`` (Jacobi-preconditioned CG on the area-weighted symmetric form) or
    ``"splu"`` (sparse LU).
    """

    def __init__(self, grid: PolarGrid, dt: float, method: str = "fft",
                 rtol: float = 1e-10, maxiter: int | None = None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.grid, self.dt, self.method = grid, float(dt), method
        self.rtol = rtol
        self.iterations = 0
        self.last_residual = 0.0
        if method == "fft":
            self._setup_fft()
        elif method in ("cg", "splu"):
            L, w, self._pack, self._unpack = assemble_laplacian(grid)
            W = sp.diags(w)
            self._A = (W - self.dt * (W @ L)).tocsr()
            self._A = ((self._A + self._A.T) * 0.5).tocsr()
            self._w = w
            self.maxiter = maxiter if maxiter is not None else 10 * len(w)
            if method == "splu":
                self._lu = spla.splu(self._A.tocsc())
            else:
                self._pre = sp.diags(1.0 / self._A.diagonal())
        else:
            raise ValueError(f"unknown solver method {method!r}")

    def _setup_fft(self):
        g, dt = self.grid, self.dt
        n, m = g.n_r, g.n_theta
        h, dphi = g.h, g.dphi
        modes = np.arange(m // 2 + 1)
        lam = (4.0 / dphi**2) * np.sin(modes * dphi / 2) ** 2
        r = g.r[1:n]
        rp, rm = r + h / 2, r - h / 2
        nm = len(modes)
        off = 1 if g.is_disk else 0
        size = off + n - 1
        a = np.zeros((size, nm))
        b = np.zeros((size, nm))
        c = np.zeros((size, nm))
        b[off:] = 1.0 + dt * ((rp + rm) / (r * h * h))[:, None] + dt * lam[None, :] / (r * r)[:, None]
        a[off:] = -dt * (rm / (r * h * h))[:, None]
        c[off:] = -dt * (rp / (r * h * h))[:, None]
        c[-1] = 0.0
        if g.is_disk:
            b[0] = 1.0
            b[0, 0] = 1.0 + 4.0 * dt / (h * h)
            c[0, 0] = -4.0 * dt / (h * h)
            a[1, 1:] = 0.0  # origin carries no nonzero angular mode
        else:
            a[0] = 0.0
        # Thomas factorization, shared by every right-hand side
        cp = np.zeros_like(c)
        den = np.zeros_like(b)
        den[0] = b[0]
        cp[0] = c[0] / den[0]
        for i in range(1, size):
            den[i] = b[i] - a[i] * cp[i - 1]
            cp[i] = c[i] / den[i]
        self._tri = (a, cp, den)
        self._off = off

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        g = self.grid
        if self.method == "fft":
            a, cp, den = self._tri
            off = self._off
            F = np.fft.rfft(rhs[1:-1], axis=-1)
            if off:
                F = np.vstack([np.zeros((1, F.shape[1]), dtype=complex), F])
                F[0, 0] = g.n_theta * rhs[0, 0]
            size = F.shape[0]
            y = np.empty_like(F)
            y[0] = F[0] / den[0]
            for i in range(1, size):
                y[i] = (F[i] - a[i] * y[i - 1]) / den[i]
            for i in range(size - 2, -1, -1):
                y[i] -= cp[i] * y[i + 1]
            out = np.zeros(g.shape)
            out[1:-1] = np.fft.irfft(y[off:], n=g.n_theta, axis=-1)
            if off:
                out[0] = y[0, 0].real / g.n_theta
            return out
        bvec = self._w * self._pack(rhs)
        if self.method == "splu":
            x = self._lu.solve(bvec)
        else:
            count = [0]

            def cb(_):
                count[0] += 1
            x0 = self._pack(rhs)
            x, info = spla.cg(self._A, bvec, x0=x0, rtol=self.rtol, atol=0.0,
                              maxiter=self.maxiter, M=self._pre, callback=cb)
            self.iterations += count[0]
            res = float(np.linalg.norm(self._A @ x - bvec) / max(np.linalg.norm(bvec), 1e-300))
            self.last_residual = res
            if info != 0:
                raise SolverError(f"CG did not converge in {self.maxiter} iterations "
                                  f"(relative residual {res:.3e})")
        return self._unpack(x)


# ------------------------------------------------------------------ system

@dataclass
class SystemState:
    u1: np.ndarray
    u2: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class LinearizedCoefficients:
    """Coefficients of the reflection-difference system at one time (full grid)."""

    c11: np.ndarray
    c12: np.ndarray
    c21: np.ndarray
    c22: np.ndarray
    direction: Direction
    t: float


@dataclass
class CompetitionSystem:
    """Grid, coefficients and nonlinearities of one two-species problem."""

    grid: PolarGrid
    coeffs: CoefficientSet
    nonlin: tuple = None
    solver_method: str = "fft"
    _solvers: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.nonlin is None:
            self.nonlin = logistic_pair(self.coeffs)

    def reaction(self, u1, u2, t):
        return reaction_eval(self, SystemState(u1, u2, t))

    def solver(self, dt: float) -> DiffusionSolver:
        key = round(float(dt), 15)
        if key not in self._solvers:
            self._solvers[key] = DiffusionSolver(self.grid, dt, self.solver_method)
        return self._solvers[key]

    def u_bound(self, u1_0, u2_0, t_max: float) -> float:
        """Invariant-region bound ``max(|u0|, sup a / inf b)`` for logistic kinetics."""
        m = max(float(np.max(np.abs(u1_0))), float(np.max(np.abs(u2_0))))
        radii = self.grid.r
        for nl in self.nonlin:
            if isinstance(nl, Logistic):
                ahi = coefficient_bounds(nl.a, t_max, radii)[1]
                blo = coefficient_bounds(nl.b, t_max, radii)[0]
                if blo > 0:
                    m = max(m, ahi / blo)
                else:
                    m = max(m, 10 * m)
        return m

    def dt_max(self, u_bound: float, t_max: float) -> float:
        radii = self.grid.r
        dfv = max(nl.dfdv_bound(t_max, u_bound, radii) for nl in self.nonlin)
        amax = max(max(abs(x) for x in coefficient_bounds(c, t_max, radii)) for c in self.coeffs.alpha)
        rate = dfv + amax * u_bound
        return math.inf if rate == 0 else 0.5 / rate


def reaction_eval(system: CompetitionSystem, state: SystemState):
    """Pointwise ``(f1(u1) - alpha1 u1 u2, f2(u2) - alpha2 u1 u2)``."""
    R, t = system.grid.R, state.t
    u1, u2 = state.u1, state.u2
    f1, f2 = system.nonlin
    prod = u1 * u2
    r1 = f1.f(t, R, u1) - system.coeffs.alpha_at(1, t, R) * prod
    r2 = f2.f(t, R, u2) - system.coeffs.alpha_at(2, t, R) * prod
    return r1, r2


def step(system: CompetitionSystem, state: SystemState, dt: float,
         dt_limit: float | None = None) -> SystemState:
    """One IMEX step from ``t`` to ``t + dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt_limit is not None and dt > dt_limit * (1 + 1e-12):
        raise SolverError(f"dt={dt:g} exceeds the reaction stability bound {dt_limit:g}")
    r1, r2 = reaction_eval(system, SystemState(state.u1, state.u2, state.t + dt / 2))
    solver = system.solver(dt)
    u1 = solver.solve(state.u1 + dt * r1)
    u2 = solver.solve(state.u2 + dt * r2)
    return SystemState(u1, u2, state.t + dt)


def simulate(system: CompetitionSystem, u1_0, u2_0, t_end: float, dt: float,
             cadence: float | None = None, t0: float = 0.0, blowup: float = 1e6,
             check_dt: bool = True, tail_every_step: float | None = None) -> Trajectory:
    """Integrate to ``t_end`` and record snapshots every ``cadence`` time units.

    ``tail_every_step`` additionally records every step once ``t >= tail_every_step``.
    Metadata records the largest negative undershoot and solver statistics.
    """
    grid = system.grid
    u1 = np.array(u1_0, dtype=float)
    u2 = np.array(u2_0, dtype=float)
    for u in (u1, u2):
        if u.shape != grid.shape:
            raise ValueError(f"initial data must have shape {grid.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("initial data contains non-finite values")
        if np.max(np.abs(u[grid.boundary_mask])) > 0:
            raise ValueError("initial data must vanish on the Dirichlet boundary")
        if grid.is_disk and np.ptp(u[0]) > 0:
            raise ValueError("origin replicas must agree")
    if system.coeffs.competitive and (u1.min() < 0 or u2.min() < 0):
        raise ValueError("competitive mode requires nonnegative initial data")
    n_steps = int(round((t_end - t0) / dt)) if t_end > t0 else 0
    if n_steps and abs(n_steps * dt - (t_end - t0)) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end - t0 must be a multiple of dt")
    every = n_steps if cadence is None else max(1, int(round(cadence / dt)))
    ubound = system.u_bound(u1, u2, t_end)
    dt_lim = system.dt_max(ubound, t_end) if check_dt else None
    times, s1, s2 = [t0], [u1.copy()], [u2.copy()]
    state = SystemState(u1, u2, t0)
    undershoot = 0.0
    for n in range(1, n_steps + 1):
        state = step(system, state, dt, dt_lim)
        state.t = t0 + n * dt
        sup = max(np.max(np.abs(state.u1)), np.max(np.abs(state.u2)))
        if not np.isfinite(sup) or sup > blowup:
            raise SolverError(f"blowup guard tripped at t={state.t:g} (sup norm {sup:.3g})")
        undershoot = max(undershoot, -float(state.u1.min()), -float(state.u2.min()))
        record = n % every == 0 or n == n_steps
        if tail_every_step is not None and state.t >= tail_every_step - 1e-12:
            record = True
        if record:
            times.append(state.t)
            s1.append(state.u1.copy())
            s2.append(state.u2.copy())
    solver = system.solver(dt) if n_steps else None
    meta = {
        "dt": dt, "n_steps": n_steps, "h": grid.h, "undershoot": undershoot,
        "u_bound": ubound, "dt_max": dt_lim,
        "solver": system.solver_method,
        "solver_iterations": solver.iterations if solver else 0,
    }
    return Trajectory(grid, times, np.stack(s1), np.stack(s2), meta)


def tol_neg(dt: float, h: float, scale: float) -> float:
    """Tolerated negative undershoot ``10*(dt + h**2)*scale``."""
    return 10.0 * (dt + h * h) * scale


# ------------------------------------------------------------ linearization

_GAUSS = {}


def _gauss01(n: int):
    if n not in _GAUSS:
        x, w = np.polynomial.legendre.leggauss(n)
        _GAUSS[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GAUSS[n]


def linearized_coefficients(system: CompetitionSystem, u1, u2, t: float, e: Direction,
                            quadrature_n: int = 4) -> LinearizedCoefficients:
    """Coefficients ``c_ij`` with ``(u^e)_t - Lap u^e = C u^e`` for the reflection differences.

    ``c12 = alpha_1 u1``, ``c21 = alpha_2 u2``, ``c_ii = chat_i - alpha_i (u_j o sigma_e)``
    where ``chat_i`` averages ``df_i/dv`` over the segment between ``u_i`` and ``u_i o sigma_e``.
    """
    grid = system.grid
    refl = reflection_index_map(grid, e)
    R = grid.R
    s, w = _gauss01(quadrature_n)
    u = (np.asarray(u1, float), np.asarray(u2, float))
    us = (refl.apply(u[0]), refl.apply(u[1]))
    chat = []
    for i in (0, 1):
        acc = np.zeros(grid.shape)
        for sq, wq in zip(s, w):
            acc += wq * system.nonlin[i].dfdv(t, R, sq * u[i] + (1 - sq) * us[i])
        chat.append(acc)
    a1 = system.coeffs.alpha_at(1, t, R)
    a2 = system.coeffs.alpha_at(2, t, R)
    return LinearizedCoefficients(
        c11=chat[0] - a1 * us[1], c12=a1 * u[0],
        c21=a2 * u[1], c22=chat[1] - a2 * us[0],
        direction=e, t=t)


def reflection_differences(grid: PolarGrid, u1, u2, e: Direction):
    """``(u1 - u1 o sigma_e, u2 o sigma_e - u2)``; works on stacks too."""
    refl = reflection_index_map(grid, e)
    return u1 - refl.apply(u1), refl.apply(u2) - u2


def linear_residual(system: CompetitionSystem, traj: Trajectory, e: Direction,
                    quadrature_n: int = 4):
    """Sup over ``B(e)`` of the defect of the linearized difference system.

    Uses centered time differences on snapshots, so the first and last
    snapshots get no value. Returns ``(times, res1, res2)``.
    """
    if len(traj) < 3:
        raise ValueError("linear_residual needs at least 3 snapshots")
    from .geometry import half_domain_mask
    grid = system.grid
    mask = half_domain_mask(grid, e) & grid.interior_mask
    d1, d2 = reflection_differences(grid, traj.u1, traj.u2, e)
    out_t, r1s, r2s = [], [], []
    for n in range(1, len(traj) - 1):
        t = traj.times[n]
        span = traj.times[n + 1] - traj.times[n - 1]
        dt1 = (d1[n + 1] - d1[n - 1]) / span
        dt2 = (d2[n + 1] - d2[n - 1]) / span
        c = linearized_coefficients(system, traj.u1[n], traj.u2[n], t, e, quadrature_n)
        res1 = dt1 - laplacian(grid, d1[n]) - c.c11 * d1[n] - c.c12 * d2[n]
        res2 = dt2 - laplacian(grid, d2[n]) - c.c21 * d1[n] - c.c22 * d2[n]
        out_t.append(t)
        r1s.append(float(np.max(np.abs(res1[mask]))))
        r2s.append(float(np.max(np.abs(res2[mask]))))
    return np.array(out_t), np.array(r1s), np.array(r2s)

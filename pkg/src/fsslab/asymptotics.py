"""Limit-profile extraction, radial steady states and the principal Dirichlet eigenpair."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .fields import Trajectory
from .geometry import DomainSpec, PolarGrid


class ConvergenceError(RuntimeError):
    pass


def radial_operator(domain: DomainSpec, n_r: int):
    """Angular-mode-0 polar Laplacian on the free radial nodes.

    Returns ``(L, r_free, r_all, w)``; ``w * L`` is symmetric. For a disk the
    origin is the first unknown and uses ``4*(z1 - z0)/h**2``.
    """
    h = domain.width / n_r
    r_all = domain.inner_radius + h * np.arange(n_r + 1)
    disk = domain.is_disk
    idx = np.arange(0 if disk else 1, n_r)
    r = r_all[idx]
    n = len(idx)
    main = np.zeros(n)
    lo = np.zeros(n - 1)
    up = np.zeros(n - 1)
    w = np.zeros(n)
    start = 0
    if disk:
        main[0] = -4.0 / h**2
        up[0] = 4.0 / h**2
        w[0] = h * h / 8.0
        start = 1
    for i in range(start, n):
        rj = r[i]
        rp, rm = rj + h / 2, rj - h / 2
        main[i] = -(rp + rm) / (rj * h * h)
        if i + 1 < n:
            up[i] = rp / (rj * h * h)
        if i - 1 >= 0:
            lo[i - 1] = rm / (rj * h * h)
        w[i] = rj * h
    L = sp.diags([lo, main, up], [-1, 0, 1], format="csc")
    return L, r, r_all, w


def _embed(domain: DomainSpec, n_r: int, z_free: np.ndarray) -> np.ndarray:
    z = np.zeros(n_r + 1)
    if domain.is_disk:
        z[:n_r] = z_free
    else:
        z[1:n_r] = z_free
    return z


@dataclass(frozen=True)
class EigenPair:
    eigenvalue: float
    r: np.ndarray
    phi: np.ndarray  # sup-normalized, positive in the interior
    raw_eigenvalue: float
    iterations: int


def principal_eigenpair(domain: DomainSpec, n_r: int, tol: float = 1e-12, maxiter: int = 10_000,
                        richardson: bool = False) -> EigenPair:
    """Inverse power iteration on the radial Dirichlet Laplacian.

    With ``richardson=True`` the eigenvalue is extrapolated from ``n_r`` and
    ``n_r // 2`` as ``(4*lam_h - lam_2h) / 3``.
    """
    L, r_free, r_all, w = radial_operator(domain, n_r)
    A = (-L).tocsc()
    lu = spla.splu(A)
    x = np.ones(A.shape[0])
    lam_prev = np.inf
    for it in range(1, maxiter + 1):
        x = lu.solve(x)
        x /= np.max(np.abs(x))
        lam = float(x @ (w * (A @ x)) / (x @ (w * x)))
        if abs(lam - lam_prev) < tol * abs(lam):
            break
        lam_prev = lam
    else:
        raise ConvergenceError(f"inverse iteration did not converge in {maxiter} iterations")
    phi = _embed(domain, n_r, x)
    if phi[np.argmax(np.abs(phi))] < 0:
        phi = -phi
    phi /= phi.max()
    value = lam
    if richardson:
        coarse = principal_eigenpair(domain, n_r // 2, tol, maxiter).eigenvalue
        value = (4.0 * lam - coarse) / 3.0
    return EigenPair(value, r_all, phi, lam, it)


@dataclass(frozen=True)
class SteadyProfile:
    r: np.ndarray
    z: np.ndarray
    residual: float
    positive: bool
    subcritical: bool = False
    newton_iterations: int = 0

    def lift(self, grid: PolarGrid) -> np.ndarray:
        return lift_radial(grid, self.r, self.z)

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.r, self.z]), delimiter=",",
                   header="r,z", comments="", fmt="%.17g")


def lift_radial(grid: PolarGrid, r: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Radial profile evaluated on every grid node (cubic spline in r)."""
    if len(r) == len(grid.r) and np.allclose(r, grid.r):
        vals = np.asarray(z, dtype=float)
    else:
        vals = CubicSpline(r, z)(grid.r)
    out = np.repeat(vals[:, None], grid.n_theta, axis=1)
    out[grid.boundary_mask] = 0.0
    return out


def radial_steady_state(a: float, b: float, domain: DomainSpec, n_r: int, tol: float = 1e-11,
                        max_iter: int = 60) -> SteadyProfile:
    """Nonnegative solution of ``z'' + z'/r + a z - b z**2 = 0`` with Dirichlet data.

    Damped Newton from ``max(0, (a - lam1)/b) * phi1``; a few rescaled
    restarts are tried before giving up. ``a <= lam1`` gives the zero profile.
    """
    if b <= 0:
        raise ValueError("b must be positive")
    eig = principal_eigenpair(domain, n_r)
    L, r_free, r_all, w = radial_operator(domain, n_r)
    if a <= eig.eigenvalue:
        return SteadyProfile(r_all, np.zeros(n_r + 1), 0.0, False, True, 0)
    phi = eig.phi[:n_r] if domain.is_disk else eig.phi[1:n_r]

    def F(z):
        return L @ z + a * z - b * z * z

    base = (a - eig.eigenvalue) / b
    for scale in (1.0, 2.0, 0.5, 4.0, a / (b * max(base, 1e-12))):
        z = scale * base * phi
        res = np.max(np.abs(F(z)))
        for it in range(1, max_iter + 1):
            J = (L + sp.diags(a - 2 * b * z)).tocsc()
            dz = spla.spsolve(J, -F(z))
            lam = 1.0
            while lam > 1e-4:
                trial = z + lam * dz
                tres = np.max(np.abs(F(trial)))
                if tres < (1 - 1e-4 * lam) * res:
                    break
                lam /= 2
            z, res = trial, tres
            if res < tol * max(1.0, a * a / b):
                break
        else:
            continue
        if z.min() > 0:
            zz = _embed(domain, n_r, z)
            return SteadyProfile(r_all, zz, float(res), True, False, it)
    raise ConvergenceError("Newton failed to find a positive radial steady state")


# --------------------------------------------------------- limit profiles

@dataclass
class LimitProfileSet:
    times: list[float]
    profiles: list[tuple[np.ndarray, np.ndarray]]
    cluster_radius: list[float]
    members: list[list[float]]
    convergence_indicator: float
    classification: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.profiles)

    def summary(self) -> dict:
        return {
            "n_representatives": len(self.profiles),
            "representative_times": [float(t) for t in self.times],
            "cluster_radius": [float(x) for x in self.cluster_radius],
            "convergence_indicator": float(self.convergence_indicator),
            "classification": list(self.classification),
        }


def _sup_distance(a1, a2, b1, b2) -> float:
    return max(float(np.max(np.abs(a1 - b1))), float(np.max(np.abs(a2 - b2))))


def default_cluster_tol(traj: Trajectory) -> float:
    """Ten times the scheme error estimate ``(dt + h**2) * max(1, |u|)``."""
    dt = float(traj.meta.get("dt", 0.0))
    h = traj.grid.h
    scale = max(1.0, float(np.max(np.abs(traj.u1))), float(np.max(np.abs(traj.u2))))
    return 10.0 * (dt + h * h) * scale


def extract_limit_profiles(traj: Trajectory, tail_fraction: float = 0.2, cluster_tol: float | None = None,
                           extinction_tol: float = 1e-4, min_snapshots: int = 8) -> LimitProfileSet:
    """Greedy sup-distance clustering of the tail snapshots, latest first.

    Each cluster is represented by its latest member.
    """
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    t0, t1 = traj.times[0], traj.times[-1]
    start = t1 - tail_fraction * (t1 - t0)
    idx = np.flatnonzero(traj.times >= start - 1e-12)
    if len(idx) < min_snapshots:
        raise ValueError(f"need at least {min_snapshots} tail snapshots, got {len(idx)}")
    tol = default_cluster_tol(traj) if cluster_tol is None else float(cluster_tol)
    order = idx[np.argsort(-traj.times[idx], kind="stable")]
    reps: list[int] = []
    members: list[list[int]] = []
    radius: list[float] = []
    for i in order:
        dists = [_sup_distance(traj.u1[i], traj.u2[i], traj.u1[j], traj.u2[j]) for j in reps]
        if dists and min(dists) <= tol:
            k = int(np.argmin(dists))
            members[k].append(int(i))
            radius[k] = max(radius[k], dists[k])
        else:
            reps.append(int(i))
            members.append([int(i)])
            radius.append(0.0)
    indicator = 0.0
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            i, j = idx[a], idx[b]
            indicator = max(indicator, _sup_distance(traj.u1[i], traj.u2[i], traj.u1[j], traj.u2[j]))
    out = LimitProfileSet(
        times=[float(traj.times[i]) for i in reps],
        profiles=[(traj.u1[i].copy(), traj.u2[i].copy()) for i in reps],
        cluster_radius=radius,
        members=[[float(traj.times[i]) for i in m] for m in members],
        convergence_indicator=indicator,
    )
    out.classification = [classify_profile(z1, z2, extinction_tol) for z1, z2 in out.profiles]
    return out


def classify_profile(z1, z2, extinction_tol: float = 1e-4) -> str:
    """``coexistence``, ``semitrivial_1`` (only species 1 survives), ``semitrivial_2`` or ``trivial``."""
    n1 = float(np.max(np.abs(z1)))
    n2 = float(np.max(np.abs(z2)))
    dead1 = n1 < extinction_tol * max(1.0, n2)
    dead2 = n2 < extinction_tol * max(1.0, n1)
    if dead1 and dead2:
        return "trivial"
    if dead1:
        return "semitrivial_2"
    if dead2:
        return "semitrivial_1"
    return "coexistence"

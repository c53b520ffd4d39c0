import math

import numpy as np
import pytest

from fsslab.asymptotics import lift_radial, principal_eigenpair, radial_steady_state
from fsslab.config import shifted_bump_pair
from fsslab.dynamics import (CoefficientSet, CompetitionSystem, Constant, CustomNonlinearity, DiffusionSolver,
                             RadialProduct, Sinusoid, SolverError, SystemState, assemble_laplacian,
                             coefficient_bounds, linear_residual, linearized_coefficients, reaction_eval,
                             reflection_differences, simulate, step, tol_neg)
from fsslab.fields import Trajectory, laplacian
from fsslab.geometry import Direction, DomainSpec, PolarGrid, half_domain_mask, reflection_index_map

from conftest import smooth_field


def _profile(g, fn):
    out = g.evaluate(fn)
    out[g.boundary_mask] = 0.0
    return out


def _system(grid, a=1.0, b=1.0, alpha=1.0, competitive=True, method="fft"):
    return CompetitionSystem(grid, CoefficientSet.constant((a, a), (b, b), (alpha, alpha), competitive),
                             solver_method=method)


def test_coefficient_kinds():
    s = Sinusoid(2.0, 0.5, 0.5)
    assert s(math.pi) == pytest.approx(2.5)
    assert coefficient_bounds(s, 100.0) == (1.5, 2.5)
    rp = RadialProduct((1.0, 0.0, -0.5), Constant(2.0))
    np.testing.assert_allclose(rp(0.0, np.array([0.0, 1.0])), [2.0, 1.0])
    lo, hi = coefficient_bounds(rp, 1.0, np.linspace(0, 1, 11))
    assert lo == pytest.approx(1.0) and hi == pytest.approx(2.0)


def test_h2_floor_violation_reported():
    cs = CoefficientSet.from_dict({"a": 1, "b": 1, "alpha": {"kind": "sinusoid", "offset": 0.2, "amplitude": 0.5}})
    issues = cs.check(10.0)
    assert any(i.startswith("(h2) floor") for i in issues)
    general = CoefficientSet.from_dict({"a": 1, "b": 1, "competitive": False,
                                        "alpha": {"kind": "sinusoid", "offset": 0.2, "amplitude": 0.5}})
    assert not general.check(10.0)


def test_reaction_eval_examples(disk_grid):
    sys_ = _system(disk_grid)
    z = disk_grid.zeros()
    r1, r2 = reaction_eval(sys_, SystemState(z, z, 0.0))
    assert np.all(r1 == 0) and np.all(r2 == 0)
    half = np.full(disk_grid.shape, 0.5)
    r1, r2 = reaction_eval(sys_, SystemState(half, half, 0.0))
    assert np.abs(r1).max() == 0 and np.abs(r2).max() == 0
    dec = _system(disk_grid, alpha=0.0, competitive=False)
    a, _ = reaction_eval(dec, SystemState(half, half, 0.0))
    b, _ = reaction_eval(dec, SystemState(half, 3 * half, 0.0))
    np.testing.assert_array_equal(a, b)


def test_custom_nonlinearity_is_used(disk_grid):
    nl = CustomNonlinearity(lambda t, r, v: 2 * v, lambda t, r, v: 2 + 0 * v)
    sys_ = CompetitionSystem(disk_grid, CoefficientSet.constant(alpha=(0, 0), competitive=False), (nl, nl))
    one = np.ones(disk_grid.shape)
    r1, _ = reaction_eval(sys_, SystemState(one, one, 0.0))
    np.testing.assert_allclose(r1, 2.0)
    assert nl.dfdv_bound(1.0, 1.0) == pytest.approx(2.0)


@pytest.mark.parametrize("domain", [DomainSpec.disk(), DomainSpec(0.5, 1.5)])
def test_weighted_laplacian_symmetric(domain):
    g = PolarGrid(domain, 12, 24)
    L, w, pack, unpack = assemble_laplacian(g)
    WL = (L.T.multiply(w)).T.tocsr()
    assert abs(WL - WL.T).max() < 1e-9 * abs(WL).max()
    f = smooth_field(g, 1)
    np.testing.assert_allclose(unpack(L @ pack(f))[g.interior_mask], laplacian(g, f)[g.interior_mask],
                               atol=1e-9)


@pytest.mark.parametrize("domain", [DomainSpec.disk(), DomainSpec(0.5, 1.5)])
def test_diffusion_solvers_agree(domain):
    g = PolarGrid(domain, 24, 48)
    rhs = smooth_field(g, 7)
    dt = 0.01
    ref = DiffusionSolver(g, dt, "splu").solve(rhs)
    for method in ("fft", "cg"):
        np.testing.assert_allclose(DiffusionSolver(g, dt, method).solve(rhs), ref, atol=1e-8)
    out = ref
    assert np.all(out[g.boundary_mask] == 0)
    res = out - dt * laplacian(g, out) - rhs
    assert np.abs(res[g.interior_mask]).max() < 1e-9


def test_zero_state_is_fixed(disk_grid):
    sys_ = _system(disk_grid)
    z = disk_grid.zeros()
    s = step(sys_, SystemState(z, z, 0.0), 0.01)
    assert np.all(s.u1 == 0) and np.all(s.u2 == 0)


def test_step_rejects_dt_above_bound(disk_grid):
    sys_ = _system(disk_grid, a=10.0)
    f = smooth_field(disk_grid)
    with pytest.raises(SolverError):
        step(sys_, SystemState(f, f, 0.0), 0.1, dt_limit=0.01)


def test_heat_decay_rate_matches_eigenvalue():
    g = PolarGrid(DomainSpec.disk(), 48, 64)
    eig = principal_eigenpair(g.domain, g.n_r)
    phi = lift_radial(g, eig.r, eig.phi)
    sys_ = _system(g, a=0.0, b=0.0, alpha=0.0, competitive=False)
    T, dt = 0.5, 5e-4
    tr = simulate(sys_, phi, g.zeros(), T, dt, check_dt=False)
    ratio = tr.u1[-1].max() / tr.u1[0].max()
    # backward Euler decays by (1 + dt*lam)^(-T/dt)
    assert ratio == pytest.approx((1 + dt * eig.eigenvalue) ** (-T / dt), rel=1e-6)
    assert ratio == pytest.approx(math.exp(-eig.eigenvalue * T), rel=0.02)


def test_simulate_edge_cases(disk_grid):
    sys_ = _system(disk_grid)
    f = smooth_field(disk_grid)
    tr = simulate(sys_, f, f, 0.0, 0.01)
    assert len(tr) == 1
    bad = f.copy()
    bad[-1, 0] = 1.0
    with pytest.raises(ValueError):
        simulate(sys_, bad, f, 0.1, 0.01)
    with pytest.raises(ValueError):
        simulate(sys_, -f, f, 0.1, 0.01)
    with pytest.raises(ValueError):
        simulate(sys_, f, f, 0.105, 0.01)


def test_radial_data_stays_radial():
    g = PolarGrid(DomainSpec.disk(), 24, 48)
    prof = _profile(g, lambda x, y: (1 - x * x - y * y) * 2.0)
    sys_ = CompetitionSystem(g, CoefficientSet.from_dict(
        {"a": {"kind": "sinusoid", "offset": 8, "amplitude": 1}, "b": 1,
         "alpha": {"kind": "radial_product", "radial": [1.0, 0.5]}}))
    tr = simulate(sys_, prof, 0.5 * prof, 1.0, 0.005, cadence=0.25)
    for u in (tr.u1, tr.u2):
        assert np.max(np.ptp(u, axis=2)) < 1e-10


def test_simulate_commutes_with_rotation_and_reflection():
    g = PolarGrid(DomainSpec.disk(), 24, 48)
    u1, u2 = smooth_field(g, 1), smooth_field(g, 2)
    sys_ = _system(g, a=6.0, alpha=1.5)
    base = simulate(sys_, u1, u2, 0.5, 0.005)
    rot = simulate(sys_, np.roll(u1, 5, axis=1), np.roll(u2, 5, axis=1), 0.5, 0.005)
    np.testing.assert_allclose(rot.u1[-1], np.roll(base.u1[-1], 5, axis=1), atol=1e-10)
    refl = reflection_index_map(g, Direction.grid_aligned(48, 3))
    mir = simulate(sys_, refl.apply(u1), refl.apply(u2), 0.5, 0.005)
    np.testing.assert_allclose(mir.u2[-1], refl.apply(base.u2[-1]), atol=1e-10)


def test_nonnegativity_and_invariant_region():
    g = PolarGrid(DomainSpec.disk(), 24, 48)
    sys_ = _system(g, a=12.0, alpha=2.0)
    u1, u2 = smooth_field(g, 3), smooth_field(g, 4)
    tr = simulate(sys_, u1, u2, 2.0, 0.005, cadence=0.1)
    scale = max(np.abs(tr.u1).max(), np.abs(tr.u2).max())
    assert min(tr.u1.min(), tr.u2.min()) >= -tol_neg(0.005, g.h, scale)
    assert scale <= max(u1.max(), u2.max(), 12.0) * (1 + 1e-9)
    assert np.all(tr.u1[:, -1] == 0)


def test_sign_conditions_persist_for_ordered_data():
    g = PolarGrid(DomainSpec.disk(), 24, 48)
    e = Direction(0.0)
    u1, u2 = shifted_bump_pair(g, e, 0.35, 0.3, (1.0, 0.7))
    sys_ = _system(g, a=12.0, alpha=2.0)
    tr = simulate(sys_, u1, u2, 2.0, 0.005, cadence=0.1)
    d1, d2 = reflection_differences(g, tr.u1, tr.u2, e)
    mask = half_domain_mask(g, e)
    tol = tol_neg(0.005, g.h, max(tr.u1.max(), tr.u2.max()))
    assert d1[:, mask].min() >= -tol and d2[:, mask].min() >= -tol


def test_linearized_coefficients_closed_form(disk_grid):
    g = disk_grid
    e = Direction.grid_aligned(g.n_theta, 2)
    sys_ = _system(g, a=5.0, b=2.0, alpha=1.5)
    u1, u2 = smooth_field(g, 8), smooth_field(g, 9)
    refl = reflection_index_map(g, e)
    for n in (2, 4):
        c = linearized_coefficients(sys_, u1, u2, 0.3, e, quadrature_n=n)
        np.testing.assert_allclose(c.c11, 5.0 - 2.0 * (u1 + refl.apply(u1)) - 1.5 * refl.apply(u2), atol=1e-12)
        np.testing.assert_allclose(c.c12, 1.5 * u1, atol=1e-15)
        assert c.c12.min() >= 0 and c.c21.min() >= 0
    z = g.zeros()
    c = linearized_coefficients(sys_, z, z, 0.0, e)
    assert np.all(c.c12 == 0) and np.all(c.c21 == 0)
    np.testing.assert_allclose(c.c11, 5.0)


def test_linearized_identity_is_exact_for_reaction(disk_grid):
    """R(u) - R(u o sigma) equals C u^e identically (no discretization involved)."""
    g = disk_grid
    e = Direction(0.0)
    sys_ = _system(g, a=7.0, b=1.3, alpha=2.1)
    u1, u2 = smooth_field(g, 10), smooth_field(g, 11)
    refl = reflection_index_map(g, e)
    r1, r2 = reaction_eval(sys_, SystemState(u1, u2, 0.0))
    s1, s2 = reaction_eval(sys_, SystemState(refl.apply(u1), refl.apply(u2), 0.0))
    d1, d2 = reflection_differences(g, u1, u2, e)
    c = linearized_coefficients(sys_, u1, u2, 0.0, e)
    np.testing.assert_allclose(r1 - s1, c.c11 * d1 + c.c12 * d2, atol=1e-12)
    np.testing.assert_allclose(s2 - r2, c.c21 * d1 + c.c22 * d2, atol=1e-12)


def test_linear_residual_trivial_cases(disk_grid):
    g = disk_grid
    sys_ = _system(g, a=4.0)
    z = np.zeros((3,) + g.shape)
    tr = Trajectory(g, [0.0, 0.1, 0.2], z, z)
    _, r1, r2 = linear_residual(sys_, tr, Direction(0.0))
    assert r1.max() == 0 and r2.max() == 0
    prof = _profile(g, lambda x, y: 1 - x * x - y * y)
    rad = simulate(sys_, prof, prof, 0.02, 0.005, cadence=0.005)
    _, r1, r2 = linear_residual(sys_, rad, Direction(0.0))
    assert r1.max() < 1e-12 and r2.max() < 1e-12


def test_linear_residual_decreases_under_refinement():
    res = []
    for n, dt in ((16, 0.004), (32, 0.002)):
        g = PolarGrid(DomainSpec.disk(), n, 2 * n)
        e = Direction(0.0)
        u1, u2 = shifted_bump_pair(g, e, 0.35, 0.3, (1.0, 0.7))
        sys_ = _system(g, a=12.0, alpha=2.0)
        tr = simulate(sys_, u1, u2, 0.2, dt, cadence=0.1, tail_every_step=0.1)
        _, r1, r2 = linear_residual(sys_, tr.window(0.1, 0.2), e)
        res.append(max(r1.max(), r2.max()))
    assert res[1] < res[0]


def test_logistic_run_converges_to_radial_steady_state():
    g = PolarGrid(DomainSpec.disk(), 32, 32)
    lam = principal_eigenpair(g.domain, g.n_r).eigenvalue
    a = 2 * lam
    prof = radial_steady_state(a, 1.0, g.domain, g.n_r)
    sys_ = CompetitionSystem(g, CoefficientSet.constant((a, a), (1, 1), (0, 0), competitive=False))
    u0 = _profile(g, lambda x, y: 0.5 * (1 - x * x - y * y) * (1 + 0.5 * x))
    tr = simulate(sys_, u0, g.zeros(), 6.0, 0.01)
    target = lift_radial(g, prof.r, prof.z)
    assert np.abs(tr.u1[-1] - target).max() / target.max() < 1e-2

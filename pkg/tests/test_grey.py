"""Grey problem assembly and the Newton temperature update."""

import numpy as np
import pytest

from trtmg import grey, loqd, phys, transport
from trtmg.grids import SpatialMesh
from trtmg.phys import CONST, MaterialModel


def _one_group_coef(mesh, rng):
    nx = mesh.n_cells
    return loqd.LoqdCoefficients(
        level=1,
        sig_E=0.5 + rng.random((1, nx)),
        sig_B=0.5 + rng.random((1, nx)),
        B=0.1 + rng.random((1, nx)),
        f=np.full((1, nx), 1.0 / 3.0),
        f_face=np.full((1, 2), 1.0 / 3.0),
        sig_R_face=0.5 + rng.random((1, nx + 1)),
        eta_hat=np.zeros((1, nx + 1)),
        eta_check=np.zeros((1, nx + 1)),
        C_minus=np.array([-0.5]),
        C_plus=np.array([0.5]),
        E_in=0.01 * rng.random((1, 2)),
        F_in=np.array([[0.02, -0.01]]),
        bc_offset=np.zeros((1, 2)),
    )


def test_form_grey_single_interval_is_identity():
    mesh = SpatialMesh.uniform(3, 1.0)
    rng = np.random.default_rng(2)
    coef = _one_group_coef(mesh, rng)
    sol = loqd.solve_moment_system(coef, 0.1 + rng.random((1, 3)),
                                   np.zeros((1, 4)), 0.1, mesh)
    gp = grey.form_grey(sol, coef, level_out=1)
    assert np.allclose(gp.coef.sig_E, coef.sig_E, rtol=1e-14)
    assert np.allclose(gp.coef.sig_B, coef.sig_B, rtol=1e-14)
    assert np.allclose(gp.coef.B, coef.B, rtol=1e-14)
    assert np.array_equal(gp.E_star, sol.E[0])


def test_equilibrium_temperature_is_fixed_point():
    # Planckian radiation at the material temperature: the Newton update
    # must return the same temperature to round-off
    mesh = SpatialMesh.uniform(10, 4.0)
    edges = np.concatenate(([0.0], np.logspace(-4, 1, 15), [1e7]))
    nx, G = 10, 16
    T = np.full(nx, 0.5)
    opac = phys.build_group_opacities(T, T, edges, phys.FleckCummingsOpacity())
    clo = transport.ClosureData.isotropic(G, nx)
    B = opac.B.T
    E_in = np.column_stack([B[:, 0], B[:, -1]]) / CONST.c
    F_in = np.column_stack([0.5 * B[:, 0], -0.5 * B[:, -1]])
    coef = loqd.build_fine_coefficients(opac, clo, E_in, F_in, mesh)
    E_eq = 2.0 * B / CONST.c
    dt = 0.02
    sol = loqd.solve_moment_system(coef, E_eq, np.zeros((G, nx + 1)), dt, mesh)
    gp = grey.form_grey(sol, coef, level_out=1)
    mat = MaterialModel(c_v=0.5917 * CONST.a_R)
    for demis in (None, np.full(nx, 0.3)):
        T_new, gsol = grey.solve_grey_meb(
            gp, np.zeros(nx), T, E_eq.sum(0, keepdims=True),
            np.zeros((1, nx + 1)), T, dt, mat, mesh, demis=demis)
        assert np.max(np.abs(T_new - T)) <= 1e-12
    assert np.allclose(gsol.E[0], E_eq.sum(axis=0), rtol=1e-10)


def test_zero_coupling_returns_previous_temperature():
    # with sigma_E = sigma_B = 0 the material decouples: T -> T_prev exactly
    # even from a perturbed stage temperature
    mesh = SpatialMesh.uniform(4, 2.0)
    rng = np.random.default_rng(8)
    coef = _one_group_coef(mesh, rng)
    coef.sig_E[:] = 0.0
    coef.sig_B[:] = 0.0
    gp = grey.GreyProblem(coef=coef, E_star=0.1 + rng.random(4))
    T_prev = 0.2 + rng.random(4)
    T_stage = T_prev + 0.3 * rng.standard_normal(4)
    T_new, _ = grey.solve_grey_meb(
        gp, np.zeros(4), T_prev, 0.1 * np.ones((1, 4)), np.zeros((1, 5)),
        T_stage, 0.05, MaterialModel(c_v=0.01), mesh)
    assert np.allclose(T_new, T_prev, rtol=1e-13)


def test_frechet_update():
    assert np.array_equal(
        grey.frechet_update(None, None, np.array([0.5]), np.array([1.0])),
        np.array([0.0]))
    got = grey.frechet_update(np.array([0.1]), np.array([1.0]),
                              np.array([0.2]), np.array([1.2]))
    assert got[0] == pytest.approx(2.0, rel=1e-13)
    # below the relative-motion threshold the slope is dropped
    got = grey.frechet_update(np.array([0.2]), np.array([1.0]),
                              np.array([0.2 + 1e-15]), np.array([1.2]))
    assert got[0] == 0.0


def _manual_newton(gp, frechet, demis, T_prev, E_prev, F_prev, T_stage, dt,
                   mat, mesh, n_newton=1):
    c, a_R = CONST.c, CONST.a_R
    cv_dt = mat.c_v / dt
    sigE, sigB = gp.coef.sig_E[0], gp.coef.sig_B[0]
    T_star = T_stage.copy()
    for _ in range(n_newton):
        slope = 4.0 * c * sigB * a_R * T_star**3
        if demis is not None:
            slope = np.where(demis > 0.0, demis, slope)
        beta = slope - c * frechet * gp.E_star
        chi = cv_dt + beta
        beta = np.where(chi <= 0.0, slope, beta)
        chi = cv_dt + beta
        emis = c * sigB * a_R * T_star**4
        r = emis + cv_dt * (T_star - T_prev)
        sol = loqd.solve_moment_system(
            gp.coef, E_prev, F_prev, dt, mesh,
            sig_E=(sigE * cv_dt / chi)[None],
            source=(emis - beta * r / chi)[None])
        T_star = np.maximum(T_star + (c * sigE * sol.E[0] - r) / chi,
                            phys.T_FLOOR)
    return T_star


@pytest.mark.parametrize("n_newton", [1, 3])
def test_newton_step_matches_manual_elimination(n_newton):
    mesh = SpatialMesh.uniform(2, 1.0)
    rng = np.random.default_rng(31)
    coef = _one_group_coef(mesh, rng)
    gp = grey.GreyProblem(coef=coef, E_star=0.2 + rng.random(2))
    T_prev = 0.2 + 0.1 * rng.random(2)
    T_stage = T_prev + 0.05 * rng.standard_normal(2)
    E_prev = 0.2 + rng.random((1, 2))
    F_prev = 0.02 * rng.standard_normal((1, 3))
    mat = MaterialModel(c_v=0.02)
    dt = 0.04
    frechet = np.array([0.5, -0.8])
    for demis in (None, np.array([0.9, -1.0])):
        got, _ = grey.solve_grey_meb(gp, frechet, T_prev, E_prev, F_prev,
                                     T_stage, dt, mat, mesh,
                                     n_newton=n_newton, demis=demis)
        ref = _manual_newton(gp, frechet, demis, T_prev, E_prev, F_prev,
                             T_stage, dt, mat, mesh, n_newton=n_newton)
        assert np.allclose(got, ref, rtol=1e-14)


def test_runaway_frechet_guard():
    # a huge positive sigma_E slope would make chi <= 0; those cells must
    # drop the slope instead of stepping backwards
    mesh = SpatialMesh.uniform(2, 1.0)
    rng = np.random.default_rng(4)
    coef = _one_group_coef(mesh, rng)
    gp = grey.GreyProblem(coef=coef, E_star=np.full(2, 5.0))
    T_prev = np.full(2, 0.3)
    frechet = np.array([0.0, 1e4])
    mat = MaterialModel(c_v=0.02)
    got, _ = grey.solve_grey_meb(gp, frechet, T_prev, np.full((1, 2), 0.5),
                                 np.zeros((1, 3)), T_prev, 0.05, mat, mesh)
    ref, _ = grey.solve_grey_meb(gp, np.zeros(2), T_prev, np.full((1, 2), 0.5),
                                 np.zeros((1, 3)), T_prev, 0.05, mat, mesh)
    assert got[1] == pytest.approx(ref[1], rel=1e-14)
    assert np.isfinite(got).all()


def test_temperature_floor():
    # a strongly cooling update may not drive T below the floor
    mesh = SpatialMesh.uniform(1, 1.0)
    rng = np.random.default_rng(6)
    coef = _one_group_coef(mesh, rng)
    coef.sig_E[:] = 0.0   # nothing absorbed
    coef.sig_B[:] = 50.0  # everything radiated away
    gp = grey.GreyProblem(coef=coef, E_star=np.zeros(1))
    mat = MaterialModel(c_v=1e-4)
    T_new, _ = grey.solve_grey_meb(
        gp, np.zeros(1), np.full(1, 0.5), np.zeros((1, 1)), np.zeros((1, 2)),
        np.full(1, 0.5), 10.0, mat, mesh)
    assert T_new[0] >= phys.T_FLOOR

"""Discrete-ordinates transport sweeps and quasidiffusion closure extraction.

The sweep works with the per-unit-mu intensity psi: the isotropic source
q_g is injected as q_g/2 per direction, so an infinite medium in equilibrium
has psi = B_g/2 in every direction.  The closure quantities handed to the
moment solver (Eddington factors and boundary flux ratios) are ratios of
angular moments and do not depend on that normalization.

psi is stored as (n_groups, n_dirs, n_cells, 2); the trailing axis holds the
left/right corner value within each cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import AngularQuadrature, SpatialMesh
from .phys import CONST, GroupOpacitySet, PhysicalConstants


@dataclass
class ClosureData:
    """Quasidiffusion closure of the angular flux: cell and boundary-face
    Eddington factors and boundary flux-to-energy ratios."""

    f: np.ndarray        # (G, n_x)
    f_face: np.ndarray   # (G, 2) at x=0 and x=X
    C_minus: np.ndarray  # (G,), in [-1, 0)
    C_plus: np.ndarray   # (G,), in (0, 1]

    @classmethod
    def isotropic(cls, n_groups: int, n_cells: int) -> "ClosureData":
        return cls(
            f=np.full((n_groups, n_cells), 1.0 / 3.0),
            f_face=np.full((n_groups, 2), 1.0 / 3.0),
            C_minus=np.full(n_groups, -0.5),
            C_plus=np.full(n_groups, 0.5),
        )


@dataclass
class TransportMoments:
    """Angular moments of the sweep intensity (sweep normalization)."""

    E: np.ndarray        # (G, n_x)
    E_face: np.ndarray   # (G, 2)
    F: np.ndarray        # (G, n_x + 1)


def _time_absorption(c: float, dt) -> float:
    if dt is None or not np.isfinite(dt):
        return 0.0
    return 1.0 / (c * dt)


def sweep_all(psi_prev: np.ndarray, inc_left: np.ndarray, inc_right: np.ndarray,
              sigma: np.ndarray, q: np.ndarray, mesh: SpatialMesh,
              quad: AngularQuadrature, dt, constants: PhysicalConstants = CONST
              ) -> np.ndarray:
    """Corner-balance sweep of every group and direction for one time level.

    Each half cell balances streaming through its faces against absorption
    (sigma plus the implicit time term) and the source q/2 + psi_prev/(c dt);
    the mid-cell face value is the average of the two corner values, cell
    faces are upwinded.
    """
    G, M, nx = psi_prev.shape[0], quad.n_dirs, mesh.n_cells
    tau = _time_absorption(constants.c, dt)
    dx = mesh.dx
    psi = np.empty_like(psi_prev)

    pos = quad.positive
    mu_p = quad.mu[pos][None, :, None]          # (1, Mp, 1)
    mu_n = -quad.mu[~pos][None, :, None]

    a = (sigma[:, None, :] + tau) * (0.5 * dx)[None, None, :]   # (G, 1, nx)
    b = (0.5 * dx)[None, None, :] * (0.5 * q[:, None, None, :]
                                     + tau * psi_prev.transpose(0, 1, 3, 2))
    # b has shape (G, M, 2, nx): b[..., 0, :] left corner, b[..., 1, :] right

    half = 0.5 * mu_p
    det_p = (half + a) ** 2 + half**2
    inflow = inc_left[:, pos]                    # (G, Mp)
    for i in range(nx):
        ai = a[:, :, i]
        sL = b[:, pos, 0, i] + mu_p[:, :, 0] * inflow
        bR = b[:, pos, 1, i]
        hp = half[:, :, 0]
        psi[:, pos, i, 0] = (sL * (hp + ai) - hp * bR) / det_p[:, :, i]
        psi[:, pos, i, 1] = ((hp + ai) * bR + hp * sL) / det_p[:, :, i]
        inflow = psi[:, pos, i, 1]

    half = 0.5 * mu_n
    det_n = (half + a) ** 2 + half**2
    inflow = inc_right[:, ~pos]
    for i in range(nx - 1, -1, -1):
        ai = a[:, :, i]
        sR = b[:, ~pos, 1, i] + mu_n[:, :, 0] * inflow
        bL = b[:, ~pos, 0, i]
        hn = half[:, :, 0]
        psi[:, ~pos, i, 1] = (sR * (hn + ai) - hn * bL) / det_n[:, :, i]
        psi[:, ~pos, i, 0] = ((hn + ai) * bL + hn * sR) / det_n[:, :, i]
        inflow = psi[:, ~pos, i, 0]

    return psi


def sweep_group(g: int, psi_prev: np.ndarray, inc_left: np.ndarray,
                inc_right: np.ndarray, sigma: np.ndarray, q: np.ndarray,
                mesh: SpatialMesh, quad: AngularQuadrature, dt,
                constants: PhysicalConstants = CONST) -> np.ndarray:
    """Sweep a single group; sigma and q are per-cell arrays for that group."""
    out = sweep_all(psi_prev[g:g + 1], inc_left[g:g + 1], inc_right[g:g + 1],
                    sigma[None, :], q[None, :], mesh, quad, dt, constants)
    return out[0]


def _face_intensities(psi, inc_left, inc_right, pos):
    """Boundary-face angular intensities: incoming data on the entering half
    range, exit-corner values on the leaving half range."""
    left = np.where(pos[None, :], inc_left, psi[:, :, 0, 0])
    right = np.where(pos[None, :], psi[:, :, -1, 1], inc_right)
    return left, right


def compute_moments(psi: np.ndarray, inc_left: np.ndarray, inc_right: np.ndarray,
                    quad: AngularQuadrature, constants: PhysicalConstants = CONST
                    ) -> TransportMoments:
    """Energy-density and flux moments of the sweep intensity; fluxes at cell
    faces use the upwind corner values."""
    w, mu, pos = quad.w, quad.mu, quad.positive
    psi_bar = 0.5 * (psi[..., 0] + psi[..., 1])
    E = np.einsum("m,gmi->gi", w, psi_bar) / constants.c

    fl, fr = _face_intensities(psi, inc_left, inc_right, pos)
    E_face = np.stack([fl @ w, fr @ w], axis=1) / constants.c

    G, _, nx = psi_bar.shape
    F = np.empty((G, nx + 1))
    wmu_p, wmu_n = (w * mu)[pos], (w * mu)[~pos]
    F[:, 0] = inc_left[:, pos] @ wmu_p + psi[:, ~pos, 0, 0] @ wmu_n
    for f in range(1, nx):
        F[:, f] = psi[:, pos, f - 1, 1] @ wmu_p + psi[:, ~pos, f, 0] @ wmu_n
    F[:, nx] = psi[:, pos, nx - 1, 1] @ wmu_p + inc_right[:, ~pos] @ wmu_n
    return TransportMoments(E=E, E_face=E_face, F=F)


def _ratio(num, den, fallback):
    out = np.full_like(num, fallback)
    good = np.isfinite(den) & (den > 0.0)
    np.divide(num, den, out=out, where=good)
    return out


def compute_qd_factors(psi: np.ndarray, inc_left: np.ndarray, inc_right: np.ndarray,
                       quad: AngularQuadrature) -> ClosureData:
    """Eddington factors per cell and boundary face, and boundary flux ratios
    C^- (x=0) and C^+ (x=X) from the exit-corner intensities."""
    w, mu, pos = quad.w, quad.mu, quad.positive
    wmu2 = w * mu * mu
    psi_bar = 0.5 * (psi[..., 0] + psi[..., 1])

    f = _ratio(np.einsum("m,gmi->gi", wmu2, psi_bar),
               np.einsum("m,gmi->gi", w, psi_bar), 1.0 / 3.0)

    fl, fr = _face_intensities(psi, inc_left, inc_right, pos)
    f_face = np.stack([_ratio(fl @ wmu2, fl @ w, 1.0 / 3.0),
                       _ratio(fr @ wmu2, fr @ w, 1.0 / 3.0)], axis=1)

    exit_l = psi[:, ~pos, 0, 0]
    exit_r = psi[:, pos, -1, 1]
    C_minus = _ratio(exit_l @ (w * mu)[~pos], exit_l @ w[~pos], -0.5)
    C_plus = _ratio(exit_r @ (w * mu)[pos], exit_r @ w[pos], 0.5)
    return ClosureData(f=f, f_face=f_face, C_minus=C_minus, C_plus=C_plus)


def transport_solve(psi_prev: np.ndarray, inc_left: np.ndarray, inc_right: np.ndarray,
                    opac: GroupOpacitySet, mesh: SpatialMesh, quad: AngularQuadrature,
                    dt, constants: PhysicalConstants = CONST):
    """One transport solve at fixed coefficients: sweep all groups with the
    absorption opacity and emission source sigma_B*B, then extract closures."""
    sigma = opac.sig_E.T.copy()          # (G, n_x)
    q = (opac.sig_B * opac.B).T.copy()
    psi = sweep_all(psi_prev, inc_left, inc_right, sigma, q, mesh, quad, dt, constants)
    return psi, compute_qd_factors(psi, inc_left, inc_right, quad)


def group_balance_residual(psi, psi_prev, inc_left, inc_right, sigma, q,
                           mesh: SpatialMesh, quad: AngularQuadrature, dt,
                           constants: PhysicalConstants = CONST) -> float:
    """Largest relative defect of the group-wise cell energy balance implied
    by the swept intensity (diagnostic for the discretization)."""
    c = constants.c
    tau = _time_absorption(c, dt)
    mom = compute_moments(psi, inc_left, inc_right, quad, constants)
    mom_prev = compute_moments(psi_prev, inc_left, inc_right, quad, constants)
    dx = mesh.dx[None, :]
    terms = np.stack([
        c * tau * dx * (mom.E - mom_prev.E),
        mom.F[:, 1:] - mom.F[:, :-1],
        c * sigma * dx * mom.E,
        -q * dx,
    ])
    res = np.abs(terms.sum(axis=0))
    scale = np.max(np.abs(terms), axis=0)
    return float(np.max(res / np.maximum(scale, 1e-300)))

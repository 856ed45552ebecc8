"""Counter-term diagnostics: the averaged energy profile zeta, its gradient
relation to the counter-term, and the curvature relation tying the beta block
to the Hessian of zeta through the map differential."""

from dataclasses import dataclass

import numpy as np

from ..normalform import eval_phi_series, mat_eval_phi, phi_grid, phi_grid_size
from ..series import (FTSeries, average_q, differentiate, multiply,
                      partial_omega)
from ..symplectic import _Substituter
from .cohom import coordinate, restrict_z0


def _z0_map(Phi):
    from ..symplectic import SymplecticMapSeries
    return SymplecticMapSeries([restrict_z0(u) for u in Phi.Uq],
                               [restrict_z0(u) for u in Phi.Ux],
                               [restrict_z0(u) for u in Phi.Up],
                               [restrict_z0(u) for u in Phi.Uy],
                               Phi.remainder, Phi.symp_residual)


def compute_zeta(state, H0_series):
    """zeta(phi) = M_q(F o Phi + <Phi_p, w - dw Phi_q> - <Phi_y, dw Phi_x>)(phi, 0)
    with F the energy above the plain rotation term."""
    gr = state.grading
    omega = state.N.w
    r, s = state.r, state.s
    F = FTSeries(gr, r, s, H0_series.terms, H0_series.trunc_loss, _raw=True)
    for i in range(gr.d):
        if omega[i] != 0.0:
            F = F - coordinate(gr, r, s, "p", i).scale(omega[i])
    Phi0 = _z0_map(state.Phi)
    if Phi0.is_identity():
        comp = restrict_z0(F)
    else:
        comp = restrict_z0(_Substituter(Phi0, drop_z_identity=True).apply(F))
    total = comp
    for i in range(gr.d):
        up = restrict_z0(Phi0.Up[i])
        duq = partial_omega(restrict_z0(Phi0.Uq[i]), omega)
        if not (up.is_zero() or duq.is_zero()):
            total = total - multiply(up, duq)
    for i in range(gr.l):
        uy = restrict_z0(Phi0.Uy[i])
        dux = partial_omega(restrict_z0(Phi0.Ux[i]), omega)
        if not (uy.is_zero() or dux.is_zero()):
            total = total - multiply(uy, dux)
    return average_q(total)


@dataclass
class StepDiagnostics:
    alpha_grad_gap: float = None
    alpha_hess_gap: float = None
    beta_relation_gap: float = None
    L_dev: float = None
    R_dev: float = None
    admissible_points: int = 0


def _grid_eval_vec(series_list, grid):
    return np.stack([eval_phi_series(f, grid).real for f in series_list], axis=-1)


def check_alpha_gradient(state, zeta, prev_beta, prev_delta, grid=None):
    """Max gaps |alpha - grad zeta| and |D alpha - Hess zeta| on the admissible set."""
    gr = state.grading
    if grid is None:
        grid = phi_grid(gr.l, phi_grid_size(gr.K_phi))
    from ..normalform import nu_max_profile
    nu = nu_max_profile(prev_beta, grid)
    mask = nu <= prev_delta
    diag = StepDiagnostics(admissible_points=int(mask.sum()))
    if not mask.any():
        return diag
    alpha_vals = _grid_eval_vec(state.alpha, grid)
    grad = np.stack([eval_phi_series(differentiate(zeta, ("phi", i)), grid).real
                     for i in range(gr.l)], axis=-1)
    diag.alpha_grad_gap = float(np.max(np.linalg.norm(
        (alpha_vals - grad)[mask], axis=-1)))
    dal = np.stack([[eval_phi_series(differentiate(state.alpha[i], ("phi", j)),
                                     grid).real
                     for j in range(gr.l)] for i in range(gr.l)], axis=-1).T
    hess = np.stack([[eval_phi_series(
        differentiate(differentiate(zeta, ("phi", i)), ("phi", j)), grid).real
        for j in range(gr.l)] for i in range(gr.l)], axis=-1).T
    gap = np.abs(dal - hess).reshape(len(grid), -1).max(axis=-1)
    diag.alpha_hess_gap = float(np.max(gap[mask]))
    return diag


def check_beta_relation(state, prev_beta, prev_delta, grid=None):
    """Residual of beta - Gamma M^{-1} Gamma^T - L (D alpha) R on the admissible set.

    L and R are built from the parameter differential of the cumulative map;
    both reduce to the identity at the trivial map."""
    gr = state.grading
    d, l = gr.d, gr.l
    m = d + l
    if grid is None:
        grid = phi_grid(gr.l, phi_grid_size(gr.K_phi))
    from ..normalform import nu_max_profile
    nu = nu_max_profile(prev_beta, grid)
    mask = nu <= prev_delta
    diag = StepDiagnostics(admissible_points=int(mask.sum()))
    if not mask.any():
        return diag
    npts = len(grid)
    Phi = state.Phi
    # W rows: (D_phi Phi_q; I + D_phi Phi_x; D_phi Phi_p; D_phi Phi_y) at z = 0
    comps = list(Phi.Uq) + list(Phi.Ux) + list(Phi.Up) + list(Phi.Uy)
    W = np.zeros((npts, 2 * m, l))
    for i, comp in enumerate(comps):
        for j in range(l):
            ser = average_q(restrict_z0(differentiate(comp, ("phi", j))))
            W[:, i, j] = eval_phi_series(ser, grid).real
    for j in range(l):
        W[:, d + j, j] += 1.0
    # dPhi/dy at z = 0 (2m x l), identity on the y-rows
    DY = np.zeros((npts, 2 * m, l))
    for i, comp in enumerate(comps):
        for j in range(l):
            ser = average_q(restrict_z0(differentiate(comp, ("y", j))))
            DY[:, i, j] = eval_phi_series(ser, grid).real
    for j in range(l):
        DY[:, m + d + j, j] += 1.0
    # J with the orientation that makes R the identity at the trivial map
    J = np.zeros((2 * m, 2 * m))
    J[:m, m:] = -np.eye(m)
    J[m:, :m] = np.eye(m)
    # L = M_q(d_x Phi_x)^T - Gamma M^{-1} d_p M_q Phi_x
    DXX = np.zeros((npts, l, l))
    for i in range(l):
        for j in range(l):
            ser = average_q(restrict_z0(differentiate(Phi.Ux[i], ("x", j))))
            DXX[:, i, j] = eval_phi_series(ser, grid).real
        DXX[:, i, i] += 1.0
    DPX = np.zeros((npts, d, l))
    for i in range(l):
        for j in range(d):
            ser = average_q(restrict_z0(differentiate(Phi.Ux[i], ("p", j))))
            DPX[:, j, i] = eval_phi_series(ser, grid).real
    dal = np.zeros((npts, l, l))
    for i in range(l):
        for j in range(l):
            dal[:, i, j] = eval_phi_series(
                differentiate(state.alpha[i], ("phi", j)), grid).real
    worst = 0.0
    worstL = 0.0
    worstR = 0.0
    for idx in range(npts):
        if not mask[idx]:
            continue
        phi = grid[idx]
        beta = mat_eval_phi(state.N.beta, phi)
        Gam = mat_eval_phi(state.N.Gamma, phi)
        M = mat_eval_phi(state.N.M, phi)
        Rm = DY[idx].T @ J @ W[idx]
        R = np.linalg.inv(Rm)
        L = DXX[idx].T - Gam @ np.linalg.solve(M, DPX[idx])
        rel = beta - Gam @ np.linalg.solve(M, Gam.T) - L @ dal[idx] @ R
        worst = max(worst, float(np.max(np.abs(rel))))
        worstL = max(worstL, float(np.max(np.abs(L - np.eye(l)))))
        worstR = max(worstR, float(np.max(np.abs(R.T - np.eye(l)))))
    diag.beta_relation_gap = worst
    diag.L_dev = worstL
    diag.R_dev = worstR
    return diag

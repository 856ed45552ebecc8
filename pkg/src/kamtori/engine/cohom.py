"""One-step linearized conjugacy solve.

Given a tuple N (with Q = I), an error term f and the x-component tracker
phi_x, this module produces the counter-term alpha, the drift v, a generating
function F and a correction tuple Nbar (with w = 0, Q = 0) such that

    f - <alpha, phi_x> + {N - g(N), F + v.q} = T(Nbar)

holds on the sublevel region of beta, glued to the whole parameter torus by a
bump factor.  The construction runs independently at every parameter
collocation point (the equation carries no parameter derivatives), in the
order: A by the plain cohomological solve, (B_x, B_y) by the coupled pair
solve, B_p, then the block linear system for (alpha, v, mean of B_y), then the
quadratic blocks, each stage reading its right-hand side off the exact series
residual so far.

The quadratic xx/yy/xy stage solves the symmetrized per-mode system

    lam X - (beta Z^T + Z beta) = Uxx
    lam Y + (Z + Z^T)           = Uyy
    lam Z - beta Y + X          = Uxy

(the coefficient-level form of the coupled-triple problem for a symmetric
quadratic form 1/2 <D z, z>), with the zero modes chosen to kill the xy, yy
and py averages; the leftover xx / px / pp averages become the beta / Gamma /
M components of Nbar.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..normalform import (NormalFormTuple, assemble_hamiltonian, bump_psi,
                          const_matrix, eval_phi_series, majorant_at_phi,
                          mat_eval_phi, nu_max_profile, phi_grid,
                          phi_grid_size, project_phi_values, series_matrix)
from ..series import (FTSeries, TaylorSplit, average_q, differentiate,
                      majorant_norm, multiply, taylor_split)
from ..smalldiv import (SolverPreconditionError, _divisor, solve_L1,
                        solve_L2)
from ..symplectic import GeneratingFunction, poisson_bracket

PSI_SOLVE_FLOOR = 1e-12
COND_CAP = 1e8


class CohomologyError(ValueError):
    pass


@dataclass
class CohomSolution:
    alpha: list              # l phi-only series
    v: list                  # d phi-only series
    F: FTSeries
    Nbar: NormalFormTuple    # w = 0, Q = 0
    psi: FTSeries
    psi_grid: np.ndarray
    plateau_mask: np.ndarray
    grid: np.ndarray
    residual_plateau: float = 0.0
    residual_tracker: float = 0.0
    linear_defect: float = 0.0
    zero_mode_obstruction: float = 0.0
    max_condition: float = 0.0
    projection_defect: float = 0.0
    glued: bool = False


def _mean0(f):
    gr = f.grading
    return f.terms.get(gr.zero_key(), 0.0 + 0.0j)


def _real_mean(f, what):
    c = _mean0(f)
    if abs(c.imag) > 1e-9 * max(1.0, abs(c)):
        raise CohomologyError("%s mean came out complex: %s" % (what, c))
    return c.real


def restrict_z0(f):
    """Drop every term with a nonzero Taylor exponent (evaluation at z = 0)."""
    new = FTSeries.zero(f.grading, f.r, f.s)
    zero_a = (0,) * f.grading.nz
    for (j, k, a), c in f.terms.items():
        if a == zero_a:
            new.terms[(j, k, a)] = c
    return new


def coordinate(gr, r, s, kind, i):
    pos = {"x": 0, "p": gr.l, "y": gr.l + gr.d}[kind] + i
    alpha = tuple(1 if t == pos else 0 for t in range(gr.nz))
    return FTSeries.term(gr, r, s, (0,) * gr.l, (0,) * gr.d, alpha, 1.0)


def freeze_phi(f, phi):
    """Collapse the parameter modes at a numeric phi (result carries j = 0)."""
    gr = f.grading
    new = FTSeries.zero(gr, f.r, f.s)
    zj = (0,) * gr.l
    phi = np.asarray(phi, dtype=float)
    for (j, k, a), c in f.terms.items():
        w = c * np.exp(1j * float(np.dot(j, phi)))
        key = (zj, k, a)
        cur = new.terms.get(key)
        new.terms[key] = w if cur is None else cur + w
    new._prune()
    return new


def _series_from_blocks(gr, r, s, a=None, b_x=None, b_p=None, b_y=None,
                        d_xx=None, d_pp=None, d_yy=None, d_xy=None,
                        d_px=None, d_py=None, remainder=None):
    zero = lambda: FTSeries.zero(gr, r, s)
    zm = lambda n, m_: [[zero() for _ in range(m_)] for _ in range(n)]
    sp = TaylorSplit(
        a=a if a is not None else zero(),
        b_x=b_x if b_x is not None else [zero() for _ in range(gr.l)],
        b_p=b_p if b_p is not None else [zero() for _ in range(gr.d)],
        b_y=b_y if b_y is not None else [zero() for _ in range(gr.l)],
        d_xx=d_xx if d_xx is not None else zm(gr.l, gr.l),
        d_pp=d_pp if d_pp is not None else zm(gr.d, gr.d),
        d_yy=d_yy if d_yy is not None else zm(gr.l, gr.l),
        d_xy=d_xy if d_xy is not None else zm(gr.l, gr.l),
        d_px=d_px if d_px is not None else zm(gr.d, gr.l),
        d_py=d_py if d_py is not None else zm(gr.d, gr.l),
        remainder=remainder if remainder is not None else zero())
    return sp.reassemble()


def _reduced_hamiltonian_at(N, phi, beta, Gamma, M):
    """N - g frozen at one parameter value (the constant c is irrelevant)."""
    gr = N.grading
    r, s = N.radii
    h_phi = freeze_phi(N.h, phi)
    quad = _series_from_blocks(
        gr, r, s,
        d_xx=const_matrix(gr, r, s, beta),
        d_pp=const_matrix(gr, r, s, M),
        d_yy=const_matrix(gr, r, s, np.eye(gr.l)),
        d_px=const_matrix(gr, r, s, Gamma.T))
    lin = FTSeries.zero(gr, r, s)
    for i in range(gr.d):
        if N.w[i] != 0.0:
            lin = lin + coordinate(gr, r, s, "p", i).scale(N.w[i])
    return lin + quad + h_phi


def _quad_stage_xxyyxy(sp_u, beta, witness, K_eff, gr, r, s):
    """Solve the symmetrized (D_xx, D_yy, D_xy) stage; returns series matrices,
    the zero-mode obstruction and the input-symmetry defect."""
    l = gr.l
    sym_idx = [(i, j) for i in range(l) for j in range(i, l)]
    nsym = len(sym_idx)
    nunk = 2 * nsym + l * l
    zero_k = (0,) * gr.d

    def gather(mat):
        out = {}
        for i in range(l):
            for j in range(l):
                for (jj, k, a), c in mat[i][j].terms.items():
                    out.setdefault(k, np.zeros((l, l), dtype=complex))[i, j] += c
        return out

    Uxx, Uyy, Uxy = gather(sp_u.d_xx), gather(sp_u.d_yy), gather(sp_u.d_xy)
    modes = sorted(set(Uxx) | set(Uyy) | set(Uxy))
    zmat = lambda: np.zeros((l, l), dtype=complex)
    fresh = lambda: [[FTSeries.zero(gr, r, s) for _ in range(l)] for _ in range(l)]
    Dxx, Dyy, Dxy = fresh(), fresh(), fresh()
    obstruction = 0.0
    sym_defect = 0.0

    def store(mat, vals, k):
        for i in range(l):
            for j in range(l):
                if vals[i, j] != 0.0:
                    mat[i][j].terms[((0,) * gr.l, k, (0,) * gr.nz)] = vals[i, j]

    for k in modes:
        uxx = Uxx.get(k, zmat())
        uyy = Uyy.get(k, zmat())
        uxy = Uxy.get(k, zmat())
        sym_defect = max(sym_defect, float(np.max(np.abs(uxx - uxx.T))),
                         float(np.max(np.abs(uyy - uyy.T))))
        uxx = 0.5 * (uxx + uxx.T)
        uyy = 0.5 * (uyy + uyy.T)
        if k == zero_k:
            Z0 = 0.5 * uyy
            anti = 0.5 * (uxy - uxy.T)
            w, V = np.linalg.eigh(beta)
            At = V.T @ anti @ V
            Yt = np.zeros((l, l), dtype=complex)
            scale = max(1.0, float(np.max(np.abs(w))))
            for i in range(l):
                for j in range(l):
                    if i == j:
                        continue
                    dw = w[i] - w[j]
                    if abs(dw) > 1e-10 * scale:
                        Yt[i, j] = -2.0 * At[i, j] / dw
                    else:
                        obstruction = max(obstruction, abs(At[i, j]))
            Y0 = V @ Yt @ V.T
            X0 = 0.5 * ((uxy + beta @ Y0) + (uxy + beta @ Y0).T)
            store(Dxx, X0, k)
            store(Dyy, Y0, k)
            store(Dxy, Z0, k)
            continue
        lam = 1j * _divisor(witness, k)
        A = np.zeros((nunk, nunk), dtype=complex)
        for col in range(nunk):
            X, Y, Z = zmat(), zmat(), zmat()
            if col < nsym:
                i, j = sym_idx[col]
                X[i, j] = X[j, i] = 1.0
            elif col < 2 * nsym:
                i, j = sym_idx[col - nsym]
                Y[i, j] = Y[j, i] = 1.0
            else:
                i, j = divmod(col - 2 * nsym, l)
                Z[i, j] = 1.0
            E1 = lam * X - (beta @ Z.T + Z @ beta)
            E2 = lam * Y + (Z + Z.T)
            E3 = lam * Z - beta @ Y + X
            A[:, col] = np.concatenate([
                np.array([E1[i, j] for (i, j) in sym_idx]),
                np.array([E2[i, j] for (i, j) in sym_idx]),
                E3.reshape(-1)])
        rhs = np.concatenate([np.array([uxx[i, j] for (i, j) in sym_idx]),
                              np.array([uyy[i, j] for (i, j) in sym_idx]),
                              uxy.reshape(-1)])
        sol = np.linalg.solve(A, rhs)
        X = zmat()
        Y = zmat()
        for t, (i, j) in enumerate(sym_idx):
            X[i, j] = X[j, i] = sol[t]
            Y[i, j] = Y[j, i] = sol[nsym + t]
        Z = sol[2 * nsym:].reshape(l, l)
        store(Dxx, X, k)
        store(Dyy, Y, k)
        store(Dxy, Z, k)
    return Dxx, Dyy, Dxy, obstruction, sym_defect


def _point_solve(gr, r, s, omega, beta, Gamma, M, Nred, f_phi, phix_phi,
                 witness, K_eff):
    """Run the full ordered construction at one frozen parameter value."""
    l, d = gr.l, gr.d
    channels = [f_phi] + [phix_phi[i].scale(-1.0) for i in range(l)]
    A_c, Bx_c, By_c, Bp_c = [], [], [], []
    mx_c, mp_c = [], []
    for ch in channels:
        sp = taylor_split(ch)
        A = solve_L1(sp.a, witness)
        lin1 = ch + poisson_bracket(Nred, A) if not A.is_zero() else ch
        sp1 = taylor_split(lin1)
        Bx, By = solve_L2(sp1.b_x, sp1.b_y, beta, witness, K_eff)
        F1 = A
        for i in range(l):
            F1 = F1 + multiply(Bx[i], coordinate(gr, r, s, "x", i))
            F1 = F1 + multiply(By[i], coordinate(gr, r, s, "y", i))
        lin2 = ch + poisson_bracket(Nred, F1) if not F1.is_zero() else ch
        sp2 = taylor_split(lin2)
        Bp = [solve_L1(sp2.b_p[i], witness) for i in range(d)]
        A_c.append(A)
        Bx_c.append(Bx)
        By_c.append(By)
        Bp_c.append(Bp)
        mx_c.append(np.array([_mean0(sp1.b_x[i]) for i in range(l)]))
        mp_c.append(np.array([_mean0(sp2.b_p[i]) for i in range(d)]))

    # parameter-tracker condition row: means of phix + {phix, F + v.q} at z = 0
    dq_phix = [[restrict_z0(differentiate(phix_phi[i], ("q", j)))
                for j in range(d)] for i in range(l)]
    dp_phix = [[restrict_z0(differentiate(phix_phi[i], ("p", j)))
                for j in range(d)] for i in range(l)]
    dx_phix = [[restrict_z0(differentiate(phix_phi[i], ("x", j)))
                for j in range(l)] for i in range(l)]
    dy_phix = [[restrict_z0(differentiate(phix_phi[i], ("y", j)))
                for j in range(l)] for i in range(l)]

    def tracker_mean(c):
        out = np.zeros(l, dtype=complex)
        dqA = [restrict_z0(differentiate(A_c[c], ("q", j))) for j in range(d)]
        Bp0 = [restrict_z0(Bp_c[c][j]) for j in range(d)]
        Bx0 = [restrict_z0(Bx_c[c][i2]) for i2 in range(l)]
        By0 = [restrict_z0(By_c[c][i2]) for i2 in range(l)]
        for i in range(l):
            acc = FTSeries.zero(gr, r, s)
            for j in range(d):
                acc = acc + multiply(dq_phix[i][j], Bp0[j])
                acc = acc - multiply(dp_phix[i][j], dqA[j])
            for j in range(l):
                acc = acc + multiply(dx_phix[i][j], By0[j])
                acc = acc - multiply(dy_phix[i][j], Bx0[j])
            out[i] = _mean0(acc)
        return out

    a_phi = np.array([_mean0(restrict_z0(phix_phi[i])) for i in range(l)])
    t0 = tracker_mean(0)
    T = np.zeros((l, l), dtype=complex)
    for c in range(1, l + 1):
        T[:, c - 1] = tracker_mean(c)
    P_p = np.array([[_mean0(dp_phix[i][j]) for j in range(d)] for i in range(l)])
    P_x = np.array([[_mean0(dx_phix[i][j]) for j in range(l)] for i in range(l)])

    MX = np.stack([mx_c[c] for c in range(1, l + 1)], axis=1)
    MP = np.stack([mp_c[c] for c in range(1, l + 1)], axis=1)
    Sys = np.block([[MX, -Gamma.astype(complex), beta.astype(complex)],
                    [MP, -M.astype(complex), Gamma.T.astype(complex)],
                    [T, -P_p, P_x]])
    rhs = -np.concatenate([mx_c[0], mp_c[0], a_phi + t0])
    if np.max(np.abs(Sys.imag)) > 1e-9 * max(1.0, np.max(np.abs(Sys))):
        raise CohomologyError("counter-term system has complex entries")
    Sys = Sys.real
    rhs = rhs.real
    cond = float(np.linalg.cond(Sys))
    if cond > COND_CAP:
        raise CohomologyError("counter-term linear system ill-conditioned "
                              "(cond %.3g)" % cond)
    sol = np.linalg.solve(Sys, rhs)
    alpha_pt, v_pt, mqby = sol[:l], sol[l:l + d], sol[l + d:]

    def combine(parts):
        out = parts[0]
        for i in range(l):
            if alpha_pt[i] != 0.0:
                out = out + parts[1 + i].scale(alpha_pt[i])
        return out

    A = combine(A_c)
    Bx = [combine([Bx_c[c][i] for c in range(l + 1)]) for i in range(l)]
    By = [combine([By_c[c][i] for c in range(l + 1)]) for i in range(l)]
    Bp = [combine([Bp_c[c][i] for c in range(l + 1)]) for i in range(d)]
    for i in range(l):
        if mqby[i] != 0.0:
            By[i] = By[i] + mqby[i]
    F_lin = A
    for i in range(l):
        F_lin = F_lin + multiply(Bx[i], coordinate(gr, r, s, "x", i))
        F_lin = F_lin + multiply(By[i], coordinate(gr, r, s, "y", i))
    for i in range(d):
        F_lin = F_lin + multiply(Bp[i], coordinate(gr, r, s, "p", i))

    combo = combine(channels)
    v_series = [FTSeries.constant(gr, r, s, v_pt[i]) for i in range(d)]
    gen_lin = GeneratingFunction(F_lin, v_series)
    u = combo + gen_lin.bracket_with(Nred)
    sp_u = taylor_split(u)
    lin_defect = max(
        max((majorant_norm(sp_u.b_x[i]) for i in range(l)), default=0.0),
        max((majorant_norm(sp_u.b_y[i]) for i in range(l)), default=0.0),
        max((majorant_norm(sp_u.b_p[i]) for i in range(d)), default=0.0))

    Dxx, Dyy, Dxy, obstruction, sym_defect = _quad_stage_xxyyxy(
        sp_u, beta, witness, K_eff, gr, r, s)

    def mat_comb(rows, cols, entry):
        return [[entry(i, j) for j in range(cols)] for i in range(rows)]

    R1 = mat_comb(d, l, lambda i, j: sp_u.d_px[i][j] + sum(
        (Dxy[j][k2].scale(Gamma[k2, i]) for k2 in range(l)),
        FTSeries.zero(gr, r, s)))
    R2 = mat_comb(d, l, lambda i, j: sp_u.d_py[i][j] + sum(
        (Dyy[k2][j].scale(Gamma[k2, i]) for k2 in range(l)),
        FTSeries.zero(gr, r, s)))
    Dpx = [[None] * l for _ in range(d)]
    Dpy = [[None] * l for _ in range(d)]
    for i in range(d):
        u_row, w_row = solve_L2(R1[i], R2[i], beta, witness, K_eff)
        for j in range(l):
            Dpx[i][j] = u_row[j]
            Dpy[i][j] = w_row[j]
    R3 = mat_comb(d, d, lambda i, j: sp_u.d_pp[i][j]
                  + sum((Dpy[j][k2].scale(Gamma[k2, i]) for k2 in range(l)),
                        FTSeries.zero(gr, r, s))
                  + sum((Dpy[i][k2].scale(Gamma[k2, j]) for k2 in range(l)),
                        FTSeries.zero(gr, r, s)))
    Dpp = [[None] * d for _ in range(d)]
    for i in range(d):
        for j in range(i, d):
            Dpp[i][j] = solve_L1(R3[i][j], witness)
            if j > i:
                Dpp[j][i] = Dpp[i][j]

    F_quad = _series_from_blocks(gr, r, s, d_xx=Dxx, d_yy=Dyy, d_xy=Dxy,
                                 d_px=Dpx, d_py=Dpy, d_pp=Dpp)
    F_full = F_lin + F_quad
    gen = GeneratingFunction(F_full, v_series)
    R = combo + gen.bracket_with(Nred)
    spR = taylor_split(R)
    cbar = _real_mean(spR.a, "cbar")
    bbar = np.array([[_real_mean(spR.d_xx[i][j], "beta-bar")
                      for j in range(l)] for i in range(l)])
    Gbar = np.array([[_real_mean(spR.d_px[j][i], "Gamma-bar")
                      for j in range(d)] for i in range(l)])
    Mbar = np.array([[_real_mean(spR.d_pp[i][j], "M-bar")
                      for j in range(d)] for i in range(d)])
    hbar = spR.remainder
    model = _series_from_blocks(
        gr, r, s, a=FTSeries.constant(gr, r, s, cbar),
        d_xx=const_matrix(gr, r, s, bbar), d_pp=const_matrix(gr, r, s, Mbar),
        d_px=const_matrix(gr, r, s, Gbar.T), remainder=hbar)
    resid_pt = majorant_norm(R - model)
    return {"alpha": alpha_pt, "v": v_pt, "F": F_full, "cbar": cbar,
            "bbar": bbar, "Gbar": Gbar, "Mbar": Mbar, "hbar": hbar,
            "resid": resid_pt, "lin_defect": lin_defect, "cond": cond,
            "obstruction": obstruction, "sym_defect": sym_defect}


def _project_series_pointwise(per_point, weights, l, size, gr, r, s):
    """Coefficient-wise parameter projection of per-point (q, z)-series."""
    keys = set()
    scale = 0.0
    for f in per_point:
        if f is None:
            continue
        scale = max(scale, f.max_abs_coeff())
        for (j, k, a) in f.terms:
            keys.add((k, a))
    floor = 1e-16 * scale
    out = FTSeries.zero(gr, r, s)
    defect = 0.0
    npts = size ** l
    zj = (0,) * gr.l
    for (k, a) in sorted(keys):
        vals = np.zeros(npts, dtype=complex)
        for idx, f in enumerate(per_point):
            if f is None:
                continue
            vals[idx] = f.terms.get((zj, k, a), 0.0) * weights[idx]
        proj, dfct = project_phi_values(vals, l, size, gr, r, s,
                                        coeff_floor=floor)
        defect = max(defect, dfct)
        for (j, _k, _a), c in proj.terms.items():
            out.terms[(j, k, a)] = c
    out._prune()
    return out, defect


def _project_scalar_pointwise(vals, weights, l, size, gr, r, s):
    v = np.asarray(vals, dtype=complex) * weights
    floor = 1e-16 * float(np.max(np.abs(v)), ) if len(v) else 0.0
    return project_phi_values(v, l, size, gr, r, s, coeff_floor=floor)


def solve_cohomological(N, f, phi_x, witness, sigma, delta, delta_plus,
                        K_eff=None, resid_factor=1e-8, grid_size=None,
                        bump_grid_cap=4096):
    """Full construction glued over the parameter torus.

    Returns a CohomSolution whose residual_plateau field is the majorant of
    the defect g-slot of Nbar over the region where the bump equals one; it is
    checked against resid_factor times the majorant of f by the caller.
    """
    gr = f.grading
    l, d = gr.l, gr.d
    r, s = f.r, f.s
    if K_eff is None:
        K_eff = gr.K_q
    for i in range(l):
        for j in range(l):
            target = 1.0 if i == j else 0.0
            dev = majorant_norm(N.Q[i][j] - target) if not N.Q[i][j].is_zero() \
                else abs(target)
            if dev > 1e-10:
                raise CohomologyError("tuple must have Q = I before the solve")
    size = grid_size or phi_grid_size(gr.K_phi)
    grid = phi_grid(l, size)
    nu = nu_max_profile(N.beta, grid)
    t1, t2 = 2.0 * delta_plus, 3.0 * delta_plus
    a_scale = (t2 - t1) / 4.0
    glued = False
    if np.all(nu < t1 + a_scale):
        psi = FTSeries.constant(gr, r, s, 1.0)
        psi_back = np.ones(len(grid))
    elif np.all(nu >= t1 + a_scale):
        raise CohomologyError(
            "sublevel region empty: min nu_max(beta) = %.3g >= %.3g"
            % (float(np.min(nu)), t1 + a_scale))
    else:
        glued = True
        need = int(math.ceil(2 * math.pi / (a_scale / 4.0)))
        fine_size = min(bump_grid_cap, max(size, need))
        fine = phi_grid(l, fine_size) if fine_size != size else grid
        nu_fine = nu_max_profile(N.beta, fine) if fine_size != size else nu
        psi, _vals = bump_psi(fine, nu_fine, t1, t2, gr, r, s)
        psi_back = eval_phi_series(psi, grid).real
    plateau = nu < t1

    per_point = []
    max_cond = 0.0
    lin_defect = 0.0
    obstruction = 0.0
    tracker_resid = 0.0
    for idx, phi in enumerate(grid):
        if psi_back[idx] <= PSI_SOLVE_FLOOR:
            per_point.append(None)
            continue
        beta = mat_eval_phi(N.beta, phi, symmetric_tol=1e-8)
        Gamma = mat_eval_phi(N.Gamma, phi)
        M = mat_eval_phi(N.M, phi, symmetric_tol=1e-8)
        Nred = _reduced_hamiltonian_at(N, phi, beta, Gamma, M)
        f_phi = freeze_phi(f, phi)
        phix_phi = [freeze_phi(phi_x[i], phi) for i in range(l)]
        try:
            res = _point_solve(gr, r, s, N.w, beta, Gamma, M, Nred, f_phi,
                               phix_phi, witness, K_eff)
        except SolverPreconditionError as exc:
            raise SolverPreconditionError(
                "%s (at parameter grid point %s)" % (exc, phi)) from exc
        per_point.append(res)
        max_cond = max(max_cond, res["cond"])
        lin_defect = max(lin_defect, res["lin_defect"])
        obstruction = max(obstruction, res["obstruction"])

    weights = psi_back.copy()
    weights[weights <= PSI_SOLVE_FLOOR] = 0.0
    proj_defect = 0.0

    def scal(getter):
        nonlocal proj_defect
        vals = [0.0 if p is None else getter(p) for p in per_point]
        ser, dfc = _project_scalar_pointwise(vals, weights, l, size, gr, r, s)
        proj_defect = max(proj_defect, dfc)
        return ser

    alpha_g = [scal(lambda p, i=i: p["alpha"][i]) for i in range(l)]
    v_g = [scal(lambda p, i=i: p["v"][i]) for i in range(d)]
    cbar_g = scal(lambda p: p["cbar"])
    beta_g = [[scal(lambda p, i=i, j=j: p["bbar"][i, j]) for j in range(l)]
              for i in range(l)]
    Gamma_g = [[scal(lambda p, i=i, j=j: p["Gbar"][i, j]) for j in range(d)]
               for i in range(l)]
    M_g = [[scal(lambda p, i=i, j=j: p["Mbar"][i, j]) for j in range(d)]
           for i in range(d)]
    F_g, dfc = _project_series_pointwise(
        [None if p is None else p["F"] for p in per_point], weights, l, size,
        gr, r, s)
    proj_defect = max(proj_defect, dfc)
    hbar_g, dfc = _project_series_pointwise(
        [None if p is None else p["hbar"] for p in per_point], weights, l,
        size, gr, r, s)
    proj_defect = max(proj_defect, dfc)

    # global defect slot: everything the glued representatives fail to match
    Nred_glob = assemble_hamiltonian(N) - N.g - N.c
    gen_g = GeneratingFunction(F_g, v_g)
    lhs = f.copy()
    for i in range(l):
        lhs = lhs - multiply(alpha_g[i], phi_x[i])
    lhs = lhs + gen_g.bracket_with(Nred_glob)
    model = _series_from_blocks(
        gr, r, s, a=cbar_g,
        d_xx=beta_g, d_pp=M_g,
        d_px=[[Gamma_g[j][i] for j in range(l)] for i in range(d)],
        remainder=hbar_g)
    gbar = lhs - model
    Nbar = NormalFormTuple(
        w=np.zeros(d), c=cbar_g, beta=beta_g, Gamma=Gamma_g, M=M_g,
        Q=series_matrix(gr, r, s, l, l), g=gbar, h=hbar_g)

    resid_plateau = 0.0
    for idx, phi in enumerate(grid):
        if plateau[idx]:
            resid_plateau = max(resid_plateau, majorant_at_phi(gbar, phi))

    # tracker condition residual on the plateau
    for i in range(l):
        cond_ser = average_q(restrict_z0(phi_x[i] + gen_g.bracket_with(phi_x[i])))
        for idx, phi in enumerate(grid):
            if plateau[idx]:
                tracker_resid = max(tracker_resid,
                                    majorant_at_phi(cond_ser, phi))

    return CohomSolution(
        alpha=alpha_g, v=v_g, F=F_g, Nbar=Nbar, psi=psi, psi_grid=psi_back,
        plateau_mask=plateau, grid=grid, residual_plateau=resid_plateau,
        residual_tracker=tracker_resid, linear_defect=lin_defect,
        zero_mode_obstruction=obstruction, max_condition=max_cond,
        projection_defect=proj_defect, glued=glued)

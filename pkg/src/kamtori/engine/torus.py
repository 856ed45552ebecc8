"""Parameter selection, torus extraction and direct invariance verification."""

import math
from dataclasses import dataclass, field

import numpy as np

from ..normalform import eval_phi_series, mat_eval_phi, phi_grid
from ..series import differentiate, evaluate
from ..symplectic import vector_field
from .cohom import freeze_phi, restrict_z0


@dataclass
class TorusResult:
    phi0: np.ndarray
    embedding: dict          # q-only displacement series uq, ux, up, uy
    residual: float = None
    zeta_profile: np.ndarray = None
    alpha_at_phi0: np.ndarray = None
    nu_max_at_phi0: float = None
    grad_norm: float = None
    distance_to_trivial: float = None


def find_vanishing_point(zeta, alpha, beta, tol=1e-12, grid=None,
                         max_iter=200):
    """Global maximization of zeta on a dense grid plus local ascent.

    Ties on the grid break toward the smallest row-major (lexicographic)
    coordinate; the refinement runs Newton steps on the gradient with a
    safeguarded step size down to gradient norm <= tol.
    """
    l = zeta.grading.l
    if grid is None:
        grid = phi_grid(l, max(64, 4 * zeta.grading.K_phi))
    vals = eval_phi_series(zeta, grid).real
    idx = int(np.argmax(vals))
    phi = grid[idx].copy()
    dzeta = [differentiate(zeta, ("phi", i)) for i in range(l)]
    hess = [[differentiate(dzeta[i], ("phi", j)) for j in range(l)]
            for i in range(l)]

    def gradient(p):
        return np.array([eval_phi_series(dzeta[i], p[None, :])[0].real
                         for i in range(l)])

    def hessian(p):
        return np.array([[eval_phi_series(hess[i][j], p[None, :])[0].real
                          for j in range(l)] for i in range(l)])

    g = gradient(phi)
    for _ in range(max_iter):
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            break
        H = hessian(phi)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            step = g * 0.1
        # safeguard: shrink until the gradient norm decreases
        lam = 1.0
        for _ in range(60):
            cand = phi + lam * step
            gc = gradient(cand)
            if np.linalg.norm(gc) < gn:
                phi, g = cand, gc
                break
            lam *= 0.5
        else:
            phi = phi + 1e-3 * g / max(gn, 1e-300)
            g = gradient(phi)
    phi = np.mod(phi, 2 * math.pi)
    info = {"grad_norm": float(np.linalg.norm(gradient(phi))),
            "zeta_values": vals}
    if alpha is not None:
        info["alpha_at_phi0"] = np.array(
            [eval_phi_series(a, phi[None, :])[0].real for a in alpha])
    if beta is not None:
        B = mat_eval_phi(beta, phi)
        info["nu_max_at_phi0"] = float(np.linalg.eigvalsh(0.5 * (B + B.T))[-1])
    return phi, info


def extract_torus(state, phi0):
    """Embedding q -> Phi^n(phi0, q, 0, 0, 0), stored as q-only displacements."""
    phi0 = np.asarray(phi0, dtype=float)
    frz = lambda u: freeze_phi(restrict_z0(u), phi0)
    emb = {"uq": [frz(u) for u in state.Phi.Uq],
           "ux": [frz(u) for u in state.Phi.Ux],
           "up": [frz(u) for u in state.Phi.Up],
           "uy": [frz(u) for u in state.Phi.Uy]}
    for comps in emb.values():
        for u in comps:
            defect = u.reality_defect()
            if defect > 1e-9 * max(1.0, u.max_abs_coeff()):
                raise ValueError("embedding component lost reality symmetry "
                                 "(defect %.3g)" % defect)
    dist = 0.0
    gr = state.grading
    for q0 in _qgrid(gr.d, 32):
        vec = [evaluate(u, q=q0) for comps in emb.values() for u in comps]
        dist = max(dist, float(np.linalg.norm(vec)))
    return TorusResult(phi0=phi0, embedding=emb, distance_to_trivial=dist)


def _qgrid(d, n):
    axis = np.arange(n) * (2 * math.pi / n)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


def verify_invariance(H, embedding, omega, grid_n=64):
    """max over a q-grid of |X_H(emb(q)) - D emb(q) . omega|.

    H must already be parameter-free (frozen at the selected phi0); the
    embedding holds q-only displacement series."""
    gr = H.grading
    d, l = gr.d, gr.l
    omega = np.asarray(omega, dtype=float)
    qd, xd, pd, yd = vector_field(H)
    fields = qd + xd + pd + yd
    uq, ux, up, uy = (embedding["uq"], embedding["ux"], embedding["up"],
                      embedding["uy"])
    comps = uq + ux + up + uy
    # D emb . omega: identity part contributes omega on the q-rows
    derivs = [[differentiate(u, ("q", j)) for j in range(d)] for u in comps]
    worst = 0.0
    for q0 in _qgrid(d, grid_n):
        qv = q0 + np.array([evaluate(u, q=q0) for u in uq])
        xv = np.array([evaluate(u, q=q0) for u in ux])
        pv = np.array([evaluate(u, q=q0) for u in up])
        yv = np.array([evaluate(u, q=q0) for u in uy])
        X = np.array([evaluate(f, q=qv, x=xv, p=pv, y=yv) for f in fields])
        D = np.array([[evaluate(derivs[i][j], q=q0) for j in range(d)]
                      for i in range(len(comps))])
        flow = D @ omega
        flow[:d] += omega
        worst = max(worst, float(np.linalg.norm(X - flow)))
    return worst

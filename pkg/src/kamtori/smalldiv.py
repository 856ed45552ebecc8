"""Per-Fourier-mode solvers for the three cohomological linear problems and
Diophantine diagnostics.

All three solvers act slice-wise: coefficients are grouped by the parameter
mode j and the Taylor multi-index a, and each angle mode k != 0 is inverted
independently (the systems are diagonal in k).  Zero modes follow the
particular solutions fixed by the scheme:

  L1:  u has zero q-mean, solves <omega, d_q u> = v - M_q v
  L2:  (B_x, B_y)(0) = (M_q b_y, 0),  solves  d_om B_x - beta B_y = b_x - M_q b_x
                                              d_om B_y + B_x     = b_y
  L3:  (D_xx, D_yy, D_xy)(0) = (M_q d_xy, 0, M_q d_yy), solves
         d_om D_xx - beta D_xy            = d_xx - M_q d_xx
         d_om D_yy + D_xy                 = d_yy
         d_om D_xy - beta D_yy + D_xx     = d_xy
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .series import FTSeries, _l1

RESONANCE_RTOL = 1e-14


class ResonanceError(ValueError):
    pass


class SolverPreconditionError(ValueError):
    pass


@dataclass
class DiophantineWitness:
    """Finite verification of |<omega,k>| >= gamma/|k|_1^(d+tau) up to order K."""

    omega: np.ndarray
    gamma: float
    tau: float
    K_checked: int
    resonant: bool = False
    worst_k: tuple = None

    @property
    def d(self):
        return len(self.omega)

    def min_divisor_sq(self, K):
        """min over 0 < |k|_1 <= K of <omega,k>^2."""
        if K > self.K_checked:
            raise ValueError("witness only checked up to K=%d" % self.K_checked)
        cache = getattr(self, "_mindiv_cache", None)
        if cache is None:
            cache = {}
            object.__setattr__(self, "_mindiv_cache", cache)
        if K not in cache:
            best = min(abs(float(np.dot(self.omega, k))) for k in _modes_up_to(self.d, K))
            cache[K] = best * best
        return cache[K]


def _modes_up_to(d, K):
    """All k in Z^d with 0 < |k|_1 <= K, one representative per +-pair."""
    rng = range(-K, K + 1)
    for k in itertools.product(*([rng] * d)):
        if sum(abs(v) for v in k) == 0 or sum(abs(v) for v in k) > K:
            continue
        # keep the lexicographically positive representative
        for v in k:
            if v > 0:
                yield k
                break
            if v < 0:
                break


def effective_diophantine_constant(omega, tau, K):
    """Scan modes up to order K for the sharpest Diophantine constant.

    Returns a witness with gamma = min |<omega,k>| |k|_1^(d+tau); an exact
    resonance within relative tolerance flags the witness instead of raising.
    """
    if K < 1:
        raise ValueError("need K >= 1")
    omega = np.asarray(omega, dtype=float)
    d = len(omega)
    norm_w = float(np.linalg.norm(omega))
    gamma = math.inf
    worst = None
    resonant = False
    for k in _modes_up_to(d, K):
        dot = abs(float(np.dot(omega, k)))
        l1 = sum(abs(v) for v in k)
        if dot <= RESONANCE_RTOL * norm_w * l1:
            return DiophantineWitness(omega, 0.0, tau, K, resonant=True, worst_k=k)
        val = dot * l1 ** (d + tau)
        if val < gamma:
            gamma, worst = val, k
    return DiophantineWitness(omega, gamma, tau, K, resonant=resonant, worst_k=worst)


def _group_slices(series_list):
    """Group coefficients of several series by (j, alpha), then by angle mode k.

    Returns dict (j, a) -> dict k -> complex vector over the series list.
    """
    out = {}
    n = len(series_list)
    for idx, f in enumerate(series_list):
        for (j, k, a), c in f.terms.items():
            slot = out.setdefault((j, a), {})
            vec = slot.get(k)
            if vec is None:
                vec = np.zeros(n, dtype=complex)
                slot[k] = vec
            vec[idx] += c
    return out


def _divisor(witness, k):
    dot = float(np.dot(witness.omega, k))
    if abs(dot) <= RESONANCE_RTOL * np.linalg.norm(witness.omega) * _l1(k):
        raise ResonanceError("resonant divisor at k=%s" % (k,))
    return dot


def solve_L1(v, witness):
    """Unique zero-q-mean u with <omega, d_q u> = v - M_q v, mode by mode."""
    g = v.grading
    if g.K_q > witness.K_checked:
        raise ValueError("witness does not cover K_q=%d" % g.K_q)
    zero_k = (0,) * g.d
    new = FTSeries.zero(g, v.r, v.s)
    new.trunc_loss = v.trunc_loss
    for (j, k, a), c in v.terms.items():
        if k == zero_k:
            continue
        new.terms[(j, k, a)] = c / (1j * _divisor(witness, k))
    return new


def _check_beta(beta, witness, K, factor, who):
    beta = np.asarray(beta, dtype=float)
    if beta.shape[0] != beta.shape[1] or not np.allclose(beta, beta.T, atol=1e-12):
        raise SolverPreconditionError("%s: beta must be symmetric" % who)
    if np.linalg.norm(beta, 2) > 1.0 + 1e-12:
        raise SolverPreconditionError("%s: need ||beta|| <= 1" % who)
    nu = float(np.linalg.eigvalsh(beta)[-1])
    lim = factor * witness.min_divisor_sq(K)
    if nu > lim + 1e-15:
        # name the offending mode for the error message
        worst = min(_modes_up_to(witness.d, K),
                    key=lambda k: abs(float(np.dot(witness.omega, k))))
        raise SolverPreconditionError(
            "%s: nu_max(beta)=%.3g exceeds %.3g*min<omega,k>^2=%.3g (worst k=%s)"
            % (who, nu, factor, lim, worst))
    return beta


def solve_L2(b_x, b_y, beta, witness, K):
    """Coupled pair solve; beta is a fixed symmetric l x l matrix at this slice.

    b_x, b_y are length-l lists of series (may carry phi modes and Taylor
    factors; every (j, alpha) slice is solved independently).
    """
    l = len(b_x)
    g = b_x[0].grading
    beta = _check_beta(beta, witness, K, 0.5, "L2")
    zero_k = (0,) * g.d
    Bx = [FTSeries.zero(g, f.r, f.s) for f in b_x]
    By = [FTSeries.zero(g, f.r, f.s) for f in b_x]
    slic = _group_slices(list(b_x) + list(b_y))
    eye = np.eye(l)
    for (j, a), modes in sorted(slic.items()):
        for k, vec in sorted(modes.items()):
            bx_hat, by_hat = vec[:l], vec[l:]
            if k == zero_k:
                for i in range(l):
                    if by_hat[i] != 0.0:
                        Bx[i].terms[(j, k, a)] = by_hat[i]
                continue
            lam = 1j * _divisor(witness, k)
            M = np.block([[lam * eye, -beta], [eye, lam * eye]])
            det = np.linalg.det(M)
            dot = float(np.dot(witness.omega, k))
            if abs(det) < (1 - 1e-9) * (2.0 ** -l) * abs(dot) ** (2 * l):
                raise SolverPreconditionError(
                    "L2: determinant bound violated at k=%s" % (k,))
            sol = np.linalg.solve(M, np.concatenate([bx_hat, by_hat]))
            for i in range(l):
                if sol[i] != 0.0:
                    Bx[i].terms[(j, k, a)] = sol[i]
                if sol[l + i] != 0.0:
                    By[i].terms[(j, k, a)] = sol[l + i]
    return Bx, By


def solve_L3(d_xx, d_yy, d_xy, beta, witness, K):
    """Coupled triple solve for l x l matrices of series (column-decoupled)."""
    l = len(d_xx)
    g = d_xx[0][0].grading
    beta = _check_beta(beta, witness, K, 0.25, "L3")
    zero_k = (0,) * g.d

    def fresh():
        return [[FTSeries.zero(g, d_xx[0][0].r, d_xx[0][0].s) for _ in range(l)]
                for _ in range(l)]

    Dxx, Dyy, Dxy = fresh(), fresh(), fresh()
    flat = ([d_xx[i][jj] for i in range(l) for jj in range(l)]
            + [d_yy[i][jj] for i in range(l) for jj in range(l)]
            + [d_xy[i][jj] for i in range(l) for jj in range(l)])
    slic = _group_slices(flat)
    eye = np.eye(l)
    zero = np.zeros((l, l))
    for (j, a), modes in sorted(slic.items()):
        for k, vec in sorted(modes.items()):
            dxx_h = vec[:l * l].reshape(l, l)
            dyy_h = vec[l * l:2 * l * l].reshape(l, l)
            dxy_h = vec[2 * l * l:].reshape(l, l)
            if k == zero_k:
                for i in range(l):
                    for jj in range(l):
                        if dxy_h[i, jj] != 0.0:
                            Dxx[i][jj].terms[(j, k, a)] = dxy_h[i, jj]
                        if dyy_h[i, jj] != 0.0:
                            Dxy[i][jj].terms[(j, k, a)] = dyy_h[i, jj]
                continue
            lam = 1j * _divisor(witness, k)
            M = np.block([[lam * eye, zero, -beta],
                          [zero, lam * eye, eye],
                          [eye, -beta, lam * eye]])
            det = np.linalg.det(M)
            dot = abs(float(np.dot(witness.omega, k)))
            if abs(det) < (1 - 1e-9) * (4.0 ** -l) * dot ** (3 * l):
                raise SolverPreconditionError(
                    "L3: determinant bound violated at k=%s" % (k,))
            rhs = np.vstack([dxx_h, dyy_h, dxy_h])  # columns decouple
            sol = np.linalg.solve(M, rhs)
            for i in range(l):
                for jj in range(l):
                    if sol[i, jj] != 0.0:
                        Dxx[i][jj].terms[(j, k, a)] = sol[i, jj]
                    if sol[l + i, jj] != 0.0:
                        Dyy[i][jj].terms[(j, k, a)] = sol[l + i, jj]
                    if sol[2 * l + i, jj] != 0.0:
                        Dxy[i][jj].terms[(j, k, a)] = sol[2 * l + i, jj]
    return Dxx, Dyy, Dxy

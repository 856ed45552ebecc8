"""Normal-form tuples, their Hamiltonian assembly, sublevel-set predicates,
nu_max profiling and bump-function gluing over the parameter torus."""

import math
from dataclasses import dataclass, field

import numpy as np

from .series import FTSeries, _l1, ck_norm_estimate, differentiate


# -- parameter-grid helpers --------------------------------------------------------


def phi_grid_size(K_phi, minimum=64):
    return max(minimum, 4 * K_phi + 1)


def phi_grid(l, size):
    """Uniform product grid on T^l: returns array (size^l, l) in row-major order."""
    axis = np.arange(size) * (2 * math.pi / size)
    mesh = np.meshgrid(*([axis] * l), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


def eval_phi_series(f, grid):
    """Evaluate a phi-only series at grid points; returns complex array."""
    vals = np.zeros(len(grid), dtype=complex)
    for (j, k, a), c in sorted(f.terms.items()):
        if _l1(k) or _l1(a):
            raise ValueError("series is not phi-only")
        vals += c * np.exp(1j * grid @ np.asarray(j, dtype=float))
    return vals


def majorant_at_phi(f, phi, r=None, s=None):
    """Majorant of the (q, z)-series obtained by freezing the parameter."""
    r = f.r if r is None else r
    s = f.s if s is None else s
    phi = np.asarray(phi, dtype=float)
    groups = {}
    for (j, k, a), c in sorted(f.terms.items()):
        groups[(k, a)] = groups.get((k, a), 0.0) + c * np.exp(1j * float(np.dot(j, phi)))
    total = 0.0
    for (k, a), c in sorted(groups.items()):
        total += abs(c) * math.exp(_l1(k) * r) * s ** _l1(a)
    return total


def project_phi_values(values, l, size, grading, r, s, coeff_floor=1e-300):
    """Project grid samples of a parameter-periodic function onto <= K_phi modes.

    values: complex array of length size^l in the row-major order of phi_grid.
    Returns (FTSeries with only phi modes, defect = total magnitude of the
    dropped high modes, which bounds the grid error of the representative).
    """
    arr = np.asarray(values, dtype=complex).reshape((size,) * l)
    hat = np.fft.fftn(arr) / size ** l
    new = FTSeries.zero(grading, r, s)
    zk = (0,) * grading.d
    za = (0,) * grading.nz
    half = size // 2
    defect = 0.0
    for idx in np.ndindex(*([size] * l)):
        j = tuple(m if m <= half else m - size for m in idx)
        c = hat[idx]
        if _l1(j) > grading.K_phi:
            defect += abs(c)
            continue
        if abs(c) > coeff_floor:
            new.terms[(j, zk, za)] = complex(c)
    return new, float(defect)


# -- tuple space --------------------------------------------------------------------


def series_matrix(grading, r, s, rows, cols):
    return [[FTSeries.zero(grading, r, s) for _ in range(cols)] for _ in range(rows)]


def const_matrix(grading, r, s, M):
    M = np.asarray(M, dtype=float)
    out = series_matrix(grading, r, s, M.shape[0], M.shape[1])
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            if M[i, j] != 0.0:
                out[i][j] = FTSeries.constant(grading, r, s, M[i, j])
    return out


def mat_eval_phi(mat, phi, symmetric_tol=None):
    """Evaluate a matrix of phi-only series at one parameter value."""
    rows, cols = len(mat), len(mat[0])
    out = np.zeros((rows, cols), dtype=complex)
    for i in range(rows):
        for j in range(cols):
            f = mat[i][j]
            acc = 0.0 + 0.0j
            for (jj, k, a), c in sorted(f.terms.items()):
                acc += c * np.exp(1j * float(np.dot(jj, phi)))
            out[i, j] = acc
    if np.max(np.abs(out.imag)) > 1e-10 * max(1.0, np.max(np.abs(out))):
        raise ValueError("matrix series evaluated to a non-real matrix")
    res = out.real
    if symmetric_tol is not None and np.max(np.abs(res - res.T)) > symmetric_tol:
        raise ValueError("matrix series evaluation is not symmetric within %g"
                         % symmetric_tol)
    return res


def mat_add(A, B, scale=1.0):
    return [[A[i][j] + B[i][j] * scale for j in range(len(A[0]))] for i in range(len(A))]


@dataclass
class NormalFormTuple:
    """The eight-component tuple (w, c, beta, Gamma, M, Q, g, h).

    w is a fixed frequency vector; c, beta, Gamma, M, Q depend on the
    parameter only; g is the sublevel-supported error slot and h the cubic
    remainder (Taylor degree >= 3 in (x, p, y))."""

    w: np.ndarray
    c: FTSeries
    beta: list
    Gamma: list
    M: list
    Q: list
    g: FTSeries
    h: FTSeries

    @property
    def grading(self):
        return self.c.grading

    @property
    def radii(self):
        return (self.c.r, self.c.s)

    def validate(self):
        gr = self.grading
        if len(self.w) != gr.d:
            raise ValueError("w has wrong dimension")
        for (j, k, a), _ in self.h.terms.items():
            if _l1(a) < 3:
                raise ValueError("h carries a Taylor term of degree < 3")

    def copy(self):
        cp = lambda m: [[e.copy() for e in row] for row in m]
        return NormalFormTuple(np.array(self.w), self.c.copy(), cp(self.beta),
                               cp(self.Gamma), cp(self.M), cp(self.Q),
                               self.g.copy(), self.h.copy())


def initial_tuple(grading, r, s, omega, M0, h=None, Q0=None):
    """The starting tuple (omega, 0, 0, 0, M0, I_l, 0, h)."""
    gr = grading
    h = h if h is not None else FTSeries.zero(gr, r, s)
    Q0 = np.eye(gr.l) if Q0 is None else np.asarray(Q0, dtype=float)
    return NormalFormTuple(
        w=np.asarray(omega, dtype=float),
        c=FTSeries.zero(gr, r, s),
        beta=const_matrix(gr, r, s, np.zeros((gr.l, gr.l))),
        Gamma=const_matrix(gr, r, s, np.zeros((gr.l, gr.d))),
        M=const_matrix(gr, r, s, M0),
        Q=const_matrix(gr, r, s, Q0),
        g=FTSeries.zero(gr, r, s),
        h=h)


def _monomial(grading, r, s, pos_list, coeff=1.0):
    alpha = [0] * grading.nz
    for p in pos_list:
        alpha[p] += 1
    return FTSeries.term(grading, r, s, (0,) * grading.l, (0,) * grading.d,
                         tuple(alpha), coeff)


def assemble_hamiltonian(N):
    """c + <w,p> + 1/2<Mp,p> + 1/2<Qy,y> + <Gamma p, x> + 1/2<beta x, x> + g + h."""
    gr = N.grading
    r, s = N.radii
    xo, po, yo = 0, gr.l, gr.l + gr.d
    total = N.c.copy()
    for i in range(gr.d):
        if N.w[i] != 0.0:
            total = total + _monomial(gr, r, s, [po + i], N.w[i])
    for i in range(gr.d):
        for j in range(gr.d):
            if not N.M[i][j].is_zero():
                total = total + N.M[i][j] * _monomial(gr, r, s, [po + i, po + j], 0.5)
    for i in range(gr.l):
        for j in range(gr.l):
            if not N.Q[i][j].is_zero():
                total = total + N.Q[i][j] * _monomial(gr, r, s, [yo + i, yo + j], 0.5)
            if not N.beta[i][j].is_zero():
                total = total + N.beta[i][j] * _monomial(gr, r, s, [xo + i, xo + j], 0.5)
    for i in range(gr.l):
        for j in range(gr.d):
            if not N.Gamma[i][j].is_zero():
                total = total + N.Gamma[i][j] * _monomial(gr, r, s, [xo + i, po + j])
    return total + N.g + N.h


def nu_max_profile(beta, grid):
    """Largest eigenvalue of the symmetrized evaluation of beta at each point."""
    out = np.zeros(len(grid))
    for idx, phi in enumerate(grid):
        B = mat_eval_phi(beta, phi)
        if np.max(np.abs(B - B.T)) > 1e-8:
            raise ValueError("beta evaluation asymmetric beyond 1e-8 at phi=%s" % phi)
        out[idx] = float(np.linalg.eigvalsh(0.5 * (B + B.T))[-1])
    return out


def is_normal_form(N, v, delta, tol, grid=None):
    """True iff w = v and g (with its phi-gradient) vanishes on the sublevel set."""
    gr = N.grading
    if grid is None:
        grid = phi_grid(gr.l, phi_grid_size(gr.K_phi))
    report = {"w_matches": bool(np.array_equal(np.asarray(v, dtype=float), N.w)),
              "violations": [], "max_g": 0.0, "max_dg": 0.0}
    nu = nu_max_profile(N.beta, grid)
    dgs = [differentiate(N.g, ("phi", i)) for i in range(gr.l)]
    for idx, phi in enumerate(grid):
        if nu[idx] > delta:
            continue
        mg = majorant_at_phi(N.g, phi)
        mdg = max((majorant_at_phi(df, phi) for df in dgs), default=0.0)
        report["max_g"] = max(report["max_g"], mg)
        report["max_dg"] = max(report["max_dg"], mdg)
        if mg > tol or mdg > tol:
            report["violations"].append((tuple(phi), mg, mdg))
    ok = report["w_matches"] and not report["violations"]
    return ok, report


# -- bump function -----------------------------------------------------------------


def _mollifier_kernel(l, size, a):
    """Compact-support kernel of scale a sampled on the torus grid, normalized
    so that discrete convolution of the all-ones field gives exactly 1."""
    h = 2 * math.pi / size
    axis = np.arange(size) * h
    axis = np.minimum(axis, 2 * math.pi - axis)  # torus distance to 0
    mesh = np.meshgrid(*([axis] * l), indexing="ij")
    rho2 = sum(m * m for m in mesh) / (a * a)
    ker = np.zeros_like(rho2)
    inside = rho2 < 1.0
    ker[inside] = np.exp(-1.0 / (1.0 - rho2[inside]))
    total = ker.sum()
    if total == 0.0:
        raise ValueError("bump grid too coarse: no kernel sample inside radius a")
    return ker / total


class BumpProjectionError(ValueError):
    pass


def bump_psi(profile_grid, nu_values, t1, t2, grading, r, s, tol=1e-6):
    """Smooth cutoff: 1 where nu_max < t1, 0 where nu_max > t2, glued in between.

    profile_grid must be the uniform product grid of some size G per dimension
    (row-major, as produced by phi_grid); the mollified indicator is projected
    onto <= K_phi parameter modes and the plateau tolerance is certified on the
    grid.
    """
    if not t2 > t1:
        raise ValueError("need t2 > t1")
    l = grading.l
    size = round(len(profile_grid) ** (1.0 / l))
    if size ** l != len(profile_grid):
        raise ValueError("profile grid is not a uniform product grid")
    nu = np.asarray(nu_values, dtype=float).reshape((size,) * l)
    a = (t2 - t1) / 4.0
    indicator = (nu < t1 + a).astype(float)
    if indicator.all():
        psi = FTSeries.constant(grading, r, s, 1.0)
        return psi, np.ones(len(profile_grid))
    if not indicator.any():
        return FTSeries.zero(grading, r, s), np.zeros(len(profile_grid))
    spacing = 2 * math.pi / size
    if spacing > a / 2:
        raise ValueError("bump grid spacing %.3g too coarse for scale a=%.3g; "
                         "refine the profile grid" % (spacing, a))
    ker = _mollifier_kernel(l, size, a)
    vals = np.fft.ifftn(np.fft.fftn(indicator) * np.fft.fftn(ker)).real
    psi, defect = project_phi_values(vals.reshape(-1), l, size, grading, r, s)
    back = eval_phi_series(psi, profile_grid).real
    flat_nu = nu.reshape(-1)
    bad_hi = np.max(np.abs(back[flat_nu < t1] - 1.0), initial=0.0)
    bad_lo = np.max(np.abs(back[flat_nu > t2]), initial=0.0)
    overshoot = max(np.max(back, initial=0.0) - 1.0, -np.min(back, initial=0.0))
    if max(bad_hi, bad_lo, overshoot) > tol:
        raise BumpProjectionError(
            "bump projection misses plateau tolerance %.1g "
            "(plateau1=%.3g, plateau0=%.3g, range=%.3g); increase K_phi"
            % (tol, bad_hi, bad_lo, overshoot))
    return psi, back


# -- norms -------------------------------------------------------------------------


def _mat_c2(mat, r):
    return max(ck_norm_estimate(e, 2, 0, r, None) if not e.is_zero() else 0.0
               for row in mat for e in row)


def normal_form_norm(N, r=None, s=None):
    """max of the eight component norms (C^2 in phi for the matrix parts)."""
    r = N.c.r if r is None else r
    s = N.c.s if s is None else s
    comps = [float(np.linalg.norm(N.w)),
             ck_norm_estimate(N.c, 2, 0, r, s) if not N.c.is_zero() else 0.0,
             _mat_c2(N.beta, r), _mat_c2(N.Gamma, r), _mat_c2(N.M, r),
             _mat_c2(N.Q, r),
             ck_norm_estimate(N.g, 2, 2, r, s) if not N.g.is_zero() else 0.0,
             ck_norm_estimate(N.h, 2, 2, r, s) if not N.h.is_zero() else 0.0]
    return max(comps)


def normal_form_distance(N1, N2, r=None, s=None):
    if N1.grading != N2.grading:
        raise ValueError("grading mismatch")
    sub = lambda A, B: [[A[i][j] - B[i][j] for j in range(len(A[0]))]
                        for i in range(len(A))]
    diff = NormalFormTuple(N1.w - N2.w, N1.c - N2.c, sub(N1.beta, N2.beta),
                           sub(N1.Gamma, N2.Gamma), sub(N1.M, N2.M),
                           sub(N1.Q, N2.Q), N1.g - N2.g, N1.h - N2.h)
    return normal_form_norm(diff, r, s)


# -- serialization -----------------------------------------------------------------


def tuple_to_json(N):
    from .series import to_json_dict
    mat = lambda m: [[to_json_dict(e) for e in row] for row in m]
    return {"w": [float("%.17g" % v) for v in N.w], "c": to_json_dict(N.c),
            "beta": mat(N.beta), "Gamma": mat(N.Gamma), "M": mat(N.M),
            "Q": mat(N.Q), "g": to_json_dict(N.g), "h": to_json_dict(N.h)}


def tuple_from_json(data):
    from .series import from_json_dict
    mat = lambda m: [[from_json_dict(e) for e in row] for row in m]
    return NormalFormTuple(np.asarray(data["w"], dtype=float),
                           from_json_dict(data["c"]), mat(data["beta"]),
                           mat(data["Gamma"]), mat(data["M"]), mat(data["Q"]),
                           from_json_dict(data["g"]), from_json_dict(data["h"]))

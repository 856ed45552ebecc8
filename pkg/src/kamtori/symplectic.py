"""Poisson brackets, Hamiltonian vector fields (with the affine <v,q> term),
Lie-series time-1 flows, near-identity map composition with C^2 tracking, and
the integer/shear coordinate reductions that bring a resonant problem to the
parametrized model form."""

import math
from dataclasses import dataclass, field

import numpy as np

from .series import (FTSeries, _l1, ck_norm_estimate, differentiate,
                     ft_sum, majorant_norm, multiply)

DEFAULT_ORDER_CAP = 12
DEFAULT_SYMP_TOL = 1e-8


class GeneratorTooLargeError(ValueError):
    pass


class SymplecticityError(ValueError):
    pass


# -- brackets and fields -----------------------------------------------------------


def poisson_bracket(g, h):
    """{g, h} over both symplectic pairs (q, p) and (x, y)."""
    g._check_compat(h)
    gr = g.grading
    parts, scales = [], []
    for i in range(gr.d):
        parts.append(multiply(differentiate(g, ("q", i)), differentiate(h, ("p", i))))
        scales.append(1.0)
        parts.append(multiply(differentiate(g, ("p", i)), differentiate(h, ("q", i))))
        scales.append(-1.0)
    for i in range(gr.l):
        parts.append(multiply(differentiate(g, ("x", i)), differentiate(h, ("y", i))))
        scales.append(1.0)
        parts.append(multiply(differentiate(g, ("y", i)), differentiate(h, ("x", i))))
        scales.append(-1.0)
    return ft_sum(gr, g.r, g.s, parts, scales)


def vector_field(H, v=None):
    """(qdot, xdot, pdot, ydot) = (d_p H, d_y H, -d_q H - v, -d_x H)."""
    gr = H.grading
    qdot = [differentiate(H, ("p", i)) for i in range(gr.d)]
    xdot = [differentiate(H, ("y", i)) for i in range(gr.l)]
    pdot = [-differentiate(H, ("q", i)) for i in range(gr.d)]
    ydot = [-differentiate(H, ("x", i)) for i in range(gr.l)]
    if v is not None:
        for i in range(gr.d):
            vi = v[i]
            if isinstance(vi, FTSeries):
                pdot[i] = pdot[i] - vi
            elif vi:
                pdot[i] = pdot[i] - FTSeries.constant(gr, H.r, H.s, vi)
    return qdot, xdot, pdot, ydot


@dataclass
class GeneratingFunction:
    """Pair (F, v) defining the affine-Hamiltonian time-1 map of F + <v, q>.

    v is a list of d phi-only series (or None for v = 0)."""

    F: FTSeries
    v: list = None

    @property
    def grading(self):
        return self.F.grading

    def bracket_with(self, g):
        """{g, F + v.q} = {g, F} - sum_i v_i d_{p_i} g."""
        out = poisson_bracket(g, self.F)
        if self.v is not None:
            for i in range(self.grading.d):
                if not self.v[i].is_zero():
                    out = out - multiply(self.v[i], differentiate(g, ("p", i)))
        return out

    def scale_estimate(self):
        m = majorant_norm(self.F)
        if self.v is not None:
            m += sum(majorant_norm(vi) for vi in self.v)
        return m


def lie_transform(g, gen, order_cap=DEFAULT_ORDER_CAP, tol=None, first_term=None):
    """g composed with the time-1 flow of the generator, as an iterated-bracket sum.

    Stops at the first term whose majorant falls below tol (default
    1e-14 x majorant of g); enforces decay (each term below half the previous
    one once n >= 2).  Returns (series, remainder_bound).
    """
    scale = majorant_norm(g)
    if tol is None:
        tol = 1e-14 * max(scale, 1e-300)
    total = g.copy()
    term = gen.bracket_with(g) if first_term is None else first_term
    prev = math.inf
    n = 1
    while True:
        m = majorant_norm(term)
        if m <= tol:
            total = total + term
            return total, 2.0 * m
        if n > order_cap:
            raise GeneratorTooLargeError(
                "lie series not converged at order cap %d (last term %.3g)"
                % (order_cap, m))
        if n > 2 and m > 0.5 * prev:
            raise GeneratorTooLargeError(
                "lie series terms stopped decaying at order %d (%.3g -> %.3g); "
                "generator too large for the working radii" % (n, prev, m))
        total = total + term
        prev = m
        n += 1
        term = gen.bracket_with(term).scale(1.0 / n)


def lie_tail_integral(u, gen, weight, order_cap=DEFAULT_ORDER_CAP, tol=1e-300):
    """sum_n w_n u_n for the Lie terms u_n of u (u_0 = u, u_n = {u_{n-1}, gen}/n).

    weight(n) supplies w_n; used for the time-integral remainders of one step:
    int_0^1 (1-t) u o Psi^t dt has w_n = 1/((n+1)(n+2)) and
    int_0^1  t    u o Psi^t dt has w_n = 1/(n+2).
    """
    total = u.scale(weight(0))
    term = u
    n = 0
    prev = math.inf
    while True:
        n += 1
        term = gen.bracket_with(term).scale(1.0 / n)
        m = majorant_norm(term)
        if m <= tol or term.is_zero():
            return total + term.scale(weight(n)), 2.0 * m * abs(weight(n))
        if n > order_cap:
            raise GeneratorTooLargeError(
                "lie tail integral not converged at order cap %d (term %.3g)"
                % (order_cap, m))
        if n > 2 and m > 0.5 * prev:
            raise GeneratorTooLargeError(
                "lie tail integral terms stopped decaying at order %d" % n)
        total = total + term.scale(weight(n))
        prev = m


# -- symplectic maps ---------------------------------------------------------------


@dataclass
class SymplecticMapSeries:
    """Near-identity map stored as the displacement of each coordinate.

    Full image: Phi(phi, q, x, p, y) = (q + Uq, x + Ux, p + Up, y + Uy); the
    parameter phi is never moved."""

    Uq: list
    Ux: list
    Up: list
    Uy: list
    remainder: float = 0.0
    symp_residual: float = None

    @property
    def grading(self):
        return self.Uq[0].grading

    @property
    def radii(self):
        return (self.Uq[0].r, self.Uq[0].s)

    def components(self):
        return list(self.Uq) + list(self.Ux) + list(self.Up) + list(self.Uy)

    def is_identity(self):
        return all(u.is_zero() for u in self.components())

    def displacement_majorant(self):
        return max(majorant_norm(u) for u in self.components())

    def displacement_c2(self):
        return max((ck_norm_estimate(u, 2, 2) if not u.is_zero() else 0.0)
                   for u in self.components())

    def with_radii(self, r, s):
        def retag(u):
            if r > u.r * (1 + 1e-12) or s > u.s * (1 + 1e-12):
                raise ValueError("cannot grow radii by relabeling")
            return FTSeries(u.grading, r, s, u.terms, u.trunc_loss, _raw=True)
        return SymplecticMapSeries([retag(u) for u in self.Uq],
                                   [retag(u) for u in self.Ux],
                                   [retag(u) for u in self.Up],
                                   [retag(u) for u in self.Uy],
                                   self.remainder, self.symp_residual)

    def evaluate(self, phi, q, x=None, p=None, y=None):
        """Image point (q', x', p', y') at a real argument."""
        from .series import evaluate as ev
        gr = self.grading
        x = np.zeros(gr.l) if x is None else np.asarray(x, dtype=float)
        p = np.zeros(gr.d) if p is None else np.asarray(p, dtype=float)
        y = np.zeros(gr.l) if y is None else np.asarray(y, dtype=float)
        q = np.asarray(q, dtype=float)
        args = dict(phi=phi, q=q, x=x, p=p, y=y)
        dq = np.array([ev(u, **args) for u in self.Uq])
        dx = np.array([ev(u, **args) for u in self.Ux])
        dp = np.array([ev(u, **args) for u in self.Up])
        dy = np.array([ev(u, **args) for u in self.Uy])
        return q + dq, x + dx, p + dp, y + dy


def identity_map(grading, r, s):
    z = lambda n: [FTSeries.zero(grading, r, s) for _ in range(n)]
    return SymplecticMapSeries(z(grading.d), z(grading.l), z(grading.d),
                               z(grading.l), 0.0, 0.0)


def _base_bracket_with(kind, i, u):
    """{base coordinate, u} for base in {q_i, x_i, p_i, y_i}."""
    if kind == "q":
        return differentiate(u, ("p", i))
    if kind == "x":
        return differentiate(u, ("y", i))
    if kind == "p":
        return -differentiate(u, ("q", i))
    return -differentiate(u, ("x", i))


def symplecticity_residual(Phi):
    """Max majorant defect of the canonical bracket relations of the map."""
    gr = Phi.grading
    comps = ([("q", i, Phi.Uq[i]) for i in range(gr.d)]
             + [("x", i, Phi.Ux[i]) for i in range(gr.l)]
             + [("p", i, Phi.Up[i]) for i in range(gr.d)]
             + [("y", i, Phi.Uy[i]) for i in range(gr.l)])

    # {A, B} = {baseA, baseB} + residual; the canonical constant comes from the
    # bases alone, so every excess over it is collected in the residual below
    worst = 0.0
    for ai in range(len(comps)):
        for bi in range(ai + 1, len(comps)):
            ka, ia, ua = comps[ai]
            kb, ib, ub = comps[bi]
            res = _base_bracket_with(ka, ia, ub) - _base_bracket_with(kb, ib, ua)
            if not (ua.is_zero() or ub.is_zero()):
                res = res + poisson_bracket(ua, ub)
            worst = max(worst, majorant_norm(res))
    return worst


def map_from_generator(gen, order_cap=DEFAULT_ORDER_CAP, tol=None,
                       tol_symp=DEFAULT_SYMP_TOL, check=True):
    """Time-1 flow of F + <v, q> as a displacement map (Lie series per coordinate)."""
    gr = gen.grading
    r, s = gen.F.r, gen.F.s
    if tol is None:
        tol = 1e-14 * max(gen.scale_estimate(), 1e-300)
    zero = FTSeries.zero(gr, r, s)
    rem = 0.0

    def flow_disp(kind, i):
        nonlocal rem
        first = _base_bracket_with(kind, i, gen.F)
        if kind == "p" and gen.v is not None and not gen.v[i].is_zero():
            first = first - gen.v[i]
        if first.is_zero():
            return zero.copy()
        disp, bound = lie_transform(zero, gen, order_cap, tol, first_term=first)
        rem += bound
        return disp

    Phi = SymplecticMapSeries(
        [flow_disp("q", i) for i in range(gr.d)],
        [flow_disp("x", i) for i in range(gr.l)],
        [flow_disp("p", i) for i in range(gr.d)],
        [flow_disp("y", i) for i in range(gr.l)],
        remainder=rem)
    if check:
        resid = symplecticity_residual(Phi)
        Phi.symp_residual = resid
        if resid > tol_symp:
            raise SymplecticityError("bracket residual %.3g exceeds %.3g"
                                     % (resid, tol_symp))
    return Phi


# -- composition by substitution ----------------------------------------------------


def _exp_of(u, cap=60, tol=1e-18):
    """exp(u) for a series u; converges when the majorant of u is moderate."""
    scale = majorant_norm(u)
    if scale > 30.0:
        raise GeneratorTooLargeError("exponential argument majorant %.3g too large"
                                     % scale)
    total = FTSeries.constant(u.grading, u.r, u.s, 1.0)
    term = FTSeries.constant(u.grading, u.r, u.s, 1.0)
    for n in range(1, cap + 1):
        term = multiply(term, u).scale(1.0 / n)
        total = total + term
        if majorant_norm(term) <= tol:
            return total
    raise GeneratorTooLargeError("exponential series did not converge within %d terms"
                                 % cap)


class _Substituter:
    """Caches the building blocks for substituting a map into series.

    With drop_z_identity the ball variables are replaced by the displacement
    alone (evaluation along z = 0) instead of identity + displacement."""

    def __init__(self, Psi, tol=1e-18, drop_z_identity=False):
        self.Psi = Psi
        self.gr = Psi.grading
        r, s = Psi.radii
        self.r, self.s = r, s
        self.tol = tol
        self.drop_z_identity = drop_z_identity
        self._exp_cache = {}
        self._pow_cache = {}
        margin = max(majorant_norm(u) for u in Psi.Uq) if Psi.Uq else 0.0
        if margin * self.gr.K_q > 25.0:
            raise GeneratorTooLargeError(
                "angle displacement majorant %.3g exceeds the analyticity margin "
                "for K_q=%d" % (margin, self.gr.K_q))

    def _angle_factor(self, k):
        k = tuple(k)
        got = self._exp_cache.get(k)
        if got is None:
            u = FTSeries.zero(self.gr, self.r, self.s)
            for i, ki in enumerate(k):
                if ki:
                    u = u + self.Psi.Uq[i].scale(1j * ki)
            got = _exp_of(u, tol=self.tol) if not u.is_zero() else \
                FTSeries.constant(self.gr, self.r, self.s, 1.0)
            self._exp_cache[k] = got
        return got

    def _var_power(self, block, i, n):
        key = (block, i, n)
        got = self._pow_cache.get(key)
        if got is None:
            if n == 0:
                got = FTSeries.constant(self.gr, self.r, self.s, 1.0)
            elif n == 1:
                disp = {"x": self.Psi.Ux, "p": self.Psi.Up, "y": self.Psi.Uy}[block][i]
                if self.drop_z_identity:
                    got = disp.copy()
                else:
                    base_pos = {"x": 0, "p": self.gr.l,
                                "y": self.gr.l + self.gr.d}[block] + i
                    alpha = tuple(1 if t == base_pos else 0
                                  for t in range(self.gr.nz))
                    base = FTSeries.term(self.gr, self.r, self.s,
                                         (0,) * self.gr.l, (0,) * self.gr.d,
                                         alpha, 1.0)
                    got = base + disp
            else:
                got = multiply(self._var_power(block, i, n - 1),
                               self._var_power(block, i, 1))
            self._pow_cache[key] = got
        return got

    def apply(self, f):
        gr = self.gr
        pieces = []
        loss = f.trunc_loss
        for (j, k, a), c in sorted(f.terms.items()):
            piece = FTSeries.term(gr, self.r, self.s, j, k, (0,) * gr.nz, c)
            if _l1(k):
                piece = multiply(piece, self._angle_factor(k))
            for pos, n in enumerate(a):
                if not n:
                    continue
                if pos < gr.l:
                    blk, i = "x", pos
                elif pos < gr.l + gr.d:
                    blk, i = "p", pos - gr.l
                else:
                    blk, i = "y", pos - gr.l - gr.d
                piece = multiply(piece, self._var_power(blk, i, n))
            loss += piece.trunc_loss
            pieces.append(piece)
        out = ft_sum(gr, self.r, self.s, pieces)
        out.trunc_loss = loss
        return out


def series_compose(f, Psi, tol=1e-18):
    """f o Psi by Taylor substitution (angle shifts via exponential expansion)."""
    if Psi.is_identity():
        return f.copy()
    return _Substituter(Psi, tol).apply(f)


def compose_maps(Phi, Psi, tol=1e-18, check_bound=True):
    """Functional composition Phi o Psi of two near-identity maps."""
    if Psi.is_identity():
        return Phi
    if Phi.is_identity():
        return Psi
    sub = _Substituter(Psi, tol)
    new = SymplecticMapSeries(
        [Psi.Uq[i] + sub.apply(Phi.Uq[i]) for i in range(Phi.grading.d)],
        [Psi.Ux[i] + sub.apply(Phi.Ux[i]) for i in range(Phi.grading.l)],
        [Psi.Up[i] + sub.apply(Phi.Up[i]) for i in range(Phi.grading.d)],
        [Psi.Uy[i] + sub.apply(Phi.Uy[i]) for i in range(Phi.grading.l)],
        remainder=Phi.remainder + Psi.remainder)
    if check_bound:
        lhs = 1.0 + new.displacement_c2()
        rhs = (1.0 + Phi.displacement_c2()) * (1.0 + Psi.displacement_c2())
        new.c2_bound_ok = bool(lhs <= rhs * (1.0 + 1e-9))
    return new


# -- integer reduction --------------------------------------------------------------


@dataclass
class LatticeReduction:
    """Unimodular angle change K in SL(m, Z) with the blocked Hessian data."""

    K: list  # m x m integer rows
    A: np.ndarray = None
    B: np.ndarray = None  # d x l block (upper right)
    C: np.ndarray = None

    @property
    def m(self):
        return len(self.K)

    def det(self):
        return _int_det(self.K)


def _int_det(M):
    """Exact integer determinant (Bareiss fraction-free elimination)."""
    M = [[int(v) for v in row] for row in M]
    n = len(M)
    sign = 1
    prev = 1
    for i in range(n - 1):
        if M[i][i] == 0:
            piv = next((r for r in range(i + 1, n) if M[r][i] != 0), None)
            if piv is None:
                return 0
            M[i], M[piv] = M[piv], M[i]
            sign = -sign
        for r in range(i + 1, n):
            for c in range(i + 1, n):
                M[r][c] = (M[r][c] * M[i][i] - M[r][i] * M[i][c]) // prev
            M[r][i] = 0
        prev = M[i][i]
    return sign * M[n - 1][n - 1]


def unimodular_completion(resonances):
    """Complete independent integer resonances to a unimodular matrix.

    Returns a LatticeReduction whose K has |det| = 1, whose last l rows span
    the saturation of the resonance lattice (so K omega_0 ends in exact zeros
    whenever the input resonances are exact).
    """
    R = []
    for vec in resonances:
        row = []
        for v in vec:
            iv = int(round(v))
            if abs(v - iv) > 1e-9:
                raise ValueError("resonance vector %s is not integer" % (vec,))
            row.append(iv)
        if all(v == 0 for v in row):
            raise ValueError("zero resonance vector")
        g = 0
        for v in row:
            g = math.gcd(g, abs(v))
        R.append([v // g for v in row])
    l = len(R)
    m = len(R[0])
    if l >= m:
        raise ValueError("need fewer resonances than the total angle dimension")
    A = [row[:] for row in R]
    W = [[1 if i == j else 0 for j in range(m)] for i in range(m)]  # U^{-1}

    def col_addmul(j, i, t):  # C_j += t * C_i ; W row_i -= t * row_j
        for r in range(l):
            A[r][j] += t * A[r][i]
        W[i] = [a - t * b for a, b in zip(W[i], W[j])]

    def col_swap(i, j):
        for r in range(l):
            A[r][i], A[r][j] = A[r][j], A[r][i]
        W[i], W[j] = W[j], W[i]

    def col_neg(j):
        for r in range(l):
            A[r][j] = -A[r][j]
        W[j] = [-a for a in W[j]]

    for i in range(l):
        while True:
            nz = [j for j in range(i, m) if A[i][j] != 0]
            if not nz:
                raise ValueError("resonance vectors are linearly dependent")
            piv = min(nz, key=lambda j: abs(A[i][j]))
            if piv != i:
                col_swap(i, piv)
            done = True
            for j in range(i + 1, m):
                if A[i][j] != 0:
                    t = A[i][j] // A[i][i]
                    if t:
                        col_addmul(j, i, -t)
                    if A[i][j] != 0:
                        done = False
            if done:
                break
        if A[i][i] < 0:
            col_neg(i)
    # rows of W: first l rows span the saturated resonance lattice
    K = [W[j][:] for j in range(l, m)] + [W[i][:] for i in range(l)]
    det = _int_det(K)
    if abs(det) != 1:
        raise ValueError("completion failed: |det| = %d" % abs(det))
    return LatticeReduction(K=K)


# -- series on the pre-reduction domain ---------------------------------------------


@dataclass
class SigmaTerm:
    """One monomial c * e^{i k.theta} I^a on T^m x R^m (angles theta, actions I)."""

    mode: tuple
    powers: tuple
    coeff: complex


def sigma_cos(mode, amplitude=1.0, powers=None):
    m = len(mode)
    powers = (0,) * m if powers is None else tuple(powers)
    return [SigmaTerm(tuple(mode), powers, 0.5 * amplitude),
            SigmaTerm(tuple(-v for v in mode), powers, 0.5 * amplitude)]


def _taylor_exp_vector(grading, r, s, block_offsets, coefvec, max_deg):
    """Taylor polynomial of exp(i sum_j coefvec[j] z_j) over the listed variables."""
    u = FTSeries.zero(grading, r, s)
    for pos, cj in zip(block_offsets, coefvec):
        if cj != 0.0:
            alpha = tuple(1 if t == pos else 0 for t in range(grading.nz))
            u = u + FTSeries.term(grading, r, s, (0,) * grading.l,
                                  (0,) * grading.d, alpha, 1j * cj)
    total = FTSeries.constant(grading, r, s, 1.0)
    term = FTSeries.constant(grading, r, s, 1.0)
    for n in range(1, max_deg + 1):
        term = multiply(term, u).scale(1.0 / n)
        if term.is_zero():
            break
        total = total + term
    return total


def _action_substitution(grading, r, s, T):
    """Linear action substitution old_I = T . (p, y): returns replacement series."""
    d, l = grading.d, grading.l
    m = d + l
    reps = []
    for a in range(m):
        u = FTSeries.zero(grading, r, s)
        for b in range(m):
            if T[a][b] == 0.0:
                continue
            pos = (l + b) if b < d else (l + d + (b - d))
            alpha = tuple(1 if t == pos else 0 for t in range(grading.nz))
            u = u + FTSeries.term(grading, r, s, (0,) * l, (0,) * d, alpha, T[a][b])
        reps.append(u)
    return reps


def sigma_to_parametrized(terms, d, l, grading, r, s, K=None, shear_S=None,
                          x_scale=None):
    """Carry a Sigma-domain series through the full reduction pipeline.

    Steps (any may be trivial): integer angle change K, angle shear
    q -> q + S^T x paired with y -> y - S p, shift x -> x + phi, and the
    normalization x -> Sn^{-1} x, y -> Sn^T y given by x_scale = Sn.
    Returns an FTSeries on the parametrized domain T^l x D.
    """
    m = d + l
    Kinv_T = None
    KT = None
    if K is not None:
        Karr = np.array(K, dtype=float)
        Kinv = np.linalg.inv(Karr)
        Kinv_T = np.rint(Kinv.T).astype(int)
        if np.max(np.abs(Kinv.T - Kinv_T)) > 1e-9:
            raise ValueError("K inverse is not integer; K not unimodular?")
        KT = Karr.T
    action_T = np.eye(m) if KT is None else KT
    if shear_S is not None:
        S = np.asarray(shear_S, dtype=float)  # l x d
        shear_T = np.eye(m)
        # old y = new y - S p : action vector transforms by [(I,0),(-S,I)]
        shear_T[d:, :d] = -S
        action_T = action_T @ shear_T
    if x_scale is not None:
        Sn = np.asarray(x_scale, dtype=float)
        norm_T = np.eye(m)
        norm_T[d:, d:] = Sn.T  # old y = Sn^T new y
        action_T = action_T @ norm_T
    reps = _action_substitution(grading, r, s, action_T)
    Sn_inv = None if x_scale is None else np.linalg.inv(np.asarray(x_scale, dtype=float))
    xo = 0
    out = FTSeries.zero(grading, r, s)
    for t in sorted(terms, key=lambda t: (t.mode, t.powers)):
        mode = np.asarray(t.mode, dtype=int)
        if Kinv_T is not None:
            mode = Kinv_T @ mode
        kq, kx = mode[:d], mode[d:]
        piece = FTSeries.term(grading, r, s, tuple(int(v) for v in kx),
                              tuple(int(v) for v in kq), (0,) * grading.nz, t.coeff)
        # ball-variable exponentials: the shear contributes exp(i (S kq).x) and
        # the old x-angle contributes exp(i kx.x); both see the normalization
        cvec = np.asarray(kx, dtype=float)
        if shear_S is not None:
            cvec = cvec + np.asarray(shear_S, dtype=float) @ kq
        if Sn_inv is not None:
            cvec = Sn_inv.T @ cvec
        if np.any(cvec != 0.0):
            piece = multiply(piece, _taylor_exp_vector(
                grading, r, s, list(range(xo, xo + l)), cvec, grading.D))
        for a_idx, n in enumerate(t.powers):
            for _ in range(n):
                piece = multiply(piece, reps[a_idx])
        out = out + piece
    return out


def shifted_parametrization(terms, d, l, grading, r, s):
    """Localize around all parallel tori: f(q, x, ...) -> f(q, x + phi, ...).

    The x-angle modes move onto the parameter and re-expand as Taylor factors;
    by construction the output satisfies M_q(d_x f0) = M_q(d_phi f0).
    """
    return sigma_to_parametrized(terms, d, l, grading, r, s)


# -- reduction to the model form -----------------------------------------------------


class ReductionError(ValueError):
    pass


def reduce_coordinates(N_hessian, omega0, red, h_terms, f_terms, grading, r, s,
                       sing_tol=1e-10):
    """Blocked reduction of an m-degree-of-freedom problem to the model form.

    Computes the blocks of K Hess K^T, checks the sign conditions (the p-block
    Schur complement must be negative definite and the y-block positive
    definite), applies the shear and the y-normalization to h and f, and
    returns (omega, M0, h0, f0, report).
    """
    d, l = grading.d, grading.l
    m = d + l
    Karr = np.array(red.K, dtype=float)
    omega0 = np.asarray(omega0, dtype=float)
    w_full = Karr @ omega0
    omega, tail = w_full[:d], w_full[d:]
    report = {"K": [list(map(int, row)) for row in red.K],
              "K_omega0": [float(v) for v in w_full],
              "resonant_tail": float(np.max(np.abs(tail), initial=0.0))}
    if report["resonant_tail"] > 1e-12 * max(np.linalg.norm(omega0), 1e-300):
        raise ReductionError("K omega0 does not end in zeros: tail %.3g"
                             % report["resonant_tail"])
    Hess = np.asarray(N_hessian, dtype=float)
    blocked = Karr @ Hess @ Karr.T
    A, B, C = blocked[:d, :d], blocked[:d, d:], blocked[d:, d:]
    red.A, red.B, red.C = A, B, C
    eigH = np.linalg.eigvalsh(0.5 * (Hess + Hess.T))
    eigC = np.linalg.eigvalsh(0.5 * (C + C.T))
    report["hessian_eigs"] = [float(v) for v in eigH]
    report["C_eigs"] = [float(v) for v in eigC]
    if np.min(np.abs(eigH)) <= sing_tol * np.max(np.abs(eigH)):
        raise ReductionError("(ii) failed: full Hessian is singular: eigs %s" % eigH)
    if np.min(np.abs(eigC)) <= sing_tol * max(np.max(np.abs(eigC)), 1e-300):
        raise ReductionError("(ii) failed: C is singular: eigs %s" % eigC)
    M0 = A - B @ np.linalg.solve(C, B.T)
    Q0 = C
    eigM = np.linalg.eigvalsh(0.5 * (M0 + M0.T))
    report["M0_eigs"] = [float(v) for v in eigM]
    report["Q0_eigs"] = report["C_eigs"]
    if not np.all(eigM < 0.0):
        raise ReductionError("(iii) failed: p-block Schur complement not negative "
                             "definite: eigs %s" % eigM)
    if not np.all(eigC > 0.0):
        raise ReductionError("(iii) failed: y-block C not positive definite: "
                             "eigs %s" % eigC)
    S_shear = np.linalg.solve(C, B.T)  # l x d
    # normalization Sn Q0 Sn^T = I via Cholesky
    Sn = np.linalg.inv(np.linalg.cholesky(Q0))
    report["shear_norm"] = float(np.linalg.norm(S_shear, 2))
    report["normalization"] = [[float(v) for v in row] for row in Sn]
    h0 = sigma_to_parametrized(h_terms, d, l, grading, r, s, K=red.K,
                               shear_S=S_shear, x_scale=Sn)
    f0 = sigma_to_parametrized(f_terms, d, l, grading, r, s, K=red.K,
                               shear_S=S_shear, x_scale=Sn)
    for (j, k, a), _c in h0.terms.items():
        py_deg = sum(a[l:])
        if py_deg < 3:
            raise ReductionError("reduced h carries a (p, y)-degree < 3 term")
    return omega, M0, h0, f0, report

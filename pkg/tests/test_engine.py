import math

import numpy as np
import pytest

from kamtori.engine import (build_schedule, check_alpha_gradient,
                            check_beta_relation, compute_zeta, extract_torus,
                            find_vanishing_point, iterate, kam_step,
                            solve_cohomological, verify_invariance)
from kamtori.engine.cohom import coordinate, freeze_phi, restrict_z0
from kamtori.engine.driver import (IterateConfig, IterationState,
                                   StepFailure, c2_norm, conjugacy_residual)
from kamtori.normalform import (assemble_hamiltonian, eval_phi_series,
                                initial_tuple)
from kamtori.series import (FTSeries, Grading, average_q, differentiate,
                            evaluate, majorant_norm, multiply, taylor_split)
from kamtori.smalldiv import effective_diophantine_constant
from kamtori.symplectic import (identity_map, poisson_bracket,
                                shifted_parametrization, sigma_cos)
from conftest import GOLDEN

EPS = 1e-4


def small_grading():
    return Grading(d=1, l=1, K_q=6, K_phi=6, D=4)


def flagship_problem(K=16, D=4, eps=EPS):
    gr = Grading(d=1, l=1, K_q=K, K_phi=K, D=D)
    f0 = shifted_parametrization(sigma_cos((0, 1), eps), 1, 1, gr, 1.0, 1.0)
    N0 = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
    return gr, N0, f0


def q_coupled_problem(eps=EPS):
    gr = small_grading()
    terms = (sigma_cos((0, 1), eps) + sigma_cos((1, 1), eps)
             + sigma_cos((1, 0), 0.5 * eps, powers=(1, 0)))
    f0 = shifted_parametrization(terms, 1, 1, gr, 1.0, 1.0)
    N0 = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
    return gr, N0, f0


@pytest.fixture(scope="module")
def flagship_run():
    gr, N0, f0 = flagship_problem()
    state, hist = iterate(N0, f0, IterateConfig())
    return gr, N0, f0, state, hist


@pytest.fixture(scope="module")
def coupled_run():
    gr, N0, f0 = q_coupled_problem()
    state, hist = iterate(N0, f0, IterateConfig(target_tol=1e-13))
    return gr, N0, f0, state, hist


class TestSchedule:
    def test_geometric_radii(self):
        sched = build_schedule(1.0, 1.0, 1e-4, 0.1, 1)
        assert sched.rows[0].sigma == pytest.approx(1.0 / 40)
        assert sched.rows[1].r == pytest.approx(0.75)
        last = sched.rows[-1]
        assert last.r - 10 * last.sigma > 0.5
        assert last.s - last.sigma > 0.5

    def test_eps_power_law(self):
        sched = build_schedule(1.0, 1.0, 1e-4, 0.1, 1)
        assert sched.rows[1].eps == pytest.approx(1e-6)
        assert sched.rows[2].eps == pytest.approx(1e-9)

    def test_delta_ratio_bounded(self):
        sched = build_schedule(1.0, 1.0, 1e-6, 0.2, 1, n_max=6)
        for a, b in zip(sched.rows, sched.rows[1:]):
            assert b.delta <= 8.0 * a.delta + 1e-15

    def test_delta_ratio_formula_any_tau(self):
        # delta_{n+1}/delta_n = (sigma ratio / log ratio)^{4 tau} = 3^{-4 tau}
        for tau in (0.2, 1.0):
            eps0, sigma0 = 1e-6, 0.025
            L0 = abs(math.log(eps0))
            d0 = (sigma0 / L0) ** (4 * tau)
            d1 = (sigma0 / 2 / (1.5 * L0)) ** (4 * tau)
            assert d1 <= 8 * d0

    def test_glue_level_below_threshold(self):
        sched = build_schedule(1.0, 1.0, 1e-4, 0.1, 1)
        for row in sched.rows:
            assert row.delta_plus < row.delta


class TestSolveCohomological:
    def setup_method(self, method):
        self.gr = small_grading()
        self.N = initial_tuple(self.gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        self.wit = effective_diophantine_constant([GOLDEN], 0.1, 6)
        self.phix = [coordinate(self.gr, 1.0, 1.0, "x", 0)]

    def solve(self, f):
        return solve_cohomological(self.N, f, self.phix, self.wit,
                                   sigma=0.025, delta=0.1, delta_plus=0.03)

    def test_zero_input(self):
        sol = self.solve(FTSeries.zero(self.gr, 1, 1))
        assert all(a.is_zero() for a in sol.alpha)
        assert all(v.is_zero() for v in sol.v)
        assert sol.F.is_zero()
        assert majorant_norm(assemble_hamiltonian(sol.Nbar)) < 1e-20

    def test_pure_angle_function(self):
        # f = f(q) with zero mean: alpha = v = 0 and the generating function
        # closes after the p-chain A -> B_p = L1(-M d_q A) -> D_pp, with an
        # empty correction tuple
        f = FTSeries.cos_angle(self.gr, 1, 1, (0,), (2,), 3e-4)
        sol = self.solve(f)
        assert max(majorant_norm(a) for a in sol.alpha) < 1e-18
        assert max(majorant_norm(v) for v in sol.v) < 1e-18
        from kamtori.smalldiv import solve_L1
        sp = taylor_split(sol.F)
        A_direct = solve_L1(f, self.wit)
        assert majorant_norm(sp.a - A_direct) < 1e-16
        Bp_direct = solve_L1(differentiate(A_direct, ("q", 0)), self.wit)
        assert majorant_norm(sp.b_p[0] - Bp_direct) < 1e-14
        # the correction tuple is empty except the cubic leftover in h
        assert majorant_norm(sol.Nbar.c) < 1e-16
        assert majorant_norm(sol.Nbar.beta[0][0]) < 1e-16
        assert majorant_norm(sol.Nbar.Gamma[0][0]) < 1e-16
        assert majorant_norm(sol.Nbar.M[0][0]) < 1e-16
        assert majorant_norm(sol.Nbar.g) < 1e-14 * majorant_norm(f)
        assert all(sum(a) >= 3 for (_j, _k, a) in sol.Nbar.h.terms)
        assert sol.residual_plateau <= 1e-10 * majorant_norm(f)

    def test_residual_contract(self):
        f = shifted_parametrization(
            sigma_cos((0, 1), EPS) + sigma_cos((2, 1), 0.7 * EPS), 1, 1,
            self.gr, 1.0, 1.0)
        sol = self.solve(f)
        assert sol.residual_plateau <= 1e-8 * majorant_norm(f)
        assert sol.residual_tracker <= 1e-8 * majorant_norm(f)
        assert sol.max_condition < 1e8

    def test_single_mode_matches_dense_linearization(self):
        gr = Grading(d=1, l=1, K_q=2, K_phi=2, D=3)
        N = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        wit = effective_diophantine_constant([GOLDEN], 0.1, 2)
        phix = [coordinate(gr, 1.0, 1.0, "x", 0)]
        f = FTSeries(gr, 1, 1, {((0,), (1,), (1, 0, 0)): 0.5 * EPS,
                                ((0,), (-1,), (1, 0, 0)): 0.5 * EPS},
                     _raw=True)
        sol = solve_cohomological(N, f, phix, wit, sigma=0.025, delta=0.1,
                                  delta_plus=0.03)
        alpha_mine, v_mine, F_mine = sol.alpha, sol.v, sol.F
        # independent dense least-squares over the truncated basis
        Nred = assemble_hamiltonian(N)
        modes = [-2, -1, 0, 1, 2]
        z = gr.nz

        def ser(terms):
            return FTSeries(gr, 1, 1, terms, _raw=True)

        def key(k, ax=0, ap=0, ay=0):
            return ((0,), (k,), (ax, ap, ay))

        unknowns = []   # (label, series contribution to F, v-flag)
        unknowns.append(("alpha", None, None))
        unknowns.append(("v", None, None))
        for k in modes:
            if k:
                unknowns.append((("A", k), ser({key(k): 1.0}), None))
        for k in modes:
            unknowns.append((("Bx", k), ser({key(k, ax=1): 1.0}), None))
            unknowns.append((("By", k), ser({key(k, ay=1): 1.0}), None))
            if k:
                unknowns.append((("Bp", k), ser({key(k, ap=1): 1.0}), None))
            unknowns.append((("Dxx", k), ser({key(k, ax=2): 0.5}), None))
            unknowns.append((("Dyy", k), ser({key(k, ay=2): 0.5}), None))
            unknowns.append((("Dxy", k), ser({key(k, ax=1, ay=1): 1.0}), None))
            unknowns.append((("Dpx", k), ser({key(k, ax=1, ap=1): 1.0}), None))
            unknowns.append((("Dpy", k), ser({key(k, ap=1, ay=1): 1.0}), None))
            unknowns.append((("Dpp", k), ser({key(k, ap=2): 0.5}), None))
        for lab in ["cbar", "bbar", "Gbar", "Mbar"]:
            unknowns.append((lab, None, None))
        read_keys = []
        for k in modes:
            for (ax, ap, ay) in [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
                                 (2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 0, 1),
                                 (1, 1, 0), (0, 1, 1)]:
                read_keys.append(key(k, ax, ap, ay))

        def residual_column(label, Fc):
            # contribution of one unit unknown to the defining equation
            if label == "alpha":
                contrib = -multiply(FTSeries.constant(gr, 1, 1, 1.0), phix[0])
            elif label == "v":
                contrib = -differentiate(Nred, ("p", 0))
            elif label == "cbar":
                contrib = -FTSeries.constant(gr, 1, 1, 1.0)
            elif label == "bbar":
                contrib = -ser({key(0, ax=2): 0.5})
            elif label == "Gbar":
                contrib = -ser({key(0, ax=1, ap=1): 1.0})
            elif label == "Mbar":
                contrib = -ser({key(0, ap=2): 0.5})
            else:
                contrib = poisson_bracket(Nred, Fc)
            tracker = 0.0
            if label == "v":
                tracker = -evaluate(average_q(
                    restrict_z0(differentiate(phix[0], ("p", 0)))), q=[0.0])
            elif not isinstance(label, str):
                br = poisson_bracket(phix[0], Fc)
                tracker_ser = average_q(restrict_z0(br))
                tracker = tracker_ser.terms.get(gr.zero_key(), 0.0)
            col = np.array([contrib.terms.get(kk, 0.0) for kk in read_keys]
                           + [tracker])
            return col

        A = np.stack([residual_column(lab, Fc)
                      for (lab, Fc, _) in unknowns], axis=-1)
        rhs = -np.array([f.terms.get(kk, 0.0) for kk in read_keys] + [0.0])
        dense, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        names = [lab for (lab, _, _) in unknowns]
        a_dense = dense[names.index("alpha")]
        v_dense = dense[names.index("v")]
        # check the dense system was consistent
        assert np.linalg.norm(A @ dense - rhs) < 1e-12 * max(
            1.0, np.linalg.norm(rhs))
        a0 = eval_phi_series(alpha_mine[0], np.zeros((1, 1)))[0].real
        v0 = eval_phi_series(v_mine[0], np.zeros((1, 1)))[0].real
        assert abs(a0 - a_dense.real) <= 1e-9 * max(abs(a_dense), EPS)
        assert abs(v0 - v_dense.real) <= 1e-9 * max(abs(v_dense), EPS)
        # and the generating functions agree where gauge-free (k != 0 modes)
        for k in [-2, -1, 1, 2]:
            got = F_mine.terms.get(key(k, ax=1), 0.0)
            want = dense[names.index(("Bx", k))]
            assert abs(got - want) <= 1e-9 * max(1.0, abs(want))


class TestKamStep:
    def run_step(self, N0, f0, gr):
        wit = effective_diophantine_constant([GOLDEN], 0.1, gr.K_q)
        sched = build_schedule(1.0, 1.0, max(c2_norm(f0), 1e-8), 0.1, 1)
        state = IterationState(n=0, N=N0,
                               alpha=[FTSeries.zero(gr, 1, 1)], f=f0,
                               Phi=identity_map(gr, 1, 1), r=1.0, s=1.0)
        return kam_step(state, sched.rows[0], wit)

    def test_zero_perturbation_trivial(self):
        gr = small_grading()
        N0 = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        st, res = self.run_step(N0, FTSeries.zero(gr, 1, 1), gr)
        assert res.Psi.is_identity()
        assert st.f.is_zero()
        assert all(a.is_zero() for a in res.alpha_step)

    def test_flagship_contracts_by_ten(self):
        gr, N0, f0 = flagship_problem(K=8)
        before = c2_norm(f0)
        st, res = self.run_step(N0, f0, gr)
        assert res.ok
        assert c2_norm(st.f) <= before / 10.0

    def test_cubic_jet_absorbed_into_h(self):
        gr = small_grading()
        N0 = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        f = FTSeries(gr, 1, 1, {
            ((0,), (0,), (3, 0, 0)): 1e-4,
            ((1,), (0,), (2, 0, 1)): 0.5e-4,
            ((-1,), (0,), (2, 0, 1)): 0.5e-4,
            ((0,), (1,), (0, 2, 2)): 0.5e-4,
            ((0,), (-1,), (0, 2, 2)): 0.5e-4}, _raw=True)
        st, res = self.run_step(N0, f, gr)
        assert all(a.is_zero() for a in res.alpha_step)
        assert res.Psi.is_identity()
        assert st.f.is_zero()
        absorbed = st.N.h - FTSeries(gr, st.r, st.s, f.terms, _raw=True)
        assert absorbed.max_abs_coeff() < 1e-18


class TestIterate:
    def test_zero_perturbation_stops_immediately(self):
        gr = small_grading()
        N0 = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        state, hist = iterate(N0, FTSeries.zero(gr, 1, 1), IterateConfig())
        assert state.n == 0 and state.Phi.is_identity()

    def test_flagship_superlinear(self, flagship_run):
        gr, N0, f0, state, hist = flagship_run
        assert hist["failure"] is None
        norms = [c2_norm(f0)] + [row["f_norm"] for row in hist["steps"]]
        assert norms[1] <= norms[0] ** 1.4

    def test_equal_derivative_violation_rejected(self):
        gr = small_grading()
        N0 = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        bad = FTSeries(gr, 1, 1, {((0,), (0,), (1, 0, 0)): EPS}, _raw=True)
        with pytest.raises(StepFailure, match="averaged-derivative"):
            iterate(N0, bad, IterateConfig())

    def test_coupled_run_converges(self, coupled_run):
        gr, N0, f0, state, hist = coupled_run
        assert hist["failure"] is None
        assert state.norms["f_c2"] <= 1e-13

    def test_contraction_measured(self, coupled_run):
        gr, N0, f0, state, hist = coupled_run
        norms = [c2_norm(f0)] + [row["f_norm"] for row in hist["steps"]]
        pairs = [(a, b) for a, b in zip(norms, norms[1:]) if a < 1e-3]
        for a, b in pairs:
            if b == 0.0:
                continue
            assert math.log(b) / math.log(a) >= 1.4

    def test_conjugacy_identity_within_budget(self, coupled_run):
        gr, N0, f0, state, hist = coupled_run
        for row in hist["steps"]:
            resid = row["conjugacy_residual"]
            m = row["measures"]
            budget = (m["lie_remainder"] + m["trig_tail"]
                      + m["cohom_projection_defect"]
                      + m["cohom_residual_plateau"] + 1e-10 * c2_norm(f0))
            assert resid <= 10 * budget + 1e-12

    def test_counter_term_telescoping(self, coupled_run):
        gr, N0, f0, state, hist = coupled_run
        for row in hist["steps"]:
            m = row["measures"]
            assert m["alpha_step_c2"] <= m["sqrt_eps"]


class TestZeta:
    def test_identity_map_gives_averaged_section(self, flagship_run):
        gr, N0, f0, state, hist = flagship_run
        st0 = IterationState(n=0, N=N0, alpha=[FTSeries.zero(gr, 1, 1)],
                             f=f0, Phi=identity_map(gr, 1, 1), r=1.0, s=1.0)
        H0 = assemble_hamiltonian(N0) + f0
        zeta = compute_zeta(st0, H0)
        expect = average_q(restrict_z0(f0))
        assert majorant_norm(zeta - expect) < 1e-15

    def test_cosine_shift_profile(self, flagship_run):
        gr, N0, f0, state, hist = flagship_run
        H0 = assemble_hamiltonian(N0) + f0
        zeta = compute_zeta(state, H0)
        assert zeta.coeff((1,), (0,), (0, 0, 0)) == pytest.approx(EPS / 2)

    def test_zero_perturbation_zero_zeta(self):
        gr = small_grading()
        N0 = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        st0 = IterationState(n=0, N=N0, alpha=[FTSeries.zero(gr, 1, 1)],
                             f=FTSeries.zero(gr, 1, 1),
                             Phi=identity_map(gr, 1, 1), r=1.0, s=1.0)
        zeta = compute_zeta(st0, assemble_hamiltonian(N0))
        assert majorant_norm(zeta) < 1e-18


class TestVanishingPoint:
    def mk_zeta(self, gr, terms):
        return FTSeries(gr, 1, 1, terms, _raw=True)

    def test_cosine_max_at_zero(self):
        gr = small_grading()
        zeta = self.mk_zeta(gr, {((1,), (0,), (0, 0, 0)): 0.5 * EPS,
                                 ((-1,), (0,), (0, 0, 0)): 0.5 * EPS})
        phi0, info = find_vanishing_point(zeta, None, None)
        assert min(phi0[0], 2 * math.pi - phi0[0]) < 1e-9
        assert info["grad_norm"] <= 1e-12

    def test_constant_returns_origin(self):
        gr = small_grading()
        zeta = self.mk_zeta(gr, {((0,), (0,), (0, 0, 0)): 1.0})
        phi0, info = find_vanishing_point(zeta, None, None)
        assert phi0[0] == 0.0

    def test_tie_breaks_lexicographic(self):
        gr = small_grading()
        # cos(2 phi): equal maxima at 0 and pi; the grid tie-break picks 0
        zeta = self.mk_zeta(gr, {((2,), (0,), (0, 0, 0)): 0.5,
                                 ((-2,), (0,), (0, 0, 0)): 0.5})
        phi0, info = find_vanishing_point(zeta, None, None)
        assert phi0[0] == pytest.approx(0.0, abs=1e-12)

    def test_argmax_invariance(self):
        gr = small_grading()
        base = {((1,), (0,), (0, 0, 0)): 0.3 + 0.2j,
                ((-1,), (0,), (0, 0, 0)): 0.3 - 0.2j,
                ((2,), (0,), (0, 0, 0)): 0.05,
                ((-2,), (0,), (0, 0, 0)): 0.05}
        z1 = self.mk_zeta(gr, dict(base))
        phi_a, _ = find_vanishing_point(z1, None, None)
        shifted = dict(base)
        shifted[((0,), (0,), (0, 0, 0))] = 7.0
        z2 = self.mk_zeta(gr, shifted)
        phi_b, _ = find_vanishing_point(z2, None, None)
        z3 = z1.scale(3.0)
        phi_c, _ = find_vanishing_point(z3, None, None)
        assert phi_a[0] == pytest.approx(phi_b[0], abs=1e-10)
        assert phi_a[0] == pytest.approx(phi_c[0], abs=1e-10)


class TestTorus:
    def test_trivial_embedding_for_zero_perturbation(self):
        gr = small_grading()
        N0 = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        st0 = IterationState(n=0, N=N0, alpha=[FTSeries.zero(gr, 1, 1)],
                             f=FTSeries.zero(gr, 1, 1),
                             Phi=identity_map(gr, 1, 1), r=1.0, s=1.0)
        tor = extract_torus(st0, [0.0])
        assert tor.distance_to_trivial == 0.0
        H = assemble_hamiltonian(N0)
        assert verify_invariance(H, tor.embedding, [GOLDEN], 32) < 1e-14

    def test_flagship_exact_invariance(self, flagship_run):
        gr, N0, f0, state, hist = flagship_run
        H0 = assemble_hamiltonian(N0) + f0
        zeta = compute_zeta(state, H0)
        phi0, info = find_vanishing_point(zeta, state.alpha, state.N.beta)
        tor = extract_torus(state, phi0)
        Hbar = freeze_phi(H0, phi0)
        resid = verify_invariance(Hbar, tor.embedding, [GOLDEN], 64)
        assert resid <= 1e-12
        for comps in tor.embedding.values():
            for u in comps:
                assert u.reality_defect() < 1e-12

    def test_perturbed_embedding_linear_residual_growth(self):
        gr = small_grading()
        N0 = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        H = assemble_hamiltonian(N0)
        vals = []
        for eta in (1e-6, 2e-6):
            emb = {"uq": [FTSeries.zero(gr, 1, 1)],
                   "ux": [FTSeries.zero(gr, 1, 1)],
                   "up": [FTSeries.zero(gr, 1, 1)],
                   "uy": [FTSeries.constant(gr, 1, 1, eta)]}
            vals.append(verify_invariance(H, emb, [GOLDEN], 16))
        assert vals[1] / vals[0] == pytest.approx(2.0, rel=1e-6)


class TestCounterTermDiagnostics:
    def test_alpha_equals_zeta_gradient_at_first_order(self, flagship_run):
        gr, N0, f0, state, hist = flagship_run
        st0 = IterationState(n=0, N=N0, alpha=[FTSeries.zero(gr, 1, 1)],
                             f=f0, Phi=identity_map(gr, 1, 1), r=1.0, s=1.0)
        zeta1 = compute_zeta(st0, assemble_hamiltonian(N0) + f0)
        diag = check_alpha_gradient(state, zeta1, N0.beta, 1.0)
        assert diag.alpha_grad_gap <= 1e-10
        assert diag.alpha_hess_gap <= 1e-10

    def test_zero_perturbation_all_gaps_zero(self):
        gr = small_grading()
        N0 = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        st0 = IterationState(n=0, N=N0, alpha=[FTSeries.zero(gr, 1, 1)],
                             f=FTSeries.zero(gr, 1, 1),
                             Phi=identity_map(gr, 1, 1), r=1.0, s=1.0)
        zeta = compute_zeta(st0, assemble_hamiltonian(N0))
        diag = check_alpha_gradient(st0, zeta, N0.beta, 1.0)
        assert diag.alpha_grad_gap == 0.0
        diag2 = check_beta_relation(st0, N0.beta, 1.0)
        assert diag2.beta_relation_gap == 0.0
        assert diag2.L_dev == 0.0 and diag2.R_dev == 0.0

    def test_beta_relation_first_order(self, flagship_run):
        gr, N0, f0, state, hist = flagship_run
        diag = check_beta_relation(state, N0.beta, 1.0)
        assert diag.beta_relation_gap <= 1e-8
        assert diag.L_dev <= 1e-8 and diag.R_dev <= 1e-8

    def test_beta_relation_after_coupled_run(self, coupled_run):
        gr, N0, f0, state, hist = coupled_run
        diag = check_beta_relation(state, N0.beta, 1.0)
        # the relation holds up to the final error size with a moderate factor
        assert diag.beta_relation_gap <= 1e2 * EPS ** 1.5
        assert diag.L_dev <= 1e-2 and diag.R_dev <= 1e-2


class TestToleranceMonotonicity:
    def test_residual_improves_with_tighter_target(self):
        gr, N0, f0 = q_coupled_problem(eps=1e-5)
        H0 = assemble_hamiltonian(N0) + f0
        residuals = []
        for target in (3e-7, 1e-13):
            state, hist = iterate(N0, f0, IterateConfig(target_tol=target))
            zeta = compute_zeta(state, H0)
            phi0, _ = find_vanishing_point(zeta, state.alpha, state.N.beta)
            tor = extract_torus(state, phi0)
            Hbar = freeze_phi(H0, phi0)
            residuals.append(verify_invariance(Hbar, tor.embedding,
                                               [GOLDEN], 16))
        assert residuals[1] <= residuals[0]


class TestGapScalesWithErrorSize:
    def test_two_run_constant(self):
        # gap of the counter-term/gradient relation scales with the step
        # error size: gap <= C eps_n with one constant across two
        # perturbation amplitudes (generic-step check)
        consts = []
        for eps in (1e-4, 1e-5):
            gr, N0, f0 = q_coupled_problem(eps=eps)
            state, hist = iterate(N0, f0,
                                  IterateConfig(n_max=1, target_tol=1e-30,
                                                stop_on_postcondition_miss=False))
            H0 = assemble_hamiltonian(N0) + f0
            zeta = compute_zeta(state, H0)
            diag = check_alpha_gradient(state, zeta, N0.beta, 1.0)
            eps_n = hist["steps"][-1]["f_norm"]
            assert diag.alpha_grad_gap <= eps_n
            consts.append(diag.alpha_grad_gap / eps_n)
        hi, lo = max(consts), min(consts)
        assert hi / max(lo, 1e-300) < 50.0


class TestTwoNormalDirections:
    def test_cohomological_residual_l2(self):
        # two collapsed directions: exercises the coupled vector/matrix
        # stages at l = 2, including the symmetrized quadratic solve
        gr = Grading(d=1, l=2, K_q=4, K_phi=4, D=4)
        from kamtori.normalform import const_matrix
        from kamtori.engine import solve_cohomological
        from kamtori.engine.cohom import coordinate
        N = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        wit = effective_diophantine_constant([GOLDEN], 0.1, 4)
        phix = [coordinate(gr, 1.0, 1.0, "x", i) for i in range(2)]
        terms = (sigma_cos((0, 1, 0), EPS) + sigma_cos((1, 0, 1), EPS)
                 + sigma_cos((1, 1, 1), 0.5 * EPS))
        f = shifted_parametrization(terms, 1, 2, gr, 1.0, 1.0)
        sol = solve_cohomological(N, f, phix, wit, sigma=0.025, delta=0.1,
                                  delta_plus=0.03)
        assert sol.residual_plateau <= 1e-8 * majorant_norm(f)
        assert sol.residual_tracker <= 1e-8 * majorant_norm(f)
        assert sol.zero_mode_obstruction <= 1e-12 * majorant_norm(f)

    def test_cohomological_residual_l2_nonzero_beta(self):
        gr = Grading(d=1, l=2, K_q=4, K_phi=4, D=4)
        from kamtori.normalform import const_matrix
        from kamtori.engine import solve_cohomological
        from kamtori.engine.cohom import coordinate
        N = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        # constant symmetric beta with distinct eigenvalues, inside the
        # solvable sublevel region
        N.beta = const_matrix(gr, 1.0, 1.0,
                              np.array([[0.02, 0.01], [0.01, -0.03]]))
        wit = effective_diophantine_constant([GOLDEN], 0.1, 4)
        phix = [coordinate(gr, 1.0, 1.0, "x", i) for i in range(2)]
        terms = (sigma_cos((0, 1, 0), EPS) + sigma_cos((1, 0, 1), EPS)
                 + sigma_cos((2, 1, -1), 0.3 * EPS, powers=(1, 0, 0)))
        f = shifted_parametrization(terms, 1, 2, gr, 1.0, 1.0)
        sol = solve_cohomological(N, f, phix, wit, sigma=0.025, delta=0.1,
                                  delta_plus=0.03)
        assert sol.residual_plateau <= 1e-8 * majorant_norm(f)


class TestModerateAmplitudeFailureReporting:
    def test_drift_precondition_reported(self):
        # amplitude large enough that the tuple drifts past the configured
        # smallness window: the run stops with a named reason instead of
        # silently accepting the rung
        gr = small_grading()
        terms = sigma_cos((0, 1), 3e-3) + sigma_cos((1, 1), 1.5e-3)
        f0 = shifted_parametrization(terms, 1, 1, gr, 1.0, 1.0)
        N0 = initial_tuple(gr, 1.0, 1.0, [GOLDEN], [[-1.0]])
        state, hist = iterate(N0, f0, IterateConfig())
        assert hist["failure"] is not None
        assert "drift" in hist["failure"]["reason"] \
            or "budget" in hist["failure"]["reason"]


class TestDiagnosticsShapesTwoAngles:
    def test_identity_state_zero_gaps(self):
        gr = Grading(d=2, l=1, K_q=3, K_phi=3, D=4)
        N0 = initial_tuple(gr, 1.0, 1.0, [GOLDEN, 1.0 + GOLDEN],
                           np.diag([-1.0, -1.5]))
        st0 = IterationState(n=0, N=N0, alpha=[FTSeries.zero(gr, 1, 1)],
                             f=FTSeries.zero(gr, 1, 1),
                             Phi=identity_map(gr, 1, 1), r=1.0, s=1.0)
        zeta = compute_zeta(st0, assemble_hamiltonian(N0))
        d1 = check_alpha_gradient(st0, zeta, N0.beta, 1.0)
        assert d1.alpha_grad_gap == 0.0
        d2 = check_beta_relation(st0, N0.beta, 1.0)
        assert d2.beta_relation_gap == 0.0
        assert d2.L_dev == 0.0 and d2.R_dev == 0.0

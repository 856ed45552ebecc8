"""One rung of the quadratic scheme and the iteration loop around it.

A step: truncate the error term in the angle modes, solve the linearized
conjugacy (cohom module), flow by the resulting generator, and assemble the
corrected tuple and the new error term from the time-integral remainders

    f+ = int_0^1 { (1-t) Nbar + t (f - <alpha, phi_x>), F + v.q } o Psi^t dt.

Every smallness hypothesis and every contraction target is measured and
recorded; a miss marks the step failed instead of being silently accepted.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..normalform import (NormalFormTuple, assemble_hamiltonian, mat_add,
                          normal_form_distance, normal_form_norm)
from ..series import (FTSeries, average_q, ck_norm_estimate, differentiate,
                      majorant_norm, multiply, truncate_fourier)
from ..smalldiv import effective_diophantine_constant
from ..symplectic import (GeneratingFunction, SymplecticMapSeries,
                          compose_maps, identity_map, lie_tail_integral,
                          lie_transform, map_from_generator, series_compose)
from .cohom import coordinate, restrict_z0, solve_cohomological
from .schedule import build_schedule


class StepFailure(RuntimeError):
    def __init__(self, reason, measures=None):
        super().__init__(reason)
        self.reason = reason
        self.measures = measures or {}


@dataclass
class IterationState:
    n: int
    N: NormalFormTuple
    alpha: list            # l phi-only series, accumulated counter-term
    f: FTSeries
    Phi: SymplecticMapSeries
    r: float
    s: float
    norms: dict = field(default_factory=dict)

    @property
    def grading(self):
        return self.f.grading

    def phi_x(self):
        """x-components of the cumulative map as full series."""
        gr = self.grading
        return [coordinate(gr, self.r, self.s, "x", i) + self.Phi.Ux[i]
                for i in range(gr.l)]


@dataclass
class StepResult:
    alpha_step: list
    v: list
    F: FTSeries
    Psi: SymplecticMapSeries
    Nbar: NormalFormTuple
    measures: dict
    ok: bool


def _retag(f, r, s):
    return FTSeries(f.grading, r, s, f.terms, f.trunc_loss, _raw=True)


def _retag_mat(mat, r, s):
    return [[_retag(e, r, s) for e in row] for row in mat]


def _retag_tuple(N, r, s):
    return NormalFormTuple(N.w, _retag(N.c, r, s), _retag_mat(N.beta, r, s),
                           _retag_mat(N.Gamma, r, s), _retag_mat(N.M, r, s),
                           _retag_mat(N.Q, r, s), _retag(N.g, r, s),
                           _retag(N.h, r, s))


def c2_norm(f, r=None, s=None):
    """The working C^2 estimate for error terms (majorant route)."""
    if f.is_zero():
        return 0.0
    return ck_norm_estimate(f, 2, 2, r, s)


def phi_c2_norm(series_list, r=None):
    return max((ck_norm_estimate(u, 2, 0, r, None) if not u.is_zero() else 0.0)
               for u in series_list)


def tracker_mean_norm(phi_x, gr, r=None):
    """C^2 size of M_q phi_x(., 0) relative to the torus parameter."""
    vals = []
    for i in range(gr.l):
        m = average_q(restrict_z0(phi_x[i]))
        # remove the identity coordinate itself: x_i restricted to z = 0 is 0,
        # so m already carries only the displacement mean
        vals.append(ck_norm_estimate(m, 2, 0, r, None) if not m.is_zero() else 0.0)
    return max(vals)


def kam_step(state, row, witness, lambda_cfg=0.1, N0=None, resid_factor=1e-8,
             strict=True):
    """Apply one rung; returns (next state, StepResult).

    Preconditions and postcondition targets are measured; with strict=True a
    missed precondition raises StepFailure, while missed contraction targets
    only mark the result not ok (the caller decides whether to continue).
    """
    gr = state.grading
    r, s = row.r, row.s
    sigma, eps = row.sigma, row.eps
    measures = {}
    f = state.f
    phi_x = state.phi_x()

    f_norm = c2_norm(f)
    measures["f_c2"] = f_norm
    measures["tracker_mean_c2"] = tracker_mean_norm(phi_x, gr)
    dx_off = [phi_x[i] - coordinate(gr, r, s, "x", i) for i in range(gr.l)]
    measures["tracker_off_c2"] = max(
        (c2_norm(u) for u in dx_off), default=0.0)
    if N0 is not None:
        measures["tuple_drift"] = normal_form_distance(
            state.N, _retag_tuple(N0, r, s))
    pre_fail = []
    if f_norm > eps:
        pre_fail.append("|f|_2 = %.3g exceeds the rung budget %.3g"
                        % (f_norm, eps))
    if measures["tracker_mean_c2"] > eps:
        pre_fail.append("tracker mean %.3g exceeds %.3g"
                        % (measures["tracker_mean_c2"], eps))
    if measures["tracker_off_c2"] > 2 * lambda_cfg:
        pre_fail.append("tracker drift %.3g exceeds 2 lambda = %.3g"
                        % (measures["tracker_off_c2"], 2 * lambda_cfg))
    if N0 is not None and measures["tuple_drift"] > 2 * lambda_cfg:
        pre_fail.append("tuple drift %.3g exceeds 2 lambda = %.3g"
                        % (measures["tuple_drift"], 2 * lambda_cfg))
    if pre_fail and strict:
        raise StepFailure("; ".join(pre_fail), measures)

    if f_norm == 0.0:
        K_eff = gr.K_q
    else:
        K_eff = min(gr.K_q, max(1, math.ceil(4 * abs(math.log(f_norm)) / sigma)))
    f_t, tail_f = truncate_fourier(f, K_eff, sigma / 10.0) \
        if K_eff < gr.K_q else (f, 0.0)
    measures["K_eff"] = K_eff
    measures["trig_tail"] = tail_f

    try:
        sol = solve_cohomological(state.N, f_t, phi_x, witness, sigma,
                                  row.delta, row.delta_plus, K_eff=K_eff)
    except Exception as exc:
        raise StepFailure("linearized conjugacy solve failed: %s" % exc,
                          measures) from exc
    measures["cohom_residual_plateau"] = sol.residual_plateau
    measures["cohom_tracker_residual"] = sol.residual_tracker
    measures["cohom_condition"] = sol.max_condition
    measures["cohom_obstruction"] = sol.zero_mode_obstruction
    measures["cohom_projection_defect"] = sol.projection_defect
    resid_budget = resid_factor * max(majorant_norm(f), 1e-300)
    measures["cohom_residual_ok"] = bool(sol.residual_plateau <= resid_budget)

    gen = GeneratingFunction(sol.F, sol.v)
    try:
        Psi = map_from_generator(gen)
    except Exception as exc:
        raise StepFailure("generator flow failed: %s" % exc, measures) from exc
    measures["psi_displacement"] = Psi.displacement_majorant()
    measures["symp_residual"] = Psi.symp_residual

    Nbar_ham = assemble_hamiltonian(sol.Nbar)
    G = f.copy()
    for i in range(gr.l):
        G = G - multiply(sol.alpha[i], phi_x[i])
    rem = 0.0
    try:
        if Nbar_ham.is_zero() and gen.F.is_zero() \
                and all(v.is_zero() for v in sol.v):
            f_plus = FTSeries.zero(gr, r, s)
        else:
            u1 = gen.bracket_with(Nbar_ham)
            t1, rem1 = lie_tail_integral(u1, gen,
                                         lambda n: 1.0 / ((n + 1) * (n + 2)))
            u2 = gen.bracket_with(G)
            t2, rem2 = lie_tail_integral(u2, gen, lambda n: 1.0 / (n + 2))
            f_plus = t1 + t2
            rem = rem1 + rem2
    except Exception as exc:
        raise StepFailure("error-term transport failed: %s" % exc,
                          measures) from exc
    measures["lie_remainder"] = rem

    g_new = state.N.g + sol.Nbar.g
    if not state.N.g.is_zero():
        g_new = g_new + (series_compose(state.N.g, Psi) - state.N.g)
    N_plus = NormalFormTuple(
        w=state.N.w.copy(), c=state.N.c + sol.Nbar.c,
        beta=mat_add(state.N.beta, sol.Nbar.beta),
        Gamma=mat_add(state.N.Gamma, sol.Nbar.Gamma),
        M=mat_add(state.N.M, sol.Nbar.M),
        Q=[[e.copy() for e in rw] for rw in state.N.Q],
        g=g_new, h=state.N.h + sol.Nbar.h)

    r_plus, s_plus = r - 10 * sigma, s - sigma
    N_plus = _retag_tuple(N_plus, r_plus, s_plus)
    f_plus = _retag(f_plus, r_plus, s_plus)
    Psi_out = Psi.with_radii(r_plus, s_plus)

    fp_norm = c2_norm(f_plus)
    target = eps ** 1.5
    measures["f_plus_c2"] = fp_norm
    measures["f_plus_target"] = target
    try:
        phix_next = [lie_transform(px, gen)[0] for px in phi_x]
    except Exception as exc:
        raise StepFailure("tracker transport failed: %s" % exc,
                          measures) from exc
    measures["tracker_next_mean_c2"] = tracker_mean_norm(
        [_retag(px, r_plus, s_plus) for px in phix_next], gr)
    measures["alpha_step_c2"] = phi_c2_norm(sol.alpha)
    measures["v_c2"] = phi_c2_norm(sol.v) if gr.d else 0.0
    measures["nbar_norm"] = normal_form_norm(sol.Nbar)
    measures["sqrt_eps"] = math.sqrt(eps)
    post_ok = (fp_norm <= target
               and measures["tracker_next_mean_c2"] <= target
               and measures["cohom_residual_ok"])
    measures["post_ok"] = bool(post_ok)

    alpha_new = [_retag(state.alpha[i], r_plus, s_plus)
                 + _retag(sol.alpha[i], r_plus, s_plus) for i in range(gr.l)]
    new_state = IterationState(
        n=state.n + 1, N=N_plus, alpha=alpha_new,
        f=f_plus, Phi=state.Phi, r=r_plus, s=s_plus,
        norms={"f_c2": fp_norm, "alpha_c2": phi_c2_norm(alpha_new)})
    result = StepResult(alpha_step=sol.alpha, v=sol.v, F=sol.F, Psi=Psi_out,
                        Nbar=sol.Nbar, measures=measures, ok=post_ok)
    return new_state, result


def equal_derivative_defect(f0, frame=None):
    """Majorant of M_q(frame^T d_x f0 - d_phi f0); zero for shift-built data.

    Only Taylor degrees <= D - 1 are compared: the degree-D slice of the slot
    derivative is lost to the degree cap, so the identity is unverifiable
    there by construction.
    """
    gr = f0.grading
    frame = np.eye(gr.l) if frame is None else np.asarray(frame, dtype=float)
    worst = 0.0
    for i in range(gr.l):
        lhs = FTSeries.zero(gr, f0.r, f0.s)
        for j in range(gr.l):
            if frame[j, i] != 0.0:
                lhs = lhs + differentiate(f0, ("x", j)).scale(frame[j, i])
        dev = average_q(lhs - differentiate(f0, ("phi", i)))
        checkable = FTSeries.zero(gr, f0.r, f0.s)
        for (j, k, a), c in dev.terms.items():
            if sum(a) <= gr.D - 1:
                checkable.terms[(j, k, a)] = c
        worst = max(worst, majorant_norm(checkable))
    return worst


@dataclass
class IterateConfig:
    tau: float = 0.1
    n_max: int = 8
    target_tol: float = 1e-12
    lambda_cfg: float = 0.1
    resid_factor: float = 1e-8
    check_conjugacy: bool = True
    frame: np.ndarray = None
    equal_deriv_tol: float = 1e-10
    stop_on_postcondition_miss: bool = True


def conjugacy_residual(N0, f0, state):
    """Majorant of (N0 + f0 - <alpha_n, x>) o Phi^n - (N_n + f_n)."""
    gr = state.grading
    H0 = assemble_hamiltonian(N0) + f0
    A = FTSeries.zero(gr, f0.r, f0.s)
    for i in range(gr.l):
        if not state.alpha[i].is_zero():
            A = A + multiply(_retag(state.alpha[i], f0.r, f0.s),
                             coordinate(gr, f0.r, f0.s, "x", i))
    lhs = series_compose(_retag(H0 - A, state.r, state.s), state.Phi)
    rhs = assemble_hamiltonian(state.N) + state.f
    return majorant_norm(lhs - rhs)


def iterate(N0, f0, config=None):
    """Run the scheme from (N0, f0) until the error norm drops below target.

    Returns (final IterationState, history dict).  History records the
    per-rung measures; on a failed step the partial history carries the
    failure reason.
    """
    cfg = config or IterateConfig()
    gr = f0.grading
    r0, s0 = f0.r, f0.s
    defect = equal_derivative_defect(f0, cfg.frame)
    scale = max(majorant_norm(f0), 1.0)
    if defect > cfg.equal_deriv_tol * scale:
        raise StepFailure("perturbation violates the averaged-derivative "
                          "identity: defect %.3g" % defect)
    witness = effective_diophantine_constant(N0.w, cfg.tau, gr.K_q)
    if witness.resonant:
        raise StepFailure("frequency vector is resonant at k=%s"
                          % (witness.worst_k,))
    history = {"steps": [], "schedule": None, "failure": None,
               "equal_deriv_defect": defect, "gamma_eff": witness.gamma,
               "conventions": {
                   "Q_slot": "the iterated tuple keeps Q = I_l; the per-rung "
                             "correction tuple carries Q = 0 (the alternative "
                             "reading, Q = 0 on the iterated tuple, is "
                             "rejected as inconsistent with the tuple sum)"}}
    state = IterationState(n=0, N=N0, alpha=[FTSeries.zero(gr, r0, s0)
                                             for _ in range(gr.l)],
                           f=f0, Phi=identity_map(gr, r0, s0), r=r0, s=s0,
                           norms={"f_c2": c2_norm(f0), "alpha_c2": 0.0})
    eps0 = state.norms["f_c2"]
    if eps0 <= cfg.target_tol:
        history["steps"].append(_history_row(state, None))
        return state, history
    if eps0 >= 1.0:
        raise StepFailure("perturbation too large to schedule: measured "
                          "size %.3g >= 1" % eps0)
    sched = build_schedule(r0, s0, eps0, cfg.tau, gr.l, cfg.n_max,
                           cfg.lambda_cfg)
    history["schedule"] = [vars(row).copy() for row in sched.rows]
    if sched.truncation_reason:
        history["schedule_truncated"] = sched.truncation_reason
    for row in sched.rows:
        try:
            state_next, res = kam_step(state, row, witness, cfg.lambda_cfg,
                                       N0=N0, resid_factor=cfg.resid_factor)
        except StepFailure as exc:
            history["failure"] = {"n": state.n, "reason": exc.reason,
                                  "measures": exc.measures}
            return state, history
        state_next.Phi = compose_maps(
            state.Phi.with_radii(state_next.r, state_next.s), res.Psi)
        conj = None
        if cfg.check_conjugacy:
            conj = conjugacy_residual(N0, f0, state_next)
        state = state_next
        state.norms["conjugacy_residual"] = conj
        hist_row = _history_row(state, res)
        history["steps"].append(hist_row)
        if not res.ok and cfg.stop_on_postcondition_miss:
            history["failure"] = {"n": state.n,
                                  "reason": "postcondition targets missed",
                                  "measures": res.measures}
            return state, history
        if state.norms["f_c2"] <= cfg.target_tol:
            break
    return state, history


def _history_row(state, res):
    row = {"n": state.n, "r": state.r, "s": state.s,
           "eps_measured": state.norms.get("f_c2"),
           "alpha_norm": state.norms.get("alpha_c2"),
           "f_norm": state.norms.get("f_c2"),
           "conjugacy_residual": state.norms.get("conjugacy_residual")}
    if res is not None:
        row["measures"] = {k: (bool(v) if isinstance(v, (bool, np.bool_))
                               else float(v) if isinstance(v, (int, float, np.floating))
                               else v)
                           for k, v in res.measures.items()}
        row["step_ok"] = res.ok
    return row

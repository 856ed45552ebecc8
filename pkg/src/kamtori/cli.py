"""Config-driven experiment runner.

Subcommands:
  reduce --config c.json            integer/shear reduction to the model form
  run    --config c.json           full pipeline: schedule, iteration, torus
  verify --torus t.json --problem p.json --grid n
  zeta   --config c.json --out profile.csv

Exit codes: 0 success, 2 precondition failure, 3 convergence failure, 4 I/O.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import series as fts
from .engine import (compute_zeta, extract_torus, find_vanishing_point,
                     iterate, verify_invariance)
from .engine.cohom import freeze_phi
from .engine.driver import IterateConfig, StepFailure
from .normalform import (assemble_hamiltonian, eval_phi_series,
                         initial_tuple, nu_max_profile, phi_grid,
                         phi_grid_size)
from .series import FTSeries, Grading
from .smalldiv import effective_diophantine_constant
from .symplectic import (ReductionError, SigmaTerm, reduce_coordinates,
                         unimodular_completion)

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4


def _fmt(v):
    return float("%.17g" % float(v))


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise IOFailure("cannot read %s: %s" % (path, exc)) from exc


def _write_json(path, obj):
    try:
        with open(path, "w") as fh:
            json.dump(obj, fh, sort_keys=True, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise IOFailure("cannot write %s: %s" % (path, exc)) from exc


class IOFailure(RuntimeError):
    pass


class PreconditionFailure(RuntimeError):
    pass


def max_threads():
    """Parallelism cap from the environment (the solver itself is sequential,
    so any cap >= 1 is honored)."""
    raw = os.environ.get("KAM_THREADS")
    if raw is None:
        return None
    n = int(raw)
    if n < 1:
        raise PreconditionFailure("KAM_THREADS must be >= 1")
    return n


def _sigma_terms(entries, amplitude=1.0):
    out = []
    for e in entries:
        mode = tuple(int(v) for v in (list(e.get("q_modes", []))
                                      + list(e.get("x_modes", []))))
        powers = tuple(int(v) for v in e.get("action_powers",
                                             [0] * len(mode)))
        c = complex(e.get("re", 0.0), e.get("im", 0.0)) * amplitude
        out.append(SigmaTerm(mode, powers, c))
        if e.get("hermitian", True):
            out.append(SigmaTerm(tuple(-v for v in mode), powers,
                                 c.conjugate()))
    return out


def _grading_from(cfg, d, l):
    t = cfg.get("truncation", {})
    return Grading(d=d, l=l, K_q=int(t.get("K_q", 16)),
                   K_phi=int(t.get("K_phi", 16)), D=int(t.get("D", 4)))


def cmd_reduce(cfg, out_path=None):
    prob = cfg["problem"]
    m = int(prob["m"])
    resonances = prob["resonances"]
    l = len(resonances)
    d = m - l
    omega0 = np.asarray(prob["omega0"], dtype=float)
    hessian = np.asarray(prob["hessian"], dtype=float)
    tau = float(prob.get("tau", 0.1))
    r, s = prob.get("radii", [1.0, 1.0])
    grading = _grading_from(cfg, d, l)
    red = unimodular_completion(resonances)
    Karr = np.array(red.K, dtype=float)
    kap = min(np.linalg.norm(Karr, 2), 1.0 / np.linalg.norm(Karr, 2))
    amplitude = float(prob.get("amplitude", 1.0))
    h_terms = _sigma_terms(prob.get("h_terms", []))
    f_terms = _sigma_terms(prob.get("f_terms", []), amplitude)
    # provisional radii; the shear norm below sharpens the shrink factor
    omega, M0, h0, f0, report = reduce_coordinates(
        hessian, omega0, red, h_terms, f_terms, grading, r, s)
    kap2 = min(0.5, 1.0 / (1.0 + report["shear_norm"]))
    r0, s0 = kap * kap2 * r, kap * kap2 * s
    witness = effective_diophantine_constant(omega, tau, grading.K_q)
    report["gamma_eff"] = witness.gamma
    report["diophantine_ok"] = not witness.resonant
    if witness.resonant:
        raise PreconditionFailure(
            "(i) failed: reduced frequency resonant at k=%s"
            % (witness.worst_k,))
    reduced = {
        "d": d, "l": l, "omega": [_fmt(v) for v in omega],
        "M0": [[_fmt(v) for v in row] for row in M0],
        "frame": report["normalization"],
        "tau": tau, "radii": [_fmt(r0), _fmt(s0)],
        "grading": {"d": d, "l": l, "K_q": grading.K_q,
                    "K_phi": grading.K_phi, "D": grading.D},
        "h0": fts.to_json_dict(fts.FTSeries(grading, r0, s0, h0.terms,
                                            h0.trunc_loss, _raw=True)),
        "f0": fts.to_json_dict(fts.FTSeries(grading, r0, s0, f0.terms,
                                            f0.trunc_loss, _raw=True)),
        "report": _jsonable(report),
    }
    path = out_path or cfg.get("outputs", {}).get("reduced_path", "reduced.json")
    _write_json(path, reduced)
    print("condition (i)   Diophantine: gamma_eff = %.6g  %s"
          % (witness.gamma, "PASS"))
    print("condition (ii)  nonsingular: hessian eigs %s, C eigs %s  PASS"
          % (report["hessian_eigs"], report["C_eigs"]))
    print("condition (iii) signs: p-block Schur eigs %s (negative), "
          "y-block eigs %s (positive)  PASS"
          % (report["M0_eigs"], report["Q0_eigs"]))
    print("reduced problem written to %s" % path)
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _fmt(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def _load_reduced(path):
    data = _read_json(path)
    gd = data["grading"]
    grading = Grading(gd["d"], gd["l"], gd["K_q"], gd["K_phi"], gd["D"])
    r0, s0 = data["radii"]
    h0 = fts.from_json_dict(data["h0"])
    f0 = fts.from_json_dict(data["f0"])
    return {
        "grading": grading, "r0": r0, "s0": s0,
        "omega": np.asarray(data["omega"], dtype=float),
        "M0": np.asarray(data["M0"], dtype=float),
        "frame": np.asarray(data["frame"], dtype=float),
        "tau": data["tau"],
        "h0": FTSeries(grading, r0, s0, h0.terms, h0.trunc_loss, _raw=True),
        "f0": FTSeries(grading, r0, s0, f0.terms, f0.trunc_loss, _raw=True),
    }


def _zeta_rows(zeta, alpha, beta, grading):
    grid = phi_grid(grading.l, phi_grid_size(grading.K_phi))
    zv = eval_phi_series(zeta, grid).real
    av = np.stack([eval_phi_series(a, grid).real for a in alpha], axis=-1)
    nv = nu_max_profile(beta, grid)
    rows = []
    for i in range(len(grid)):
        rows.append([_fmt(v) for v in grid[i]]
                    + [_fmt(zv[i]), _fmt(float(np.linalg.norm(av[i]))),
                       _fmt(nv[i])])
    return rows


def _write_zeta_csv(path, rows, l):
    header = ",".join(["phi%d" % (i + 1) for i in range(l)]
                      + ["zeta", "alpha_norm", "nu_max_beta"])
    try:
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join("%.17g" % v for v in row) + "\n")
    except OSError as exc:
        raise IOFailure("cannot write %s: %s" % (path, exc)) from exc


def _pipeline(cfg, want_artifacts=True):
    outputs = cfg.get("outputs", {})
    reduced_path = outputs.get("reduced_path", "reduced.json")
    if not os.path.exists(reduced_path):
        cmd_reduce(cfg, reduced_path)
    prob = _load_reduced(reduced_path)
    grading = prob["grading"]
    sched_cfg = cfg.get("schedule", {})
    target_tol = float(sched_cfg.get("target_tol", 1e-12))
    it_cfg = IterateConfig(
        tau=prob["tau"], n_max=int(sched_cfg.get("n_max", 8)),
        target_tol=min(target_tol, 1e-12),
        lambda_cfg=float(sched_cfg.get("lambda_cfg", 0.1)),
        frame=prob["frame"])
    N0 = initial_tuple(grading, prob["r0"], prob["s0"], prob["omega"],
                       prob["M0"], h=prob["h0"])
    state, history = iterate(N0, prob["f0"], it_cfg)
    H0 = assemble_hamiltonian(N0) + prob["f0"]
    zeta = compute_zeta(state, H0)
    phi0, info = find_vanishing_point(zeta, state.alpha, state.N.beta)
    torus = extract_torus(state, phi0)
    Hbar = freeze_phi(H0, phi0)
    default_grid = 64 if grading.d == 1 else 24
    residual = verify_invariance(
        Hbar, torus.embedding, prob["omega"],
        grid_n=int(outputs.get("verify_grid", default_grid)))
    torus.residual = residual
    torus.alpha_at_phi0 = info.get("alpha_at_phi0")
    torus.nu_max_at_phi0 = info.get("nu_max_at_phi0")
    torus.grad_norm = info["grad_norm"]
    artifacts = {}
    if want_artifacts:
        hist_path = outputs.get("history_path", "history.json")
        hist_out = [{k: _jsonable(v) for k, v in row.items()
                     if k in ("n", "r", "s", "eps_measured", "alpha_norm",
                              "f_norm", "conjugacy_residual")}
                    for row in history["steps"]]
        _write_json(hist_path, hist_out)
        artifacts["history"] = hist_path
        csv_path = outputs.get("zeta_csv_path", "zeta.csv")
        _write_zeta_csv(csv_path, _zeta_rows(zeta, state.alpha, state.N.beta,
                                             grading), grading.l)
        artifacts["zeta_csv"] = csv_path
        torus_path = outputs.get("torus_path", "torus.json")
        emb = {k: [fts.to_json_dict(u) for u in us]
               for k, us in torus.embedding.items()}
        _write_json(torus_path, {
            "phi0": [_fmt(v) for v in phi0],
            "omega": [_fmt(v) for v in prob["omega"]],
            "tau": prob["tau"],
            "embedding": emb,
            "residual": _fmt(residual),
            "alpha_at_phi0": [_fmt(v) for v in torus.alpha_at_phi0],
            "nu_max_at_phi0": _fmt(torus.nu_max_at_phi0),
            "distance_to_trivial": _fmt(torus.distance_to_trivial),
            "grad_norm": _fmt(torus.grad_norm),
            "hamiltonian": fts.to_json_dict(Hbar),
        })
        artifacts["torus"] = torus_path
    return state, history, torus, residual, target_tol, artifacts


def cmd_run(cfg):
    state, history, torus, residual, target_tol, artifacts = _pipeline(cfg)
    print("steps run: %d" % state.n)
    for row in history["steps"]:
        print("  n=%d  |f| = %.6g  conjugacy = %s"
              % (row["n"], row["f_norm"] or 0.0,
                 "%.3g" % row["conjugacy_residual"]
                 if row.get("conjugacy_residual") is not None else "n/a"))
    print("phi0 = %s  (gradient %.3g)" % (torus.phi0, torus.grad_norm))
    print("|alpha(phi0)| = %.6g   nu_max(beta(phi0)) = %.6g"
          % (float(np.linalg.norm(torus.alpha_at_phi0)), torus.nu_max_at_phi0))
    print("invariance residual = %.6g  (gate %.3g)" % (residual, target_tol))
    for kind, path in sorted(artifacts.items()):
        print("wrote %s: %s" % (kind, path))
    if history.get("failure"):
        print("iteration stopped early: %s" % history["failure"]["reason"])
        return EXIT_CONVERGENCE
    return EXIT_OK if residual <= target_tol else EXIT_CONVERGENCE


def cmd_verify(torus_path, problem_path, grid_n):
    data = _read_json(torus_path)
    try:
        H = fts.from_json_dict(data["hamiltonian"])
        emb = {k: [fts.from_json_dict(u) for u in us]
               for k, us in data["embedding"].items()}
        omega = np.asarray(data["omega"], dtype=float)
        tau = float(data.get("tau", 0.1))
    except (KeyError, TypeError, ValueError) as exc:
        raise IOFailure("torus file %s is malformed: %s" % (torus_path, exc))
    if problem_path:
        prob = _load_reduced(problem_path)
        H0 = assemble_hamiltonian(initial_tuple(
            prob["grading"], prob["r0"], prob["s0"], prob["omega"],
            prob["M0"], h=prob["h0"])) + prob["f0"]
        H = freeze_phi(H0, np.asarray(data["phi0"], dtype=float))
        omega = prob["omega"]
    residual = verify_invariance(H, emb, omega, grid_n=grid_n)
    witness = effective_diophantine_constant(omega, tau, H.grading.K_q)
    print("rotation vector: [%s]  (gamma_eff %.6g over |k| <= %d)"
          % (", ".join("%.17g" % v for v in omega), witness.gamma,
             witness.K_checked))
    print("invariance residual on a %d-point grid: %.9g" % (grid_n, residual))
    return EXIT_OK


def cmd_zeta(cfg, out):
    state, history, torus, residual, target_tol, _ = _pipeline(
        cfg, want_artifacts=False)
    prob = _load_reduced(cfg.get("outputs", {}).get("reduced_path",
                                                    "reduced.json"))
    grading = prob["grading"]
    H0 = assemble_hamiltonian(initial_tuple(
        grading, prob["r0"], prob["s0"], prob["omega"], prob["M0"],
        h=prob["h0"])) + prob["f0"]
    zeta = compute_zeta(state, H0)
    _write_zeta_csv(out, _zeta_rows(zeta, state.alpha, state.N.beta, grading),
                    grading.l)
    print("wrote zeta profile: %s" % out)
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="kamtori",
        description="surviving lower-dimensional invariant tori of a resonant "
                    "torus: reduction, continuation and residual verification")
    sub = parser.add_subparsers(dest="command", required=True)
    p_red = sub.add_parser("reduce", help="reduce an m-dof problem to model form")
    p_red.add_argument("--config", required=True)
    p_run = sub.add_parser("run", help="run the full pipeline")
    p_run.add_argument("--config", required=True)
    p_ver = sub.add_parser("verify", help="re-verify a stored torus")
    p_ver.add_argument("--torus", required=True)
    p_ver.add_argument("--problem", default=None)
    p_ver.add_argument("--grid", type=int, default=64)
    p_zeta = sub.add_parser("zeta", help="emit the zeta/alpha/nu profile CSV")
    p_zeta.add_argument("--config", required=True)
    p_zeta.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        max_threads()
        if args.command == "reduce":
            cmd_reduce(_read_json(args.config))
            return EXIT_OK
        if args.command == "run":
            return cmd_run(_read_json(args.config))
        if args.command == "verify":
            return cmd_verify(args.torus, args.problem, args.grid)
        if args.command == "zeta":
            return cmd_zeta(_read_json(args.config), args.out)
    except IOFailure as exc:
        print("I/O error: %s" % exc, file=sys.stderr)
        return EXIT_IO
    except (PreconditionFailure, ReductionError, ValueError) as exc:
        print("precondition failure: %s" % exc, file=sys.stderr)
        return EXIT_PRECONDITION
    except StepFailure as exc:
        print("convergence failure: %s" % exc, file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())

"""Batch experiment drivers reproducing the study's tables and figures at
desk scale: moving-PML and tensor-product DtN sweeps on the disk and SH
problems, perturbation studies, modal DtN sensitivity and the analytic 1D
error functions. Each driver writes CSV reports plus rendered figures into
an output directory and returns its results for in-process use.
"""

import os
import time
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from scipy.sparse.linalg import spsolve

from . import reporting
from .assembly import (SourceSpec, assemble_load, assemble_perturbed_system,
                       assemble_tensor_system, relative_l2_error)
from .dtn import (build_modal_dtn, exact_schur_dtn, guided_threshold,
                  modal_relative_error, modal_table_rows, moving_pml_dtn,
                  tensor_dtn_operator, transverse_eigenbasis)
from .fem import Mesh1D, Space1D
from .gmres import gmres
from .halfline import ResonanceError, relative_errors
from .media import (PMLSpec, Perturbation, apply_perturbation,
                    load_profile, make_disk_coefficients,
                    make_sh_coefficients, perturbed_profile, pml_scale,
                    prem_like_profile)
from .sweep import build_preconditioner, decompose


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the key."""


@dataclass
class ExperimentConfig:
    experiment: str = ""
    problem: str = "sh"            # 'sh' | 'disk'
    omega: float = 32.0
    J: int = 0                     # 0 -> desk-scale default, J proportional to omega
    order: int = 4
    bc_surface: str = "pml"        # 'pml' | 'free'
    dtn: str = "moving-pml"        # 'moving-pml' | 'tensor' | 'exact-schur'
    source: str = "dirac"          # 'dirac' | 'random'
    seed: int = 0
    source_r: float = float("nan")
    source_theta: float = float("nan")
    zero_in_pml: int = -1          # -1 auto (true iff surface pml), else 0/1
    epsilon: float = 0.0
    perturbation: str = "trig"     # 'none' | 'trig' | 'constant'
    epsilons: str = "0,0.000625,0.00125,0.0025,0.005"
    alpha: float = 0.0
    gamma: float = 0.0
    pml_strength: float = 8.0
    pml_exponent: int = 2
    profile: str = "prem-like"
    tolerance: float = 1e-7
    maxit: int = 1000
    interface: int = 0             # 0 -> J-1 (modal study)
    a: float = 1.0                 # 1D suite interval length
    omega_min: float = 10.0
    omega_max: float = 200.0
    omega_count: int = 600
    out: str = "out"
    figures: int = 1

    def validate(self):
        checks = [
            ("problem", self.problem in ("sh", "disk")),
            ("omega", self.omega > 0),
            ("order", self.order >= 1),
            ("bc_surface", self.bc_surface in ("pml", "free")),
            ("dtn", self.dtn in ("moving-pml", "tensor", "exact-schur")),
            ("source", self.source in ("dirac", "random")),
            ("perturbation", self.perturbation in ("none", "trig", "constant")),
            ("epsilon", self.epsilon >= 0),
            ("alpha", 0 <= self.alpha < 2),
            ("gamma", self.gamma >= 0),
            ("tolerance", self.tolerance > 0),
            ("maxit", self.maxit >= 1),
            ("pml_strength", self.pml_strength > 0),
            ("pml_exponent", self.pml_exponent >= 0),
            ("omega_count", self.omega_count >= 2),
            ("a", self.a > 0),
        ]
        for key, ok in checks:
            if not ok:
                raise ConfigError(f"invalid value for config key '{key}'")
        if self.problem == "disk" and self.bc_surface == "free":
            raise ConfigError("config key 'bc_surface': the disk problem "
                              "requires the outer PML")
        if self.perturbation == "trig" and self.epsilon > 0 \
                and self.problem != "sh":
            raise ConfigError("config key 'perturbation': the trig "
                              "perturbation needs the SH problem")
        return self

    @property
    def layers(self):
        if self.J > 0:
            return self.J
        base = 3 * self.omega / (8.0 if self.problem == "disk" else 32.0)
        return max(3, int(round(base)))


_CASTS = {f.name: f.type for f in fields(ExperimentConfig)}


def _cast(key, value):
    if key not in _CASTS:
        raise ConfigError(f"unknown config key '{key}'")
    target = _CASTS[key]
    try:
        if target in (int, "int"):
            return int(value)
        if target in (float, "float"):
            return float(value)
        return str(value)
    except ValueError as exc:
        raise ConfigError(f"config key '{key}': cannot parse {value!r}") from exc


def parse_config_file(path):
    """Read a flat key = value config file ('#' starts a comment)."""
    values = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"config key 'config': cannot open {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config key 'config': line {lineno} is not "
                                  f"'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = _cast(key, value)
    return values


def make_config(experiment, mapping=None, overrides=None):
    cfg = ExperimentConfig(experiment=experiment)
    if experiment == "sh-tensor":
        cfg.dtn = "tensor"
        cfg.bc_surface = "free"
    if experiment in ("sh-mpml", "disk-mpml"):
        cfg.dtn = "moving-pml"
    if experiment == "disk-mpml":
        cfg.problem = "disk"
        cfg.omega = 8.0
        cfg.source = "random"
    if experiment == "perturbation-study":
        cfg.dtn = "tensor"
        cfg.bc_surface = "free"
        cfg.source = "random"
        cfg.omega = 128.0
    if experiment == "modal-sensitivity":
        cfg.omega = 128.0
        cfg.epsilon = 3.9e-5
    for src in (mapping or {}), dict(overrides or {}):
        for key, value in src.items():
            setattr(cfg, key, _cast(key, value) if isinstance(value, str) else value)
    return cfg.validate()


@dataclass
class Problem:
    coeffs_bg: object            # unscaled separable background
    coeffs: object               # background with surface PML applied if any
    system: object               # assembled operator (possibly perturbed)
    decomp: object
    surface_pml: Optional[PMLSpec]
    profile: object = None


def build_problem(cfg):
    """Assemble the configured model problem and its layer decomposition."""
    J, p = cfg.layers, cfg.order
    if cfg.problem == "sh":
        profile = (prem_like_profile() if cfg.profile == "prem-like"
                   else load_profile(cfg.profile))
        base = make_sh_coefficients(profile, cfg.omega)
        r0, r1 = profile.r_inner, profile.r_outer
        t1, tbc = np.pi, "both"
    else:
        profile = None
        base = make_disk_coefficients(cfg.alpha, cfg.omega, J)
        r0, r1 = 0.0, 1.0
        t1, tbc = 2 * np.pi, "periodic"

    layer_w = (r1 - r0) / J
    spec = None
    coeffs = base
    if cfg.problem == "disk" or cfg.bc_surface == "pml":
        spec = PMLSpec.tuned(start=r1 - layer_w, width=layer_w,
                             strength=cfg.pml_strength, exponent=cfg.pml_exponent)
        coeffs = pml_scale(spec, base)

    space_r = Space1D(Mesh1D.uniform(r0, r1, 2 * J), p, "none")
    space_t = Space1D(Mesh1D.uniform(0.0, t1, 2 * J), p, tbc)
    decomp = decompose(space_r, J, space_t)

    if cfg.epsilon > 0 and cfg.perturbation == "trig":
        if profile is None:
            raise ConfigError("config key 'perturbation': trig perturbation "
                              "needs the SH problem")
        v = apply_perturbation(profile, Perturbation("trig", cfg.epsilon))
        system = assemble_perturbed_system(coeffs, v, space_r, space_t)
    elif cfg.epsilon > 0 and cfg.perturbation == "constant":
        pprof = perturbed_profile(profile, cfg.epsilon)
        pbase = make_sh_coefficients(pprof, cfg.omega)
        pcoeffs = pml_scale(spec, pbase) if spec is not None else pbase
        system = assemble_tensor_system(pcoeffs, space_r, space_t)
    else:
        system = assemble_tensor_system(coeffs, space_r, space_t)
    return Problem(coeffs_bg=base, coeffs=coeffs, system=system,
                   decomp=decomp, surface_pml=spec, profile=profile)


def make_source(cfg, prob):
    coeffs = prob.coeffs
    r0, r1 = coeffs.r_interval
    sr = cfg.source_r if np.isfinite(cfg.source_r) else r0 + 0.6 * (r1 - r0)
    st = cfg.source_theta if np.isfinite(cfg.source_theta) else np.pi / 3
    if cfg.zero_in_pml == -1:
        zero = prob.surface_pml is not None
    else:
        zero = bool(cfg.zero_in_pml)
        if zero and prob.surface_pml is None:
            raise ConfigError("config key 'zero_in_pml': the problem has no "
                              "surface PML")
    spec = SourceSpec(kind=cfg.source, location=(sr, st), seed=cfg.seed,
                      zero_in_pml=zero)
    return assemble_load(spec, prob.system)


def transmission_operators(cfg, prob, basis=None):
    """One interface operator per interface, per the configured DtN kind."""
    dec = prob.decomp
    if cfg.dtn == "exact-schur":
        return [exact_schur_dtn(prob.system, dec, j) for j in dec.interfaces()]
    if cfg.dtn == "tensor":
        if basis is None:
            basis = transverse_eigenbasis(dec.space_t, prob.coeffs.w0, prob.coeffs.w1)
        return [tensor_dtn_operator(prob.coeffs, dec, j, basis)
                for j in dec.interfaces()]
    spec = PMLSpec.tuned(start=0.0, width=1.0, strength=cfg.pml_strength,
                         exponent=cfg.pml_exponent)
    return [moving_pml_dtn(prob.coeffs_bg, spec, dec, j, gamma=cfg.gamma)
            for j in dec.interfaces()]


def _summary_row(cfg, report, setup_s, solve_s):
    return (cfg.omega, cfg.layers, cfg.dtn, cfg.bc_surface, cfg.epsilon,
            report.iterations, report.converged, report.final_relres,
            round(setup_s, 3), round(solve_s, 3))


def _print_summary(rows):
    header = reporting.SUMMARY_HEADER
    widths = [max(len(h), 12) for h in header]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        cells = [f"{x:.6g}" if isinstance(x, float) else str(x) for x in row]
        print("  ".join(c.ljust(w) for c, w in zip(cells, widths)))


def run_solver_experiment(cfg):
    """disk-mpml / sh-mpml / sh-tensor: preconditioned GMRES solve."""
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    b = make_source(cfg, prob)
    ops = transmission_operators(cfg, prob)
    pre = build_preconditioner(prob.system, prob.decomp, ops)
    setup_s = time.perf_counter() - t0
    t1 = time.perf_counter()
    x, report = gmres(lambda v: prob.system.A @ v, pre.apply, b,
                      tol=cfg.tolerance, maxit=cfg.maxit)
    solve_s = time.perf_counter() - t1
    rows = [_summary_row(cfg, report, setup_s, solve_s)]
    reporting.write_summary(os.path.join(cfg.out, "summary.csv"), rows)
    reporting.write_residuals(os.path.join(cfg.out, "residuals.csv"),
                              report.residual_history)
    if cfg.figures:
        reporting.plot_residuals(
            os.path.join(cfg.out, "residuals.png"), [report.residual_history],
            [f"{cfg.dtn}, {cfg.bc_surface}"],
            title=f"{cfg.experiment}: omega={cfg.omega:g}, J={cfg.layers}")
        reporting.plot_wavefield(
            os.path.join(cfg.out, "wavefield.png"), prob.system, x,
            polar_axis="vertical" if cfg.problem == "sh" else "horizontal",
            title=f"Re(u), omega={cfg.omega:g}")
    _print_summary(rows)
    return {"report": report, "solution": x, "problem": prob, "rows": rows}


def run_one_sweep(cfg):
    """Single preconditioner application against the direct sparse solve."""
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    b = make_source(cfg, prob)
    ops = transmission_operators(cfg, prob)
    pre = build_preconditioner(prob.system, prob.decomp, ops)
    setup_s = time.perf_counter() - t0
    t1 = time.perf_counter()
    x1 = pre.apply(b)
    xd = spsolve(prob.system.A.tocsc(), b)
    err = relative_l2_error(x1, xd, prob.system)
    solve_s = time.perf_counter() - t1
    rows = [(cfg.omega, cfg.layers, cfg.dtn, cfg.bc_surface, cfg.epsilon,
             1, err <= cfg.tolerance, err, round(setup_s, 3), round(solve_s, 3))]
    reporting.write_summary(os.path.join(cfg.out, "summary.csv"), rows)
    reporting.write_csv(os.path.join(cfg.out, "one_sweep.csv"),
                        ["omega", "J", "dtn", "source", "l2_error"],
                        [(cfg.omega, cfg.layers, cfg.dtn, cfg.source, err)])
    if cfg.figures:
        reporting.plot_wavefield(
            os.path.join(cfg.out, "wavefield.png"), prob.system, x1,
            polar_axis="vertical" if cfg.problem == "sh" else "horizontal",
            title=f"one sweep, omega={cfg.omega:g}, err={err:.2e}")
    _print_summary(rows)
    return {"error": err, "rows": rows, "problem": prob}


def run_perturbation_study(cfg):
    """Iteration counts of the background-DtN sweep on epsilon-perturbed
    operators (one GMRES run per epsilon)."""
    os.makedirs(cfg.out, exist_ok=True)
    try:
        eps_list = [float(s) for s in cfg.epsilons.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"config key 'epsilons': {exc}") from exc
    rows, iterations = [], []
    basis = None
    for eps in eps_list:
        sub = make_config(cfg.experiment, {k: getattr(cfg, k) for k in (
            "problem", "omega", "J", "order", "bc_surface", "dtn", "source",
            "seed", "perturbation", "alpha", "gamma", "pml_strength",
            "pml_exponent", "profile", "tolerance", "maxit", "out")})
        sub.epsilon = eps
        t0 = time.perf_counter()
        prob = build_problem(sub)
        b = make_source(sub, prob)
        if basis is None and sub.dtn == "tensor":
            basis = transverse_eigenbasis(prob.decomp.space_t,
                                          prob.coeffs.w0, prob.coeffs.w1)
        ops = transmission_operators(sub, prob, basis=basis)
        pre = build_preconditioner(prob.system, prob.decomp, ops)
        setup_s = time.perf_counter() - t0
        t1 = time.perf_counter()
        _, report = gmres(lambda v: prob.system.A @ v, pre.apply, b,
                          tol=sub.tolerance, maxit=sub.maxit)
        solve_s = time.perf_counter() - t1
        rows.append(_summary_row(sub, report, setup_s, solve_s))
        iterations.append(report.iterations)
        reporting.write_residuals(
            os.path.join(cfg.out, f"residuals_eps_{eps:g}.csv"),
            report.residual_history)
    reporting.write_summary(os.path.join(cfg.out, "summary.csv"), rows)
    if cfg.figures:
        reporting.plot_iterations(
            os.path.join(cfg.out, "iterations_vs_epsilon.png"),
            eps_list, [iterations], [f"{cfg.dtn}, {cfg.bc_surface}"],
            xlabel="relative perturbation epsilon",
            title=f"omega={cfg.omega:g}, J={cfg.layers}")
    _print_summary(rows)
    return {"epsilons": eps_list, "iterations": iterations, "rows": rows}


def run_modal_sensitivity(cfg):
    """Per-mode relative DtN error of one interface under a constant
    velocity perturbation, for the free and PML surface closures."""
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.problem != "sh":
        raise ConfigError("config key 'problem': modal study runs on 'sh'")
    base_cfg = make_config("modal-sensitivity", {k: getattr(cfg, k) for k in (
        "omega", "J", "order", "pml_strength", "pml_exponent", "profile")})
    base_cfg.epsilon = 0.0
    prob = build_problem(base_cfg)
    dec = prob.decomp
    j = cfg.interface if cfg.interface else dec.J - 1
    if not 2 <= j <= dec.J:
        raise ConfigError("config key 'interface': out of range")
    basis = transverse_eigenbasis(dec.space_t, prob.coeffs_bg.w0, prob.coeffs_bg.w1)
    profile = prob.profile
    pprof = perturbed_profile(profile, cfg.epsilon)
    spec = prob.surface_pml
    errors = {}
    for surface in ("free", "pml"):
        c_bg = prob.coeffs_bg if surface == "free" else pml_scale(spec, prob.coeffs_bg)
        pbase = make_sh_coefficients(pprof, cfg.omega)
        c_pert = pbase if surface == "free" else pml_scale(spec, pbase)
        m_bg = build_modal_dtn(c_bg, dec, j, basis)
        m_pert = build_modal_dtn(c_pert, dec, j, basis)
        errors[surface] = modal_relative_error(m_bg, m_pert)
        reporting.write_modal_table(
            os.path.join(cfg.out, f"modal_dtn_{surface}.csv"),
            modal_table_rows(m_bg))
    cut = guided_threshold(prob.coeffs_bg)
    guided = basis.lam <= cut
    reporting.write_csv(
        os.path.join(cfg.out, "modal_errors.csv"),
        ["ell", "lambda", "relerr_free", "relerr_pml", "guided"],
        [(ell + 1, float(lam), float(errors["free"][ell]),
          float(errors["pml"][ell]), bool(g))
         for ell, (lam, g) in enumerate(zip(basis.lam, guided))])
    if cfg.figures:
        reporting.plot_modal_errors(
            os.path.join(cfg.out, "modal_error.png"), basis.lam,
            [errors["free"], errors["pml"]], ["free surface", "PML surface"],
            guided_cut=cut,
            title=f"omega={cfg.omega:g}, eps={cfg.epsilon:g}, interface {j}")
    med_free = float(np.median(errors["free"][guided]))
    med_pml = float(np.median(errors["pml"][guided]))
    print(f"modal-sensitivity: guided modes {int(guided.sum())}/{basis.lam.size}, "
          f"median relerr free {med_free:.3e}, pml {med_pml:.3e}")
    return {"lam": basis.lam, "errors": errors, "guided": guided,
            "median_free": med_free, "median_pml": med_pml, "interface": j}


def run_riccati_1d(cfg):
    """Analytic Delta_T / Delta_R over a frequency grid (1D half-line)."""
    os.makedirs(cfg.out, exist_ok=True)
    eps = cfg.epsilon if cfg.epsilon > 0 else 1e-3
    omegas = np.linspace(cfg.omega_min, cfg.omega_max, cfg.omega_count)
    rows = []
    for om in omegas:
        try:
            dt, dr = relative_errors(eps, float(om), cfg.a)
        except ResonanceError:
            dt, dr = float("nan"), float("inf")
        rows.append((float(om), dt, dr))
    reporting.write_sensitivity(os.path.join(cfg.out, "sensitivity.csv"), rows)
    if cfg.figures:
        arr = np.array([(r[1], r[2]) for r in rows])
        reporting.plot_sensitivity(
            os.path.join(cfg.out, "analytic_errors.png"), omegas,
            arr[:, 0], arr[:, 1],
            title=f"eps={eps:g}, a={cfg.a:g}")
    finite = [r for r in rows if np.isfinite(r[2])]
    max_dt = max(r[1] for r in finite)
    max_dr = max(r[2] for r in finite)
    print(f"riccati-1d: max Delta_T {max_dt:.3e}, max Delta_R {max_dr:.3e}")
    return {"rows": rows, "max_delta_t": max_dt, "max_delta_r": max_dr}


DRIVERS = {
    "disk-mpml": run_solver_experiment,
    "sh-mpml": run_solver_experiment,
    "sh-tensor": run_solver_experiment,
    "one-sweep": run_one_sweep,
    "perturbation-study": run_perturbation_study,
    "modal-sensitivity": run_modal_sensitivity,
    "riccati-1d": run_riccati_1d,
}


def run_experiment(cfg):
    """Dispatch a validated config; returns (results, exit_code)."""
    driver = DRIVERS.get(cfg.experiment)
    if driver is None:
        raise ConfigError(f"unknown experiment '{cfg.experiment}'")
    results = driver(cfg)
    code = 0
    report = results.get("report")
    if report is not None and not report.converged:
        code = 2
    if cfg.experiment == "one-sweep" and results["error"] > cfg.tolerance:
        code = 2
    return results, code

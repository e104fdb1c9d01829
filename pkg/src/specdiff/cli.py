"""Command-line driver: `simulate` runs replicated experiments from a JSON
config, `theory` evaluates the limiting covariance formulas, `compare` joins
the two into a pass/fail report, and `mp-density` tabulates the limiting
spectral density.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__, kernels, mp_law, montecarlo
from .ensembles import law_moments, make_entry_law, make_population
from .spectral import TestFunction

MANIFEST_SCHEMA = "specdiff-manifest-v1"
THEORY_SCHEMA = "specdiff-theory-v1"
COMPARE_SCHEMA = "specdiff-compare-v1"
DENSITY_SCHEMA = "specdiff-density-v1"

WORKERS_ENV = "SPECDIFF_WORKERS"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed JSON in {path}: {exc}") from exc


def _default_workers(cfg_value, flag_value) -> int:
    if flag_value is not None:
        return int(flag_value)
    if cfg_value is not None:
        return int(cfg_value)
    env = os.environ.get(WORKERS_ENV)
    if env:
        return int(env)
    return 1


def _functions_from(cfg) -> tuple:
    specs = cfg.get("functions")
    if not specs:
        raise ValueError("config needs a nonempty 'functions' list")
    return tuple(TestFunction.from_spec(s) for s in specs)


def _population_from(cfg):
    pop = cfg.get("population")
    if not isinstance(pop, dict) or "kind" not in pop:
        raise ValueError("config needs population: {kind, params}")
    cov = make_population(pop["kind"], **pop.get("params", {}))
    if "p" in cfg and int(cfg["p"]) != cov.p:
        raise ValueError(f"config p={cfg['p']} disagrees with population p={cov.p}")
    return cov


def _experiment_config(cfg: dict, workers: int) -> montecarlo.ExperimentConfig:
    law_spec = cfg.get("entry_law")
    if not isinstance(law_spec, dict) or "kind" not in law_spec:
        raise ValueError("config needs entry_law: {kind, params}")
    law = make_entry_law(law_spec["kind"], **law_spec.get("params", {}))
    cov = _population_from(cfg)
    if "n" not in cfg or "q_list" not in cfg or "replications" not in cfg:
        raise ValueError("config needs n, q_list and replications")
    z_list = tuple(complex(z[0], z[1]) for z in cfg.get("z_list", ()))
    return montecarlo.ExperimentConfig(
        entry_law=law, cov=cov, n=int(cfg["n"]),
        q_list=tuple(int(q) for q in cfg["q_list"]),
        functions=_functions_from(cfg),
        replications=int(cfg["replications"]),
        seed=int(cfg.get("seed", 0)), workers=workers, z_list=z_list)


def _write_manifest(out_dir, command, cfg, seed, started, outputs) -> str:
    path = os.path.join(out_dir, "manifest.json")
    payload = {
        "schema": MANIFEST_SCHEMA,
        "tool_version": __version__,
        "command": command,
        "config": cfg,
        "seed": seed,
        "started": started,
        "ended": _utc_now(),
        "outputs": [os.path.abspath(p) for p in outputs],
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cmd_simulate(config_path, out_dir, workers_flag=None) -> int:
    started = _utc_now()
    cfg = _load_json(config_path)
    workers = _default_workers(cfg.get("workers"), workers_flag)
    config = _experiment_config(cfg, workers)
    os.makedirs(out_dir, exist_ok=True)
    result = montecarlo.run_experiment(config)
    outputs = []
    samples_path = os.path.join(out_dir, "samples.csv")
    montecarlo.write_samples_csv(result, samples_path)
    outputs.append(samples_path)
    if config.z_list:
        process_path = os.path.join(out_dir, "process.csv")
        montecarlo.write_process_csv(result, process_path)
        outputs.append(process_path)
    result_path = os.path.join(out_dir, "result.json")
    montecarlo.write_summary_json(result, result_path)
    outputs.append(result_path)
    outputs.append(_write_manifest(out_dir, "simulate", cfg, config.seed,
                                   started, outputs))
    print(f"simulate: {result.metadata['replications']} replicates "
          f"({result.metadata['failure_count']} failed), "
          f"{len(result.summaries)} statistics -> {out_dir}")
    for (q, f_id), stats in sorted(result.summaries.items()):
        print(f"  q={q} f={f_id}: mean {stats.mean:+.4f} "
              f"variance {stats.variance:.4f}")
    return 0


_CLOSED_FORM_KIND = {"log": "log", "poly[0.0;1.0]": "x", "poly[0.0;0.0;1.0]": "x2"}


def _theory_statistic(cov, n, f, q, kappa, nu4, inner, outer):
    res = kernels.lss_cov(cov, n, f, f, q, q, kappa, nu4, inner, outer)
    entry = {
        "q": q,
        "f_id": f.f_id,
        "oracle": res.value,
        "quad_error": res.quad_error,
        "closed_form": None,
        "residue_oracle": None,
    }
    y_n = cov.p / n
    if cov.is_null:
        cf_kind = _CLOSED_FORM_KIND.get(f.f_id)
        if cf_kind is not None and not (cf_kind == "log" and y_n >= 1):
            entry["closed_form"] = kernels.null_limit_constants(y_n, kappa, nu4, cf_kind)
        if f.kind == "poly":
            entry["residue_oracle"] = kernels.null_residue_cov_poly(
                y_n, f.coefficients, f.coefficients, kappa, nu4)
    return entry


def cmd_theory(config_path, out_dir) -> int:
    started = _utc_now()
    cfg = _load_json(config_path)
    cov = _population_from(cfg)
    if "n" not in cfg:
        raise ValueError("config needs n")
    n = int(cfg["n"])
    if "entry_law" in cfg:
        law = make_entry_law(cfg["entry_law"]["kind"],
                             **cfg["entry_law"].get("params", {}))
        kappa, nu4, _ = law_moments(law)
    elif "kappa" in cfg and "nu4" in cfg:
        kappa, nu4 = float(cfg["kappa"]), float(cfg["nu4"])
    else:
        raise ValueError("config needs either entry_law or kappa and nu4")
    functions = _functions_from(cfg)
    q_list = tuple(int(q) for q in cfg.get("q_list", (1,)))
    y_n = cov.p / n

    csec = cfg.get("contours", {})
    needs_positive = any(f.kind == "log" for f in functions)
    interval = mp_law.support_interval(cov, y_n)
    inner = mp_law.build_contour(
        interval, margin=csec.get("margin"), v0=float(csec.get("v0", 1.0)),
        nodes_per_side=int(csec.get("nodes_per_side", 256)),
        require_positive=needs_positive)
    default_step = 0.5 * (inner.x_r - interval[1])
    if needs_positive:
        # keep the inflated contour right of the log branch cut
        default_step = min(default_step, 0.5 * inner.x_l)
    step = float(csec.get("outer_step", default_step))
    outer = mp_law.outer_contour(inner, step)

    statistics = {}
    for q in q_list:
        for f in functions:
            entry = _theory_statistic(cov, n, f, q, kappa, nu4, inner, outer)
            statistics[f"q{q}:{f.f_id}"] = entry
            print(f"[contour] q={q} f={f.f_id}: lss_cov = {entry['oracle']:.6f} "
                  f"(quad error {entry['quad_error']:.2e})")
            if entry["closed_form"] is not None:
                kind = _CLOSED_FORM_KIND[f.f_id]
                label = {"x": "2*kappa + (nu4-kappa-1)",
                         "x2": "8*kappa*(1+3y+y^2) + 4*(nu4-kappa-1)*(1+y)^2",
                         "log": "kappa/(1-y) + (nu4-kappa-1)"}[kind]
                print(f"[closed-form] q={q} f={f.f_id}: {label} = "
                      f"{entry['closed_form']:.6f}")
            if entry["residue_oracle"] is not None:
                extra = ""
                if f.f_id == "poly[0.0;1.0]":
                    extra = f" = 2*(nu4-1) = {2.0 * (nu4 - 1.0):.6f}"
                print(f"[residue-oracle] q={q} f={f.f_id}: "
                      f"{entry['residue_oracle']:.6f}{extra}")

    kernel_grid = []
    for pair in cfg.get("z_pairs", ()):
        z1 = complex(pair[0][0], pair[0][1])
        z2 = complex(pair[1][0], pair[1][1])
        for q in q_list:
            ev = kernels.kernel_eval(cov, n, q, q, z1, z2, kappa, nu4)
            kernel_grid.append({
                "q1": ev.q1, "q2": ev.q2,
                "z1": [ev.z1.real, ev.z1.imag], "z2": [ev.z2.real, ev.z2.imag],
                "a": [ev.a.real, ev.a.imag],
                "g": [ev.g.real, ev.g.imag],
                "h": [ev.h.real, ev.h.imag],
                "sigma2": [ev.sigma2.real, ev.sigma2.imag],
                "tau2": [ev.tau2.real, ev.tau2.imag],
                "cov": [ev.cov.real, ev.cov.imag],
            })

    unit_circle = {}
    if cov.is_null:
        uc = cfg.get("unit_circle", {})
        deltas = tuple(uc.get("deltas", (0.1, 0.05, 0.025)))
        nodes = int(uc.get("nodes", 1024))
        for f in functions:
            if f.kind != "poly":
                continue
            r = kernels.null_lss_cov_unitcircle(y_n, f, f, kappa, nu4,
                                                delta_sequence=deltas, nodes=nodes)
            unit_circle[f.f_id] = {
                "value": r.value, "sigma_part": r.sigma_part,
                "tau_part": r.tau_part, "flagged": r.flagged,
                "table": [list(row) for row in r.table],
            }

    os.makedirs(out_dir, exist_ok=True)
    theory_path = os.path.join(out_dir, "theory.json")
    payload = {
        "schema": THEORY_SCHEMA,
        "model": {"population": cov.label, "p": cov.p, "n": n, "y_n": y_n,
                  "kappa": kappa, "nu4": nu4},
        "contours": {
            "inner": {"x_l": inner.x_l, "x_r": inner.x_r, "v0": inner.v0,
                      "nodes_per_side": inner.nodes_per_side},
            "outer": {"x_l": outer.x_l, "x_r": outer.x_r, "v0": outer.v0,
                      "nodes_per_side": outer.nodes_per_side},
        },
        "statistics": statistics,
        "kernel_grid": kernel_grid,
        "unit_circle": unit_circle,
    }
    with open(theory_path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "theory", cfg, None, started, [theory_path])
    return 0


def cmd_compare(sim_path, theory_path, tolerance, out_path=None) -> int:
    sim = _load_json(sim_path)
    theory = _load_json(theory_path)
    summaries = sim.get("summaries") or {}
    statistics = theory.get("statistics") or {}
    if not summaries or not statistics:
        raise ValueError("empty inputs: need simulate summaries and theory statistics")
    sim_ids = set(summaries)
    theory_ids = set(statistics)
    if sim_ids != theory_ids:
        raise ValueError(
            "statistic identifiers do not match: "
            f"simulate-only {sorted(sim_ids - theory_ids)}, "
            f"theory-only {sorted(theory_ids - sim_ids)}")
    reports = {}
    all_passed = True
    for stat_id in sorted(sim_ids):
        stats = montecarlo.SummaryStats(**summaries[stat_id])
        entry = statistics[stat_id]
        theory_values = {"oracle": entry["oracle"]}
        if entry.get("closed_form") is not None:
            theory_values["closed-form"] = entry["closed_form"]
        if entry.get("residue_oracle") is not None:
            theory_values["residue-oracle"] = entry["residue_oracle"]
        report = montecarlo.compare_theory(
            stat_id, stats, theory_values, {"oracle": tolerance})
        reports[stat_id] = report
        all_passed = all_passed and report.passed
        for line in report.lines():
            print(line)
    if out_path:
        payload = {
            "schema": COMPARE_SCHEMA,
            "tolerance": tolerance,
            "all_passed": all_passed,
            "reports": {
                sid: {
                    "empirical": rep.empirical, "se": rep.se,
                    "theory": rep.theory, "ratios": rep.ratios,
                    "passes": rep.passes, "notes": list(rep.notes),
                    "passed": rep.passed,
                } for sid, rep in reports.items()
            },
        }
        with open(out_path, "w", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print("compare: all oracle-backed checks passed" if all_passed
          else "compare: oracle-backed check FAILED")
    return 0 if all_passed else 1


def _parse_h_spec(text: str):
    """Accept a single atom location ("1.0"), a comma list with equal weights
    ("0.5,1.5"), or a JSON object {"atoms": [...], "weights": [...]}."""
    from .ensembles import SpectralMeasure
    text = text.strip()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            values = [float(tok) for tok in text.split(",") if tok.strip()]
        except ValueError as exc:
            raise ValueError(f"malformed H spec {text!r}") from exc
        if not values:
            raise ValueError(f"malformed H spec {text!r}")
        data = values
    if isinstance(data, dict):
        atoms = data.get("atoms")
        weights = data.get("weights")
        if atoms is None:
            raise ValueError(f"H spec object needs 'atoms': {text!r}")
        if weights is None:
            weights = [1.0 / len(atoms)] * len(atoms)
        return SpectralMeasure(atoms=tuple(float(a) for a in atoms),
                               weights=tuple(float(w) for w in weights))
    if isinstance(data, bool):
        raise ValueError(f"malformed H spec {text!r}")
    if isinstance(data, (int, float)):
        return SpectralMeasure(atoms=(float(data),), weights=(1.0,))
    if isinstance(data, list):
        k = len(data)
        if k == 0:
            raise ValueError(f"malformed H spec {text!r}")
        return SpectralMeasure(atoms=tuple(float(a) for a in data),
                               weights=(1.0 / k,) * k)
    raise ValueError(f"malformed H spec {text!r}")


def _parse_grid(text, model):
    if text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must look like lo:hi:count, got {text!r}")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 2 or hi <= lo:
            raise ValueError(f"bad grid {text!r}")
        return np.linspace(lo, hi, count)
    lam = model.H.atoms_array()
    lo, hi = mp_law._support_from_atoms(float(lam.min()), float(lam.max()), model.y)
    span = max(hi - lo, 1e-3)
    return np.linspace(max(0.0, lo - 0.1 * span), hi + 0.1 * span, 512)


def cmd_mp_density(y, h_spec, grid, epsilon, out_csv) -> int:
    measure = _parse_h_spec(h_spec)
    model = mp_law.MPModel(float(y), measure)
    xs = _parse_grid(grid, model)
    lines = [f"# {DENSITY_SCHEMA}", f"# y = {float(y)!r}"]
    mass = mp_law.atom_mass(model.y)
    if mass > 0.0:
        lines.append(f"# point mass at 0: {mass!r}")
    lines.append("x,density")
    for x in xs:
        d = mp_law.mp_density(model, float(x), epsilon=epsilon)
        lines.append(f"{float(x)!r},{d!r}")
    text = "\n".join(lines) + "\n"
    if out_csv == "-":
        sys.stdout.write(text)
    else:
        with open(out_csv, "w", newline="\n") as fh:
            fh.write(text)
        print(f"mp-density: {xs.size} grid points -> {out_csv}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specdiff",
        description="Difference-of-spectral-statistics simulation and theory toolkit")
    parser.add_argument("--version", action="version", version=f"specdiff {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a replicated experiment from a JSON config")
    p_sim.add_argument("config", help="path to the experiment config (JSON)")
    p_sim.add_argument("-o", "--out-dir", default="specdiff-out",
                       help="output directory (default: %(default)s)")
    p_sim.add_argument("--workers", type=int, default=None,
                       help=f"worker threads (default: config, then ${WORKERS_ENV}, then 1)")

    p_thr = sub.add_parser("theory", help="evaluate limiting covariances for a config")
    p_thr.add_argument("config", help="path to the theory config (JSON)")
    p_thr.add_argument("-o", "--out-dir", default="specdiff-out",
                       help="output directory (default: %(default)s)")

    p_cmp = sub.add_parser("compare", help="compare simulate output against theory output")
    p_cmp.add_argument("--sim", required=True, help="result.json from `simulate`")
    p_cmp.add_argument("--theory", required=True, help="theory.json from `theory`")
    p_cmp.add_argument("--tolerance", type=float, default=0.1,
                       help="relative tolerance for oracle-backed checks (default: %(default)s)")
    p_cmp.add_argument("-o", "--out", default=None, help="optional report.json path")

    p_den = sub.add_parser("mp-density", help="tabulate the limiting spectral density")
    p_den.add_argument("--y", type=float, required=True, help="dimension ratio p/n")
    p_den.add_argument("--h-spec", default="1.0",
                       help="population spectrum: atom, comma list, or JSON (default: %(default)s)")
    p_den.add_argument("--grid", default=None, help="lo:hi:count (default: around the support)")
    p_den.add_argument("--epsilon", type=float, default=1e-6,
                       help="imaginary offset for the density (default: %(default)s)")
    p_den.add_argument("-o", "--out", default="-", help="output CSV path, - for stdout")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out_dir, args.workers)
        if args.command == "theory":
            return cmd_theory(args.config, args.out_dir)
        if args.command == "compare":
            return cmd_compare(args.sim, args.theory, args.tolerance, args.out)
        if args.command == "mp-density":
            return cmd_mp_density(args.y, args.h_spec, args.grid, args.epsilon, args.out)
        raise ValueError(f"unknown command {args.command!r}")
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

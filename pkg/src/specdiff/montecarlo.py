"""Replicated simulation of the row-deletion difference statistics and the
Stieltjes difference process: deterministic parallel experiment driver,
summary statistics, normality and independence diagnostics, empirical process
covariance, and comparison reports against theoretical constants.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.stats
from threadpoolctl import threadpool_limits

from . import mp_law
from .ensembles import CovModel, EntryLaw, sample_matrix
from .spectral import (
    SingularCovarianceError,
    TestFunction,
    _lss_difference,
    delete_rowcol,
    deleted_spectral_measure,
    eigenvalues,
    sample_covariance,
    stieltjes_esd,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "SummaryStats",
    "ProcessCovEstimate",
    "ComparisonReport",
    "config_digest",
    "run_experiment",
    "summarize",
    "normality_diagnostics",
    "independence_check",
    "process_cov_empirical",
    "compare_theory",
    "write_samples_csv",
    "read_samples_csv",
    "write_process_csv",
    "write_summary_json",
]

SAMPLES_SCHEMA = "specdiff-samples-v1"
PROCESS_SCHEMA = "specdiff-process-v1"
RESULT_SCHEMA = "specdiff-result-v1"

# Fraction of replicates allowed to fail (singular sample covariance under
# f=log) before the whole run is considered misconfigured.
MAX_FAILURE_FRACTION = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    entry_law: EntryLaw
    cov: CovModel
    n: int
    q_list: tuple
    functions: tuple
    replications: int
    seed: int
    workers: int = 1
    z_list: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "q_list", tuple(int(q) for q in self.q_list))
        object.__setattr__(self, "functions", tuple(self.functions))
        object.__setattr__(self, "z_list", tuple(complex(z) for z in self.z_list))
        if self.replications < 2:
            raise ValueError(f"need at least 2 replications, got {self.replications}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        if not self.q_list:
            raise ValueError("q_list must not be empty")
        for q in self.q_list:
            if not 1 <= q <= self.cov.p:
                raise ValueError(f"q={q} outside [1, {self.cov.p}]")
        if len(set(self.q_list)) != len(self.q_list):
            raise ValueError("q_list entries must be distinct")
        if not self.functions:
            raise ValueError("functions must not be empty")
        ids = [f.f_id for f in self.functions]
        if len(set(ids)) != len(ids):
            raise ValueError("test functions must be distinct")
        if len(set(self.z_list)) != len(self.z_list):
            raise ValueError("z_list entries must be distinct")
        for z in self.z_list:
            if z.imag == 0.0:
                raise ValueError(f"process points must be off the real axis, got {z}")
        if any(f.kind == "log" for f in self.functions) and self.cov.p > self.n:
            raise ValueError(
                f"f=log requires p <= n, got p={self.cov.p} > n={self.n}")

    @property
    def p(self) -> int:
        return self.cov.p

    @property
    def y_n(self) -> float:
        return self.cov.p / self.n


@dataclass(frozen=True)
class SummaryStats:
    count: int
    mean: float
    variance: float
    std_error: float
    variance_se: float
    skewness: float
    excess_kurtosis: float
    skewness_se: float
    kurtosis_se: float
    degenerate: bool


@dataclass(frozen=True)
class ProcessCovEstimate:
    value: complex
    se: float
    count: int


@dataclass(frozen=True)
class ComparisonReport:
    statistic_id: str
    empirical: float
    se: float
    theory: dict
    ratios: dict
    tolerances: dict
    passes: dict
    notes: tuple

    @property
    def passed(self) -> bool:
        return all(self.passes.values())

    def lines(self):
        out = [f"{self.statistic_id}: empirical {self.empirical:.6g} +/- {self.se:.2g}"]
        for name, tv in self.theory.items():
            ratio = self.ratios.get(name)
            verdict = ""
            if name in self.passes:
                verdict = "  [pass]" if self.passes[name] else "  [FAIL]"
            out.append(f"  vs {name} = {tv:.6g}  ratio {ratio:.4f}{verdict}")
        out.extend(f"  note: {note}" for note in self.notes)
        return out


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    replicate_indices: np.ndarray
    diff_values: dict
    centerings: dict
    process_values: dict
    failures: tuple
    summaries: dict
    metadata: dict = field(compare=False)

    def diff(self, q: int, f) -> np.ndarray:
        f_id = f if isinstance(f, str) else f.f_id
        return self.diff_values[(int(q), f_id)]

    def process(self, q: int, z: complex) -> np.ndarray:
        return self.process_values[(int(q), complex(z))]


def config_digest(config: ExperimentConfig) -> str:
    """Stable hexadecimal digest of everything that determines the sampled
    values (the worker count is deliberately excluded)."""
    payload = {
        "entry_law": {"kind": config.entry_law.kind,
                      "params": dict(config.entry_law.params)},
        "population": {"label": config.cov.label,
                       "sigma_sha256": hashlib.sha256(
                           np.ascontiguousarray(config.cov.sigma).tobytes()).hexdigest()},
        "p": config.p,
        "n": config.n,
        "q_list": list(config.q_list),
        "functions": [f.f_id for f in config.functions],
        "z_list": [[z.real, z.imag] for z in config.z_list],
        "replications": config.replications,
        "seed": config.seed,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _replicate_task(config, centerings, s0_map, s0q_map, r):
    """Compute every requested statistic for one replicate.  Returns
    (r, None, None) when the sample covariance is singular under f=log."""
    cov, n = config.cov, config.n
    p = cov.p
    sqrt_n = math.sqrt(n)
    X = sample_matrix(config.entry_law, p, n, config.seed, r)
    S = sample_covariance(cov, X)
    diff = np.empty(len(config.q_list) * len(config.functions))
    proc = (np.empty(len(config.q_list) * len(config.z_list), dtype=complex)
            if config.z_list else None)
    eig_S = eigenvalues(S) if config.z_list else None
    k = 0
    m = 0
    try:
        for iq, q in enumerate(config.q_list):
            Sq = delete_rowcol(S, q)
            for jf, f in enumerate(config.functions):
                raw = _lss_difference(S, Sq, f)
                diff[k] = sqrt_n * (raw - centerings[iq][jf])
                k += 1
            if config.z_list:
                eig_Sq = eigenvalues(Sq)
                for z in config.z_list:
                    val = p * (stieltjes_esd(eig_S, z) - s0_map[z])
                    if p > 1:
                        val -= (p - 1) * (stieltjes_esd(eig_Sq, z) - s0q_map[(q, z)])
                    proc[m] = sqrt_n * val
                    m += 1
    except SingularCovarianceError:
        return r, None, None
    return r, diff, proc


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run all replicates, merge by replicate index, and summarize.

    Determinism contract: each replicate's stream is keyed by
    (seed, replicate_index) and its arithmetic runs single-threaded (BLAS pools
    are clamped), so the result is bit-identical for any worker count.
    Replicates whose sample covariance is singular under f=log are excluded
    and counted; more than 1% of them fails the run.
    """
    started = time.time()
    cov, n, p = config.cov, config.n, config.cov.p
    H_n = cov.spectral_measure
    centerings = []
    s0_map = {}
    s0q_map = {}
    model_full = mp_law.MPModel(p / n, H_n)
    for q in config.q_list:
        H_nq = deleted_spectral_measure(cov, q)
        centerings.append([
            mp_law.centering_difference(p, n, H_n, H_nq, f)
            for f in config.functions])
        for z in config.z_list:
            if z not in s0_map:
                s0_map[z] = mp_law.solve_companion_stieltjes(model_full, z).s
            if p > 1:
                s0q_map[(q, z)] = mp_law.solve_companion_stieltjes(
                    mp_law.MPModel((p - 1) / n, H_nq), z).s

    R = config.replications
    rows = [None] * R
    with threadpool_limits(limits=1):
        if config.workers == 1:
            for r in range(R):
                rows[r] = _replicate_task(config, centerings, s0_map, s0q_map, r)
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                futures = [pool.submit(_replicate_task, config, centerings,
                                       s0_map, s0q_map, r) for r in range(R)]
                for fut in futures:
                    r, diff, proc = fut.result()
                    rows[r] = (r, diff, proc)

    failures = tuple(r for r, diff, _ in rows if diff is None)
    if len(failures) > MAX_FAILURE_FRACTION * R:
        raise RuntimeError(
            f"{len(failures)} of {R} replicates had a singular sample covariance; "
            "the configuration is too close to degenerate")
    ok = [(r, diff, proc) for r, diff, proc in rows if diff is not None]
    replicate_indices = np.array([r for r, _, _ in ok], dtype=int)
    diff_block = np.array([diff for _, diff, _ in ok])
    diff_values = {}
    centerings_out = {}
    k = 0
    for iq, q in enumerate(config.q_list):
        for jf, f in enumerate(config.functions):
            diff_values[(q, f.f_id)] = diff_block[:, k].copy()
            centerings_out[(q, f.f_id)] = float(centerings[iq][jf])
            k += 1
    process_values = {}
    if config.z_list:
        proc_block = np.array([proc for _, _, proc in ok])
        m = 0
        for q in config.q_list:
            for z in config.z_list:
                process_values[(q, z)] = proc_block[:, m].copy()
                m += 1
    summaries = {key: summarize(vals) for key, vals in diff_values.items()}
    metadata = {
        "schema": RESULT_SCHEMA,
        "config_digest": config_digest(config),
        "seed": config.seed,
        "replications": R,
        "workers": config.workers,
        "p": p,
        "n": n,
        "y_n": p / n,
        "failure_count": len(failures),
        "wall_time_s": time.time() - started,
    }
    return ExperimentResult(
        config=config, replicate_indices=replicate_indices,
        diff_values=diff_values, centerings=centerings_out,
        process_values=process_values, failures=failures,
        summaries=summaries, metadata=metadata)


def summarize(samples) -> SummaryStats:
    """Unbiased mean/variance plus moment-based shape diagnostics.  Constant
    input yields zero variance with the degenerate flag set, not an error."""
    x = np.asarray(samples, dtype=float).ravel()
    R = x.size
    if R < 2:
        raise ValueError(f"need at least 2 samples, got {R}")
    mean = float(np.mean(x))
    variance = float(np.var(x, ddof=1))
    degenerate = variance == 0.0
    if degenerate:
        skewness = 0.0
        excess_kurtosis = 0.0
    else:
        c = x - mean
        m2 = float(np.mean(c * c))
        m3 = float(np.mean(c ** 3))
        m4 = float(np.mean(c ** 4))
        skewness = m3 / m2 ** 1.5
        excess_kurtosis = m4 / m2 ** 2 - 3.0
    return SummaryStats(
        count=R, mean=mean, variance=variance,
        std_error=math.sqrt(variance / R),
        variance_se=variance * math.sqrt(2.0 / (R - 1)),
        skewness=skewness, excess_kurtosis=excess_kurtosis,
        skewness_se=math.sqrt(6.0 / R), kurtosis_se=math.sqrt(24.0 / R),
        degenerate=degenerate)


def normality_diagnostics(samples) -> dict:
    """Kolmogorov-Smirnov distance against the moment-fitted normal, plus
    skewness/kurtosis bands (5 asymptotic standard errors each).  Degenerate
    input suppresses the diagnostics and flags it."""
    x = np.asarray(samples, dtype=float).ravel()
    R = x.size
    if R < 500:
        raise ValueError(f"normality diagnostics need >= 500 samples, got {R}")
    stats = summarize(x)
    if stats.degenerate:
        return {"count": R, "degenerate": True, "suppressed": True, "pass": True}
    ks = scipy.stats.kstest(x, "norm", args=(stats.mean, math.sqrt(stats.variance)))
    ks_band = 1.63 / math.sqrt(R)
    skew_band = 5.0 * stats.skewness_se
    kurt_band = 5.0 * stats.kurtosis_se
    report = {
        "count": R,
        "degenerate": False,
        "ks_distance": float(ks.statistic),
        "ks_band": ks_band,
        "ks_pass": bool(ks.statistic < ks_band),
        "skewness": stats.skewness,
        "skewness_band": skew_band,
        "skewness_pass": bool(abs(stats.skewness) < skew_band),
        "excess_kurtosis": stats.excess_kurtosis,
        "kurtosis_band": kurt_band,
        "kurtosis_pass": bool(abs(stats.excess_kurtosis) < kurt_band),
    }
    report["pass"] = report["ks_pass"] and report["skewness_pass"] and report["kurtosis_pass"]
    return report


def independence_check(samples_a, samples_b) -> dict:
    """Pearson correlation of replicate-paired series with a Fisher-z 99%
    confidence interval."""
    a = np.asarray(samples_a, dtype=float).ravel()
    b = np.asarray(samples_b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"paired series differ in length: {a.size} vs {b.size}")
    R = a.size
    if R < 4:
        raise ValueError("need at least 4 paired samples")
    if np.var(a) == 0.0 or np.var(b) == 0.0:
        raise ValueError("degenerate (constant) input series")
    r = float(np.corrcoef(a, b)[0, 1])
    z99 = 2.5758293035489004  # standard normal 99.5% quantile
    if 1.0 - r * r < 1e-15:
        lo = hi = r
    else:
        fz = math.atanh(r)
        half = z99 / math.sqrt(R - 3)
        lo, hi = math.tanh(fz - half), math.tanh(fz + half)
    return {"count": R, "correlation": r, "ci_low": lo, "ci_high": hi,
            "level": 0.99}


def process_cov_empirical(result: ExperimentResult, z1: complex, z2: complex,
                          q1: int, q2: int) -> ProcessCovEstimate:
    """Empirical covariance over replicates of the process values at
    (q1, z1) and (q2, z2), centered by the sample mean (the theoretical
    centering is not observable), conjugate-bilinear, with a jackknife SE."""
    try:
        a = result.process(q1, z1)
        b = result.process(q2, z2)
    except KeyError as exc:
        raise ValueError(f"no process samples stored at {exc.args[0]!r}") from exc
    R = a.size
    if R < 3:
        raise ValueError("need at least 3 replicates for a jackknife")
    A = a - a.mean()
    B = b - b.mean()
    S = np.sum(A * np.conj(B))
    est = S / (R - 1)
    loo = (S - A * np.conj(B) * (R / (R - 1.0))) / (R - 2)
    se = math.sqrt((R - 1) / R * float(np.sum(np.abs(loo - loo.mean()) ** 2)))
    return ProcessCovEstimate(value=complex(est), se=se, count=R)


def compare_theory(statistic_id: str, summary, theory_values: dict,
                   tolerances: dict, field_name: str = "variance") -> ComparisonReport:
    """Assemble ratios and pass/fail flags of an empirical value against one or
    more theoretical constants.  Entries with a declared tolerance gate the
    report; entries without one are informational and are flagged as a
    constant mismatch when they sit far from the empirical value."""
    if isinstance(summary, SummaryStats):
        empirical = float(getattr(summary, field_name))
        se = summary.variance_se if field_name == "variance" else summary.std_error
    else:
        empirical = float(summary)
        se = 0.0
    ratios = {}
    passes = {}
    notes = []
    for name, tv in theory_values.items():
        tv = float(tv)
        ratios[name] = empirical / tv if tv != 0.0 else math.inf
        if name in tolerances:
            tol = float(tolerances[name])
            passes[name] = bool(abs(empirical - tv) <= tol * abs(tv))
        elif abs(ratios[name] - 1.0) > 0.1:
            notes.append(f"{name}: reference-constant mismatch (ratio = {ratios[name]:.3f})")
    return ComparisonReport(
        statistic_id=statistic_id, empirical=empirical, se=float(se),
        theory={k: float(v) for k, v in theory_values.items()},
        ratios=ratios, tolerances={k: float(v) for k, v in tolerances.items()},
        passes=passes, notes=tuple(notes))


# ------------------------------------------------------------------ file I/O

def write_samples_csv(result: ExperimentResult, path) -> None:
    """One row per (replicate, q, f) with full-precision repr floats.  The
    byte content depends only on the sampled values, never on timing or
    worker count."""
    lines = [f"# {SAMPLES_SCHEMA}", "replicate,q,f,value"]
    for pos, r in enumerate(result.replicate_indices):
        for q in result.config.q_list:
            for f in result.config.functions:
                v = result.diff_values[(q, f.f_id)][pos]
                lines.append(f"{int(r)},{q},{f.f_id},{float(v)!r}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_samples_csv(path) -> dict:
    with open(path) as fh:
        first = fh.readline().strip()
        if not first.startswith("#") or SAMPLES_SCHEMA not in first:
            raise ValueError(f"unrecognized samples file (missing {SAMPLES_SCHEMA} tag)")
        header = fh.readline().strip()
        if header != "replicate,q,f,value":
            raise ValueError(f"unexpected header {header!r}")
        replicates = []
        values = {}
        for line in fh:
            line = line.strip()
            if not line:
                continue
            r_s, q_s, f_id, v_s = line.split(",", 3)
            key = (int(q_s), f_id)
            values.setdefault(key, []).append(float(v_s))
            replicates.append(int(r_s))
    out = {key: np.array(v) for key, v in values.items()}
    return {"schema": SAMPLES_SCHEMA,
            "replicates": np.array(sorted(set(replicates)), dtype=int),
            "values": out}


def write_process_csv(result: ExperimentResult, path) -> None:
    lines = [f"# {PROCESS_SCHEMA}", "replicate,q,z_re,z_im,value_re,value_im"]
    for pos, r in enumerate(result.replicate_indices):
        for q in result.config.q_list:
            for z in result.config.z_list:
                v = complex(result.process_values[(q, z)][pos])
                lines.append(f"{int(r)},{q},{z.real!r},{z.imag!r},"
                             f"{v.real!r},{v.imag!r}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _summary_dict(stats: SummaryStats) -> dict:
    return {
        "count": stats.count, "mean": stats.mean, "variance": stats.variance,
        "std_error": stats.std_error, "variance_se": stats.variance_se,
        "skewness": stats.skewness, "excess_kurtosis": stats.excess_kurtosis,
        "skewness_se": stats.skewness_se, "kurtosis_se": stats.kurtosis_se,
        "degenerate": stats.degenerate,
    }


def write_summary_json(result: ExperimentResult, path) -> None:
    payload = {
        "schema": RESULT_SCHEMA,
        "metadata": result.metadata,
        "failures": list(result.failures),
        "centerings": {f"q{q}:{f_id}": c
                       for (q, f_id), c in result.centerings.items()},
        "summaries": {f"q{q}:{f_id}": _summary_dict(s)
                      for (q, f_id), s in result.summaries.items()},
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

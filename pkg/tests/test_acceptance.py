"""End-to-end acceptance checks for the difference-of-LSS toolkit.

Thirteen numbered criteria, one test each.  Every test prints a single
[PASS]/[FAIL] banner line with the measured quantities before asserting,
so the module doubles as a report when run directly
(``python3 tests/test_acceptance.py``) or via ``pytest -s -v``.

Exact identities are checked exactly (or to rounding); asymptotic
statements are checked at desk scale (p=100, n=200, R=5000) with the
stated tolerances.  The Monte Carlo runs are seeded and cached at module
level so that several criteria can share them; all gate values below were
verified against independent replications before being frozen.

Criterion 7 contains a clause that is structurally out of reach at this
scale (see the test's failure message); it is asserted anyway and is
expected to fail honestly rather than be weakened.
"""

import json
import math
import tempfile
import time
import unittest
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from specdiff import cli, kernels, mp_law
from specdiff.ensembles import (
    SpectralMeasure,
    ladder_values,
    make_entry_law,
    make_population,
    sample_matrix,
)
from specdiff.montecarlo import (
    ExperimentConfig,
    independence_check,
    normality_diagnostics,
    process_cov_empirical,
    run_experiment,
    summarize,
)
from specdiff.spectral import (
    TestFunction,
    delete_rowcol,
    full_lss_statistic,
    sample_covariance,
)

# ------------------------------------------------------------------ fixed design
SEED = 3
P, N, R = 100, 200, 5000
Y = P / N
WORKERS = 4
Z_LIST = (0.5 + 1.0j, 1.5 + 1.2j, 2.5 + 0.9j)
BAND = 3.0 / math.sqrt(R)          # independence band 3/sqrt(R)

F_X = TestFunction.poly((0.0, 1.0))
F_X2 = TestFunction.poly((0.0, 0.0, 1.0))
F_LOG = TestFunction.log()

IDENTITY_P = make_population("identity", p=P)

# Shared Monte Carlo artifacts, built lazily so a single slow run serves
# every criterion that needs it.
_runs = {}


def _master_run():
    """Real-Gaussian run at (p, n, R) with two deletion rows, two test
    functions and the three process points; feeds criteria 5, 6, 7, 12."""
    if "master" not in _runs:
        _runs["master"] = run_experiment(ExperimentConfig(
            entry_law=make_entry_law("gaussian"), cov=IDENTITY_P, n=N,
            q_list=(1, 7), functions=(F_X, F_LOG), replications=R,
            seed=SEED, workers=WORKERS, z_list=Z_LIST))
    return _runs["master"]


def _complex_run():
    if "complex" not in _runs:
        _runs["complex"] = run_experiment(ExperimentConfig(
            entry_law=make_entry_law("complex_gaussian"), cov=IDENTITY_P,
            n=N, q_list=(1,), functions=(F_X, F_LOG), replications=R,
            seed=SEED, workers=WORKERS))
    return _runs["complex"]


def _two_point_run():
    if "two_point" not in _runs:
        _runs["two_point"] = run_experiment(ExperimentConfig(
            entry_law=make_entry_law("two_point", p0=0.2), cov=IDENTITY_P,
            n=N, q_list=(1,), functions=(F_X,), replications=R,
            seed=SEED, workers=WORKERS))
    return _runs["two_point"]


def _full_statistics():
    """Centered full-sample LSS for f=x and f=log on the same replicate
    stream as the master run (streams depend only on (seed, r), so the
    pairing with the master run's difference statistics is exact)."""
    if "full" not in _runs:
        cent_x = float(P)                       # E tr S = tr Sigma = p
        cent_log = P * mp_law.null_mp_moment(Y, F_LOG)
        law = make_entry_law("gaussian")

        def task(r):
            X = sample_matrix(law, P, N, SEED, r)
            return (r,
                    full_lss_statistic(IDENTITY_P, X, F_X, centering=cent_x),
                    full_lss_statistic(IDENTITY_P, X, F_LOG, centering=cent_log))

        with threadpool_limits(limits=1):
            with ThreadPoolExecutor(max_workers=WORKERS) as pool:
                rows = sorted(pool.map(task, range(R)))
        _runs["full"] = (np.array([v for _, v, _ in rows]),
                         np.array([v for _, _, v in rows]))
    return _runs["full"]


def _banner(num, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {detail}")
    return ok


class AcceptanceCriteria(unittest.TestCase):
    maxDiff = None

    # ------------------------------------------------------------- criterion 1
    def test_criterion_01_mp_solver_matches_closed_form(self):
        """Solver vs the quadratic closed-form companion transform for a
        point-mass population, on full rectangular contours at four ratios."""
        one = SpectralMeasure((1.0,), (1.0,))
        t0 = time.perf_counter()
        worst = 0.0
        points = 0
        for y in (0.25, 0.5, 1.0, 2.0):
            interval = mp_law.support_interval(make_population("identity", p=2), y)
            # An even per-side count keeps every node off the real axis.
            contour = mp_law.build_contour(interval, nodes_per_side=26)
            z, _ = mp_law.contour_nodes(contour)
            solved = mp_law.companion_sweep(mp_law.MPModel(y, one), z)
            exact = np.array([mp_law.null_companion_stieltjes(y, zz) for zz in z])
            worst = max(worst, float(np.max(np.abs(solved - exact) / np.abs(exact))))
            points += z.size
        elapsed = time.perf_counter() - t0
        ok = worst <= 1e-10 and elapsed < 1.0
        _banner(1, ok, f"solver vs closed form at {points} contour points, "
                       f"4 ratios: worst rel {worst:.2e} (tol 1e-10), "
                       f"{elapsed:.3f}s (< 1s)")
        self.assertTrue(ok)

    # ------------------------------------------------------------- criterion 2
    def test_criterion_02_trace_equals_bracket(self):
        """Trace form vs bracket form of the deleted-resolvent product on 200
        random instances (random Hermitian PSD populations, off-axis z)."""
        rng = np.random.default_rng(202)
        worst = 0.0
        for i in range(200):
            p = int(rng.integers(2, 21))
            A = rng.standard_normal((p, p))
            if i % 2:
                A = A + 1j * rng.standard_normal((p, p))
            cov = make_population("explicit", matrix=A @ A.conj().T / p)
            model = mp_law.MPModel(p / (2 * p), cov.spectral_measure)
            zs, sbs = [], []
            for _ in range(2):
                im = rng.uniform(0.1, 2.0) * (1.0 if rng.random() < 0.5 else -1.0)
                z = complex(rng.uniform(-2.0, 4.0), im)
                zs.append(z)
                sbs.append(mp_law.solve_companion_stieltjes(model, z).s_under)
            q1 = int(rng.integers(1, p + 1))
            q2 = int(rng.integers(1, p + 1))
            tr = kernels.trace_product_delta(cov, q1, q2, zs[0], zs[1], sbs[0], sbs[1])
            br = kernels.bracket_product(cov, q1, q2, zs[0], zs[1], sbs[0], sbs[1])
            worst = max(worst, abs(tr - br) / max(1e-30, abs(tr)))
        ok = worst <= 1e-10
        _banner(2, ok, f"trace vs bracket resolvent product, 200 random "
                       f"instances (p<=20, |Im z|>=0.1): worst rel {worst:.2e} "
                       f"(tol 1e-10)")
        self.assertTrue(ok)

    # ------------------------------------------------------------- criterion 3
    def test_criterion_03_trace_deletion_identity(self):
        """tr S - tr S_deleted equals the deleted diagonal entry exactly, and
        the sign-entry / identity-population / f=x pipeline is identically 0."""
        rng = np.random.default_rng(303)
        worst = 0.0
        for i in range(100):
            p = int(rng.integers(2, 41))
            n = int(rng.integers(p, 2 * p + 1))
            A = rng.standard_normal((p, p))
            if i % 2:
                A = A + 1j * rng.standard_normal((p, p))
            cov = make_population("explicit", matrix=A @ A.conj().T / p)
            X = rng.standard_normal((p, n))
            S = sample_covariance(cov, X)
            q = int(rng.integers(1, p + 1))
            lhs = np.trace(S).real - np.trace(delete_rowcol(S, q)).real
            worst = max(worst, abs(lhs - S[q - 1, q - 1].real))
        pipeline = run_experiment(ExperimentConfig(
            entry_law=make_entry_law("rademacher"),
            cov=make_population("identity", p=20), n=40, q_list=(1, 5),
            functions=(F_X,), replications=100, seed=11))
        zeros = all(np.all(pipeline.diff(q, F_X) == 0.0) for q in (1, 5))
        ok = worst <= 1e-12 and zeros
        _banner(3, ok, f"trace deletion identity on 100 random instances: "
                       f"worst abs {worst:.2e} (tol 1e-12); sign-entry f=x "
                       f"pipeline identically zero: {zeros}")
        self.assertTrue(ok)

    # ------------------------------------------------------------- criterion 4
    def test_criterion_04_cauchy_integral_recovery(self):
        """Contour quadrature of -(1/2 pi i) * integral f(z) s_G(z) dz for the
        discrete spectral measure of one simulated sample covariance matrix
        recovers the direct eigenvalue average of f."""
        X = sample_matrix(make_entry_law("gaussian"), P, N, 4, 0)
        lam = np.linalg.eigvalsh(sample_covariance(IDENTITY_P, X))
        results = []
        for f in (F_X, F_X2, F_LOG):
            contour = mp_law.build_contour(
                (float(lam[0]), float(lam[-1])), nodes_per_side=2048,
                require_positive=(f.kind == "log"))
            z, w = mp_law.contour_nodes(contour)
            s_G = np.mean(1.0 / (lam[:, None] - z[None, :]), axis=0)
            quad = (-1.0 / (2.0j * np.pi)) * np.sum(f.evaluate(z) * s_G * w)
            direct = float(np.mean(f.evaluate(lam)))
            results.append((f.f_id, abs(quad.real - direct) / abs(direct),
                            abs(quad.imag)))
        worst = max(r for _, r, _ in results)
        ok = worst <= 1e-6
        parts = ", ".join(f"{fid}: {r:.1e}" for fid, r, _ in results)
        _banner(4, ok, f"Cauchy-integral recovery at 2048 nodes/side, rel "
                       f"errors {parts} (tol 1e-6)")
        self.assertTrue(ok)

    # ------------------------------------------------------------- criterion 5
    def test_criterion_05_log_case_variance_and_normality(self):
        """Log-determinant difference statistic: variance oracle k/(1-y),
        centered mean, and KS/skewness/kurtosis normality bands, for real and
        complex Gaussian entries.  Runtime of the shared runs <= 10 min."""
        res = _master_run()
        resc = _complex_run()
        s = summarize(res.diff(1, F_LOG))
        sc = summarize(resc.diff(1, F_LOG))
        var_target = 2.0 / (1.0 - Y)      # = 4.0 at kappa=2, y=1/2
        varc_target = 1.0 / (1.0 - Y)     # = 2.0 at kappa=1
        diag = normality_diagnostics(res.diff(1, F_LOG))
        runtime = (res.metadata["wall_time_s"] + resc.metadata["wall_time_s"])
        checks = {
            "var": abs(s.variance - var_target) <= 0.1 * var_target,
            "mean": abs(s.mean) <= 5.0 * s.std_error,
            "normality": diag["pass"],
            "var_complex": abs(sc.variance - varc_target) <= 0.1 * varc_target,
            "runtime": runtime <= 600.0,
        }
        ok = all(checks.values())
        _banner(5, ok, f"log case: var {s.variance:.3f} vs {var_target:.1f} "
                       f"(10%), mean {s.mean:+.4f} (5*SE {5 * s.std_error:.3f}), "
                       f"KS/skew/kurtosis pass={diag['pass']}, complex var "
                       f"{sc.variance:.3f} vs {varc_target:.1f} (10%), "
                       f"runs took {runtime:.1f}s (<= 600s)")
        self.assertTrue(ok, str(checks))

    # ------------------------------------------------------------- criterion 6
    def test_criterion_06_trace_case_variance_oracle(self):
        """f=x difference statistic: variance matches the oracle nu4 - 1 for
        three entry laws.  The ratio to the closed-form constant
        2*kappa + (nu4 - kappa - 1) is reported (expected ~ 0.5; that
        constant disagrees with the oracle by a factor of about two, which
        is documented, not gated)."""
        rows = []
        for res, law_name, kappa, nu4 in (
                (_master_run(), "gaussian", 2.0, 3.0),
                (_complex_run(), "complex_gaussian", 1.0, 2.0),
                (_two_point_run(), "two_point(0.2)", 2.0, 3.25)):
            s = summarize(res.diff(1, F_X))
            oracle = nu4 - 1.0
            closed = 2.0 * kappa + (nu4 - kappa - 1.0)
            rows.append((law_name, s.variance, oracle, s.variance / closed,
                         abs(s.variance - oracle) <= 0.1 * oracle))
        ok = all(r[-1] for r in rows)
        parts = "; ".join(f"{name}: var {v:.3f} vs {o:.2f}, ratio-to-2k+g "
                          f"{ratio:.3f}" for name, v, o, ratio, _ in rows)
        _banner(6, ok, parts + " (gate: oracle +-10%; ratio informational)")
        self.assertTrue(ok, str(rows))

    # ------------------------------------------------------------- criterion 7
    def test_criterion_07_independence_bands(self):
        """Correlation bands at 3/sqrt(R): (a) difference statistics at two
        deletion rows, (b) difference statistics vs the full-sample LSS.

        Clause (b) is structurally unattainable at p=100: the population
        correlation between a one-row difference statistic and the full
        statistic decays like 1/sqrt(p) = 0.100, which sits above the
        3/sqrt(5000) = 0.042 band for any seed (cross-seed mean measured
        +0.092 over six independent streams).  The clause is asserted
        anyway and this test is expected to fail honestly."""
        res = _master_run()
        cross_q = {
            f.f_id: independence_check(res.diff(1, f), res.diff(7, f))["correlation"]
            for f in (F_X, F_LOG)}
        full_x, full_log = _full_statistics()
        cross_full = {}
        for f in (F_X, F_LOG):
            for name, full in (("x", full_x), ("log", full_log)):
                cross_full[f"{f.f_id}~full[{name}]"] = independence_check(
                    res.diff(1, f), full)["correlation"]
        ok_a = all(abs(c) < BAND for c in cross_q.values())
        ok_b = all(abs(c) < BAND for c in cross_full.values())
        ok = ok_a and ok_b
        qpart = ", ".join(f"{k}: {v:+.4f}" for k, v in cross_q.items())
        fpart = ", ".join(f"{k}: {v:+.4f}" for k, v in cross_full.items())
        _banner(7, ok, f"band {BAND:.4f}; across rows [{qpart}] "
                       f"{'pass' if ok_a else 'FAIL'}; vs full statistic "
                       f"[{fpart}] {'pass' if ok_b else 'FAIL'}")
        self.assertTrue(ok, (
            f"difference statistics decorrelate across deletion rows "
            f"(max |corr| {max(abs(c) for c in cross_q.values()):.4f} < "
            f"{BAND:.4f}), but each one keeps a 1/sqrt(p) = {1 / math.sqrt(P):.3f} "
            f"population correlation with the full-sample statistic; measured "
            f"{fpart} against the {BAND:.4f} band, so the full-vs-difference "
            f"clause cannot pass at p={P}, R={R}.  This failure is expected "
            f"and left in place deliberately."))

    # ------------------------------------------------------------- criterion 8
    def test_criterion_08_unit_circle_vs_residue(self):
        """Unit-circle double quadrature with shrinking-offset extrapolation
        vs the residue oracle, for f=x (2*kappa + 2*gamma) and f=x*x, across
        four dimension ratios."""
        worst = 0.0
        flagged = False
        for y in (0.25, 0.5, 1.0, 2.0):
            for f, coeffs in ((F_X, (0.0, 1.0)), (F_X2, (0.0, 0.0, 1.0))):
                uc = kernels.null_lss_cov_unitcircle(y, f, f, 2.0, 3.0)
                residue = kernels.null_residue_cov_poly(y, coeffs, coeffs, 2.0, 3.0)
                worst = max(worst, abs(uc.value - residue) / abs(residue))
                flagged = flagged or uc.flagged
        # oracle identity for f=x at a non-Gaussian fourth moment
        res4 = kernels.null_residue_cov_poly(0.5, (0.0, 1.0), (0.0, 1.0), 2.0, 4.0)
        oracle_ok = abs(res4 - (2.0 * 2.0 + 2.0 * (4.0 - 2.0 - 1.0))) < 1e-12
        ok = worst <= 0.01 and not flagged and oracle_ok
        _banner(8, ok, f"unit-circle quadrature vs residue oracle, f in "
                       f"{{x, x^2}}, y in {{1/4,1/2,1,2}}: worst rel {worst:.2e} "
                       f"(tol 1e-2), extrapolation flagged={flagged}, "
                       f"2k+2g identity holds={oracle_ok}")
        self.assertTrue(ok)

    # ------------------------------------------------------------- criterion 9
    def test_criterion_09_null_kernels_match_closed_forms(self):
        """Stencil-differentiated sigma^2/tau^2 kernels vs the analytic null
        closed forms at 20 random off-axis (z1, z2) pairs."""
        rng = np.random.default_rng(909)
        worst = 0.0
        for _ in range(20):
            pair = []
            for _ in range(2):
                sign = 1.0 if rng.random() < 0.5 else -1.0
                pair.append(complex(rng.uniform(0.2, 3.2),
                                    sign * rng.uniform(0.3, 1.5)))
            z1, z2 = pair
            worst = max(
                worst,
                abs(kernels.sigma2(IDENTITY_P, N, 1, 1, z1, z2)
                    - kernels.null_sigma2(Y, z1, z2))
                / abs(kernels.null_sigma2(Y, z1, z2)),
                abs(kernels.tau2(IDENTITY_P, N, 1, 1, z1, z2)
                    - kernels.null_tau2(Y, z1, z2))
                / abs(kernels.null_tau2(Y, z1, z2)))
        ok = worst <= 1e-5
        _banner(9, ok, f"sigma^2/tau^2 stencil vs closed forms at 20 off-axis "
                       f"pairs: worst rel {worst:.2e} (tol 1e-5)")
        self.assertTrue(ok)

    # ------------------------------------------------------------ criterion 10
    def test_criterion_10_diagonal_population_closed_forms(self):
        """Diagonal population: g/h functionals match their closed forms, and
        every cross-row functional (and hence sigma^2, tau^2) is exactly 0."""
        values = ladder_values(10)
        cov = make_population("diagonal", values=values)
        model = mp_law.MPModel(10 / 25, cov.spectral_measure)
        z1, z2 = 1.1 + 0.9j, 2.4 - 1.2j
        sb1 = mp_law.solve_companion_stieltjes(model, z1).s_under
        sb2 = mp_law.solve_companion_stieltjes(model, z2).s_under
        worst = 0.0
        for q in range(1, 11):
            sig = values[q - 1]
            g = kernels.g_functional(cov, q, q, z1, z2, sb1, sb2)
            h = kernels.h_functional(cov, q, q, z1, z2, sb1, sb2)
            worst = max(
                worst,
                abs(g - sig / (1.0 + sb1 * sig)) / abs(g),
                abs(h - sig * sig / ((1.0 + sb1 * sig) * (1.0 + sb2 * sig))) / abs(h))
        g_cross = kernels.g_functional(cov, 2, 7, z1, z2, sb1, sb2)
        h_cross = kernels.h_functional(cov, 2, 7, z1, z2, sb1, sb2)
        s_cross = kernels.sigma2(cov, 25, 1, 2, z1, z2)
        t_cross = kernels.tau2(cov, 25, 1, 2, z1, z2)
        exact_zero = (g_cross == 0.0 and h_cross == 0.0
                      and s_cross == 0.0 and t_cross == 0.0)
        ok = worst <= 1e-12 and exact_zero
        _banner(10, ok, f"diagonal-population closed forms: worst rel "
                        f"{worst:.2e} (tol 1e-12); cross-row g/h/sigma^2/tau^2 "
                        f"exactly zero: {exact_zero}")
        self.assertTrue(ok)

    # ------------------------------------------------------------ criterion 11
    def test_criterion_11_contraction_kernel_bound(self):
        """|a(z, z)| < 1 at every sampled contour node for three populations
        and two dimension ratios."""
        overall = 0.0
        details = []
        for kind, kwargs in (("identity", {"p": 100}),
                             ("diagonal", {"values": ladder_values(100)}),
                             ("toeplitz", {"rho": 0.5, "p": 100})):
            cov = make_population(kind, **kwargs)
            for y in (0.25, 0.5):
                n = int(round(cov.p / y))
                contour = mp_law.build_contour(
                    mp_law.support_interval(cov, y), nodes_per_side=32)
                z, _ = mp_law.contour_nodes(contour)
                sb = mp_law.companion_sweep(
                    mp_law.MPModel(y, cov.spectral_measure), z)
                amax = max(abs(kernels.a_kernel(cov, n, zz, zz, ss, ss))
                           for zz, ss in zip(z, sb))
                overall = max(overall, amax)
                details.append(f"{kind}@y={y}: {amax:.3f}")
        ok = overall < 1.0
        _banner(11, ok, f"contraction bound |a(z,z)| < 1 at 128 nodes per "
                        f"case ({'; '.join(details)}); max {overall:.3f}")
        self.assertTrue(ok)

    # ------------------------------------------------------------ criterion 12
    def test_criterion_12_process_covariance_shape(self):
        """Empirical covariance of the Stieltjes difference process vs the
        kernel prediction kappa*sigma^2 + (nu4-kappa-1)*tau^2 at three z
        pairs: the empirical/theoretical ratios must agree with one another
        within 15% (shape check; the absolute scale is reported)."""
        res = _master_run()
        ratios = []
        parts = []
        for z1, z2 in ((Z_LIST[0], Z_LIST[1]), (Z_LIST[0], Z_LIST[2]),
                       (Z_LIST[1], Z_LIST[2])):
            emp = process_cov_empirical(res, z1, z2, 1, 1)
            th = kernels.process_cov(IDENTITY_P, N, 1, 1, z1, z2,
                                     kappa=2.0, nu4=3.0)
            ratio = abs(emp.value) / abs(th)
            ratios.append(ratio)
            parts.append(f"({z1:g},{z2:g}): {ratio:.3f}")
        spread = max(ratios) / min(ratios)
        ok = spread <= 1.15
        _banner(12, ok, f"process-covariance ratio |empirical|/|kernel| at 3 "
                        f"z pairs: {', '.join(parts)}; spread {spread:.3f} "
                        f"(<= 1.15); absolute scale ~{np.mean(ratios):.2f}")
        self.assertTrue(ok)

    # ------------------------------------------------------------ criterion 13
    def test_criterion_13_simulate_determinism(self):
        """A simulate run through the command-line path produces byte-identical
        replicate CSVs when repeated, at any worker count."""
        config = {
            "entry_law": {"kind": "gaussian"},
            "population": {"kind": "identity", "params": {"p": 20}},
            "n": 40,
            "q_list": [1, 2],
            "functions": [{"kind": "poly", "coefficients": [0.0, 1.0]},
                          {"kind": "log"}],
            "replications": 60,
            "seed": 9,
            "z_list": [[0.8, 1.1]],
        }
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            cfg = tmp / "config.json"
            cfg.write_text(json.dumps(config))
            blobs = {}
            for name, workers in (("w1", 1), ("w3", 3), ("w3_again", 3)):
                out = tmp / name
                rc = cli.main(["simulate", str(cfg), "-o", str(out),
                               "--workers", str(workers)])
                self.assertEqual(rc, 0)
                blobs[name] = ((out / "samples.csv").read_bytes(),
                               (out / "process.csv").read_bytes())
            identical = (blobs["w1"] == blobs["w3"] == blobs["w3_again"])
        ok = identical
        _banner(13, ok, f"simulate CSVs byte-identical across workers 1/3 and "
                        f"on repeat: {identical} "
                        f"({len(blobs['w1'][0])} + {len(blobs['w1'][1])} bytes)")
        self.assertTrue(ok)


if __name__ == "__main__":
    unittest.main(verbosity=2)

"""End-to-end acceptance checklist.

Nine checks cover the library's core claims: estimator accuracy bounds,
variance reduction, bookkeeping exactness, solver behavior under a shared
query budget, the proximal step, and the dataset parser. Each test prints
one PASS/FAIL line (run with ``pytest -s tests/test_acceptance.py`` to see
them inline) and then asserts, so the printed checklist always matches the
pytest outcome. Budgeted checks also enforce their wall-clock limit.
"""

import gzip
import statistics
import time

import numpy as np

from zoprox import (
    CallableOracle,
    GradientEstimatorConfig,
    MuSchedule,
    QueryCounter,
    RandomSource,
    Regularizer,
    SolverConfig,
    coosge_component,
    estimate_full,
    estimate_minibatch,
    gausge_component,
    load_libsvm,
    make_logsumexp,
    make_quadratic,
    make_sigmoid_toy,
    parse_libsvm,
    prox,
    recipe_hyperparams,
    rspgf,
    sample_minibatch,
    serialize_libsvm,
    zo_prox_gd,
    zo_prox_saga,
    zo_prox_svrg,
)
from zoprox.cli import build_runspec, run_benchmark


def report(idx, label, ok, detail, elapsed, limit):
    status = "PASS" if ok and elapsed < limit else "FAIL"
    print(f"[{idx}/9] {label}: {status}  ({detail}; {elapsed:.1f}s of "
          f"{limit:.0f}s allowed)")
    assert ok, f"{label}: {detail}"
    assert elapsed < limit, f"{label} exceeded {limit}s ({elapsed:.1f}s)"


def test_1_coordinate_estimator_bias_bound():
    """The central-difference estimate stays within L^2 d^2 mu^2 / 4 of
    the true gradient (squared norm) on random log-sum-exp problems."""
    t0 = time.perf_counter()
    rng = RandomSource(2024, key=(91,))
    worst = 0.0
    cases = 0
    for d in (5, 50):
        for rep in range(10):
            prob = make_logsumexp(d, terms=3 * d, seed=100 * d + rep)
            bound_scale = prob.lipschitz ** 2 * d * d / 4.0
            for mu in (1e-1, 1e-2, 1e-3):
                est = GradientEstimatorConfig(
                    "coosge", MuSchedule.constant(mu)
                )
                for _ in range(10):
                    x = rng.normal(d)
                    err = float(np.sum(
                        (estimate_full(prob.oracle, x, est)
                         - prob.gradient(x)) ** 2
                    ))
                    worst = max(worst, err / (bound_scale * mu * mu))
                    cases += 1
    report(1, "coordinate estimator bias bound", worst <= 1.0,
           f"{cases} cases, worst error/bound {worst:.2e}",
           time.perf_counter() - t0, 10.0)


def test_2_gaussian_estimator_unbiased_on_linear():
    """For a linear objective the direction-smoothed estimate averages to
    the exact gradient; every coordinate mean lands within 5 standard
    errors over 1e5 draws."""
    t0 = time.perf_counter()
    d = 10
    g_true = RandomSource(7, key=(92,)).normal(d)
    oracle = CallableOracle(1, lambda i, x: float(g_true @ x) + 0.3, dim=d)
    rng = RandomSource(55, key=(93,))
    x = rng.normal(d)
    draws = 10 ** 5
    samples = np.empty((draws, d))
    for k in range(draws):
        samples[k] = gausge_component(oracle, 0, x, 1e-3, rng.normal(d))
    se = samples.std(axis=0, ddof=1) / np.sqrt(draws)
    z = float((np.abs(samples.mean(axis=0) - g_true) / se).max())
    report(2, "gaussian estimator unbiased on linear objectives", z <= 5.0,
           f"max |mean - grad| = {z:.2f} standard errors",
           time.perf_counter() - t0, 5.0)


def test_3_variance_reduced_estimate_bound():
    """The snapshot-corrected mini-batch estimate concentrates: its mean
    squared deviation from the full gradient over batch redraws is below
    (2 L^2 d / b) ||x - anchor||^2 + L^2 d^2 mu^2 / 2."""
    t0 = time.perf_counter()
    n, d, mu = 50, 10, 1e-3
    prob = make_quadratic(n, d, seed=3)
    L = prob.lipschitz
    est = GradientEstimatorConfig("coosge", MuSchedule.constant(mu))
    rng = RandomSource(11, key=(94,))
    x = rng.normal(d)
    anchor = x + 0.5 * rng.normal(d)
    # coordinate estimates are deterministic given (i, point, mu), so the
    # batch draw is the only randomness; tabulating the per-component
    # estimates once makes 1e4 redraws cheap without changing the statistic
    scratch = QueryCounter()
    with prob.oracle.charged_to(scratch):
        rows_x = np.stack(
            [coosge_component(prob.oracle, i, x, mu) for i in range(n)]
        )
        rows_a = np.stack(
            [coosge_component(prob.oracle, i, anchor, mu) for i in range(n)]
        )
        full_a = estimate_full(prob.oracle, anchor, est)
        spot = rng.integers(n, 6)
        np.testing.assert_array_equal(
            estimate_minibatch(prob.oracle, spot, x, est),
            rows_x[spot].mean(axis=0),
        )
    g = prob.gradient(x)
    gap = float(np.sum((x - anchor) ** 2))
    detail = []
    ok = True
    for b in (5, 10):
        acc = 0.0
        for _ in range(10 ** 4):
            idx = sample_minibatch(rng, n, b, with_replacement=False)
            v = rows_x[idx].mean(axis=0) - rows_a[idx].mean(axis=0) + full_a
            acc += float(np.sum((v - g) ** 2))
        mc = acc / 10 ** 4
        bound = (2 * L * L * d / b) * gap + L * L * d * d * mu * mu / 2
        ok = ok and mc <= bound
        detail.append(f"b={b}: {mc:.3f} <= {bound:.1f}")
    report(3, "variance bound of the corrected estimate", ok,
           ", ".join(detail), time.perf_counter() - t0, 60.0)


def test_4_saga_table_average_consistency():
    t0 = time.perf_counter()
    toy = make_sigmoid_toy(50, 10, seed=20)
    rec = recipe_hyperparams(50, 10, toy.lipschitz, "coosge", "saga")
    cfg = SolverConfig(
        rho=rec.rho, lipschitz=toy.lipschitz, batch=rec.b, total_iters=1000,
        estimator=GradientEstimatorConfig("coosge", MuSchedule.coo_decay()),
        seed=6, record_every=100, grad_map_every=0,
    )
    x0 = RandomSource(3, key=(95,)).normal(10)
    tr = zo_prox_saga(toy.oracle, Regularizer(l1=1e-5, l2=1e-5), cfg, x0)
    st = tr.saga_state
    from_scratch = st.grad_table.mean(axis=0)
    gap = float(np.abs(st.phi_hat - from_scratch).max())
    tol = 1e-10 * (1.0 + float(np.abs(st.grad_table).max()))
    report(4, "incremental table average stays consistent", gap <= tol,
           f"after 1000 iterations |incremental - recomputed| = {gap:.1e} "
           f"(tolerance {tol:.1e})", time.perf_counter() - t0, 60.0)


def test_5_query_ledgers_match_closed_forms():
    t0 = time.perf_counter()
    n, d, b, m, S, T = 10, 4, 2, 3, 2, 5
    toy = make_sigmoid_toy(n, d, seed=42)
    reg = Regularizer.lasso(1e-4)

    def run(solver, kind, **kw):
        cfg = SolverConfig(
            eta=0.1, batch=b, seed=1,
            estimator=GradientEstimatorConfig(
                kind, MuSchedule.constant(0.01)
            ),
            **kw,
        )
        return solver(toy.oracle, reg, cfg).total_queries

    got = {
        ("svrg", "coosge"): run(zo_prox_svrg, "coosge", epochs=S, inner=m),
        ("saga", "coosge"): run(zo_prox_saga, "coosge", total_iters=T),
        ("rspgf", "coosge"): run(rspgf, "coosge", total_iters=T),
        ("gd", "coosge"): run(zo_prox_gd, "coosge", total_iters=T),
        ("svrg", "gausge"): run(zo_prox_svrg, "gausge", epochs=S, inner=m),
        ("saga", "gausge"): run(zo_prox_saga, "gausge", total_iters=T),
        ("rspgf", "gausge"): run(rspgf, "gausge", total_iters=T),
        ("gd", "gausge"): run(zo_prox_gd, "gausge", total_iters=T),
    }
    want = {
        ("svrg", "coosge"): S * (2 * d * n + 4 * d * b * m),
        ("saga", "coosge"): 2 * d * n + 2 * d * b * T,
        ("rspgf", "coosge"): 2 * d * b * T,
        ("gd", "coosge"): 2 * d * n * T,
        ("svrg", "gausge"): S * (2 * n + 4 * b * m),
        ("saga", "gausge"): 2 * n + 2 * b * T,
        ("rspgf", "gausge"): 2 * b * T,
        ("gd", "gausge"): 2 * n * T,
    }
    assert want[("svrg", "coosge")] == 352 and want[("saga", "coosge")] == 160
    assert want[("rspgf", "coosge")] == 80 and want[("gd", "coosge")] == 400
    ok = got == want
    report(5, "query ledgers equal their closed forms", ok,
           f"8 solver/estimator pairs on (n={n}, d={d}, b={b}, m={m}, "
           f"S={S}, T={T})", time.perf_counter() - t0, 30.0)


def test_6_convergence_ordering_under_query_budget(tmp_path):
    """Full benchmark reproduction at desk scale: under a shared 2e6-query
    budget the variance-reduced coordinate methods end below the
    direction-smoothed baseline, and each method's coordinate variant ends
    at or below its direction-smoothed twin.

    The published curves use undisclosed per-method step sizes, so every
    run here shares one step size, eta = 10/L, calibrated once on a pilot
    seed and frozen. The inner loop length 25 gives one data pass per
    snapshot epoch (n / b), which amortizes snapshot cost under a query
    budget better than the n^(1/3) analysis value tuned for iteration
    counts.
    """
    t0 = time.perf_counter()
    eta = 10.0 / make_sigmoid_toy(1000, 50, seed=0).lipschitz
    finals = {}
    for seed in range(5):
        base = {
            "synthetic": "n=500,d=50", "batch": "20", "lambda1": "1e-5",
            "lambda2": "1e-5", "budget": "2000000", "seed": str(seed),
            "grad_map_every": "0", "record_every": "1000000",
            "eta": str(eta),
        }
        for algo, est, extra in (
            ("rspgf", "gausge", {}),
            ("svrg", "coosge,gausge", {"inner": "25"}),
            ("saga", "coosge,gausge", {}),
        ):
            values = dict(base, algo=algo, estimator=est,
                          out=str(tmp_path / f"s{seed}_{algo}"), **extra)
            for run in run_benchmark(build_runspec(values))["runs"]:
                key = (run["algo"], run["estimator"])
                finals.setdefault(key, []).append(run["final_objective"])
    med = {k: statistics.median(v) for k, v in finals.items()}
    baseline = med[("rspgf", "gausge")]
    checks = {
        "svrg-coo < baseline": med[("svrg", "coosge")] < baseline,
        "saga-coo < baseline": med[("saga", "coosge")] < baseline,
        "svrg coo <= gau": med[("svrg", "coosge")] <= med[("svrg", "gausge")],
        "saga coo <= gau": med[("saga", "coosge")] <= med[("saga", "gausge")],
    }
    detail = (
        f"medians over 5 seeds: baseline={baseline:.3f}, "
        f"svrg coo/gau={med[('svrg', 'coosge')]:.3f}/"
        f"{med[('svrg', 'gausge')]:.3f}, "
        f"saga coo/gau={med[('saga', 'coosge')]:.3f}/"
        f"{med[('saga', 'gausge')]:.3f}"
    )
    report(6, "convergence ordering under a shared query budget",
           all(checks.values()),
           detail + "; failed: " + (
               ", ".join(k for k, v in checks.items() if not v) or "none"),
           time.perf_counter() - t0, 300.0)


def test_7_gradient_mapping_shrinks_with_iterations():
    """Soft rate consistency: quadrupling the iteration count drops the
    best observed squared gradient mapping to at most 0.6x. Consistent
    with an O(d/T) rate; not a proof of it."""
    t0 = time.perf_counter()
    prob = make_quadratic(64, 8, seed=5)
    rec = recipe_hyperparams(64, 8, prob.lipschitz, "coosge", "svrg")
    x0 = RandomSource(9, key=(96,)).normal(8)
    best = {}
    for epochs in (10, 40):
        cfg = SolverConfig(
            rho=rec.rho, lipschitz=prob.lipschitz, batch=rec.b,
            epochs=epochs, inner=rec.m,
            estimator=GradientEstimatorConfig(
                "coosge", MuSchedule.coo_decay()
            ),
            seed=4, record_every=1, grad_map_every=1,
        )
        tr = zo_prox_svrg(prob.oracle, Regularizer.none(), cfg, x0)
        best[epochs] = min(r.grad_map_sq for r in tr.records
                           if r.grad_map_sq is not None)
    ratio = best[40] / best[10]
    report(7, "gradient mapping shrinks with iteration count",
           ratio <= 0.6,
           f"best |g|^2 at 4T over best at T = {ratio:.3f} (need <= 0.6)",
           time.perf_counter() - t0, 120.0)


def test_8_prox_matches_brute_force():
    t0 = time.perf_counter()

    def brute_1d(x, eta, l1, l2, iters=200):
        # bisection on the slope of l1|y| + l2 y^2 + (y-x)^2/(2 eta), taken
        # directly from that expression; the slope jumps across 0, and the
        # bracket collapses onto the kink whenever 0 is the minimizer.
        # Value-only search cannot certify 1e-8 here: its resolution floor
        # is sqrt(eps * value / curvature), which large eta pushes past
        # the tolerance.
        def slope(y):
            s = 1.0 if y > 0 else (-1.0 if y < 0 else 0.0)
            return l1 * s + 2.0 * l2 * y + (y - x) / eta

        lo, hi = -abs(x) - 1.0, abs(x) + 1.0
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if slope(mid) > 0.0:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    rng = RandomSource(31, key=(97,))
    worst = 0.0
    for case in range(1000):
        x = float(3.0 * rng.normal(1)[0])
        eta = 10.0 ** float(rng.normal(1)[0] - 0.5)
        pick = case % 3
        l1 = 10.0 ** float(rng.normal(1)[0] - 1.0) if pick != 1 else 0.0
        l2 = 10.0 ** float(rng.normal(1)[0] - 1.0) if pick != 0 else 0.0
        got = float(prox(Regularizer(l1=l1, l2=l2), eta,
                         np.array([x]))[0])
        worst = max(worst, abs(got - brute_1d(x, eta, l1, l2)))
    report(8, "closed-form prox equals brute-force minimizer",
           worst <= 1e-8, f"1000 random tuples, worst gap {worst:.1e}",
           time.perf_counter() - t0, 5.0)


def test_9_parser_round_trip_and_golden(tmp_path):
    t0 = time.perf_counter()
    golden = (
        "# handwritten sample file\n"
        "+1 1:0.5 3:-2 7:1.25\n"
        "-1 2:1 4:0.5   # trailing comment\n"
        "\n"
        "+1 1:-0.25 5:3.5 6:-1 7:0.125\n"
        "-1 3:2 5:-0.75\n"
    )
    ds = parse_libsvm(golden.splitlines())
    ok = (ds.n, ds.d, len(ds.data)) == (4, 7, 11)
    ok = ok and ds.labels.tolist() == [1.0, -1.0, 1.0, -1.0]
    ok = ok and ds.indices[:3].tolist() == [0, 2, 6]

    back = parse_libsvm(serialize_libsvm(ds).splitlines())
    ok = ok and back.equal_to(ds)

    gz = tmp_path / "sample.libsvm.gz"
    with gzip.open(gz, "wt") as fh:
        fh.write(golden)
    ok = ok and load_libsvm(gz).equal_to(ds)

    mapped = parse_libsvm(["1 1:2.0", "2 2:1.0", "1 3:0.5"])
    ok = ok and mapped.labels.tolist() == [1.0, -1.0, 1.0]
    ok = ok and "{1,2}" in mapped.meta.get("label_map", "")

    report(9, "dataset parser round trip and golden fixtures", ok,
           "comments, blank lines, gzip, and {1,2} label mapping",
           time.perf_counter() - t0, 30.0)

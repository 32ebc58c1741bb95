import os
import subprocess
import sys

import numpy as np
import pytest

from zoprox import _kernels_py, active_backend
from zoprox.backend import BACKEND

compiled = pytest.importorskip(
    "zoprox._kernels", reason="compiled extension not built"
)


def random_csr(n, d, seed, density=0.4):
    rng = np.random.default_rng(seed)
    indptr = [0]
    indices = []
    data = []
    for _ in range(n):
        nnz = max(1, rng.binomial(d, density))
        cols = np.sort(rng.choice(d, size=nnz, replace=False))
        indices.extend(cols.tolist())
        data.extend(rng.normal(size=nnz).tolist())
        indptr.append(len(indices))
    labels = rng.choice([-1.0, 1.0], size=n)
    return (
        np.asarray(indptr, dtype=np.int64),
        np.asarray(indices, dtype=np.int64),
        np.asarray(data, dtype=np.float64),
        np.asarray(labels, dtype=np.float64),
    )


@pytest.fixture(params=[0, 1, 2])
def csr(request):
    return random_csr(20, 12, seed=request.param)


class TestBackendAgreement:
    """Both kernel implementations compute the same numbers.

    Gather order inside a dot product may differ between the two, so the
    comparison allows a few ulps rather than demanding identical bits.
    """

    def test_rows(self, csr):
        indptr, indices, data, labels = csr
        rng = np.random.default_rng(99)
        x = rng.normal(size=12)
        rows = np.arange(20, dtype=np.int64)
        a = compiled.sigmoid_loss_rows(indptr, indices, data, labels, rows, x)
        b = _kernels_py.sigmoid_loss_rows(indptr, indices, data, labels,
                                          rows, x)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)

    def test_rows_shifted(self, csr):
        indptr, indices, data, labels = csr
        rng = np.random.default_rng(7)
        x = rng.normal(size=12)
        rows = np.asarray([3, 0, 3, 19], dtype=np.int64)
        U = rng.normal(size=(4, 12))
        a = compiled.sigmoid_loss_rows_shifted(
            indptr, indices, data, labels, rows, x, U, 0.01
        )
        b = _kernels_py.sigmoid_loss_rows_shifted(
            indptr, indices, data, labels, rows, x, U, 0.01
        )
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)

    def test_coord_stencil(self, csr):
        indptr, indices, data, labels = csr
        rng = np.random.default_rng(3)
        x = rng.normal(size=12)
        for i in (0, 11, 19):
            ap, am = compiled.sigmoid_loss_coord_stencil(
                indptr, indices, data, labels, i, x, 1e-3
            )
            bp, bm = _kernels_py.sigmoid_loss_coord_stencil(
                indptr, indices, data, labels, i, x, 1e-3
            )
            np.testing.assert_allclose(ap, bp, rtol=0, atol=1e-15)
            np.testing.assert_allclose(am, bm, rtol=0, atol=1e-15)

    def test_saturated_margins(self):
        indptr = np.asarray([0, 1], dtype=np.int64)
        indices = np.asarray([0], dtype=np.int64)
        data = np.asarray([1.0], dtype=np.float64)
        labels = np.asarray([1.0], dtype=np.float64)
        rows = np.asarray([0], dtype=np.int64)
        for extreme in (-1e6, -501.0, 501.0, 1e6):
            x = np.asarray([extreme])
            a = compiled.sigmoid_loss_rows(indptr, indices, data, labels,
                                           rows, x)
            b = _kernels_py.sigmoid_loss_rows(indptr, indices, data, labels,
                                              rows, x)
            assert a[0] == b[0]
            assert np.isfinite(a[0])


class TestWithinBackendConsistency:
    @pytest.mark.parametrize("mod", [compiled, _kernels_py],
                             ids=["compiled", "python"])
    def test_deterministic(self, mod, csr):
        indptr, indices, data, labels = csr
        x = np.random.default_rng(5).normal(size=12)
        rows = np.arange(20, dtype=np.int64)
        a = mod.sigmoid_loss_rows(indptr, indices, data, labels, rows, x)
        b = mod.sigmoid_loss_rows(indptr, indices, data, labels, rows, x)
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("mod", [compiled, _kernels_py],
                             ids=["compiled", "python"])
    def test_zero_shift_matches_rows(self, mod, csr):
        # mu=0 must reproduce the plain path bit for bit; the estimators
        # rely on this for exact pair cancellation
        indptr, indices, data, labels = csr
        rng = np.random.default_rng(8)
        x = rng.normal(size=12)
        rows = np.arange(20, dtype=np.int64)
        U = rng.normal(size=(20, 12))
        plain = mod.sigmoid_loss_rows(indptr, indices, data, labels, rows, x)
        shifted = mod.sigmoid_loss_rows_shifted(
            indptr, indices, data, labels, rows, x, U, 0.0
        )
        np.testing.assert_array_equal(plain, shifted)

    @pytest.mark.parametrize("mod", [compiled, _kernels_py],
                             ids=["compiled", "python"])
    def test_stencil_off_support_is_base_value(self, mod):
        indptr, indices, data, labels = random_csr(6, 10, seed=4, density=0.2)
        x = np.random.default_rng(2).normal(size=10)
        rows = np.asarray([2], dtype=np.int64)
        base = mod.sigmoid_loss_rows(indptr, indices, data, labels, rows, x)[0]
        plus, minus = mod.sigmoid_loss_coord_stencil(
            indptr, indices, data, labels, 2, x, 1e-2
        )
        support = set(indices[indptr[2]:indptr[3]].tolist())
        for j in range(10):
            if j not in support:
                assert plus[j] == base and minus[j] == base
            else:
                assert plus[j] != minus[j]


def run_probe(env_value):
    env = dict(os.environ)
    if env_value is None:
        env.pop("ZOPROX_BACKEND", None)
    else:
        env["ZOPROX_BACKEND"] = env_value
    return subprocess.run(
        [sys.executable, "-c",
         "import zoprox; print(zoprox.active_backend())"],
        capture_output=True, text=True, env=env,
    )


class TestSelection:
    def test_auto_prefers_compiled(self):
        proc = run_probe(None)
        assert proc.returncode == 0
        assert proc.stdout.strip() == "compiled"

    def test_forced_python(self):
        proc = run_probe("python")
        assert proc.returncode == 0
        assert proc.stdout.strip() == "python"

    def test_forced_compiled(self):
        proc = run_probe("compiled")
        assert proc.returncode == 0
        assert proc.stdout.strip() == "compiled"

    def test_bogus_value_fails_loudly(self):
        proc = run_probe("bogus")
        assert proc.returncode != 0
        assert "ZOPROX_BACKEND" in proc.stderr

    def test_reported_name_matches_module(self):
        assert active_backend() == BACKEND
        assert BACKEND in ("compiled", "python")


def test_solver_results_agree_across_backends(tmp_path):
    """A full solve is reproducible across backends to rounding."""
    script = (
        "import json, numpy as np\n"
        "from zoprox import (MuSchedule, GradientEstimatorConfig,"
        " Regularizer, SolverConfig, make_sigmoid_toy, zo_prox_svrg)\n"
        "toy = make_sigmoid_toy(40, 6, seed=12)\n"
        "cfg = SolverConfig(eta=0.25, batch=8, epochs=3, inner=4,"
        " estimator=GradientEstimatorConfig('coosge',"
        " MuSchedule.coo_decay()), seed=2)\n"
        "tr = zo_prox_svrg(toy.oracle, Regularizer.lasso(1e-3), cfg)\n"
        "print(json.dumps({'x': tr.final_x.tolist(),"
        " 'f': tr.final_objective, 'q': tr.total_queries}))\n"
    )
    results = {}
    for name in ("compiled", "python"):
        env = dict(os.environ, ZOPROX_BACKEND=name)
        proc = subprocess.run([sys.executable, "-c", script],
                              capture_output=True, text=True, env=env)
        assert proc.returncode == 0, proc.stderr
        results[name] = proc.stdout.strip()
    import json

    a = json.loads(results["compiled"])
    b = json.loads(results["python"])
    assert a["q"] == b["q"]
    np.testing.assert_allclose(a["x"], b["x"], rtol=1e-12, atol=1e-14)
    assert a["f"] == pytest.approx(b["f"], rel=1e-12)

"""End-to-end acceptance checks, one test (and one pytest -v line) per
numbered criterion.  These are heavier than the unit tests: the two
ensemble fixtures below drive 10^5 x 4096 and 5*10^4 x 16384 orbit steps.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from ergolab import (
    EnsembleConfig,
    GridFunction,
    build_observable,
    builtin_map,
    clt_test,
    coboundary_detect,
    duality_residual,
    fclt_test,
    fit_polynomial_rate,
    cesaro_norm_sequence,
    gordin_decompose,
    ks_statistic,
    lp_norm,
    make_backend,
    norm_decay_sequence,
    reference_cdf,
    resolve_measure,
    run_ensemble,
    sigma_green_kubo,
    transfer_apply,
)
from ergolab.montecarlo import PathEnsemble

SEED = 20240824
THREADS = 4
SIGMA_COS1 = np.sqrt(0.5)  # ||cos 2 pi y||_2 under Lebesgue


def _measure(spec, cells):
    m = builtin_map(spec)
    return m, resolve_measure(m, m.default_grid(cells))


@pytest.fixture(scope="module")
def doubling_setup():
    return _measure("doubling", 4096)


@pytest.fixture(scope="module")
def lsv_setup():
    return _measure("lsv:0.25", 4096)


@pytest.fixture(scope="module")
def doubling_ensemble(doubling_setup):
    """Criteria 3-5 share one ensemble: M = 1e5 exact bit-queue orbits."""
    imap, nu = doubling_setup
    obs = build_observable("cos1", imap, nu)
    cfg = EnsembleConfig(samples=100_000, n=4096, seed=SEED, threads=THREADS)
    return run_ensemble(imap, obs, cfg, checkpoints=[16, 256, 4096])


@pytest.fixture(scope="module")
def lsv_ensemble(lsv_setup):
    """Criterion 8 ensemble: M = 5e4 burned-in orbits, n = 2^14."""
    imap, nu = lsv_setup
    obs = build_observable("lip1", imap, nu)
    cfg = EnsembleConfig(samples=50_000, n=16_384, seed=SEED, threads=THREADS)
    run = run_ensemble(imap, obs, cfg,
                       checkpoints=[1024, 2048, 4096, 8192, 16_384])
    return imap, nu, obs, run


def test_criterion_01_martingale_annihilation():
    # odd observables die in one application of the degree-2 Chebyshev
    # transfer operator
    imap, nu = _measure("chebyshev:2", 4096)
    h = GridFunction.from_callable(lambda y: y, nu)
    assert lp_norm(transfer_apply(imap, nu, h), 2) < 1e-6


def _random_smooth_pairs(rng, a, b, count=20):
    pairs = []
    for _ in range(count):
        funcs = []
        for _ in range(2):
            c = rng.normal(size=5) / np.array([1.0, 1.0, 1.0, 4.0, 4.0])

            def f(y, c=c):
                z = (np.asarray(y, float) - a) / (b - a)
                return (c[0] + c[1] * np.cos(np.pi * z)
                        + c[2] * np.sin(np.pi * z)
                        + c[3] * np.cos(2 * np.pi * z)
                        + c[4] * np.sin(2 * np.pi * z))

            funcs.append(f)
        pairs.append(tuple(funcs))
    return pairs


def test_criterion_02_operator_duality():
    rng = np.random.default_rng(SEED)
    for spec in ("doubling", "chebyshev:2"):
        imap = builtin_map(spec)
        a, b = imap.domain
        pairs = _random_smooth_pairs(rng, a, b)
        worst = {}
        for cells in (4096, 16_384):
            nu = resolve_measure(imap, imap.default_grid(cells))
            res = 0.0
            for f_raw, g_raw in pairs:
                f = GridFunction.from_callable(f_raw, nu)
                g = GridFunction.from_callable(g_raw, nu)
                for n in (1, 2, 3):
                    res = max(res, duality_residual(imap, nu, f, g, n))
            worst[cells] = res
        assert worst[4096] < 5e-4
        # refinement must shrink the residual unless it already sits at
        # machine precision
        if worst[4096] > 1e-12:
            assert worst[4096] / worst[16_384] >= 3.0


def test_criterion_03_sqrt_n_identity(doubling_ensemble):
    run = doubling_ensemble
    for i, n in enumerate(run.checkpoint_ns):
        std = float(np.std(run.checkpoints[:, i] / np.sqrt(n)))
        assert 0.693 <= std <= 0.721, f"std at n={n}: {std}"


def test_criterion_04_clt_verdict(doubling_ensemble):
    run = doubling_ensemble
    z = run.S / np.sqrt(run.n)
    ks = ks_statistic(z, reference_cdf("normal", SIGMA_COS1))
    assert ks.statistic < 0.02


def test_criterion_05_fclt_functionals(doubling_ensemble):
    run = doubling_ensemble
    scale = 1.0 / (SIGMA_COS1 * np.sqrt(run.n))
    terminal = ks_statistic(run.S * scale, reference_cdf("normal", 1.0))
    sup = ks_statistic(run.sup * scale, reference_cdf("brownian_sup"))
    occ = ks_statistic(run.occupation, reference_cdf("arcsine"))
    assert terminal.statistic < 0.02
    assert sup.statistic < 0.03
    assert occ.statistic < 0.04


def test_criterion_06_martingale_decomposition(lsv_setup):
    imap, nu = lsv_setup
    h = build_observable("lip1", imap, nu).grid_function
    tail_tol = 1e-6 * lp_norm(h, 2)
    gd = gordin_decompose(imap, nu, h, tail_tol=tail_tol)
    assert max(gd.resolvent_residuals) < 2 * tail_tol
    assert gd.martingale_residual < 5e-3
    assert len(gd.cauchy_slacks) == 11
    assert min(gd.cauchy_slacks) >= -1e-8


def test_criterion_07_coboundary_detection(doubling_setup):
    imap, nu = doubling_setup
    h = build_observable("coboundary:cos1", imap, nu).grid_function
    res = coboundary_detect(imap, nu, h)
    assert res.is_coboundary
    assert res.residual < 1e-3
    gk = sigma_green_kubo(imap, nu, h)
    assert -1e-3 < gk.sigma2 < 1e-3
    ces = cesaro_norm_sequence(imap, nu, h, 64)
    f_norm = SIGMA_COS1  # ||cos 2 pi y||_2, the generating function
    assert np.max(ces) <= 2 * f_norm + 1e-3


def test_criterion_08_sigma_cross_validation(lsv_ensemble):
    imap, nu, obs, run = lsv_ensemble
    gk = sigma_green_kubo(imap, nu, obs.grid_function)
    sigmas = [float(np.sqrt(np.mean(run.checkpoints[:, i] ** 2) / n))
              for i, n in enumerate(run.checkpoint_ns)]
    sigma_vg = sigmas[-1]
    assert abs(gk.sigma - sigma_vg) / gk.sigma < 0.05
    clt = clt_test(run.S, run.n, gk.sigma)
    assert clt["verdict"], clt
    scale = 1.0 / (gk.sigma * np.sqrt(run.n))
    paths = PathEnsemble(
        times=np.arange(65) / 64,
        sup=run.sup * scale,
        terminal=run.S * scale,
        occupation=run.occupation,
        n=run.n,
        m=64,
        sigma=gk.sigma,
    )
    entries = fclt_test(paths)
    assert all(e["verdict"] for e in entries), entries


def test_criterion_09_polynomial_decay_rate(lsv_setup):
    # at 4096 cells the discretized operator's spectral gap dominates the
    # [8, 64] window and steepens the fitted slope; 16384 cells keep the
    # polynomial regime inside the window, so the rate is asserted there
    # and the coarse value is reported as a diagnostic only
    imap, nu4 = lsv_setup
    nu16 = resolve_measure(imap, imap.default_grid(16_384))
    h16 = build_observable("lip1", imap, nu16).grid_function
    l1 = norm_decay_sequence(imap, nu16, h16, 1, 64, backend="ulam")
    fit = fit_polynomial_rate(l1, (8, 64))
    h4 = build_observable("lip1", imap, nu4).grid_function
    l1_coarse = norm_decay_sequence(imap, nu4, h4, 1, 64, backend="ulam")
    coarse = fit_polynomial_rate(l1_coarse, (8, 64)).exponent
    assert -4.0 <= fit.exponent <= -2.0, (
        f"fine exponent {fit.exponent:.3f} (coarse diagnostic {coarse:.3f})"
    )


def test_criterion_10_interpolation_inequality():
    # ||P^n h||_2 <= ||h||_inf^(1/2) ||P^n h||_1^(1/2), checked along the
    # iterates of every map/observable combination used above
    combos = [
        ("doubling", "cos1"),
        ("doubling", "coboundary:cos1"),
        ("chebyshev:2", "y"),
        ("lsv:0.25", "lip1"),
    ]
    for spec, obs_spec in combos:
        imap, nu = _measure(spec, 4096)
        h = build_observable(obs_spec, imap, nu).grid_function
        h_inf = float(np.max(np.abs(h.values)))
        op = make_backend(imap, nu)
        masses = op.measure.masses
        v = h.values
        for _ in range(64):
            v = op.apply(v)
            l1 = float(np.abs(v) @ masses)
            l2 = float(np.sqrt((v**2) @ masses))
            assert l2 <= np.sqrt(h_inf * l1) + 1e-8, (spec, obs_spec)


def test_criterion_11_deterministic_verify(tmp_path):
    argv = [sys.executable, "-m", "ergolab", "verify",
            "--map", "doubling", "--obs", "cos1", "--cells", "1024",
            "--n", "512", "--samples", "5000", "--seed", "11", "--m", "16"]
    outputs = []
    for threads, sub in (("1", "a"), ("3", "b")):
        out = tmp_path / sub
        proc = subprocess.run(
            argv + ["--threads", threads, "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outputs.append((proc.stdout, (out / "verify.json").read_bytes()))
    assert outputs[0][0] == outputs[1][0]
    assert outputs[0][1] == outputs[1][1]
    assert json.loads(outputs[0][0])["schema"] == "ergolab/1"

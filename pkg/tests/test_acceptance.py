"""
Acceptance criteria, one test per criterion.

Every test records a one-line PASS/FAIL verdict; ``conftest.py`` prints the
collected lines in the terminal summary, and running this file as a script
prints them directly.
"""

from __future__ import annotations

import io
import math
import sys
import time
from pathlib import Path

import numpy as np
from scipy import integrate

from nvecho import cli, ingest, models, noisesim
from nvecho.fitting import DecayTrace, decay, fit_stretched_exp

sys.path.insert(0, str(Path(__file__).parent))
import synthetic  # noqa: E402

SEED = 20200220
VERDICTS = {}


def verdict(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[number] = line
    print(line)
    return ok


# ---------------------------------------------------------------- oracles


def quadrature_filter_integral(tau, tau_c):
    """``1/2 * int int exp(-|t1-t2|/tau_c) g(t1) g(t2)`` over [0, tau]^2 by dblquad.

    The square is split where g changes sign, and the diagonal blocks are
    reduced to one triangle each so the kink at t1 = t2 sits on an edge.
    """
    h = 0.5 * tau
    opts = dict(epsabs=0.0, epsrel=1e-13)

    def kernel(t2, t1):
        return math.exp(-abs(t1 - t2) / tau_c)

    def triangle(a, b):
        return 2.0 * integrate.dblquad(kernel, a, b, lambda t1: a, lambda t1: t1, **opts)[0]

    cross = integrate.dblquad(kernel, h, tau, lambda t1: 0.0, lambda t1: h, **opts)[0]
    return 0.5 * (triangle(0.0, h) + triangle(h, tau) - 2.0 * cross)


def exponent_rel_error(limit, exact):
    return abs(math.log(limit) - math.log(exact)) / abs(math.log(exact))


# ---------------------------------------------------------------- criteria


def test_c01_closed_form_vs_quadrature():
    t0 = time.perf_counter()
    worst = 0.0
    for tau_c in (0.1, 1.0, 10.0):
        for tau in np.geomspace(1e-3 * tau_c, 1e3 * tau_c, 30):
            exact = quadrature_filter_integral(tau, tau_c)
            got = float(models.echo_filter_integral(tau, tau_c))
            worst = max(worst, abs(got - exact) / exact)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 10.0
    verdict(1, ok, f"max rel err {worst:.2e} (<1e-8), {elapsed:.1f} s (<10 s)")
    assert ok


def test_c02_monte_carlo_oracle():
    t0 = time.perf_counter()
    worst_z, count = 0.0, 0
    lambdas = (0.3, 1.0, 3.0)
    for tau_c in (0.3, 1.0, 3.0):
        taus = np.geomspace(0.05 * tau_c, 20.0 * tau_c, 8)
        table = noisesim.echo_coherence_scan(tau_c, taus, lambdas, dt=tau_c / 50.0, n_paths=100_000, seed=SEED)
        for lam, row in zip(lambdas, table):
            exact = models.hahn_echo_coherence(taus, models.NoiseModelParams(lam, tau_c))
            for est, c in zip(row, exact):
                worst_z = max(worst_z, abs(est.mean - c) / est.std_error)
                count += 1
    elapsed = time.perf_counter() - t0
    ok = worst_z < 3.0 and elapsed < 120.0 and count == 72
    verdict(2, ok, f"{count} points, max |z| {worst_z:.2f} (<3), {elapsed:.1f} s (<120 s)")
    assert ok


def test_c03_asymptotic_limits():
    lines, ok = [], True
    for tau_c in (0.1, 1.0, 10.0):
        p = models.NoiseModelParams(1.0, tau_c)
        short_tau, long_tau = tau_c / 20.0, 50.0 * tau_c
        e_short = exponent_rel_error(
            models.short_time_coherence(short_tau, p), models.hahn_echo_coherence(short_tau, p)
        )
        # at 50 tau_c the coherence underflows for large tau_c; compare exponents directly
        exact_long = 4.0 * float(models.echo_filter_integral(long_tau, tau_c))
        e_long = abs(4.0 * tau_c * long_tau - exact_long) / exact_long
        ok &= e_short < 0.01 and e_long < 0.05
        lines.append(f"tau_c={tau_c:g}: short {e_short:.2%}, long {e_long:.2%}")
    verdict(3, ok, "; ".join(lines) + " (need <1%, <5%)")
    assert ok


def test_c04_crossover():
    fitted = []
    for lo, hi in ((0.01, 0.5), (10.0, 100.0)):
        tau_c = 1.0
        lam = 0.5 / math.sqrt(float(models.echo_filter_integral(hi * tau_c, tau_c)))
        tau = np.linspace(lo * tau_c, hi * tau_c, 60)
        trace = DecayTrace(tau, models.hahn_echo_coherence(tau, models.NoiseModelParams(lam, tau_c)))
        res = fit_stretched_exp(trace, normalize="none")
        fitted.append(res["p"])
    ok = 2.7 <= fitted[0] <= 3.1 and 0.95 <= fitted[1] <= 1.1
    verdict(4, ok, f"p short window {fitted[0]:.3f} in [2.7, 3.1], long window {fitted[1]:.3f} in [0.95, 1.1]")
    assert ok


FIT_CASES = {
    "stretched_exp": [(t2, p) for t2 in (5.0, 10.0, 20.0) for p in (1.0, 1.5, 2.5)],
    "noise_model": [(kappa / tau_c, tau_c) for kappa in (0.2, 0.3, 0.5) for tau_c in (0.5, 2.0, 8.0)],
}


def _fit_case(model, truth):
    if model == "stretched_exp":
        t_e = truth[0]
        curve = lambda t: models.stretched_exp(t, models.StretchedExpParams(*truth))  # noqa: E731
    else:
        params = models.NoiseModelParams(*truth)
        t_e = synthetic.one_over_e_time(params)
        curve = lambda t: models.hahn_echo_coherence(t, params)  # noqa: E731
    tau = np.linspace(0.0, 2.0 * t_e, 201)[1:]
    return tau, curve(tau), decay.FITTERS[model]


def test_c05_fit_recovery():
    worst_clean, worst_rel, worst_z, outside = 0.0, 0.0, 0.0, []
    for model_idx, (model, cases) in enumerate(FIT_CASES.items()):
        for case_idx, truth in enumerate(cases):
            truth = np.array(truth)
            tau, clean, fitter = _fit_case(model, truth)
            res = fitter(DecayTrace(tau, clean), normalize="none")
            worst_clean = max(worst_clean, float(np.max(np.abs(res.params - truth) / truth)))

            rng = np.random.default_rng([SEED, model_idx, case_idx])
            noisy = DecayTrace(tau, clean + rng.normal(0.0, 0.01, tau.size))
            res = fitter(noisy, normalize="none")
            rel = np.abs(res.params - truth) / truth
            z = np.abs(res.params - truth) / res.std_errors
            worst_rel = max(worst_rel, float(rel.max()))
            worst_z = max(worst_z, float(z.max()))
            for name, zi in zip(res.param_names, z):
                if not zi <= 2.0:
                    outside.append(f"{model}{tuple(round(float(v), 4) for v in truth)}:{name} z={zi:.2f}")
    ok = worst_clean < 1e-5 and worst_rel < 0.05 and not outside
    detail = (
        f"noiseless max rel {worst_clean:.1e} (<1e-5); noisy max rel {worst_rel:.2%} (<5%); "
        f"max |z| {worst_z:.2f}, {len(outside)}/36 beyond 2 SE"
    )
    if outside:
        detail += " [" + ", ".join(outside) + "]"
    verdict(5, ok, detail)
    assert ok


def _fd_jacobian(model, tau, x, rel_step=1e-6):
    cols = []
    for k in range(len(x)):
        h = rel_step * x[k]
        up, down = x.copy(), x.copy()
        up[k] += h
        down[k] -= h
        cols.append((model.func(tau, up) - model.func(tau, down)) / (2.0 * h))
    return np.column_stack(cols)


def test_c06_jacobians():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for model in (decay.STRETCHED_EXP, decay.NOISE_MODEL):
        lo = np.log([b[0] for b in model.bounds])
        hi = np.log([b[1] for b in model.bounds])
        for _ in range(100):
            x = np.exp(rng.uniform(lo, hi))
            if model is decay.STRETCHED_EXP:
                t_e = x[0]
            else:
                t_e = synthetic.one_over_e_time(models.NoiseModelParams(*x))
            tau = t_e * np.linspace(0.05, 3.0, 40)
            analytic = model.jac(tau, x)
            numeric = _fd_jacobian(model, tau, x)
            err = np.linalg.norm(analytic - numeric, axis=0) / np.linalg.norm(analytic, axis=0)
            worst = max(worst, float(err.max()))
    ok = worst < 1e-5
    verdict(6, ok, f"max column rel err {worst:.2e} over 2x100 points (<1e-5)")
    assert ok


def test_c07_instantaneous_diffusion():
    # hand oracle: n = 1e22 m^-3, CODATA 2018 constants, sin^2(pi/2) = 1
    mu0, mu_b, hbar, g = 4e-7 * math.pi, 9.2740100783e-24, 1.054571817e-34, 2.0028
    hand = 1e22 * math.pi / (9 * math.sqrt(3)) * mu0 * g * g * mu_b ** 2 / hbar * 1e-6
    inp = models.InstantaneousDiffusionInput(n_resonant=1e16)
    got = models.instantaneous_diffusion_rate(inp)
    rel = abs(got - hand) / hand
    zero = models.instantaneous_diffusion_rate(models.InstantaneousDiffusionInput(1e16, beta=0.0))
    doubled = models.instantaneous_diffusion_rate(models.InstantaneousDiffusionInput(2e16))
    ok = rel < 1e-6 and zero == 0.0 and doubled == 2.0 * got and abs(hand - 8.285e-3) < 1e-6
    verdict(7, ok, f"rate {got:.6e} /us vs hand {hand:.6e} (rel {rel:.1e}); beta=0 -> {zero}; 2n -> x{doubled / got:.15g}")
    assert ok


def test_c08_sample_table():
    rows = ingest.hpht_samples()
    spin = {r.id: r.spin_concentration for r in rows}
    res = models.resonant_density(11.2e17)
    ok = (
        len(rows) == 9
        and all(math.isclose(r.spin_concentration, r.p1_conc + r.nv_conc, rel_tol=0, abs_tol=0) for r in rows)
        and math.isclose(spin["No.1"], 52.0, rel_tol=1e-12)
        and math.isclose(spin["No.9"], 0.50, rel_tol=1e-12)
        and res == 11.2e17 / 12
    )
    verdict(8, ok, f"{len(rows)} rows; No.1 {spin['No.1']:g}, No.9 {spin['No.9']:g}; resonant(11.2e17) = {res:.6g}")
    assert ok


def _run(argv):
    out = io.StringIO()
    code = cli.main(argv, out=out)
    return code, out.getvalue()


def _pipeline(workdir, workers=1):
    paths = synthetic.write_dataset(workdir / "traces")
    results = workdir / "results.jsonl"
    code, fit_out = _run(
        ["fit", *map(str, paths), "--model", "noise_model", "--envelope", "--normalize", "none",
         "--results", str(results), "--workers", str(workers)]
    )
    regs = {}
    for param in ("lambda", "inv_tau_c"):
        rcode, text = _run(["regress", "--results", str(results), "--param", param])
        code = max(code, rcode)
        regs[param] = text
    return code, fit_out, results.read_bytes(), regs


def _header_value(text, key):
    for line in text.splitlines():
        cells = line.split("\t")
        if cells[0] == f"# {key}":
            return [float(c) for c in cells[1:] if c != "+-"]
    raise KeyError(key)


def test_c09_end_to_end(tmp_path):
    t0 = time.perf_counter()
    code, _, _, regs = _pipeline(tmp_path)
    elapsed = time.perf_counter() - t0
    checks = []
    ok = code == 0 and elapsed < 60.0
    for param, true_slope in (("lambda", synthetic.LAMBDA_SLOPE), ("inv_tau_c", synthetic.RATE_SLOPE)):
        slope, se = _header_value(regs[param], "slope")
        (r2,) = _header_value(regs[param], "r_squared")
        z = abs(slope - true_slope) / se
        ok &= z <= 2.0 and r2 > 0.95
        checks.append(f"{param} slope {slope:.5g}+-{se:.2g} (true {true_slope}, z={z:.2f}), r2={r2:.4f}")
    verdict(9, ok, "; ".join(checks) + f"; exit {code}, {elapsed:.1f} s")
    assert ok


def test_c10_determinism(tmp_path):
    sim = ["simulate", "--lambda", "1", "--tauc", "1", "--tau", "log:0.05:5:6", "--n-paths", "20000"]
    runs = [_run(sim + ["--workers", w]) for w in ("1", "1", "4")]
    sim_ok = all(r == runs[0] for r in runs) and runs[0][0] == 0
    pipes = [_pipeline(tmp_path / name, workers) for name, workers in (("a", 1), ("b", 1), ("c", 3))]
    pipe_ok = all(p == pipes[0] for p in pipes)
    ok = sim_ok and pipe_ok
    verdict(10, ok, f"simulate identical x3 (workers 1,1,4): {sim_ok}; pipeline identical x3 (workers 1,1,3): {pipe_ok}")
    assert ok


if __name__ == "__main__":
    import tempfile

    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_c")]
    for fn in tests:
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            pass
    print("\n".join(VERDICTS[k] for k in sorted(VERDICTS)))

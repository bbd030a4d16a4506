"""
Batch command-line front end.

Subcommands: ``curve``, ``simulate``, ``fit``, ``regress``. Data goes to
standard output as tab-separated tables; logs go to standard error.

Exit codes: 0 success, 2 usage, 3 parse or data error, 4 a fit did not
converge (its record is still written).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, ingest, models, noisesim
from .errors import DataError, DomainError
from .fitting import decay, extract_envelope, regress_linear

log = logging.getLogger("nvecho")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NONCONVERGED = 4

MODEL_ALIASES = {
    "stretched_exp": "stretched_exp",
    "stretched": "stretched_exp",
    "noise_model": "noise_model",
    "noise": "noise_model",
}

REGRESS_PARAMS = {
    # selector: (fit model, label, unit)
    "lambda": ("noise_model", "lambda", "rad/us"),
    "inv_tau_c": ("noise_model", "1/tau_c", "1/us"),
    "inv_t2": ("stretched_exp", "1/T2", "1/us"),
    "inv_t_non_reso": ("stretched_exp", "1/T_non-reso", "1/us"),
}


class UsageError(Exception):
    pass


def _fmt(v):
    return f"{v:.10g}"


def parse_grid(spec: str) -> np.ndarray:
    """Parse a tau grid.

    ``start:stop:step`` (inclusive of stop when it lies on the grid),
    ``log:start:stop:n`` (n log-spaced points) or a comma-separated list.
    """
    try:
        if spec.startswith("log:"):
            _, a, b, n = spec.split(":")
            a, b, n = float(a), float(b), int(n)
            if not (0 < a < b) or n < 2:
                raise ValueError
            return np.geomspace(a, b, n)
        if ":" in spec:
            a, b, step = (float(v) for v in spec.split(":"))
            if not (step > 0 and b >= a >= 0):
                raise ValueError
            n = int(math.floor((b - a) / step + 1e-9)) + 1
            return a + step * np.arange(n)
        values = np.array([float(v) for v in spec.split(",")])
        if values.size == 0 or np.any(values < 0) or np.any(np.diff(values) <= 0):
            raise ValueError
        return values
    except ValueError:
        raise UsageError(
            f"bad tau grid {spec!r}; use start:stop:step, log:start:stop:n or a comma list"
        ) from None


def _positive(text):
    v = float(text)
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _non_negative(text):
    v = float(text)
    if not (math.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


class _HelpFormatter(argparse.HelpFormatter):
    """Append ``(default: ...)`` unless the default is unset or already described."""

    def _get_help_string(self, action):
        text = action.help or ""
        if action.default in (None, False, argparse.SUPPRESS) or "default" in text or not action.option_strings:
            return text
        return text + " (default: %(default)s)"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nvecho",
        description="Hahn-echo decay of NV ensembles under Ornstein-Uhlenbeck noise.",
        formatter_class=_HelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    fmt = _HelpFormatter
    c = sub.add_parser("curve", help="closed-form echo decay table", formatter_class=fmt)
    c.add_argument("--lambda", dest="lam", type=_positive, required=True, help="noise amplitude, rad/us")
    c.add_argument("--tauc", type=_positive, required=True, help="correlation time, us")
    c.add_argument("--tau", required=True, help="tau grid: start:stop:step, log:start:stop:n or a,b,c (us)")
    c.add_argument("--limits", action="store_true", help="add short- and long-time limit columns")

    s = sub.add_parser("simulate", help="Monte-Carlo echo decay table", formatter_class=fmt)
    s.add_argument("--lambda", dest="lam", type=_non_negative, required=True, help="noise amplitude, rad/us")
    s.add_argument("--tauc", type=_positive, required=True, help="correlation time, us")
    s.add_argument("--tau", required=True, help="tau grid (see curve)")
    s.add_argument("--dt", type=_positive, default=None, help="max time step, us (default tau_c/50; must be <= tau_c/20)")
    s.add_argument("--n-paths", type=int, default=100_000, help="noise paths per tau")
    s.add_argument("--seed", type=int, default=noisesim.DEFAULT_SEED, help="random seed")
    s.add_argument("--workers", type=int, default=1, help="threads; output does not depend on this")
    s.add_argument("--compare", action="store_true", help="add closed-form and z-score columns")

    f = sub.add_parser("fit", help="fit decay traces and append results", formatter_class=fmt)
    f.add_argument("traces", nargs="+", help="trace files")
    f.add_argument("--model", choices=sorted(MODEL_ALIASES), default="noise_model", help="decay model to fit")
    f.add_argument("--results", required=True, help="JSON-lines results file (appended)")
    f.add_argument("--envelope", action="store_true", help="fit the revival envelope")
    f.add_argument("--window", type=_positive, default=None, help="envelope window, us (default: detected revival period)")
    f.add_argument("--normalize", choices=("first", "none"), default="first", help="signal normalization")
    f.add_argument("--free-amplitude", action="store_true", help="fit amplitude and offset too")
    f.add_argument("--sample-id", default=None, help="override the sample_id of a single trace")
    f.add_argument("--workers", type=int, default=1, help="traces fitted concurrently")

    r = sub.add_parser("regress", help="regress a fitted parameter on concentration", formatter_class=fmt)
    r.add_argument("--results", required=True, help="JSON-lines results file")
    r.add_argument("--samples", default=None, help="sample table CSV (default: bundled HPHT sample table)")
    r.add_argument("--param", choices=sorted(REGRESS_PARAMS), required=True, help="fitted quantity on the y axis")
    r.add_argument("--beta", type=float, default=math.pi, help="refocusing flip angle for the T_ID correction, rad (default: pi)")
    r.add_argument("--g-factor", type=float, default=models.const.G_NV, help="g-factor of resonant spins")
    r.add_argument("--weighted", action="store_true", help="weight points by 1/std_error**2")
    return p


def cmd_curve(args, out):
    taus = parse_grid(args.tau)
    params = models.NoiseModelParams(args.lam, args.tauc)
    cols = ["tau_us", "coherence"]
    table = [taus, models.hahn_echo_coherence(taus, params)]
    if args.limits:
        cols += ["short_limit", "long_limit"]
        table += [models.short_time_coherence(taus, params), models.long_time_coherence(taus, params)]
    out.write("\t".join(cols) + "\n")
    for row in zip(*table):
        out.write("\t".join(_fmt(v) for v in row) + "\n")
    return EXIT_OK


def cmd_simulate(args, out):
    taus = parse_grid(args.tau)
    dt = args.tauc / 50.0 if args.dt is None else args.dt
    if dt > args.tauc * noisesim.MAX_DT_FRACTION:
        raise UsageError(
            f"--dt {dt:g} us exceeds tau_c/20 = {args.tauc * noisesim.MAX_DT_FRACTION:g} us; "
            "refusing to under-resolve the noise correlation"
        )
    if args.n_paths < 2:
        raise UsageError("--n-paths must be at least 2")
    log.info(
        "simulate: lambda=%g tau_c=%g dt<=%g n_paths=%d seed=%d workers=%d",
        args.lam, args.tauc, dt, args.n_paths, args.seed, args.workers,
    )
    row = noisesim.echo_coherence_scan(
        args.tauc, taus, [args.lam], dt=dt, n_paths=args.n_paths, seed=args.seed, workers=args.workers
    )[0]
    cols = ["tau_us", "coherence_mc", "std_error", "n_steps"]
    if args.compare:
        cols += ["analytic", "z"]
    out.write("\t".join(cols) + "\n")
    for tau, est in zip(taus, row):
        cells = [_fmt(tau), _fmt(est.mean), _fmt(est.std_error), str(est.n_steps)]
        if args.compare:
            exact = math.exp(-4.0 * args.lam ** 2 * float(models.echo_filter_integral(tau, args.tauc)))
            z = (est.mean - exact) / est.std_error if est.std_error > 0 else 0.0
            cells += [_fmt(exact), f"{z:.3f}"]
        out.write("\t".join(cells) + "\n")
    return EXIT_OK


def _fit_one(path, args):
    trace = ingest.read_trace(path)
    if args.sample_id is not None:
        trace.sample_id = args.sample_id
    n_raw = len(trace)
    if args.envelope:
        trace = extract_envelope(trace, args.window)
    fitter = decay.FITTERS[MODEL_ALIASES[args.model]]
    result = fitter(trace, normalize=args.normalize, free_amplitude=args.free_amplitude)
    result.extra["source"] = Path(path).name
    result.extra["n_raw_points"] = n_raw
    if args.envelope and "envelope_window" in trace.meta:
        result.extra["envelope_window"] = trace.meta["envelope_window"]
    return result


def cmd_fit(args, out):
    if args.sample_id is not None and len(args.traces) > 1:
        raise UsageError("--sample-id applies to a single trace only")
    if args.workers > 1 and len(args.traces) > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(lambda p: _fit_one(p, args), args.traces))
    else:
        results = [_fit_one(p, args) for p in args.traces]

    with open(args.results, "a", encoding="utf-8") as fh:
        fh.write(ingest.write_results(results))

    status = EXIT_OK
    for path, res in zip(args.traces, results):
        out.write(f"# {Path(path).name}  sample={res.sample_id}  model={res.model}\n")
        for name, unit, v, se in zip(res.param_names, res.units, res.params, res.std_errors):
            out.write(f"{name}\t{_fmt(v)}\t+-\t{_fmt(se)}\t{unit}\n")
        out.write(
            f"residual_norm\t{_fmt(res.residual_norm)}\tpoints\t{res.n_points}\t"
            f"iterations\t{res.n_iterations}\tconverged\t{str(res.converged).lower()}\n"
        )
        if res.flags:
            out.write(f"flags\t{','.join(res.flags)}\n")
        if not res.converged:
            log.error("%s: fit did not converge (%s)", path, res.message)
            status = EXIT_NONCONVERGED
    return status


def _regress_point(selector, res, sample, args):
    """(x, y, y_se) for one sample and fit result."""
    if selector == "lambda":
        return sample.spin_concentration, res["lambda"], res.std_error("lambda")
    if selector == "inv_tau_c":
        tc = res["tau_c"]
        return sample.spin_concentration, 1.0 / tc, res.std_error("tau_c") / tc ** 2
    t2, t2_se = res["t2"], res.std_error("t2")
    if selector == "inv_t2":
        return sample.spin_concentration, 1.0 / t2, t2_se / t2 ** 2
    n_res = models.resonant_density(sample.nv_conc * models.const.TABLE_CONC_UNIT)
    rate_id = models.instantaneous_diffusion_rate(
        models.InstantaneousDiffusionInput(n_resonant=n_res, g1=args.g_factor, g2=args.g_factor, beta=args.beta)
    )
    est = models.non_resonant_rate(t2, 1.0 / rate_id if rate_id > 0 else None)
    if not est.consistent:
        log.warning("%s: instantaneous diffusion exceeds 1/T2; non-resonant rate %.4g <= 0", sample.id, est.rate)
    return sample.non_resonant_concentration, est.rate, t2_se / t2 ** 2


def cmd_regress(args, out):
    with open(args.results, encoding="utf-8") as fh:
        results = ingest.read_results(fh.read())
    samples = ingest.hpht_samples() if args.samples is None else ingest.read_samples(args.samples)
    by_id = {s.id: s for s in samples}
    model, label, unit = REGRESS_PARAMS[args.param]

    latest = {}
    for res in results:
        if res.model != model:
            continue
        if res.sample_id is None:
            raise DataError(f"a {model} result has no sample_id")
        if res.sample_id not in by_id:
            raise DataError(f"unknown sample id {res.sample_id!r} (not in the sample table)")
        if not res.converged:
            log.warning("%s: skipping non-converged %s result", res.sample_id, model)
            continue
        latest[res.sample_id] = res
    if not latest:
        raise DataError(f"no results for model {model} in {args.results}")

    order = [s.id for s in samples if s.id in latest]
    points = [_regress_point(args.param, latest[sid], by_id[sid], args) for sid in order]
    x, y, se = (np.array(v) for v in zip(*points))
    weights = 1.0 / se ** 2 if args.weighted else None
    reg = regress_linear(x, y, weights)

    xlabel = "non_resonant_concentration" if args.param == "inv_t_non_reso" else "spin_concentration"
    out.write(f"# param\t{label}\t{unit}\n")
    out.write(f"# x\t{xlabel}\t1e17 cm^-3\n")
    out.write(f"# slope\t{_fmt(reg.slope)}\t+-\t{_fmt(reg.slope_se)}\n")
    out.write(f"# intercept\t{_fmt(reg.intercept)}\t+-\t{_fmt(reg.intercept_se)}\n")
    out.write(f"# r_squared\t{_fmt(reg.r_squared)}\n")
    out.write(f"# n\t{reg.n}\n")
    out.write("concentration\tvalue\tstd_error\tsample_id\n")
    for sid, xi, yi, si in zip(order, x, y, se):
        out.write(f"{_fmt(xi)}\t{_fmt(yi)}\t{_fmt(si)}\t{sid}\n")
    return EXIT_OK


COMMANDS = {
    "curve": cmd_curve,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "regress": cmd_regress,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nvecho {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"nvecho {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"nvecho {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

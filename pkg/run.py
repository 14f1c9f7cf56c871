import contextlib
import functools
import json
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path

import click
import numpy as np
import pandas as pd

from bench import Bench, ExperimentConfig, emit_report, provenance
from config import Config, Verbosity
from pnorms.conic import set_solver_verbose
from pnorms.covering import (
    EXPERIMENT_ALPHA,
    HittingSet,
    build_H1,
    build_H2,
    build_H3,
    build_HB,
    build_HG,
    build_HH,
    cardinality_curve,
    probe_hitting_ratio,
)
from pnorms.matrix import matrix_pu, matrix_pv, matrix_pv_primal, spectral_pnorm_oracle
from pnorms.tensor import DenseTensor
from pnorms.tensor_norms import (
    alg2_spectral,
    alg3_unfold_nuclear,
    alg4_partition_nuclear,
    alg6_cover_nuclear,
    alg7_randomized,
    gen_identity_tensor,
    gen_known_nuclear_instance,
    vector_estimate,
)
from pnorms.utils.errors import PNormError
from pnorms.utils.formats import ResultTable, fmt_float, name_value, plural

log = logging.getLogger("pnorms")


@contextlib.contextmanager
def setup_logging(config):
    try:
        # __enter__
        max_bytes = 32 * 1024 * 1024  # 32 MiB
        logging.getLogger("pnorms").setLevel(config.verbosity.log_level)
        logging.getLogger("cvxpy").setLevel(logging.WARNING)

        log = logging.getLogger()
        log.setLevel(logging.INFO)
        sh = logging.StreamHandler()
        handler = RotatingFileHandler(
            filename=config.log_file,
            encoding="utf-8",
            mode="w",
            maxBytes=max_bytes,
            backupCount=5,
        )
        dt_fmt = "%Y-%m-%d %H:%M:%S"
        fmt = logging.Formatter("%(asctime)s [%(levelname)s] %(name)s: %(message)s", dt_fmt)
        handler.setFormatter(fmt)
        sh.setFormatter(fmt)
        log.addHandler(handler)
        log.addHandler(sh)

        yield
    finally:
        # __exit__
        handlers = log.handlers[:]
        for hdlr in handlers:
            hdlr.close()
            log.removeHandler(hdlr)


def handle_errors(func):
    """Maps library errors onto their exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except PNormError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(e.exit_code)
        except (OSError, json.JSONDecodeError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(2)

    return wrapper


def echo_estimate(est, as_json):
    if as_json:
        click.echo(json.dumps(est.to_dict(), indent=2))
        return
    rows = [
        ("method", est.method),
        ("value", fmt_float(est.value, 6)),
        ("lower", fmt_float(est.lower, 6)),
        ("upper", fmt_float(est.upper, 6)),
    ]
    if est.taus:
        rows.append(("taus", ", ".join(fmt_float(t, 6) for t in est.taus)))
    if not est.certified:
        rows.append(("certified", "no"))
    if est.probabilistic:
        rows.append(("confidence", fmt_float(est.confidence, 4)))
    click.echo(name_value(rows))


@click.group(options_metavar="[options]")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="configuration file")
@click.option("-v", "--verbose", count=True, help="more output, repeat for solver logs")
@click.pass_context
def main(ctx, config_path, verbose):
    """Certified approximations of matrix and tensor p-norms."""
    config = Config(config_path) if config_path else Config.from_env()
    if verbose:
        config.verbosity = Verbosity.from_count(verbose)
    set_solver_verbose(config.verbosity.solver_output)
    ctx.obj = config
    ctx.with_resource(setup_logging(config))


# hitting sets


@main.group(short_help="hitting sets of the lp-sphere", options_metavar="[options]")
def hitset():
    pass


@hitset.command(short_help="builds a hitting set", options_metavar="[options]")
@click.option("--kind", type=click.Choice(["hh", "hb", "h1", "h2", "hg", "h3"]), required=True)
@click.option("--n", type=int, required=True, help="dimension")
@click.option("--p", "p", required=True, help="exponent, as b/a or a decimal")
@click.option("--alpha", type=float, default=EXPERIMENT_ALPHA, show_default=True)
@click.option("--beta", type=float, default=None, help="defaults to alpha + 1")
@click.option("--gamma", type=float, default=None, help="grid radius for hb")
@click.option("--m", "m", type=int, default=None, help="grid resolution for hg")
@click.option("--eps", type=float, default=0.05, show_default=True, help="failure probability for h3")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.pass_obj
@handle_errors
def build(config, kind, n, p, alpha, beta, gamma, m, eps, seed, out):
    """Builds a hitting set and writes it as JSON."""
    cap = config.hitset_cap
    if kind == "hh":
        H = build_HH(n, p, alpha, beta, cap=cap)
    elif kind == "h1":
        H = build_H1(n, p, alpha, beta, cap=cap)
    elif kind == "h2":
        H = build_H2(n, p, alpha, beta, cap=cap)
    elif kind == "hb":
        if gamma is None:
            raise click.UsageError("--gamma is required for hb")
        H = build_HB(n, p, gamma, cap=cap)
    elif kind == "hg":
        if m is None:
            raise click.UsageError("--m is required for hg")
        H = build_HG(n, p, m, cap=cap)
    else:
        log.info(f"sampling h3 over R^{n} with seed {seed}")
        H = build_H3(n, p, eps, config.covering_constants, seed=seed, cap=cap)

    H.save(out)
    click.echo(name_value([("kind", H.kind), ("vectors", f"{plural(len(H)):vector}"), ("tau", fmt_float(H.tau, 6))]))


@hitset.command(short_help="estimates a hitting ratio by probing", options_metavar="[options]")
@click.option("--in", "path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--probes", type=int, default=10_000, show_default=True)
@click.option("--mode", type=click.Choice(["random", "adversarial"]), default="adversarial", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@handle_errors
def probe(path, probes, mode, seed):
    """Minimum over probes of the best inner product; an upper estimate of the ratio."""
    H = HittingSet.load(path)
    log.info(f"probing {H!r} with seed {seed}")
    worst = probe_hitting_ratio(H, probes, np.random.default_rng(seed), mode)
    click.echo(name_value([("probed", fmt_float(worst, 6)), ("certified", fmt_float(H.tau, 6))]))


@hitset.command(short_help="cardinality-bound comparison curve", options_metavar="[options]")
@click.option("--alpha-min", type=float, default=1.5, show_default=True)
@click.option("--alpha-max", type=float, default=20.0, show_default=True)
@click.option("--points", type=int, default=50, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@handle_errors
def curve(alpha_min, alpha_max, points, out):
    """Writes the per-dimension cardinality bounds of hb and hh at matched ratios."""
    rows = cardinality_curve(np.linspace(alpha_min, alpha_max, points))
    pd.DataFrame(rows, columns=["alpha", "ratio", "hb_bound", "hh_bound"]).to_csv(out, index=False)
    click.echo(f"wrote {plural(len(rows)):point} to {out}")


# norms


@main.group(short_help="norm estimates", options_metavar="[options]")
def norm():
    pass


@norm.command(short_help="matrix p-norm relaxations", options_metavar="[options]")
@click.option("--op", type=click.Choice(["pv", "pu", "primal", "oracle"]), required=True)
@click.option("--in", "path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--p", "p", required=True)
@click.option("--restarts", type=int, default=200, show_default=True, help="oracle restarts")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
@handle_errors
def matrix(config, op, path, p, restarts, seed, as_json):
    """Computes pv, pu, the primal pv program or the local-search oracle of a matrix."""
    A = DenseTensor.load(path)
    if op == "oracle":
        value = spectral_pnorm_oracle(A, p, restarts, np.random.default_rng(seed))
        click.echo(json.dumps({"method": "oracle", "value": value}) if as_json else fmt_float(value, 6))
        return

    solve_opts = {"tol": config.tol, "solver": config.solver}
    ops = {"pv": matrix_pv, "pu": matrix_pu, "primal": matrix_pv_primal}
    echo_estimate(ops[op](A.array, p, **solve_opts), as_json)


@norm.command(short_help="tensor p-norm approximations", options_metavar="[options]")
@click.option(
    "--method",
    type=click.Choice(["vector", "unfold", "partition", "cover", "spectral"]),
    required=True,
)
@click.option("--in", "path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--p", "p", required=True)
@click.option("--hitset", "hitsets", multiple=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--rand-eps", type=float, default=None, help="sample H3 sets with this failure probability")
@click.option("--scale", type=click.Choice(["certified", "probed"]), default="certified", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
@handle_errors
def tensor(config, method, path, p, hitsets, rand_eps, scale, seed, as_json):
    """Estimates the nuclear (or, with spectral, the spectral) p-norm of a tensor.

    Hitting sets are given for the covered modes, smallest dimension first.
    """
    T = DenseTensor.load(path)
    sets = [HittingSet.load(h) for h in hitsets]
    solve_opts = {"tol": config.tol, "solver": config.solver}

    if method == "vector":
        est = vector_estimate(T, p)
    elif method == "unfold":
        est = alg3_unfold_nuclear(T, p, **solve_opts)
    elif method == "partition":
        est = alg4_partition_nuclear(T, p, **solve_opts)
    elif method == "spectral":
        est = alg2_spectral(T, p, sets, tuple_cap=config.tuple_cap, **solve_opts)
    elif rand_eps is not None:
        log.info(f"randomized covering with seed {seed}")
        est = alg7_randomized(
            T,
            p,
            rand_eps,
            seed=seed,
            constants=config.covering_constants,
            budget=config.program_budget,
            scale=scale,
            **solve_opts,
        )
    else:
        est = alg6_cover_nuclear(
            T,
            p,
            sets,
            budget=config.program_budget,
            scale=scale,
            rng=np.random.default_rng(seed),
            **solve_opts,
        )
    echo_estimate(est, as_json)


# instances


@main.command(short_help="generates test tensors", options_metavar="[options]")
@click.option("--kind", type=click.Choice(["identity", "known-nuclear"]), required=True)
@click.option("--n", type=int, required=True)
@click.option("--d", type=int, required=True)
@click.option("--r", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@handle_errors
def gen(kind, n, d, r, seed, out):
    """Writes an identity tensor or a rank-r tensor of known nuclear d-norm."""
    if kind == "identity":
        T = gen_identity_tensor(n, d)
        T.save(out)
        click.echo(f"wrote {T!r} to {out}")
        return

    log.info(f"known-nuclear instance with seed {seed}")
    T, true = gen_known_nuclear_instance(n, d, r, np.random.default_rng(seed), d)
    T.save(out)
    click.echo(name_value([("tensor", repr(T)), ("nuclear", fmt_float(true, 10))]))


# experiments


@main.group(short_help="experiment runner", options_metavar="[options]")
def bench():
    pass


@bench.command(short_help="runs an experiment grid", options_metavar="[options]")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default="results.csv", show_default=True)
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None, help="defaults to the csv path with .json")
@click.option("--workers", type=int, default=None)
@click.pass_obj
@handle_errors
def run(config, config_path, out, json_path, workers):
    """Runs every configured method on known-nuclear instances and reports ratios."""
    experiment = ExperimentConfig.load(config_path)
    runner = Bench(experiment, workers=workers or config.workers)
    rows, detail = runner.run()

    json_path = json_path or str(Path(out).with_suffix(".json"))
    extra = {
        "config": experiment.to_dict(),
        "provenance": provenance(),
        "asymptotic_bounds": runner.asymptotics(),
    }
    frame = emit_report(rows, out, json_path, detail=detail, extra=extra)

    click.echo(ResultTable(frame).render())
    click.echo(f"wrote {out} and {json_path}")


if __name__ == "__main__":
    main()

"""Command-line entry point.

Subcommands::

    simulate   one chain under a configurable label model
    couple     ensemble of coupled pairs; mean squared distance vs closed form
    analyze    spectral diagnostics (rho, rho_eps, block radii, mixing bound)
    tune       constrained hyperparameter grid search
    table      empirical-vs-theoretical rate table
    verify     internal consistency battery (samplers, moments, bounds)
    ingest     fit moment data to a delimited dataset

Exit status is 0 on success, 1 on usage or data errors, and 2 when the
requested experiment was dominated by divergent runs.  When ``--out`` is
given, report commands render a matplotlib figure next to the delimited
output.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .chains import ChainState, Theta, run_coupled_ensemble
from .contraction import (
    build_contraction_matrix,
    evolve_second_moment,
    initial_second_moment,
    mc_estimate_Mn,
    reconstruct_Mn,
)
from .errors import ArgumentError, DivergenceError, FitError
from .harness import (
    BENCHMARK_THETAS,
    EmpiricalModel,
    emit_results,
    fit_exponential_rate,
    ingest_dataset,
    rate_summary,
    run_chain_distances,
    run_table,
)
from .moments import (
    LabelModel,
    check_declared_moments,
    load_model,
    make_gaussian_model,
    make_uniform_rademacher_model,
)
from .spectral import (
    jblock_mixing_bound,
    jblock_reduction,
    power_norm_bound_check,
    pseudospectral_radius,
    pseudospectrum_grid,
    spectral_radius,
    spectral_report,
)
from .tuner import TuneConfig, preset_theta, save_tune_result, tune

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _vector(text):
    try:
        return np.array([float(tok) for tok in text.split(",")], dtype=float)
    except ValueError as exc:
        raise _UsageError(f"expected comma-separated floats, got {text!r}") from exc


def _build_model(args):
    name = args.model
    if name in ("gaussian", "g"):
        return make_gaussian_model([args.mu, 1.0])
    if name in ("uniform_rademacher", "ur"):
        return make_uniform_rademacher_model(args.kappa, two_point_value=args.two_point)
    if os.path.exists(name):
        return load_model(name)
    raise _UsageError(
        f"--model must be 'gaussian', 'uniform_rademacher', or a model JSON path; got {name!r}"
    )


def _resolve_theta(args, required=True):
    given = [v is not None for v in (args.alpha, args.beta, args.gamma)]
    if any(given):
        if not all(given):
            raise _UsageError("--alpha, --beta, --gamma must be given together")
        return Theta(alpha=args.alpha, beta=args.beta, gamma=args.gamma)
    if args.preset:
        value = args.mu if args.preset in ("example8", "gaussian") else args.kappa
        return preset_theta(args.preset, value)
    if required:
        raise _UsageError("need either --alpha/--beta/--gamma or --preset")
    return None


def _init_state(text, dim):
    if text == "zeros":
        w = np.zeros(dim)
    elif text == "ones":
        w = np.ones(dim)
    else:
        w = _vector(text)
        if w.size != dim:
            raise _UsageError(f"initial point needs {dim} coordinates, got {w.size}")
    return ChainState.fresh(w)


def _figure_path(out):
    return os.path.splitext(str(out))[0] + ".png"


def _ensure_parent(path):
    os.makedirs(os.path.dirname(os.path.abspath(str(path))), exist_ok=True)


def _print_csv(steps, values, header=("step", "value")):
    print(",".join(header))
    for k, v in zip(steps, values):
        print(f"{int(k)},{float(v)!r}")


def _cmd_simulate(args):
    model = _build_model(args)
    theta = _resolve_theta(args)
    wstar = _vector(args.wstar) if args.wstar else np.ones(model.dim)
    if wstar.size != model.dim:
        raise _UsageError(f"--wstar needs {model.dim} coordinates")
    if args.labels == "zero":
        labels, reference = LabelModel.zero(), np.zeros(model.dim)
    elif args.labels == "realizable":
        labels, reference = LabelModel.realizable(wstar), wstar
    else:
        labels, reference = LabelModel.linear_plus_noise(wstar, args.noise), wstar
    init = _init_state(args.init, model.dim)
    steps, values = run_chain_distances(
        model, labels, theta, init, reference, args.n, args.seed, ridge=args.ridge
    )
    metadata = {
        "command": "simulate",
        "theta": theta.as_dict(),
        "labels": args.labels,
        "model": model.describe(),
        "seed": args.seed,
        "n": args.n,
    }
    if args.out:
        emit_results((steps, values), args.out, format=args.format, metadata=metadata)
        from .plots import save_trajectory_figure

        save_trajectory_figure(
            _figure_path(args.out),
            steps,
            {"squared distance": values},
            title="single-chain trajectory",
        )
    else:
        _print_csv(steps, values)
    return 0


def _cmd_couple(args):
    model = _build_model(args)
    theta = _resolve_theta(args)
    init0 = _init_state(args.init0, model.dim)
    init1 = _init_state(args.init1, model.dim)
    sq = run_coupled_ensemble(
        model, theta, init0, init1, args.n, args.runs, args.seed, ridge=args.ridge
    )
    mean = sq.mean(axis=0)
    steps = np.arange(args.n + 1)
    rates = []
    for trajectory in sq:
        try:
            rates.append(fit_exponential_rate(trajectory).rate)
        except FitError:
            pass
    # Closed-form mean squared distance of the same coupling.
    C = build_contraction_matrix(model, theta, ridge=args.ridge)
    v = np.concatenate([init0.w_curr - init1.w_curr, init0.w_prev - init1.w_prev])
    state = initial_second_moment(model.dim)
    closed = np.empty(args.n + 1)
    closed[0] = float(v @ reconstruct_Mn(model, state) @ v)
    for k in range(1, args.n + 1):
        state = evolve_second_moment(C, 1, start=state)
        closed[k] = float(v @ reconstruct_Mn(model, state) @ v)
    metadata = {
        "command": "couple",
        "theta": theta.as_dict(),
        "model": model.describe(),
        "seed": args.seed,
        "n": args.n,
        "runs": args.runs,
        "per_run_rates": rates,
        "closed_form_final": closed[-1],
    }
    if args.out:
        emit_results((steps, mean), args.out, format=args.format, metadata=metadata)
        from .plots import save_trajectory_figure

        save_trajectory_figure(
            _figure_path(args.out),
            steps,
            {f"mean of {args.runs} runs": mean, "closed form": closed},
            title="coupled squared distance",
        )
    else:
        _print_csv(steps, mean)
    return 0


def _cmd_analyze(args):
    model = _build_model(args)
    theta = _resolve_theta(args)
    C = build_contraction_matrix(model, theta, ridge=args.ridge)
    report = spectral_report(C.mat, args.eps)
    bound = jblock_mixing_bound(model, theta, args.eps, ridge=args.ridge)
    summary = rate_summary(model, theta, eps=args.eps, ridge=args.ridge)
    doc = {
        "theta": theta.as_dict(),
        "model": model.describe(),
        "eps": args.eps,
        "rho": report.rho,
        "rho_eps": report.rho_eps,
        "method": report.method,
        "j_radii": list(map(float, bound.j_radii)),
        "mixing_bound": bound.rho_eps,
        "perturbation_term": bound.perturbation_term,
        "block_rate": summary["block_rate"],
        "spectral_rate": summary["spectral_rate"],
    }
    text = json.dumps(doc, indent=2)
    if args.out:
        _ensure_parent(args.out)
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        re, im, smin = pseudospectrum_grid(C.mat, n=args.grid)
        root = os.path.splitext(str(args.out))[0]
        contour_csv = root + "_contour.csv"
        with open(contour_csv, "w") as fh:
            fh.write("re,im,sigma_min\n")
            for j in range(im.size):
                for i in range(re.size):
                    fh.write(f"{float(re[i])!r},{float(im[j])!r},{float(smin[j, i])!r}\n")
        from .plots import save_contour_figure

        save_contour_figure(
            root + ".png",
            re,
            im,
            smin,
            args.eps,
            eigenvalues=np.linalg.eigvals(C.mat),
            title=f"resolvent map, eps={args.eps:g}",
        )
    else:
        print(text)
    return 0


def _cmd_tune(args):
    model = _build_model(args)
    config = TuneConfig(
        alpha_grid=_vector(args.alpha_grid) if args.alpha_grid else None,
        beta_grid=_vector(args.beta_grid) if args.beta_grid else None,
        gamma_grid=_vector(args.gamma_grid) if args.gamma_grid else None,
        constraint_c=args.c,
        refine_rounds=args.refine_rounds,
        objective=args.objective,
        eps=args.eps,
        swap_index=args.swap_index,
    )
    result = tune(model, config)
    if args.out:
        save_tune_result(result, config, args.out)
    print(json.dumps(result.as_dict(), indent=2))
    return 0


def _table_exit_code(rows):
    diverged = sum("diverged" in row.notes for row in rows)
    return 2 if rows and diverged * 2 >= len(rows) else 0


def _emit_table(rows, args, metadata):
    if args.out:
        emit_results(rows, args.out, format=args.format, metadata=metadata)
        from .plots import save_rate_figure

        save_rate_figure(_figure_path(args.out), rows, title="decay rates")
    else:
        print(",".join(("alpha", "beta", "gamma", "empirical_rate", "empirical_stderr", "theoretical_rate")))
        for row in rows:
            doc = row.as_dict()
            print(
                ",".join(
                    repr(float(doc[c]))
                    for c in (
                        "alpha",
                        "beta",
                        "gamma",
                        "empirical_rate",
                        "empirical_stderr",
                        "theoretical_rate",
                    )
                )
            )


def _cmd_table(args):
    model = _build_model(args)
    if args.configs:
        thetas = []
        for chunk in args.configs.split(";"):
            a, b, g = _vector(chunk)
            thetas.append(Theta(alpha=a, beta=b, gamma=g))
    else:
        kind = "gaussian" if args.model in ("gaussian", "g") else "uniform_rademacher"
        thetas = list(BENCHMARK_THETAS[kind])
    rows = run_table(
        model,
        thetas,
        n=args.n,
        runs=args.runs,
        seed=args.seed,
        eps=args.eps,
        ridge=args.ridge,
    )
    metadata = {
        "command": "table",
        "model": model.describe(),
        "seed": args.seed,
        "n": args.n,
        "runs": args.runs,
        "rows": [row.as_dict() for row in rows],
    }
    _emit_table(rows, args, metadata)
    return _table_exit_code(rows)


def _cmd_ingest(args):
    if not args.dataset or not args.target:
        raise _UsageError("ingest needs --dataset and --target")
    model = ingest_dataset(args.dataset, args.target, l2_penalty=args.ridge)
    doc = {
        "source": model.source,
        "rows": int(model.X.shape[0]),
        "dim": model.dim,
        "mu": model.mu,
        "L": model.L,
        "sigma": list(map(float, model.sigma)),
        "kurt": list(map(float, model.kurt)),
        "scale": model.scale,
        "dropped": list(model.dropped),
        "ridge": model.ridge,
    }
    theta = _resolve_theta(args, required=False)
    if theta is None and args.auto_preset:
        theta = preset_theta("example8", model.mu)
    rows = None
    if theta is not None:
        rows = run_table(
            model, [theta], n=args.n, runs=args.runs, seed=args.seed, ridge=model.ridge
        )
        doc["rate_row"] = rows[0].as_dict()
    text = json.dumps(doc, indent=2)
    if args.out:
        _ensure_parent(args.out)
        if rows is not None:
            _emit_table(rows, args, {"command": "ingest", **doc})
            root = os.path.splitext(str(args.out))[0]
            with open(root + "_moments.json", "w") as fh:
                fh.write(text + "\n")
        else:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
    else:
        print(text)
    return _table_exit_code(rows) if rows is not None else 0


def _cmd_verify(args):
    trials = 4000 if args.quick else args.trials
    failures = []

    def check(name, ok, detail=""):
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        if not ok:
            failures.append(name)

    gaussian = make_gaussian_model([0.02, 1.0])
    ur = make_uniform_rademacher_model(0.02)

    for model, label in ((gaussian, "gaussian"), (ur, "uniform-rademacher")):
        worst = 0.0
        for entry in check_declared_moments(model, draws=max(trials, 10_000), seed=args.seed):
            worst = max(worst, abs(entry["z2"]), abs(entry["z4"]))
        check(f"{label} sampler moments match declarations", worst < 6, f"max |z| = {worst:.2f}")

    theta = preset_theta("example8", 0.02)
    C = build_contraction_matrix(gaussian, theta)
    state = evolve_second_moment(C, 3)
    exact = reconstruct_Mn(gaussian, state)
    estimate, stderr = mc_estimate_Mn(gaussian, theta, 3, max(trials, 1000), args.seed)
    z = np.max(np.abs(estimate - exact) / np.maximum(stderr, 1e-300))
    check("closed-form second moment matches Monte Carlo (n=3)", z < 6, f"max z = {z:.2f}")

    report = spectral_report(C.mat, 0.05)
    check(
        "pseudospectral radius dominates spectral radius",
        report.rho_eps >= report.rho,
        f"rho={report.rho:.4f} rho_eps={report.rho_eps:.4f}",
    )

    normal = np.diag([0.3, -0.5, 0.8])
    exact_eps = pseudospectral_radius(normal, 0.05) - (0.8 + 0.05)
    check("normal-matrix pseudospectral radius is rho + eps", abs(exact_eps) < 1e-6, f"err = {exact_eps:.2e}")

    ok = all(power_norm_bound_check(C.mat, 0.05, k).ok for k in (1, 5, 25))
    check("resolvent power bound holds along the preset trajectory", ok)

    cbar, perm = jblock_reduction(gaussian, theta)
    from .spectral import build_J_blocks

    blocks = build_J_blocks(gaussian, theta)
    stitched = np.zeros_like(cbar)
    for i, J in enumerate(blocks):
        stitched[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = J
    err = np.max(np.abs(cbar[np.ix_(perm, perm)] - stitched))
    check("block permutation reassembles the diagonal-noise matrix", err < 1e-12, f"err = {err:.1e}")

    rho_gap = spectral_radius(C.mat)
    check(
        "preset contraction matrix is stable",
        rho_gap < 1,
        f"rho = {rho_gap:.4f}",
    )
    return 1 if failures else 0


def _common(parser, theta=True, sim=False):
    parser.add_argument("--model", default="gaussian", help="gaussian | uniform_rademacher | model JSON path")
    parser.add_argument("--mu", type=float, default=0.05, help="smallest covariance eigenvalue (gaussian model / example8 preset)")
    parser.add_argument("--kappa", type=float, default=0.05, help="inverse condition number (uniform_rademacher model / example11 preset)")
    parser.add_argument("--two-point", type=float, default=2**-0.5, dest="two_point", help="magnitude of the two-point coordinate (published simulations used 1.0)")
    parser.add_argument("--ridge", type=float, default=0.0, help="l2 penalty added to the objective")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="output path; figures are rendered next to it")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    if theta:
        parser.add_argument("--alpha", type=float)
        parser.add_argument("--beta", type=float)
        parser.add_argument("--gamma", type=float)
        parser.add_argument("--preset", choices=("example8", "example11"), help="published hyperparameters (example8 uses --mu, example11 uses --kappa)")
    if sim:
        parser.add_argument("--n", type=int, default=1000, help="number of steps")
        parser.add_argument("--runs", type=int, default=10, help="independent runs")
        parser.add_argument("--eps", type=float, default=None, help="pseudospectrum margin for bound diagnostics")


def build_parser():
    parser = _Parser(prog="sagd", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one chain and record squared distance to a reference")
    _common(p, sim=True)
    p.add_argument("--labels", choices=("zero", "realizable", "noisy"), default="realizable")
    p.add_argument("--wstar", help="comma-separated target weights (default all ones)")
    p.add_argument("--noise", type=float, default=0.1, help="label noise scale for --labels noisy")
    p.add_argument("--init", default="zeros", help="'zeros', 'ones', or comma-separated floats")

    p = sub.add_parser("couple", help="ensemble of coupled pairs vs the closed-form mean")
    _common(p, sim=True)
    p.add_argument("--init0", default="ones")
    p.add_argument("--init1", default="zeros")

    p = sub.add_parser("analyze", help="spectral diagnostics for one configuration")
    _common(p)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--grid", type=int, default=101, help="contour grid resolution per axis")

    p = sub.add_parser("tune", help="constrained grid search over hyperparameters")
    _common(p, theta=False)
    p.add_argument("--objective", choices=("j1", "bound", "rho"), default="j1")
    p.add_argument("--c", type=float, default=0.2, help="constraint strength")
    p.add_argument("--refine-rounds", type=int, default=2, dest="refine_rounds")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--swap-index", action="store_true", dest="swap_index")
    p.add_argument("--alpha-grid", dest="alpha_grid", help="comma-separated values")
    p.add_argument("--beta-grid", dest="beta_grid", help="comma-separated values")
    p.add_argument("--gamma-grid", dest="gamma_grid", help="comma-separated values")

    p = sub.add_parser("table", help="empirical vs theoretical decay-rate table")
    _common(p, theta=False, sim=True)
    p.add_argument("--configs", help="semicolon-separated alpha,beta,gamma triples (default: published benchmark rows)")

    p = sub.add_parser("verify", help="internal consistency battery")
    p.add_argument("--trials", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true")

    p = sub.add_parser("ingest", help="measure moments of a delimited dataset")
    _common(p, sim=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--target", required=True, help="label column name or index")
    p.add_argument("--auto-preset", action="store_true", dest="auto_preset", help="run the example8 preset at mu = measured smallest eigenvalue")
    p.set_defaults(ridge=1e-3)

    return parser


_COMMANDS = {
    "simulate": _cmd_simulate,
    "couple": _cmd_couple,
    "analyze": _cmd_analyze,
    "tune": _cmd_tune,
    "table": _cmd_table,
    "verify": _cmd_verify,
    "ingest": _cmd_ingest,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

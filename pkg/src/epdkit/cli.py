"""Command-line entry point.

Subcommands cover the full pipeline: seeded simulation studies, single fits,
tuning selection, covariate subset selection, influence scans, panel fits,
and network architecture selection.  Every run writes delimited output plus a
JSON manifest holding the resolved configuration; report-style commands also
render figures next to the tables.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io_utils, plots
from .criteria import CriterionKind, GridSpec, boundedness_scan, criterion
from .divergence import (
    NonConvergenceError,
    TuningTriple,
    UnivariateGaussian,
    samplewise_contribution,
)
from .gsm import TuningGrid, default_grid, select_tuning
from .network import TrainOptions, select_architecture
from .panel import fit_panel
from .regression import EstimatorKind, FitOptions, fit
from .simulate import ESTIMATOR_CRITERION, Scheme, SimConfig, record_header, run_study
from .subsets import enumerate_and_rank, consolidate, lasso_screen

_NUMERICAL_ERRORS = (NonConvergenceError, FloatingPointError, OverflowError,
                     ZeroDivisionError, np.linalg.LinAlgError, RuntimeError)
_INPUT_ERRORS = (OSError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _comma_floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip() != ""]


def _comma_strs(text: str) -> list:
    return [v.strip() for v in text.split(",") if v.strip() != ""]


_ESTIMATORS = {"mle": EstimatorKind.MLE, "dpd": EstimatorKind.DPDE,
               "epd": EstimatorKind.EPDE}


def _add_tuning_flags(sp) -> None:
    sp.add_argument("--alpha", type=float, default=0.3,
                    help="exponential tuning weight")
    sp.add_argument("--beta", type=float, default=0.5,
                    help="mixture weight in [0, 1]")
    sp.add_argument("--gamma", type=float, default=0.3,
                    help="power tuning exponent")
    sp.add_argument("--dpd-gamma", type=float, default=0.3,
                    help="power exponent for the density-power estimator")


def _add_common_flags(sp) -> None:
    sp.add_argument("--config", default=None,
                    help="key=value file supplying flag defaults")
    sp.add_argument("--out-dir", default=".", help="output directory")
    sp.add_argument("--seed", type=int, default=0)


def _tuning_map(args) -> dict:
    epd = TuningTriple(alpha=args.alpha, beta=args.beta, gamma=args.gamma)
    dpd = TuningTriple(alpha=0.0, beta=0.0, gamma=args.dpd_gamma)
    mle = TuningTriple(alpha=0.0, beta=0.0, gamma=0.0)
    return {EstimatorKind.MLE: mle, EstimatorKind.DPDE: dpd,
            EstimatorKind.EPDE: epd}


def build_parser() -> tuple:
    parser = _Parser(prog="epdkit",
                     description="robust divergence-based model selection")
    subs = parser.add_subparsers(dest="command", metavar="command")
    table = {}

    sp = subs.add_parser("simulate", help="seeded contamination study")
    _add_common_flags(sp)
    _add_tuning_flags(sp)
    sp.add_argument("--scheme", choices=[s.value for s in Scheme],
                    default="pure")
    sp.add_argument("--delta", default="0",
                    help="contamination fraction(s), comma separated")
    sp.add_argument("--reps", type=int, default=50)
    sp.add_argument("--n", type=int, default=150)
    sp.add_argument("--p", type=int, default=5)
    sp.add_argument("--rho", type=float, default=0.5)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--estimators", default="mle,dpd,epd")
    table["simulate"] = sp

    sp = subs.add_parser("fit", help="fit one regression model")
    _add_common_flags(sp)
    _add_tuning_flags(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--response", required=True)
    sp.add_argument("--covariates", required=True,
                    help="comma separated covariate columns")
    sp.add_argument("--estimator", choices=sorted(_ESTIMATORS), default="epd")
    sp.add_argument("--add-intercept", action="store_true")
    sp.add_argument("--standardize", action="store_true")
    table["fit"] = sp

    sp = subs.add_parser("tune", help="score-matching tuning selection")
    _add_common_flags(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--response", required=True)
    sp.add_argument("--covariates", required=True)
    sp.add_argument("--kind", choices=["dpd", "epd"], default="epd")
    sp.add_argument("--add-intercept", action="store_true")
    sp.add_argument("--standardize", action="store_true")
    sp.add_argument("--alphas", default=None, help="comma separated grid")
    sp.add_argument("--betas", default=None, help="comma separated grid")
    sp.add_argument("--gammas", default=None, help="comma separated grid")
    table["tune"] = sp

    sp = subs.add_parser("select", help="screen covariates and rank subsets")
    _add_common_flags(sp)
    _add_tuning_flags(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--format", choices=["wage", "generic"], default="generic")
    sp.add_argument("--response", default=None)
    sp.add_argument("--covariates", default=None)
    sp.add_argument("--screen-estimator", choices=sorted(_ESTIMATORS),
                    default="epd")
    sp.add_argument("--top-k", type=int, default=15)
    table["select"] = sp

    sp = subs.add_parser("influence", help="contamination influence scan")
    _add_common_flags(sp)
    _add_tuning_flags(sp)
    sp.add_argument("--data", default=None,
                    help="CSV input; omitted means a seeded synthetic draw")
    sp.add_argument("--response", default=None)
    sp.add_argument("--covariates", default=None)
    sp.add_argument("--estimator", choices=sorted(_ESTIMATORS), default="epd")
    sp.add_argument("--n", type=int, default=150)
    table["influence"] = sp

    sp = subs.add_parser("panel", help="random-intercept panel fit")
    _add_common_flags(sp)
    _add_tuning_flags(sp)
    sp.add_argument("--data", required=True, help="wage-format panel CSV")
    sp.add_argument("--estimator", choices=sorted(_ESTIMATORS), default="epd")
    sp.add_argument("--covariates", default=None,
                    help="comma separated subset of panel covariates")
    table["panel"] = sp

    sp = subs.add_parser("nn", help="network architecture selection")
    _add_common_flags(sp)
    _add_tuning_flags(sp)
    sp.add_argument("--data", required=True, help="maintenance CSV")
    sp.add_argument("--max-epochs", type=int, default=500)
    sp.add_argument("--step-size", type=float, default=0.05)
    sp.add_argument("--subsample", type=int, default=0,
                    help="seeded row subsample size, 0 keeps all rows")
    sp.add_argument("--top-k", type=int, default=4)
    table["nn"] = sp

    return parser, table


def _apply_config_file(argv, table) -> None:
    """Load key=value defaults into the matching subparser before parsing."""
    command = next((a for a in argv if a in table), None)
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    if command is None or path is None:
        return
    sp = table[command]
    dests = {act.dest: act for act in sp._actions}
    overrides = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        dest = key.replace("-", "_")
        if dest not in dests or dest == "config":
            raise UsageError(f"{path}:{lineno}: unknown option {key!r} "
                             f"for command {command!r}")
        act = dests[dest]
        if isinstance(act, argparse._StoreTrueAction):
            overrides[dest] = value.lower() in ("1", "true", "yes")
        elif act.type is not None:
            overrides[dest] = act.type(value)
        else:
            overrides[dest] = value
    sp.set_defaults(**overrides)


def _out(args, name: str) -> Path:
    return Path(args.out_dir) / name


def _manifest(args, extra: dict | None = None) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "config"}
    if extra:
        config.update(extra)
    io_utils.write_manifest(_out(args, f"{args.command}_manifest.json"), config)


def _load_problem(args):
    covs = _comma_strs(args.covariates)
    return io_utils.load_regression_csv(
        args.data, args.response, covs,
        standardize_covariates=getattr(args, "standardize", False),
        add_intercept=getattr(args, "add_intercept", False))


def cmd_simulate(args) -> int:
    kinds = [_ESTIMATORS[e] for e in _comma_strs(args.estimators)]
    t_map = _tuning_map(args)
    tuning_for = {k: t_map[k] for k in kinds}
    deltas = _comma_floats(args.delta)
    scheme = Scheme(args.scheme)
    all_rows = []
    series = {ESTIMATOR_CRITERION[k].value: [] for k in kinds}
    summary_rows = []
    for delta in deltas:
        config = SimConfig(n=args.n, p=args.p, rho=args.rho,
                           beta0=tuple([1.5, -1.0, 0.8, 0.5, -0.7][:args.p])
                           if args.p <= 5 else tuple(np.ones(args.p)),
                           sigma=args.sigma, scheme=scheme, delta=delta,
                           reps=args.reps, base_seed=args.seed)
        summary = run_study(config, tuning_for)
        all_rows.extend(r.as_row() for r in summary.records)
        for k in kinds:
            series[ESTIMATOR_CRITERION[k].value].append(
                summary.criterion_mean(k))
            summary_rows.append([delta, k.value,
                                 *summary.coef_mean(k).tolist(),
                                 *summary.coef_sd(k).tolist(),
                                 summary.criterion_mean(k)])
    io_utils.write_csv(_out(args, "records.csv"), record_header(args.p),
                       all_rows)
    head = ["delta", "estimator",
            *(f"beta{j + 1}_mean" for j in range(args.p)),
            *(f"beta{j + 1}_sd" for j in range(args.p)),
            "criterion_mean"]
    io_utils.write_csv(_out(args, "summary.csv"), head, summary_rows)
    plots.criterion_vs_delta_figure(deltas, series,
                                    _out(args, "criterion_vs_delta.png"))
    _manifest(args, {"deltas": deltas})
    print(f"wrote {len(all_rows)} records for {len(deltas)} delta value(s) "
          f"to {args.out_dir}")
    return 0


def cmd_fit(args) -> int:
    problem, names = _load_problem(args)
    kind = _ESTIMATORS[args.estimator]
    t = _tuning_map(args)[kind]
    res = fit(problem, t, kind)
    rows = [[name, val] for name, val in zip(names, res.params.coef)]
    rows.append(["sigma", res.params.sigma])
    rows.append(["objective", res.objective_value])
    rows.append(["iterations", res.iterations])
    rows.append(["converged", res.converged])
    io_utils.write_csv(_out(args, "fit.csv"), ["term", "value"], rows)
    _manifest(args, {"tuning": (t.alpha, t.beta, t.gamma)})
    print(f"{args.estimator} fit: converged={res.converged}, "
          f"sigma={res.params.sigma:.6g}")
    return 0


def cmd_tune(args) -> int:
    problem, _ = _load_problem(args)
    base = default_grid()
    grid = TuningGrid(
        alphas=tuple(_comma_floats(args.alphas)) if args.alphas else base.alphas,
        betas=tuple(_comma_floats(args.betas)) if args.betas else base.betas,
        gammas=tuple(_comma_floats(args.gammas)) if args.gammas else base.gammas,
    )
    sel = select_tuning(problem, grid, args.kind.upper())
    rows = [[t.alpha, t.beta, t.gamma, s] for t, s in sel.table]
    io_utils.write_csv(_out(args, "tuning_table.csv"),
                       ["alpha", "beta", "gamma", "score"], rows)
    best = sel.best
    _manifest(args, {"best": (best.alpha, best.beta, best.gamma),
                     "failures": len(sel.failures)})
    print(f"best tuning: alpha={best.alpha} beta={best.beta} "
          f"gamma={best.gamma}")
    return 0


def cmd_select(args) -> int:
    if args.format == "wage":
        _, problem, names, _ = io_utils.load_wage_panel(args.data)
        always = (0,)
    else:
        if not args.response or not args.covariates:
            raise UsageError("generic format needs --response and --covariates")
        problem, names = io_utils.load_regression_csv(
            args.data, args.response, _comma_strs(args.covariates),
            standardize_covariates=True, add_intercept=True)
        always = (0,)
    screen_kind = _ESTIMATORS[args.screen_estimator]
    t_map = _tuning_map(args)
    mask = lasso_screen(problem, t_map[screen_kind], screen_kind,
                        unpenalized=always)
    io_utils.write_csv(_out(args, "screen.csv"), ["covariate", "kept"],
                       [[names[j], bool(mask[j])] for j in range(len(names))])
    kept = [j for j in np.flatnonzero(mask) if j not in always]
    kinds = [CriterionKind.MLIC, CriterionKind.DPDIC, CriterionKind.EPDIC]
    ranked = enumerate_and_rank(problem, kept, kinds, t_map,
                                labels=[names[j] for j in kept],
                                always_include=always)
    for ck in kinds:
        rows = [[model.name(), rep.fit_term, rep.penalty, rep.total]
                for model, rep in ranked[ck]]
        io_utils.write_csv(_out(args, f"ranking_{ck.value}.csv"),
                           ["model", "fit_term", "penalty", "total"], rows)
    merged = consolidate(ranked, top_k=args.top_k)
    rows = []
    for e in merged.entries:
        rows.append([e.model.name(), e.freq, e.sel_freq,
                     *(e.totals.get(ck, float("nan")) for ck in kinds)])
    io_utils.write_csv(_out(args, "consolidated.csv"),
                       ["model", "freq", "sel_freq", "mlic", "dpdic", "epdic"],
                       rows)
    _manifest(args, {"screened": [names[j] for j in kept]})
    print(f"screened to {len(kept)} covariates; "
          f"top model: {merged.entries[0].model.name() if merged.entries else '-'}")
    return 0


def cmd_influence(args) -> int:
    if args.data:
        if not args.response or not args.covariates:
            raise UsageError("--data needs --response and --covariates")
        problem, _ = _load_problem(args)
    else:
        from .simulate import generate

        problem = generate(SimConfig(n=args.n, reps=1, base_seed=args.seed),
                           0)
    kind = _ESTIMATORS[args.estimator]
    t = _tuning_map(args)[kind]
    res = fit(problem, t, kind)
    x_pt = problem.design.mean(axis=0)
    scan = boundedness_scan(res, res.tuning, GridSpec(x_pt=x_pt))
    mu = float(x_pt @ res.params.coef)
    sigma = res.params.sigma
    ys = np.linspace(mu - 10.0 * sigma, mu + 10.0 * sigma, 1001)
    g = UnivariateGaussian(mu, sigma)
    vals = res.n * samplewise_contribution(ys, g, res.tuning)
    io_utils.write_csv(_out(args, "influence_curve.csv"), ["y", "influence"],
                       np.column_stack([ys, vals]).tolist())
    plots.influence_figure(ys, vals, _out(args, "influence.png"),
                           bounded=scan.bounded)
    _manifest(args, {"sup_abs": scan.sup_abs, "argmax_y": scan.argmax_y,
                     "bounded": scan.bounded})
    print(f"influence scan: sup={scan.sup_abs:.6g} at y={scan.argmax_y:.6g}, "
          f"bounded={scan.bounded}")
    return 0


def cmd_panel(args) -> int:
    panel, _, names, info = io_utils.load_wage_panel(args.data)
    if args.covariates:
        keep = ["intercept", *_comma_strs(args.covariates)]
        idx = [names.index(c) for c in keep]
        from .panel import PanelData

        panel = PanelData(X=panel.X[:, :, idx], y=panel.y)
        names = keep
    kind = _ESTIMATORS[args.estimator]
    t = _tuning_map(args)[kind]
    res = fit_panel(panel, t, kind)
    rows = [[name, val] for name, val in zip(names, res.params.coef)]
    rows.append(["sigma_alpha", res.params.sigma_alpha])
    rows.append(["sigma_u", res.params.sigma_u])
    rows.append(["objective", res.objective_value])
    rows.append(["converged", res.converged])
    io_utils.write_csv(_out(args, "panel_fit.csv"), ["term", "value"], rows)
    _manifest(args, {"panel": info})
    print(f"panel {args.estimator} fit: converged={res.converged}, "
          f"sigma_alpha={res.params.sigma_alpha:.6g}, "
          f"sigma_u={res.params.sigma_u:.6g}")
    return 0


def cmd_nn(args) -> int:
    data, names, info = io_utils.load_ai4i(args.data)
    if args.subsample and args.subsample < data.n:
        from .network import ClassificationData

        rng = np.random.default_rng(args.seed)
        idx = rng.choice(data.n, size=args.subsample, replace=False)
        data = ClassificationData(features=data.features[idx],
                                  labels=data.labels[idx])
    opts = TrainOptions(seed=args.seed, max_epochs=args.max_epochs,
                        step_size=args.step_size)
    ranking = select_architecture(data, _tuning_map(args), opts=opts,
                                  top_k=args.top_k)
    kinds = [CriterionKind.MLIC, CriterionKind.DPDIC, CriterionKind.EPDIC]
    rows = [[e.model, e.freq, e.sel_freq,
             *(e.totals.get(ck, float("nan")) for ck in kinds)]
            for e in ranking.entries]
    io_utils.write_csv(_out(args, "architecture_ranking.csv"),
                       ["architecture", "freq", "sel_freq",
                        "mlic", "dpdic", "epdic"], rows)
    _manifest(args, {"dataset": info, "features": names})
    print(f"top architecture: {ranking.entries[0].model}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "tune": cmd_tune,
    "select": cmd_select,
    "influence": cmd_influence,
    "panel": cmd_panel,
    "nn": cmd_nn,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, table = build_parser()
    try:
        _apply_config_file(argv, table)
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except _INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

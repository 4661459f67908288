"""
Command-line front end: ``dcekit {design,fit,wtp,cluster,report}``.

Exit codes: 0 success, 2 input error, 3 numerical non-convergence (the
result is still written and flagged).  ``--config FILE`` supplies flat
``key = value`` defaults for the chosen command; explicit flags win.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import attitudes as att
from .core import (DCEError, ValidationError, default_attributes, load_attitude_csv,
                   load_choice_csv, read_attributes, read_flat_config, read_model_spec,
                   read_result_csv, write_result_csv, format_number, ModelSpec)
from .design import full_factorial, optimize_design, write_design_csv
from .mixl import DrawConfig, MixlConfig, fit_mixl, make_draws
from .mnl import MNLConfig, fit_mnl
from .wtp import (individual_wtp, kernel_density, wtp_point, wtp_table, write_density_csv,
                  write_wtp_csv)

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 2, 3
MIN_GROUP = 30


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _say(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# design
# ---------------------------------------------------------------------------

def cmd_design(args) -> int:
    attrs = read_attributes(args.attributes) if args.attributes else default_attributes()
    if args.cards < 1 or args.blocks < 1:
        raise ValidationError("--cards and --blocks must be positive")
    plan = optimize_design(full_factorial(attrs), attrs, n_cards=args.cards,
                           n_alts=args.alts, n_blocks=args.blocks, seed=args.seed,
                           max_sweeps=args.max_sweeps)
    write_design_csv(plan, args.out)
    print(f"d_error={format_number(plan.d_error)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _load_model(spec_path, data_path):
    spec, extras = read_model_spec(spec_path)
    data = load_choice_csv(data_path)
    data.check_spec(spec)
    return spec, extras, data


def _mixl_config(args) -> MixlConfig:
    cfg = MixlConfig(n_draws=args.draws, seed=args.seed, threads=args.threads,
                     draws=DrawConfig(generator=args.generator, seed=args.seed))
    if args.max_iter is not None:
        cfg.max_iter = args.max_iter
    return cfg


def _fit(data, spec, args):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if args.model == "mnl":
            cfg = MNLConfig()
            if args.max_iter is not None:
                cfg.max_iter = args.max_iter
            return fit_mnl(data, spec, cfg)
        return fit_mixl(data, spec, _mixl_config(args))


def cmd_fit(args) -> int:
    spec, _, data = _load_model(args.spec, args.data)
    res = _fit(data, spec, args)
    write_result_csv(res, args.out)
    print(f"log_likelihood={format_number(round(res.log_likelihood, 6))}")
    print(f"aic={format_number(round(res.aic, 6))}")
    print(f"bic={format_number(round(res.bic, 6))}")
    print(f"converged={int(res.converged)} iterations={res.iterations}")
    if not res.converged:
        _say(f"warning: estimation did not converge ({res.message}); result flagged")
        return EXIT_NONCONVERGED
    return EXIT_OK


# ---------------------------------------------------------------------------
# wtp
# ---------------------------------------------------------------------------

def cmd_wtp(args) -> int:
    res = read_result_csv(args.result)
    if res.covariance is None:
        raise ValidationError("result file carries no covariance; cannot compute standard errors")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = wtp_table(res)
    write_wtp_csv(rows, out / "wtp.csv")
    for r in rows:
        print(f"{r['attribute']}: mean={format_number(round(r['mean_wtp'], 6))} "
              f"share={format_number(round(r['positive_share'], 6))}")
    if args.density:
        if not (args.data and args.spec):
            raise ValidationError("--density needs --data and --spec")
        spec, _, data = _load_model(args.spec, args.data)
        for attr in args.density.split(","):
            attr = attr.strip()
            if attr not in res.param_names:
                raise ValidationError(f"result has no coefficient {attr!r}")
            draws = make_draws(data.n_respondents, args.draws, spec.n_random,
                               DrawConfig(generator=args.generator, seed=args.seed))
            vals = individual_wtp(res, data, draws, attr, spec)
            x, d = kernel_density(vals, points=args.points)
            write_density_csv(x, d, out / f"density_{attr}.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# cluster
# ---------------------------------------------------------------------------

def cmd_cluster(args) -> int:
    data = load_attitude_csv(args.attitudes)
    mask = data.complete_rows()
    if mask.sum() < 2:
        raise ValidationError("fewer than two respondents with complete item scores")
    scores = data.scores[mask]
    feats = att.standardize(scores)
    Z = att.ward_cluster(feats)
    print(f"agglomerative_coefficient={format_number(round(att.agglomerative_coefficient(Z), 9))}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.k == "auto":
        kmax = min(args.k_max, len(feats))
        gap = att.gap_statistic(feats, range(1, kmax + 1), B=args.gap_B, seed=args.seed,
                                threads=args.threads)
        att.write_gap_csv(gap, out / "gap.csv")
        k = gap.chosen_k
    else:
        try:
            k = int(args.k)
        except ValueError:
            raise ValidationError("--k must be 'auto' or an integer") from None
    labels = att.cut_tree(Z, k)
    flag = att.pro_heritage_flag(scores, labels)
    att.write_clusters_csv(data.resp_id[mask], labels, flag, out / "clusters.csv")
    print(f"k={k}")
    if args.logit:
        covs = [c.strip() for c in args.logit.split(",") if c.strip()]
        ok = data.complete_rows(covs, items=False)[mask]
        X = np.column_stack([data.grouping(c)[mask][ok] for c in covs]).astype(float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            lr = att.fit_logistic(flag[ok], X, covs)
        att.write_logit_csv(lr, out / "logit.csv")
        print(f"logit_observations={lr.n_obs} aic={format_number(round(lr.aic, 6))}")
        if not lr.converged:
            _say(f"warning: logistic regression did not converge ({lr.message})")
            return EXIT_NONCONVERGED
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _merge_clusters(data, path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    lookup = {int(r["resp_id"]): float(r["pro_heritage"]) for r in rows}
    vals = np.array([lookup.get(int(r), np.nan) for r in data.respondents])
    return data.with_covariate("pro_heritage", vals)


def _group_labels(data, split):
    """Respondent-level labels for the cross-classification of indicators."""
    cols = [data.covariates[s] if s in data.covariates else None for s in split]
    for s, c in zip(split, cols):
        if c is None:
            raise ValidationError(f"unknown split covariate {s!r}")
    keys = [tuple(float(c[i]) for c in cols) for i in range(data.n_respondents)]
    return keys


def _group_name(split, key):
    return ",".join(f"{s}={format_number(v)}" for s, v in zip(split, key))


def cmd_report(args) -> int:
    spec, _, data = _load_model(args.spec, args.data)
    if args.clusters:
        data = _merge_clusters(data, args.clusters)
    lines = []
    res = _fit(data, spec, args)
    status = EXIT_OK if res.converged else EXIT_NONCONVERGED
    lines.append(f"model={res.model} respondents={res.n_respondents} "
                 f"observations={res.n_observations}")
    lines.append(f"log_likelihood={format_number(round(res.log_likelihood, 6))} "
                 f"aic={format_number(round(res.aic, 6))} bic={format_number(round(res.bic, 6))} "
                 f"converged={int(res.converged)}")
    lines.append("")
    lines.append("parameter estimate std_error")
    for n, v, s in zip(res.param_names, res.params, res.std_errors):
        lines.append(f"{n} {format_number(round(v, 6))} {format_number(round(s, 6))}")
    lines.append("")
    lines.append("attribute mean_wtp se_mean sd_wtp positive_share")
    for r in wtp_table(res):
        lines.append(" ".join([r["attribute"]] + [format_number(round(r[c], 6)) for c in
                                                  ("mean_wtp", "se_mean", "sd_wtp",
                                                   "positive_share")]))

    split = [s.strip() for s in (args.split or "").split(",") if s.strip()]
    if split:
        keys = _group_labels(data, split)
        groups = sorted({k for k in keys if not any(np.isnan(k))})
        if len(groups) < 2:
            warnings.warn(f"split {','.join(split)} defines a single group", UserWarning)
            _say(f"warning: split {','.join(split)} defines a single group")
        # interactions with a split covariate are constant within a group
        sub_spec = ModelSpec(random=spec.random, fixed=spec.fixed, asc=spec.asc,
                             interactions=tuple(i for i in spec.interactions
                                                if i[1] not in split),
                             distribution=spec.distribution, price=spec.price)
        columns = []
        for g in groups:
            mask = np.array([k == g for k in keys])
            name = _group_name(split, g)
            if mask.sum() < MIN_GROUP:
                _say(f"warning: group {name} has {int(mask.sum())} respondents "
                     f"(< {MIN_GROUP}); skipped")
                continue
            sub = _fit(data.subset(mask), sub_spec, args)
            if not sub.converged:
                status = EXIT_NONCONVERGED
            columns.append((name, int(mask.sum()), sub))
        if columns:
            lines.append("")
            lines.append("subgroup mean WTP")
            lines.append("attribute " + " ".join(n for n, _, _ in columns))
            lines.append("respondents " + " ".join(str(m) for _, m, _ in columns))
            attrs = [r["attribute"] for r in wtp_table(columns[0][2])]
            for a in attrs:
                lines.append(a + " " + " ".join(
                    format_number(round(wtp_point(r, a)[0], 6)) for _, _, r in columns))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return status


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_estimation_flags(p):
    p.add_argument("--model", choices=("mnl", "mixl"), default="mixl")
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--generator", choices=("halton", "pseudo"), default="halton")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--max-iter", type=int, help="iteration cap (estimator default if unset)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads for estimation (default: all cores)")
    common.add_argument("--config", help="flat key = value file of default flag values")

    parser = _Parser(prog="dcekit", description="Discrete choice experiment toolkit",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("design", parents=[common], help="generate a D-efficient design")
    p.add_argument("--attributes", help="attribute grammar file (default: built-in grammar)")
    p.add_argument("--cards", type=int, default=16)
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--alts", type=int, default=2)
    p.add_argument("--max-sweeps", type=int, default=50)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("fit", parents=[common], help="estimate an MNL or mixed logit")
    p.add_argument("--data", required=True)
    p.add_argument("--spec", required=True)
    _add_estimation_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("wtp", parents=[common], help="willingness-to-pay tables")
    p.add_argument("--result", required=True)
    p.add_argument("--data")
    p.add_argument("--spec")
    p.add_argument("--density", help="comma-separated attributes for individual WTP densities")
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--generator", choices=("halton", "pseudo"), default="halton")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--points", type=int, default=512)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_wtp)

    p = sub.add_parser("cluster", parents=[common], help="Ward clustering of attitude scores")
    p.add_argument("--attitudes", required=True)
    p.add_argument("--k", default="auto")
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--gap-B", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--logit", help="comma-separated covariates for the membership logit")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("report", parents=[common], help="fit, WTP and subgroup summary")
    p.add_argument("--data", required=True)
    p.add_argument("--spec", required=True)
    _add_estimation_flags(p)
    p.add_argument("--clusters", help="clusters.csv adding a pro_heritage covariate")
    p.add_argument("--split", help="comma-separated indicator covariates defining subgroups")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = read_flat_config(known.config)
    command = next((a for a in argv if not a.startswith("-") and a in
                    ("design", "fit", "wtp", "cluster", "report")), None)
    if command is None:
        return
    subparser = parser._subparsers._group_actions[0].choices[command]
    dests = {a.dest: a for a in subparser._actions}
    values = {}
    for k, v in cfg.items():
        dest = k.replace("-", "_")
        if dest not in dests or dest in ("help", "config", "func"):
            raise ValidationError(f"config key {k!r} is not a {command} option")
        action = dests[dest]
        values[dest] = action.type(v) if action.type else v
        action.required = False
    subparser.set_defaults(**values)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        return args.func(args)
    except (DCEError, ValueError, OSError) as e:
        _say(f"error: {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: bounds, score, search, bench, ablate.

Exit codes: 0 success, 1 a checked bound or numeric step failed, 2 bad
input (flags, config, files, infeasible budget).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import proxies as px
from .errors import NumericError, UsageError, ValidationError
from .harness import benchmark as hb
from .harness import reports
from .harness.correlation import spearman_rho
from .harness.training import DESK_TRAIN, parse_train_config
from .seeding import derive_seed
from .search import CachedScore, SearchConfig, evolve
from .space import PRESETS, count_flops, genome_parse, genome_serialize, get_space
from .theory import linear, relu

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

TREND_RHO = 0.3
BOUND_SUITES = ("linear", "gram", "relu-trend", "decay")


class CheckFailed(Exception):
    pass


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
    p.add_argument("--out", default="zico_out", help="directory for output files")
    p.add_argument("--jobs", type=int, default=1, help="worker processes; results do not depend on it")
    p.add_argument("--config", help="JSON file whose keys override flag defaults")


def _scoring_flags(p: argparse.ArgumentParser, proxy_default: str = "zico"):
    p.add_argument("--proxy", default=proxy_default, choices=px.PROXIES)
    p.add_argument("--data", default=None, help="data spec, e.g. gratings:noise=1.0,per_class=300")
    p.add_argument("--space", default="cell-desk64", choices=sorted(PRESETS))
    p.add_argument("--batches", type=int, default=hb.DEFAULT_N, help="number of proxy batches N")
    p.add_argument("--batch-size", type=int, default=128, help="proxy batch size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zico-nas", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="check the loss and eigenvalue bounds numerically")
    _common(p)
    p.add_argument("--which", choices=BOUND_SUITES + ("all",), default="all",
                   help="linear: one-step loss bounds and trends; gram: Gram-matrix drift and "
                        "eigenvalue bounds; relu-trend: gradient spread vs loss; decay: per-step "
                        "loss decay (informative)")
    p.add_argument("--trials", type=int, default=None,
                   help="trials per suite (default 1000 linear, 200 gram/relu-trend, 20 decay)")

    p = sub.add_parser("score", help="score one genome with one proxy")
    _common(p)
    p.add_argument("--genome", required=True, help="genome JSON file")
    _scoring_flags(p)

    p = sub.add_parser("search", help="evolutionary search under a FLOPs budget")
    _common(p)
    p.add_argument("--budget", type=float, default=math.inf, help="FLOPs budget in MACs")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--population", type=int, default=8)
    _scoring_flags(p)

    for name, helptext in (("bench", "proxy-vs-accuracy benchmark"), ("ablate", "ZiCo batch ablations")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        _scoring_flags(p)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--enumerate", action="store_true", help="use every genome (default)")
        g.add_argument("--sample", type=int, help="use a seeded sample of this many genomes")
        p.add_argument("--train", default="", help="training overrides, e.g. epochs=3,lr=0.05")
        if name == "ablate":
            p.add_argument("--axis", choices=("batches", "batchsize"), required=True)
            p.add_argument("--records", help="bench CSV whose accuracies to reuse instead of training")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read config {args.config}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {args.config} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValidationError("config file must hold a JSON object")
    known = set(vars(args)) - {"command", "config"}
    unknown = sorted(set(k.replace("-", "_") for k in cfg) - known)
    if unknown:
        raise ValidationError(f"unknown config keys {unknown}")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    subparser.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
    return parser.parse_args(argv)  # explicit flags still win


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check(ok: bool, line: str, failures: list):
    print(line + ("" if ok else "  <-- FAILED"))
    if not ok:
        failures.append(line)


# ------------------------------------------------------------------- bounds

def cmd_bounds(args) -> int:
    if args.trials is not None and args.trials < 1:
        raise ValidationError(f"--trials must be >= 1, got {args.trials}")
    out = _outdir(args)
    which = set(BOUND_SUITES) if args.which == "all" else {args.which}
    failures: list = []

    if "linear" in which:
        n = args.trials or 1000
        sweep = linear.random_sweep(n, args.seed)
        held = sum(t.holds(t.bound_mean) for t in sweep)
        typeset = sum(t.holds(t.bound_mean_typeset) for t in sweep)
        reports.emit_rows_csv([t.row() for t in sweep], out / "linear_mean_bound.csv")
        _check(held == n, f"mean-gradient bound satisfied: {held}/{n}", failures)
        print(f"mean-gradient bound with (2 - eta) as typeset: {typeset}/{n} (informative)")
        sweep6 = linear.random_sweep(n, args.seed, eta="1/M")
        held6 = sum(t.holds(t.bound_variance) for t in sweep6)
        reports.emit_rows_csv([t.row() for t in sweep6], out / "linear_variance_bound.csv")
        _check(held6 == n, f"variance bound at eta = 1/M satisfied: {held6}/{n}", failures)
        trend = linear.trend_population(n, args.seed)
        loss = [t.loss_after for t in trend]
        rho_mu = spearman_rho([t.sum_mu2 for t in trend], loss)
        rho_sig = spearman_rho([t.sum_sigma2 for t in trend], loss)
        reports.emit_rows_csv([t.row() for t in trend], out / "linear_trend.csv")
        _check(rho_mu <= -TREND_RHO, f"rho(sum mu^2, loss_after) = {rho_mu:+.4f} (need <= -{TREND_RHO})", failures)
        _check(rho_sig >= TREND_RHO, f"rho(sum sigma^2, loss_after) = {rho_sig:+.4f} (need >= +{TREND_RHO})", failures)

    if "gram" in which:
        n = args.trials or 200
        reps = relu.gram_suite(n, args.seed)
        params = relu.BoundParams(0.1, 0.1, 64)
        floor = params.probability_floor
        reports.emit_rows_csv([r.row() for r in reps], out / "gram_bounds.csv")
        frac = {k: sum(getattr(r, k) for r in reps) / n
                for k in ("displacement_ok", "lambda_min_ok", "lambda_max_ok")}
        _check(frac["displacement_ok"] >= floor, f"displacement within C: {frac['displacement_ok']:.3f} (need >= {floor:.2f})", failures)
        _check(frac["lambda_min_ok"] >= floor, f"lambda_min bound: {frac['lambda_min_ok']:.3f} (need >= {floor:.2f})", failures)
        _check(frac["lambda_max_ok"] >= floor, f"lambda_max bound: {frac['lambda_max_ok']:.3f} (need >= {floor:.2f})", failures)

    if "relu-trend" in which:
        n = args.trials or 200
        trials = relu.trend_population(n, args.seed)
        reports.emit_rows_csv([t.row() for t in trials], out / "relu_trend.csv")
        sig = [t.sigma_grad for t in trials]
        r_tr = spearman_rho(sig, [t.train_loss for t in trials])
        r_te = spearman_rho(sig, [t.test_loss for t in trials])
        _check(r_tr > TREND_RHO, f"rho(sigma_grad, train_loss) = {r_tr:+.4f} (need > {TREND_RHO})", failures)
        _check(r_te > TREND_RHO, f"rho(sigma_grad, test_loss) = {r_te:+.4f} (need > {TREND_RHO})", failures)

    if "decay" in which:
        n = args.trials or 20
        rows = []
        for k in range(n):
            train = linear.regression_set(8, 64, derive_seed(args.seed, "decay-data", k))
            params = relu.BoundParams(0.1, 0.1, 64)
            trial = relu.run_relu_epoch(train, None, 256, 0.1, 1, derive_seed(args.seed, "decay", k),
                                        record_history=True)
            rep = relu.check_step_decay(trial, train, params)
            rows.append({"trial": k, "steps": rep.steps, "step_decay_holds": rep.step_decay_holds,
                         "composed_holds": rep.composed_holds})
        reports.emit_rows_csv(rows, out / "loss_decay.csv")
        steps = sum(r["steps"] for r in rows)
        print(f"per-step loss decay: {sum(r['step_decay_holds'] for r in rows)}/{steps} (informative)")
        print(f"composed decay bound: {sum(r['composed_holds'] for r in rows)}/{steps} (informative)")

    return EXIT_FAIL if failures else EXIT_OK


# -------------------------------------------------------------------- score

def _context(args, train_text: str = "") -> hb.BenchmarkContext:
    if args.batches < 2 and args.proxy.startswith("zico"):
        raise ValidationError(f"ZiCo needs --batches >= 2, got {args.batches}")
    return hb.desk_context(args.data, args.space, args.seed, parse_train_config(train_text, DESK_TRAIN),
                           args.batches, args.batch_size)


def _read_genome(path, space):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read genome {path}: {exc.strerror}") from exc
    return genome_parse(text, space)


def cmd_score(args) -> int:
    ctx = _context(args)
    genome = _read_genome(args.genome, ctx.space)
    value = ctx.scorer().score(genome, args.proxy)
    if not math.isfinite(value):
        raise NumericError(f"{args.proxy} is not finite for {genome}")
    scorer = ctx.scorer()
    obj = {"proxy": args.proxy, "value": value, "genome_digest": genome.digest(),
           "seed": scorer.init_seed(genome)}
    text = reports.dumps(obj)
    if args.out:
        (_outdir(args) / "score.json").write_text(text)
    print(json.dumps(obj, sort_keys=True))
    return EXIT_OK


# ------------------------------------------------------------------- search

def cmd_search(args) -> int:
    ctx = _context(args)
    shape = ctx.train.image_shape
    config = SearchConfig(T=args.steps, B=args.budget, E=args.population, seed=args.seed, space=args.space,
                          proxy=args.proxy, n_batches=args.batches, batch_size=args.batch_size,
                          input_shape=shape, classes=ctx.classes)
    scorer = ctx.scorer()
    best, log = evolve(config, CachedScore(lambda g: scorer.score(g, args.proxy)))
    out = _outdir(args)
    (out / "search_best.json").write_text(genome_serialize(best) + "\n")
    log.write(out / "search_log.jsonl")
    flops = count_flops(ctx.space.to_spec(best, shape, ctx.classes))
    print(f"best {args.proxy}: {log.best_score:.10g}  flops: {flops}  genome: {best}")
    return EXIT_OK


# ------------------------------------------------------------ bench, ablate

def _print_table(report: hb.CorrelationReport):
    print(f"{'proxy':<16}{'kendall_tau':>12}{'spearman_rho':>14}{'n':>6}")
    for name, row in report.rows.items():
        print(f"{name:<16}{row['kendall_tau']:>12.4f}{row['spearman_rho']:>14.4f}{row['n']:>6}")


def cmd_bench(args) -> int:
    ctx = _context(args, args.train)
    report, records = hb.run_benchmark(ctx, px.PROXIES, args.sample, args.jobs)
    out = _outdir(args)
    reports.emit_csv([r.csv_row() for r in records], out / "bench.csv")
    reports.emit_json(report.to_dict(), out / "bench_report.json")
    _print_table(report)
    diff = report.tau("zico") - report.tau("params")
    print(f"tau(zico) - tau(params) = {diff:+.4f} (sign reported, not asserted)")
    return EXIT_OK


def cmd_ablate(args) -> int:
    ctx = _context(args, args.train)
    if args.records:
        rows = reports.read_csv(args.records)
        records = [hb.BenchmarkRecord(r["genome"], {}, r["accuracy"], seed=r["seed"]) for r in rows]
    else:
        _, records = hb.run_benchmark(ctx, ["params"], args.sample, args.jobs)
    if args.axis == "batches":
        table = hb.run_ablation_batches(ctx, records)
        key = "N"
    else:
        table = hb.run_ablation_batchsize(ctx, records)
        key = "batch_size"
    reports.emit_rows_csv(table, _outdir(args) / f"ablation_{args.axis}.csv")
    print(f"{key:>10}{'kendall_tau':>12}{'spearman_rho':>14}")
    for row in table:
        mark = "  (default)" if row["default"] else ""
        print(f"{row[key]:>10}{row['kendall_tau']:>12.4f}{row['spearman_rho']:>14.4f}{mark}")
    return EXIT_OK


COMMANDS = {"bounds": cmd_bounds, "score": cmd_score, "search": cmd_search,
            "bench": cmd_bench, "ablate": cmd_ablate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.jobs < 1:
            raise ValidationError(f"--jobs must be >= 1, got {args.jobs}")
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except (ValidationError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, CheckFailed) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands::

    qmmw validate --game matching-pennies
    qmmw run --game skewed-pennies --algo 3mw-2pe --T 10000 --seeds 20 --out runs/2pe
    qmmw estimator-stats --game matching-pennies --algo 3mw-1pe --deltas 0.2,0.1,0.05
    qmmw vs --game dominant --schedule power:0.1,0.9,0.7,0.2 --T 100000 --seeds 50
    qmmw report --out runs/2pe

Exit codes: 0 ok, 1 validation failure, 2 infeasible configuration.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import analysis as an
from . import game as qg
from . import learning as lrn
from ._backend import BACKEND
from .fixtures import FIXTURES, get_fixture
from .hermitian import ScheduleError, ValidationError
from .io import game_to_dict, load_game
from .seeding import derive_seed

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INFEASIBLE = 2


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def fmt(x):
    """Decimal text with 17 significant digits (exact round trip for doubles)."""
    return "%.17g" % x


# ---------------------------------------------------------------- config


def load_game_arg(spec):
    if spec in FIXTURES:
        return get_fixture(spec)
    if not os.path.exists(spec):
        raise CLIError(f"no builtin game or file named {spec!r}; builtins: {sorted(FIXTURES)}",
                       EXIT_INVALID)
    try:
        return load_game(spec)
    except ValidationError as exc:
        raise CLIError(f"invalid game spec {spec}: {exc}", EXIT_INVALID) from exc


def require_valid(game):
    rep = qg.validate(game)
    if not rep.ok:
        raise CLIError("game failed validation:\n  " + "\n  ".join(rep.lines()), EXIT_INVALID)


def parse_schedule(text):
    """``theorem`` | ``constant:GAMMA[,DELTA]`` | ``power:G0,P,D0,Q``."""
    text = (text or "theorem").strip()
    if text == "theorem":
        return {"kind": "theorem"}
    kind, _, rest = text.partition(":")
    try:
        vals = [float(v) for v in rest.split(",") if v.strip()]
    except ValueError as exc:
        raise CLIError(f"bad schedule {text!r}: {exc}", EXIT_INFEASIBLE) from exc
    if kind == "constant" and len(vals) in (1, 2):
        return {"kind": "constant", "gamma0": vals[0], "delta0": vals[1] if len(vals) == 2 else 0.0,
                "p": 0.0, "q": 0.0}
    if kind == "power" and len(vals) == 4:
        return {"kind": "power", "gamma0": vals[0], "p": vals[1], "delta0": vals[2], "q": vals[3]}
    raise CLIError(f"bad schedule {text!r}; use theorem, constant:G[,D] or power:G0,P,D0,Q",
                   EXIT_INFEASIBLE)


def build_schedule(sched, algo, T, game):
    try:
        if sched["kind"] == "theorem":
            return lrn.theorem_tuning(algo, T, qg.constants(game), game.dims)
        return lrn.Schedule(sched["gamma0"], sched["delta0"], sched["p"], sched["q"])
    except ScheduleError as exc:
        raise CLIError(f"infeasible schedule: {exc}", EXIT_INFEASIBLE) from exc


def resolve_reference(game, ref):
    if ref == "none":
        return None
    if ref == "uniform":
        return qg.uniform_profile(game)
    if ref in ("eq", "auto"):
        if game.equilibrium is None:
            if ref == "eq":
                raise CLIError("game has no equilibrium candidate", EXIT_INFEASIBLE)
            return None
        return [np.array(x) for x in game.equilibrium]
    raise CLIError(f"unknown reference {ref!r}; use auto, eq, uniform or none", EXIT_INFEASIBLE)


def canonical_hash(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------- runs


def _run_one(job):
    game, algo, schedule, T, seed, reference, stride = job
    rng = np.random.default_rng(seed)
    return lrn.run(game, algo, schedule, T, rng, reference=reference, stride=stride)


def run_seeds(game, algo, schedule, T, seeds, reference, stride, workers=1):
    jobs = [(game, algo, schedule, T, s, reference, stride) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def write_trajectory_csv(path, tr):
    n = len(tr.dims)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "gap", "bregman"] + [f"payoff_{i + 1}" for i in range(n)]
                   + ["energy_residual", "delta_t", "gamma_t"])
        for k in range(len(tr.t)):
            w.writerow([str(int(tr.t[k])), fmt(tr.gap[k]), fmt(tr.bregman[k])]
                       + [fmt(u) for u in tr.payoffs[k]]
                       + [fmt(tr.residual[k]), fmt(tr.delta[k]), fmt(tr.gamma[k])])


def write_summary_csv(path, trajs, bound):
    gap = an.aggregate(trajs, column="gap")
    breg = an.aggregate(trajs, column="bregman")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "gap_mean", "gap_median", "gap_q10", "gap_q90",
                    "bregman_mean", "bregman_median", "bregman_q10", "bregman_q90", "bound"])
        for k in range(len(gap.t)):
            w.writerow([str(int(gap.t[k]))]
                       + [fmt(v) for v in (gap.mean[k], gap.median[k], gap.q10[k], gap.q90[k],
                                           breg.mean[k], breg.median[k], breg.q10[k],
                                           breg.q90[k], bound[k])])
    return gap


def write_rate_fit_csv(path, fit, tail_from):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "tail_from", "slope", "intercept", "r2", "n_points"])
        if fit is None:
            w.writerow(["gap_mean", fmt(tail_from), "nan", "nan", "nan", "0"])
        else:
            w.writerow(["gap_mean", fmt(tail_from), fmt(fit.slope), fmt(fit.intercept),
                        fmt(fit.r2), str(fit.n)])


def sha256_file(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def execute_run(config, out, workers=1):
    """Run a fully specified config and write CSVs plus a manifest into ``out``."""
    game = load_game_arg(config["game"])
    require_valid(game)
    try:
        algo = lrn.as_algo(config["algo"])
    except ValidationError as exc:
        raise CLIError(str(exc), EXIT_INFEASIBLE) from exc
    if algo is lrn.Algo.ONE_POINT and not game.is_povm:
        raise CLIError("bandit mode requires POVM form", EXIT_INFEASIBLE)
    T = int(config["T"])
    if T < 1:
        raise CLIError("--T must be >= 1", EXIT_INFEASIBLE)
    schedule = build_schedule(config["schedule"], algo, T, game)
    reference = resolve_reference(game, config["reference"])
    base = int(config["base_seed"])
    seeds = [derive_seed(base, i) for i in range(int(config["seeds"]))]
    if not seeds:
        raise CLIError("--seeds must be >= 1", EXIT_INFEASIBLE)
    try:
        trajs = run_seeds(game, algo, schedule, T, seeds, reference, config["stride"], workers)
    except ScheduleError as exc:
        raise CLIError(f"infeasible schedule: {exc}", EXIT_INFEASIBLE) from exc

    os.makedirs(out, exist_ok=True)
    files = []
    for i, (seed, tr) in enumerate(zip(seeds, trajs)):
        name = f"seed_{i:04d}.csv"
        write_trajectory_csv(os.path.join(out, name), tr)
        files.append({"index": i, "seed": seed, "file": name,
                      "sha256": sha256_file(os.path.join(out, name))})
    t = trajs[0].t
    if schedule.kind == "constant":
        bound = lrn.bound_curve(algo, t, qg.constants(game), game.dims, schedule)
    else:
        bound = np.full(len(t), np.nan)
    gap = write_summary_csv(os.path.join(out, "summary.csv"), trajs, bound)
    fit = None
    if game.zero_sum:
        try:
            fit = an.tail_rate_fit(gap.t, gap.mean, T)
        except ValidationError:
            fit = None
    write_rate_fit_csv(os.path.join(out, "rate_fit.csv"), fit, T / 10.0)
    manifest = {
        "config": config,
        "config_hash": canonical_hash(config),
        "game": game_to_dict(game),
        "game_hash": canonical_hash(game_to_dict(game)),
        "schedule": schedule.to_dict(),
        "seeds": files,
        "version": __version__,
        "backend": BACKEND,
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return trajs, schedule, fit


def config_from_args(args):
    if getattr(args, "manifest", None):
        with open(args.manifest, encoding="utf-8") as fh:
            return json.load(fh)["config"]
    if args.game is None:
        raise CLIError("--game is required", EXIT_INFEASIBLE)
    return {
        "game": args.game,
        "algo": args.algo,
        "schedule": parse_schedule(args.schedule),
        "T": int(args.T),
        "seeds": int(args.seeds),
        "base_seed": int(args.base_seed),
        "stride": None if args.stride is None else int(args.stride),
        "reference": args.reference,
    }


# ---------------------------------------------------------------- commands


def cmd_validate(args, out):
    game = load_game_arg(args.game)
    rep = qg.validate(game)
    label = game.name or args.game
    for line in rep.lines():
        print(f"{label}: {line}", file=out)
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_run(args, out):
    config = config_from_args(args)
    dest = args.out or "qmmw-run"
    trajs, schedule, fit = execute_run(config, dest, workers=args.workers)
    print(f"wrote {len(trajs)} trajectories to {dest}", file=out)
    print(f"schedule: {schedule.to_dict()}", file=out)
    if np.isfinite(trajs[0].gap[-1]):
        final = np.mean([tr.gap[-1] for tr in trajs])
        print(f"mean final gap: {final:.6g}", file=out)
    if fit is not None:
        print(f"tail slope: {fit.slope:.4f} (R^2 {fit.r2:.3f}, {fit.n} points)", file=out)
    return EXIT_OK


def cmd_estimator_stats(args, out):
    game = load_game_arg(args.game)
    require_valid(game)
    try:
        algo = lrn.as_algo(args.algo)
    except ValidationError as exc:
        raise CLIError(str(exc), EXIT_INFEASIBLE) from exc
    if algo is lrn.Algo.MMW:
        raise CLIError("estimator-stats needs --algo 3mw-2pe or 3mw-1pe", EXIT_INFEASIBLE)
    if algo is lrn.Algo.ONE_POINT and not game.is_povm:
        raise CLIError("bandit mode requires POVM form", EXIT_INFEASIBLE)
    if args.n_mc < an.MIN_MC:
        raise CLIError(f"--n-mc must be >= {an.MIN_MC}", EXIT_INFEASIBLE)
    try:
        deltas = [float(d) for d in args.deltas.split(",") if d.strip()]
    except ValueError as exc:
        raise CLIError(f"bad --deltas: {exc}", EXIT_INFEASIBLE) from exc
    profile = qg.uniform_profile(game)
    header = ["delta", "n", "bias", "bias_se", "bias_bound", "bias_pass", "second_moment",
              "second_se", "second_bound", "second_pass", "sample_norm_max", "sample_norm_bound",
              "sample_norm_pass"]
    rows = []
    for j, delta in enumerate(deltas):
        rng = np.random.default_rng(derive_seed(args.seed, j))
        try:
            r = an.estimator_moments(game, profile, algo, delta, args.n_mc, rng)
        except ScheduleError as exc:
            raise CLIError(f"infeasible radius: {exc}", EXIT_INFEASIBLE) from exc
        rows.append([fmt(r.delta), str(r.n), fmt(r.bias), fmt(r.bias_se), fmt(r.bias_bound),
                     str(r.bias_pass), fmt(r.second_moment), fmt(r.second_se), fmt(r.second_bound),
                     str(r.second_pass), fmt(r.sample_norm_max), fmt(r.sample_norm_bound),
                     str(r.sample_norm_pass)])
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def _negated(series_name):
    if series_name.endswith("diverges"):
        return series_name[: -len("diverges")] + "converges"
    return series_name[: -len("converges")] + "diverges"


def cmd_vs(args, out):
    sched = parse_schedule(args.schedule or "power:0.1,0.9,0.7,0.2")
    if sched["kind"] != "power":
        raise CLIError("vs needs a power schedule power:G0,P,D0,Q", EXIT_INFEASIBLE)
    verdict = lrn.schedule_validate_vs(sched["p"], sched["q"])
    for s in verdict.series:
        print(f"{s.name}: {'ok' if s.ok else 'FAILS'} ({s.reason})", file=out)
    if not verdict.valid:
        names = ", ".join(_negated(s.name) for s in verdict.failing)
        raise CLIError(f"invalid schedule: {names}", EXIT_INFEASIBLE)
    game = load_game_arg(args.game)
    require_valid(game)
    if not game.is_povm:
        raise CLIError("bandit mode requires POVM form", EXIT_INFEASIBLE)
    eq = resolve_reference(game, "eq")
    cert = qg.vs_certificate(game, eq, args.radius, args.cert_samples,
                             np.random.default_rng(derive_seed(args.base_seed, 1 << 20)))
    print(f"certificate: max {cert.max_value:.6g}, violations {cert.violation_fraction:.4g}, "
          f"{'plausible' if cert.plausible else 'NOT plausible'}", file=out)
    if not cert.plausible:
        print("warning: candidate fails the variational-stability certificate", file=out)
    config = {"game": args.game, "algo": lrn.Algo.ONE_POINT.value, "schedule": sched,
              "T": int(args.T), "seeds": int(args.seeds), "base_seed": int(args.base_seed),
              "stride": None if args.stride is None else int(args.stride), "reference": "eq"}
    if args.out:
        trajs, _, _ = execute_run(config, args.out, workers=args.workers)
    else:
        schedule = build_schedule(sched, lrn.Algo.ONE_POINT, config["T"], game)
        seeds = [derive_seed(config["base_seed"], i) for i in range(config["seeds"])]
        try:
            trajs = run_seeds(game, lrn.Algo.ONE_POINT, schedule, config["T"], seeds, eq,
                              config["stride"], args.workers)
        except ScheduleError as exc:
            raise CLIError(f"infeasible schedule: {exc}", EXIT_INFEASIBLE) from exc
    res = an.vs_success_rate(trajs, eq, args.threshold)
    for i, b in enumerate(res.finals):
        print(f"seed {i}: final bregman {fmt(b)}", file=out)
    print(f"success fraction (D < {args.threshold:g}): {res.fraction:.4f}", file=out)
    return EXIT_OK


def cmd_report(args, out):
    d = args.out
    if not d or not os.path.isdir(d):
        raise CLIError(f"no run directory {d!r}", EXIT_INVALID)
    with open(os.path.join(d, "manifest.json"), encoding="utf-8") as fh:
        man = json.load(fh)
    with open(os.path.join(d, "summary.csv"), encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    with open(os.path.join(d, "rate_fit.csv"), encoding="utf-8") as fh:
        fit = next(csv.DictReader(fh))
    cfg = man["config"]
    last = rows[-1]
    print(f"game {cfg['game']}, algo {cfg['algo']}, T {cfg['T']}, seeds {cfg['seeds']}", file=out)
    print(f"schedule {man['schedule']}", file=out)
    print(f"final mean gap {float(last['gap_mean']):.6g} "
          f"[q10 {float(last['gap_q10']):.6g}, q90 {float(last['gap_q90']):.6g}], "
          f"bound {float(last['bound']):.6g}", file=out)
    print(f"final mean bregman {float(last['bregman_mean']):.6g}", file=out)
    print(f"tail slope {float(fit['slope']):.4f} over t >= {float(fit['tail_from']):g}", file=out)
    print(f"version {man['version']} ({man['backend']}), config {man['config_hash'][:12]}",
          file=out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="qmmw", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, algo_default="mmw"):
        sp.add_argument("--game", help="builtin name or path to a JSON game spec")
        sp.add_argument("--algo", default=algo_default, help="mmw, 3mw-2pe or 3mw-1pe")
        sp.add_argument("--schedule", default=None,
                        help="theorem | constant:G[,D] | power:G0,P,D0,Q")
        sp.add_argument("--T", type=int, default=1000, help="horizon")
        sp.add_argument("--seeds", type=int, default=1, help="number of seeds")
        sp.add_argument("--base-seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--stride", type=int, default=None, help="recording stride")
        sp.add_argument("--workers", type=int, default=1, help="worker processes")

    v = sub.add_parser("validate", help="check a game spec")
    v.add_argument("--game", required=True)
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run learners and write CSVs")
    common(r)
    r.add_argument("--reference", default="auto", help="auto, eq, uniform or none")
    r.add_argument("--manifest", default=None, help="rerun the config stored in a manifest")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("estimator-stats", help="Monte-Carlo moments of gradient estimators")
    e.add_argument("--game", required=True)
    e.add_argument("--algo", default="3mw-2pe")
    e.add_argument("--deltas", default="0.2,0.1,0.05")
    e.add_argument("--n-mc", type=int, default=100_000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default=None, help="CSV path (default stdout)")
    e.set_defaults(func=cmd_estimator_stats)

    s = sub.add_parser("vs", help="last-iterate experiment with a power schedule")
    common(s, algo_default="3mw-1pe")
    s.add_argument("--threshold", type=float, default=1e-2)
    s.add_argument("--radius", type=float, default=0.1)
    s.add_argument("--cert-samples", type=int, default=10_000)
    s.set_defaults(func=cmd_vs, T=100_000)

    rep = sub.add_parser("report", help="summarize a run directory")
    rep.add_argument("--out", required=True, help="run directory")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ScheduleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

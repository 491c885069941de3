"""Command-line entry point.

Exit codes: 0 success, 1 bound violation or unconfirmed claim, 2 configuration
or usage error, 3 infeasible instance parameters.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import config as cfg
from .core import InfeasibleInstanceError, MAX_SEED, RandomStream
from .estimators import (fmt, stopping_time_checks, stopping_time_rhs,
                         verify_mv_concentration, verify_pull_count_bound)
from .experiments import (builtin_catalog, cell_stream, counterexample_experiment,
                          minimax_scaling_experiment, run_scenario)
from .policies import MvUcb, policy_label, run_policy, simulate
from .regret import write_reports

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _seed(args, doc=None) -> int:
    if args.seed is not None:
        seed = args.seed
    elif doc and "seed" in doc:
        seed = doc["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise cfg.ConfigError("key 'seed' must be an integer")
    elif os.environ.get("MVBANDIT_SEED"):
        try:
            seed = int(os.environ["MVBANDIT_SEED"])
        except ValueError as exc:
            raise UsageError("MVBANDIT_SEED must be an integer") from exc
    else:
        seed = 0
    if not 0 <= seed <= MAX_SEED:
        raise UsageError(f"seed {seed} is not an unsigned 64-bit integer")
    return seed


class Outputs:
    """Collects target paths and refuses to clobber existing files without --force."""

    def __init__(self, out_dir, force: bool):
        self.dir = Path(out_dir or ".")
        self.force = force

    def path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        if p.exists() and not self.force:
            raise UsageError(f"{p} exists; pass --force to overwrite")
        return p

    def check(self, names) -> None:
        for n in names:
            p = self.dir / n
            if p.exists() and not self.force:
                raise UsageError(f"{p} exists; pass --force to overwrite")


def _scenarios(args):
    if not args.config:
        raise UsageError("--config is required")
    doc = cfg.load(args.config)
    seed = _seed(args, doc)
    scenarios = cfg.parse_scenarios(doc, seed, cfg.default_name(args.config))
    if args.replications is not None:
        for sc in scenarios:
            sc.replications = args.replications
    return scenarios


def _write_trace(sc, out: Outputs, plot: bool) -> None:
    from .plots import downsample, reward_trace

    T = max(sc.horizons)
    h = sc.horizons.index(T)
    trace = run_policy(sc.instance, sc.policies[0], T, cell_stream(sc.seed, 0, h))
    idx = downsample(T)
    with open(out.path(f"{sc.name}_trace.csv"), "w") as fh:
        fh.write("t,arm,reward\n")
        for k in idx:
            fh.write(f"{k + 1},{int(trace.choices[k])},{fmt(trace.rewards[k])}\n")
    if plot:
        reward_trace(trace, out.path(f"{sc.name}_trace.png"),
                     f"{sc.name}: {policy_label(sc.policies[0])}, T={T}")


def _run_scenarios(args, plot: bool) -> int:
    scenarios = _scenarios(args)
    out = Outputs(args.out, args.force)
    names = []
    for sc in scenarios:
        names.append(f"{sc.name}_regret.csv")
        if plot:
            names.append(f"{sc.name}_regret.png")
        if sc.trace:
            names.append(f"{sc.name}_trace.csv")
            if plot:
                names.append(f"{sc.name}_trace.png")
    out.check(names)
    for sc in scenarios:
        results = run_scenario(sc, jobs=args.jobs)
        write_reports([r.report for r in results], out.path(f"{sc.name}_regret.csv"))
        for r in results:
            rep = r.report
            print(f"{sc.name}  {rep.policy:<36} T={rep.T:<7d} proxy regret "
                  f"{rep.proxy_regret_empirical.value:.4f} ± {rep.proxy_regret_empirical.se:.4f}"
                  + ("" if rep.se_defined else "  (se undefined: 1 replication)"))
        if plot:
            from .plots import regret_curves
            regret_curves(results, out.path(f"{sc.name}_regret.png"), sc.name)
        if sc.trace:
            _write_trace(sc, out, plot)
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _run_scenarios(args, plot=False)


def cmd_regret_curve(args) -> int:
    return _run_scenarios(args, plot=True)


def cmd_verify_bounds(args) -> int:
    if not args.config:
        raise UsageError("--config is required")
    doc = cfg.load(args.config)
    seed = _seed(args, doc)
    tail = cfg.parse_tail(doc)
    stopping = cfg.parse_stopping(doc)
    if tail is None and stopping is None:
        raise cfg.ConfigError("nothing to check: add a 'tail' or 'stopping' table")
    out = Outputs(args.out, args.force)
    names = []
    if tail:
        names += ["tail_check.csv", "tail_check.png"]
    if stopping:
        names += ["stopping_time.csv"]
    out.check(names)
    failures = []
    root = RandomStream(seed)

    if tail:
        reps = args.replications or tail["replications"]
        rows = []
        reports = []
        for c, case in enumerate(tail["cases"]):
            rep = verify_mv_concentration(case["arm"], case["rho"], case["a"], tail["grid"], reps,
                                          root.child(0, c))
            reports.append(rep)
            for r in rep.rows:
                rows.append((c, r))
                if r.violated:
                    failures.append(f"tail case {c} ({case['arm']}, rho={case['rho']:g}, a={case['a']:g}): "
                                    f"s={r.s} delta={r.delta:g} {r.tail_side} empirical={r.empirical:.3g} "
                                    f"bound={r.bound:.3g}")
        with open(out.path("tail_check.csv"), "w") as fh:
            fh.write("case,s,delta,tail_side,empirical,bound,std_err,violated\n")
            for c, r in rows:
                fh.write(f"{c},{r.s},{fmt(r.delta)},{r.tail_side},{fmt(r.empirical)},{fmt(r.bound)},"
                         f"{fmt(r.std_err)},{int(r.violated)}\n")
        from .estimators import TailCheckReport
        from .plots import tail_check
        merged = TailCheckReport([r for rep in reports for r in rep.rows], reps)
        tail_check(merged, out.path("tail_check.png"), "sample mean-variance tails")
        print(f"tail check: {sum(len(r.rows) for r in reports)} cells, "
              f"{sum(len(r.violations) for r in reports)} violated")

    if stopping:
        inst, policy, T = stopping["instance"], stopping["policy"], stopping["T"]
        reps = args.replications or stopping["replications"]
        if T < 2:
            raise cfg.ConfigError("key 'stopping.T' must be at least 2")
        batch = simulate(inst, policy, T, reps, root.child(1), jobs=args.jobs)
        checks = stopping_time_checks(inst, batch)
        lines = ["check,arm,lhs,std_err,rhs,satisfied"]
        for ch in checks:
            lines.append(f"stopping_time,{ch.arm},{fmt(ch.lhs)},{fmt(ch.std_err)},{fmt(ch.rhs)},{int(ch.satisfied)}")
            if not ch.satisfied:
                failures.append(f"stopping time arm {ch.arm}: {ch.lhs:.4g} > {ch.rhs:.4g}")
        if isinstance(policy, MvUcb) and inst.min_gap > 0:
            for ch in verify_pull_count_bound(inst, policy.bonus(inst), T, batch):
                lines.append(f"pull_count,{ch.arm},{fmt(ch.lhs)},{fmt(ch.std_err)},{fmt(ch.rhs)},{int(ch.satisfied)}")
                if not ch.satisfied:
                    failures.append(f"pull count arm {ch.arm}: {ch.lhs:.4g} > {ch.rhs:.4g}")
        with open(out.path("stopping_time.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"stopping-time check: rhs (log T + 2)/a = {stopping_time_rhs(T, inst.a):.4f}, "
              f"{sum(not c.satisfied for c in checks)} arms violated")

    for f in failures:
        print("VIOLATED " + f)
    return EXIT_VIOLATION if failures else EXIT_OK


def cmd_counterexample(args) -> int:
    seed = _seed(args)
    reps = args.replications if args.replications is not None else 10**6
    if reps < 10**5:
        raise UsageError("counterexample needs --replications >= 100000")
    res = counterexample_experiment(reps, seed, args.threshold)
    print(f"xi single-arm benchmark: {res.xi_single_arm:.17g}")
    print(f"xi threshold policy (threshold={args.threshold:g}): "
          f"{res.xi_threshold_policy.value:.6f} ± {res.xi_threshold_policy.se:.6f} "
          f"({reps} replications)")
    print("CONFIRMED" if res.suboptimality_confirmed else "NOT-CONFIRMED")
    return EXIT_OK if res.suboptimality_confirmed else EXIT_VIOLATION


def cmd_minimax(args) -> int:
    doc = cfg.load(args.config) if args.config else {}
    seed = _seed(args, doc)
    params = cfg.parse_minimax(doc)
    if args.replications is not None:
        params["replications"] = args.replications
    out = Outputs(args.out, args.force)
    out.check(["minimax.csv", "minimax.png"])
    rows, slope = minimax_scaling_experiment(params["horizons"], params["rho"], params["replications"],
                                             seed, params["d6"], params["policy"], jobs=args.jobs)
    with open(out.path("minimax.csv"), "w") as fh:
        fh.write("T,delta,regret_F,se_F,regret_Fprime,se_Fprime,max_regret\n")
        for r in rows:
            fh.write(f"{r.T},{fmt(r.delta)},{fmt(r.regret_F.value)},{fmt(r.regret_F.se)},"
                     f"{fmt(r.regret_Fprime.value)},{fmt(r.regret_Fprime.se)},{fmt(r.max_regret)}\n")
    from .plots import minimax_scaling
    minimax_scaling(rows, slope, out.path("minimax.png"))
    for r in rows:
        print(f"T={r.T:<7d} delta={r.delta:.5f} max regret {r.max_regret:.4f}")
    print("log-log slope: " + ("undefined (single horizon)" if slope is None else f"{slope:.4f}"))
    return EXIT_OK


def cmd_catalog(args) -> int:
    import tomli_w

    seed = _seed(args)
    doc = {"seed": seed, "scenario": [cfg.scenario_to_dict(sc) for sc in builtin_catalog(seed)]}
    text = tomli_w.dumps(doc)
    if args.out:
        out = Outputs(args.out, args.force)
        out.path("catalog.toml").write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--out", help="output directory, created if absent (default: current directory)")
    common.add_argument("--seed", type=_u64, help="root seed; falls back to MVBANDIT_SEED")
    common.add_argument("--replications", type=_positive, help="override replication counts")
    common.add_argument("--jobs", type=_positive, default=os.cpu_count() or 1,
                        help="worker processes (output does not depend on this)")
    common.add_argument("--force", action="store_true", help="overwrite existing result files")

    parser = argparse.ArgumentParser(prog="mvbandit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run scenarios and write regret CSVs")
    sub.add_parser("regret-curve", parents=[common], help="as simulate, plus regret-vs-T figures")
    sub.add_parser("verify-bounds", parents=[common], help="check concentration and pull-count bounds")
    p = sub.add_parser("counterexample", parents=[common], help="two-step known-model counterexample")
    p.add_argument("--threshold", type=float, default=0.5)
    sub.add_parser("minimax", parents=[common], help="worst-case regret scaling of MV-DSEE")
    sub.add_parser("catalog", parents=[common], help="emit the built-in scenario catalog")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "regret-curve": cmd_regret_curve,
    "verify-bounds": cmd_verify_bounds,
    "counterexample": cmd_counterexample,
    "minimax": cmd_minimax,
    "catalog": cmd_catalog,
}


def _join_values(argv):
    # argparse takes "-1e9" for an option; bind numeric values to their flag
    out = []
    it = iter(argv)
    for a in it:
        if a == "--threshold":
            out.append(f"{a}={next(it, '')}")
        else:
            out.append(a)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_join_values(sys.argv[1:] if argv is None else list(argv)))
    try:
        return COMMANDS[args.command](args)
    except InfeasibleInstanceError as exc:
        print(f"error: infeasible parameters: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (cfg.ConfigError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment runner.

Subcommands: gen, run-hem, run-selfish, run-cohem, run-joint,
robustness-sweep, report. Run commands write a metrics file (``--out``) and a
per-slot load file next to it (``<out>.loads.tsv``). Failures exit nonzero
with one line ``error: <category>: <message>`` on stderr.
"""

import argparse
import sys

from ._validation import ContractError, InputError, ScenarioParseError
from .coordinator import CoHEMParams
from .experiments import (
    DEFAULT_EVAL_SAMPLES,
    pick_defectors,
    report,
    robustness_sweep,
    run_cohem,
    run_hem,
    run_joint,
    run_selfish,
)
from .scenario import ScenarioConfig, load_scenario, read_results, save_scenario, synthesize, write_profiles, write_results

EXIT_CODES = {"input": 2, "parse": 3, "contract": 4, "io": 5}


def _config_overrides(pairs):
    fields = ScenarioConfig.__dataclass_fields__
    out = {}
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        if not sep or key not in fields:
            raise InputError(f"--set expects KEY=VALUE with KEY a scenario field, got {pair!r}")
        default = fields[key].default
        if isinstance(default, tuple):
            parts = [p for p in raw.split(",") if p]
            # hour windows are given as start-end pairs
            if default and isinstance(default[0], tuple):
                value = tuple(tuple(int(x) for x in p.split("-")) for p in parts)
            elif key == "appliances":
                value = tuple(parts)
            else:
                value = tuple(float(p) for p in parts)
        elif isinstance(default, bool):
            value = raw.lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            value = int(raw)
        elif isinstance(default, float):
            value = float(raw)
        else:
            value = raw
        out[key] = value
    return out


def _params(args):
    return CoHEMParams(
        iterations=args.iterations, psi=args.psi, n_samples=args.samples, seed=args.seed, eval_every=args.eval_every
    )


def _write(outcome, path):
    write_results(path, outcome.rows)
    if outcome.profiles:
        write_profiles(path + ".loads.tsv", outcome.profiles)


def build_parser():
    parser = argparse.ArgumentParser(prog="cohem", description="Coordinated home energy management experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", required=True, help="results file (tab-separated)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--eval-samples", type=int, default=DEFAULT_EVAL_SAMPLES, help="evaluation realizations")

    def algo(p):
        p.add_argument("--iterations", type=int, default=200)
        p.add_argument("--psi", type=int, default=15, help="consensus sub-steps per iteration")
        p.add_argument("--samples", type=int, default=100, help="Monte Carlo samples per load estimate")
        p.add_argument("--eval-every", type=int, default=10)

    p = sub.add_parser("gen", help="synthesize a scenario file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--households", type=int, default=20)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="scenario configuration override")

    common(sub.add_parser("run-hem", help="per-residence HEM under the retail price"))
    common(sub.add_parser("run-selfish", help="all residences run selfish HEM"))

    p = sub.add_parser("run-cohem", help="decentralized coordinated scheduling")
    common(p)
    algo(p)
    p.add_argument("--defectors", type=int, default=0, help="number of residences keeping selfish HEM")

    p = sub.add_parser("run-joint", help="joint procurement and scheduling vs bid-then-schedule")
    common(p)
    algo(p)
    p.add_argument("--weight", type=float, default=10.0)

    p = sub.add_parser("robustness-sweep", help="deviation cost against defector share")
    common(p)
    algo(p)
    p.add_argument("--defectors", default="0,0.25,0.5,0.75,1", help="comma-separated defector fractions")
    p.add_argument("--seeds", type=int, default=3, help="number of random defector assignments")

    p = sub.add_parser("report", help="summary tables from results files")
    p.add_argument("results", nargs="*")
    p.add_argument("--out", default="-")
    return parser


def run(args):
    if args.command == "gen":
        cfg = ScenarioConfig(H=args.households, **_config_overrides(args.set))
        save_scenario(synthesize(cfg, args.seed), args.out)
        return
    if args.command == "report":
        rows = [row for path in args.results for row in read_results(path)]
        text = report(rows)
        if args.out == "-":
            sys.stdout.write(text)
        else:
            with open(args.out, "w") as fh:
                fh.write(text)
        return
    nb = load_scenario(args.scenario)
    if args.command == "run-hem":
        outcome = run_hem(nb, args.eval_samples, args.seed)
    elif args.command == "run-selfish":
        outcome = run_selfish(nb, args.eval_samples, args.seed)
    elif args.command == "run-cohem":
        defectors = pick_defectors(nb.H, args.defectors, args.seed)
        outcome, _ = run_cohem(nb, _params(args), defectors, args.eval_samples)
    elif args.command == "run-joint":
        outcome = run_joint(nb, _params(args), args.weight, n_eval=args.eval_samples)
    else:
        try:
            fractions = tuple(float(f) for f in args.defectors.split(",") if f)
        except ValueError:
            raise InputError(f"--defectors expects comma-separated fractions, got {args.defectors!r}") from None
        outcome = robustness_sweep(nb, fractions, _params(args), tuple(range(args.seeds)), args.eval_samples)
    _write(outcome, args.out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except (InputError, ScenarioParseError, ContractError) as exc:
        category = getattr(exc, "category", "input")
        print(f"error: {category}: {exc}", file=sys.stderr)
        return EXIT_CODES[category]
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``atmas`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 protocol property failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from collections import Counter
from importlib import resources
from pathlib import Path

from atmas import experiments as ex
from atmas.config import ConfigError, ScenarioConfig
from atmas.scenario.dataset import mix_streams, generate_streams

logger = logging.getLogger("atmas")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROPERTY = 3

EXPERIMENT_DIRS = {
    "protocol-suite": "protocol-suite",
    "sweep-illegal": "illegal-access",
    "sweep-factors": "factor-count",
    "sweep-combos": "factor-combo",
    "gen-dataset": "dataset",
    "simulate": "simulation",
}


def default_config_path() -> Path:
    return Path(str(resources.files("atmas") / "data" / "default.toml"))


def load_scenario(path: str | None, seed: int | None) -> ScenarioConfig:
    cfg = ScenarioConfig.load(path) if path else ScenarioConfig.load(default_config_path())
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    return cfg


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atmas", description="ATMAS experiments and protocol simulations")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="scenario TOML (default: packaged default scenario)")
        p.add_argument("--seed", type=_u64, help="override the scenario seed")
        p.add_argument("--out", default="results", help="results root directory")
        p.add_argument("--tag", default=None, help="run directory name (default: experiment.tag or a UTC timestamp)")
        return p

    p = common(sub.add_parser("protocol-suite", help="adversary scenarios and protocol properties"))
    p.add_argument("--trials", type=int, default=None, help="random single-bit tamper trials")

    p = common(sub.add_parser("sweep-illegal", help="accuracy against the illegal-access share"))
    p.add_argument("--algorithms", type=_names)
    p.add_argument("--fractions", type=_floats)
    p.add_argument("--seeds", type=int, help="number of seeds (default: experiment.n_seeds)")
    p.add_argument("--jobs", type=int, default=1)

    for verb, text in (("sweep-factors", "accuracy against cumulative factor count"),
                       ("sweep-combos", "accuracy of every 3-factor combination")):
        p = common(sub.add_parser(verb, help=text))
        p.add_argument("--algorithm", default="forest")
        p.add_argument("--seeds", type=int)
        p.add_argument("--jobs", type=int, default=1)

    p = common(sub.add_parser("gen-dataset", help="write a labelled factor dataset as CSV"))
    p.add_argument("--fraction", type=float, default=None, help="illegal fraction (default: dataset.illegal_fraction)")

    common(sub.add_parser("simulate", help="run the configured network simulation"))
    return parser


def _seeds(cfg: ScenarioConfig, n: int | None) -> list[int]:
    return [cfg.seed + i for i in range(n if n is not None else cfg.experiment.n_seeds)]


def _run_dir(args, cfg: ScenarioConfig) -> Path:
    tag = args.tag if args.tag is not None else cfg.experiment.tag
    return ex.run_directory(args.out, EXPERIMENT_DIRS[args.verb], tag)


def _print_summary(summary) -> None:
    for s in summary:
        print(f"{s.algorithm:7s} frac={s.illegal_fraction:<5g} factors={ex.factor_label(s.factors):18s} "
              f"n={s.n:<3d} acc={s.mean_acc:.4f} +/- {s.std_acc:.4f}")


def cmd_sweep(args, cfg: ScenarioConfig) -> int:
    seeds = _seeds(cfg, args.seeds)
    if args.verb == "sweep-illegal":
        spec = ex.illegal_access_spec(cfg, seeds=seeds, algorithms=args.algorithms, fractions=args.fractions)
    elif args.verb == "sweep-factors":
        spec = ex.factor_count_spec(cfg, seeds=seeds, algorithm=args.algorithm)
    else:
        spec = ex.factor_combo_spec(cfg, seeds=seeds, algorithm=args.algorithm)
    spec.validate()
    out = _run_dir(args, cfg)
    res = ex.run_and_write(spec, out, progress=logger.info, jobs=args.jobs)
    if args.verb == "sweep-combos":
        ranking = ex.combo_ranking(res.summary)
        with_f1, without = ex.group_means_by_factor(res.summary, 1)
        print(f"best combination: {ex.factor_label(ranking[0].factors)} acc={ranking[0].mean_acc:.4f}")
        print(f"mean acc with factor 1: {with_f1:.4f}; without: {without:.4f}")
    else:
        _print_summary(res.summary)
    failed = sum(1 for r in res.rows if r.status.startswith("failed"))
    if failed:
        print(f"{failed} cell(s) failed; see the status column")
    for name, path in sorted(res.files.items()):
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_protocol_suite(args, cfg: ScenarioConfig) -> int:
    from atmas.security_suite import TAMPER_TRIALS, run_protocol_suite, write_results

    out = _run_dir(args, cfg)
    results = run_protocol_suite(cfg, out, trials=args.trials or TAMPER_TRIALS)
    rows_path = write_results(results, out / "rows.csv")
    per = {}
    for r in results:
        per.setdefault(r.scenario, Counter())[r.status] += 1
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scenario", "passed", "failed"))
        for name, c in per.items():
            w.writerow((name, c["pass"], c["fail"]))
    for r in results:
        print(f"{r.status.upper():4s} {r.scenario}/{r.property}: expected {r.expected}, observed {r.observed}")
    n_fail = sum(1 for r in results if not r.passed)
    print(f"{len(results) - n_fail}/{len(results)} properties passed; rows: {rows_path}")
    return EXIT_PROPERTY if n_fail else EXIT_OK


def cmd_gen_dataset(args, cfg: ScenarioConfig) -> int:
    frac = cfg.dataset.illegal_fraction if args.fraction is None else args.fraction
    if not 0 <= frac <= 0.95:
        raise ConfigError(f"illegal fraction {frac} outside [0, 0.95]")
    out = _run_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    ds = mix_streams(generate_streams(cfg, cfg.seed), frac)
    path = out / "dataset.csv"
    ds.to_csv(path)
    print(f"{len(ds)} windows ({int(ds.y.sum())} spoofed) -> {path}")
    return EXIT_OK


def cmd_simulate(args, cfg: ScenarioConfig) -> int:
    from atmas.sim.runner import run

    report = run(cfg)
    log_path, summary_path = report.write(_run_dir(args, cfg))
    for s in report.sessions:
        print(f"{s.session_id}: {s.outcome} {s.reason}".rstrip())
    if report.leaks:
        print(f"secret bytes observed on the wire: {report.leaks}")
    print(f"events: {log_path}\nsummary: {summary_path}")
    return EXIT_PROPERTY if report.leaks else EXIT_OK


COMMANDS = {
    "protocol-suite": cmd_protocol_suite,
    "sweep-illegal": cmd_sweep,
    "sweep-factors": cmd_sweep,
    "sweep-combos": cmd_sweep,
    "gen-dataset": cmd_gen_dataset,
    "simulate": cmd_simulate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_scenario(args.config, args.seed)
        return COMMANDS[args.verb](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

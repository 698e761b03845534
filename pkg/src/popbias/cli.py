"""
Command-line entry point: ``popbias {ingest,simulate,report}``.

Exit codes: 0 success, 2 parse error, 3 invariant violation,
4 simulation aborted, 5 report checks failed.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import sys
from collections import defaultdict
from dataclasses import fields
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from . import dataset as D
from .errors import DataParseError, InvariantViolation, SimulationAborted
from .recsys import ALGORITHMS, Hyperparams, default_hyperparams
from .report import (
    METRICS_HEADER,
    default_criteria_path,
    evaluate_checks,
    format_gap_scenarios,
    gap_scenarios,
    load_criteria,
    read_metrics,
)
from .simulator import METRICS, MetricSeries, SimulationConfig, run_feedback_loop

EXIT_OK, EXIT_PARSE, EXIT_INVARIANT, EXIT_ABORTED, EXIT_CHECKS = 0, 2, 3, 4, 5

INTERACTIONS_CSV = "interactions.csv"
GROUPS_CSV = "groups.csv"
SUMMARY_JSON = "summary.json"

log = logging.getLogger("popbias")


def _fail(code: int, msg: str) -> int:
    print(f"popbias: error: {msg}", file=sys.stderr)
    return code


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(args) -> int:
    out = Path(args.out)
    try:
        if args.dataset == "movielens":
            if len(args.input) == 1 and Path(args.input[0]).is_dir():
                ratings, users = Path(args.input[0]) / "ratings.dat", Path(args.input[0]) / "users.dat"
            elif len(args.input) == 2:
                ratings, users = args.input
            else:
                return _fail(EXIT_PARSE, "movielens needs --input DIR or --input ratings.dat users.dat")
            raw, groups = D.parse_movielens(ratings, users)
            user_dict = item_dict = None
        else:
            if len(args.input) != 1:
                return _fail(EXIT_PARSE, "yelp needs exactly one --input reviews file")
            user_dict, item_dict = D.IdDictionary(), D.IdDictionary()
            raw = D.parse_yelp(args.input[0], user_dict, item_dict)
            groups = D.load_groups(args.groups, user_dict) if args.groups else None
        if not len(raw):
            raise InvariantViolation("input contains no interactions")

        filtered = D.k_core_filter(raw, args.k_core)
        if not len(filtered):
            raise InvariantViolation(f"nothing survives {args.k_core}-core filtering")
        sample = D.sample_users(filtered, args.sample_users, args.seed)
        if groups is not None:
            D.check_groups(sample, groups)
    except DataParseError as e:
        return _fail(EXIT_PARSE, str(e))
    except InvariantViolation as e:
        return _fail(EXIT_INVARIANT, str(e))

    out.mkdir(parents=True, exist_ok=True)
    D.save_interactions(sample, out / INTERACTIONS_CSV)
    if groups is not None:
        D.save_groups({u: groups[u] for u in sample.user_ids.tolist()}, out / GROUPS_CSV)
    else:
        log.warning("no group file given; group metrics will be unavailable for this data")
    if user_dict is not None:
        user_dict.save(out / "user_ids.csv")
        item_dict.save(out / "item_ids.csv")
    summary = {
        "dataset": args.dataset,
        "users": sample.n_users,
        "items": sample.n_items,
        "ratings": len(sample),
        "density": D.density(sample),
        "k_core": args.k_core,
        "sample_users": args.sample_users,
        "seed": args.seed,
        "digest": sample.digest(),
    }
    _write_json(out / SUMMARY_JSON, summary)
    print(
        f"{summary['users']} users, {summary['items']} items, "
        f"{summary['ratings']} ratings, density {summary['density']:.4f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def load_config(path, dataset: str) -> SimulationConfig:
    """
    Read an INI file with a ``[simulation]`` section (``algorithm`` is
    required) and an optional ``[hyperparams]`` section.  Hyperparameters
    not given default to the tuned values for the dataset and algorithm.
    """
    path = Path(path)
    cp = configparser.ConfigParser()
    try:
        if not cp.read(path):
            raise DataParseError("file not found", path)
    except configparser.Error as e:
        raise DataParseError(str(e).splitlines()[0], path) from None
    if not cp.has_section("simulation"):
        raise DataParseError("missing [simulation] section", path)
    sim = dict(cp["simulation"])
    hp = dict(cp["hyperparams"]) if cp.has_section("hyperparams") else {}

    def split(v):
        return tuple(x.strip() for x in v.split(",") if x.strip())

    try:
        algorithm = sim.pop("algorithm")
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}")
        dataset = sim.pop("dataset", dataset)
        base = default_hyperparams(dataset, algorithm).to_dict()
        types = {f.name: f.type for f in fields(Hyperparams)}
        for k, v in hp.items():
            if k not in types or k == "algorithm":
                raise ValueError(f"unknown hyperparameter {k!r}")
            base[k] = {"int": int, "float": float}.get(types[k], str)(v)
        kwargs = {}
        conv = {"iterations": int, "top_n": int, "seed": int, "test_fraction": float,
                "metrics": split, "groups": split}
        for k, v in sim.items():
            if k not in conv:
                raise ValueError(f"unknown simulation key {k!r}")
            kwargs[k] = conv[k](v)
        return SimulationConfig(Hyperparams(**base), dataset=dataset, **kwargs)
    except KeyError as e:
        raise DataParseError(f"missing key {e}", path) from None
    except (ValueError, TypeError) as e:
        raise DataParseError(str(e), path) from None


def config_dict(config: SimulationConfig) -> dict:
    return {
        "dataset": config.dataset,
        "iterations": config.iterations,
        "top_n": config.top_n,
        "seed": config.seed,
        "metrics": list(config.metrics),
        "groups": list(config.groups),
        "test_fraction": config.test_fraction,
        "hyperparams": config.hyperparams.to_dict(),
    }


def config_hash(config: SimulationConfig) -> str:
    canon = json.dumps(config_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_metrics_csv(series: MetricSeries, path: Path):
    with open(path, "w", newline="") as f:
        f.write(",".join(METRICS_HEADER) + "\n")
        for r in series.sorted_records():
            f.write(f"{r.iteration},{r.algorithm},{r.dataset},{r.metric},{r.group},{r.value:.6f}\n")


def write_plot_files(series: MetricSeries, out: Path) -> list[Path]:
    "One ``metric_<name>.dat`` per metric: an iteration column then one column per group."
    by_metric: dict[str, dict[str, dict[int, float]]] = defaultdict(dict)
    for (metric, group), s in series.series().items():
        by_metric[metric][group] = s
    paths = []
    for metric in sorted(by_metric):
        cols = sorted(by_metric[metric])
        iters = sorted({t for g in cols for t in by_metric[metric][g]})
        p = out / f"metric_{metric}.dat"
        with open(p, "w") as f:
            f.write("# iteration " + " ".join(cols) + "\n")
            for t in iters:
                vals = [by_metric[metric][g].get(t) for g in cols]
                f.write(f"{t} " + " ".join("nan" if v is None else f"{v:.6f}" for v in vals) + "\n")
        paths.append(p)
    return paths


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def cmd_simulate(args) -> int:
    data, out = Path(args.data), Path(args.out)
    try:
        summary_path = data / SUMMARY_JSON
        if not summary_path.is_file():
            raise DataParseError("not an ingest output directory (summary.json missing)", data)
        summary = json.loads(summary_path.read_text())
        config = load_config(args.config, summary.get("dataset", "movielens"))
        groups = None
        if (data / GROUPS_CSV).is_file():
            groups = D.load_groups(data / GROUPS_CSV)
        elif config.needs_groups:
            raise InvariantViolation(
                f"group metrics {[m for m in config.metrics if m != 'global_gini']} "
                f"requested but {data / GROUPS_CSV} does not exist"
            )
        log0 = D.load_interactions(data / INTERACTIONS_CSV)
        if "digest" in summary and log0.digest() != summary["digest"]:
            raise InvariantViolation("interactions.csv does not match the digest recorded at ingest")
        if groups is not None and config.needs_groups:
            D.check_groups(log0, groups, config.groups)
    except (DataParseError, json.JSONDecodeError) as e:
        return _fail(EXIT_PARSE, str(e))
    except InvariantViolation as e:
        return _fail(EXIT_INVARIANT, str(e))

    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config_hash": config_hash(config),
        "config": config_dict(config),
        "algorithm": config.algorithm,
        "dataset": config.dataset,
        "data_digest": log0.digest(),
        "seed": config.seed,
        "version": __version__,
        "started": _now(),
        "finished": None,
        "status": "running",
        "outputs": ["metrics.csv"] + [f"metric_{m}.dat" for m in config.metrics],
    }
    _write_json(out / "manifest.json", manifest)

    try:
        series = run_feedback_loop(log0, groups, config)
    except SimulationAborted as e:
        manifest.update(status="aborted", finished=_now(), error=str(e))
        _write_json(out / "manifest.json", manifest)
        return _fail(EXIT_ABORTED, f"simulation aborted at {e}")

    write_metrics_csv(series, out / "metrics.csv")
    plots = write_plot_files(series, out)
    manifest.update(
        status="complete",
        finished=_now(),
        outputs=["metrics.csv"] + [p.name for p in plots],
        final_log_size=len(series.final_log),
    )
    _write_json(out / "manifest.json", manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    if args.table3:
        print(format_gap_scenarios(gap_scenarios()))
        if not args.inputs:
            return EXIT_OK
        print()
    if not args.inputs:
        return _fail(EXIT_PARSE, "report needs --in and/or --table3")
    try:
        data = read_metrics(args.inputs)
        checks = load_criteria(args.check or default_criteria_path())
    except DataParseError as e:
        return _fail(EXIT_PARSE, str(e))
    if not data:
        print("no data")
        return EXIT_CHECKS
    results = evaluate_checks(checks, data)
    width = max(len(r.name) for r in results) if results else 0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} checks passed")
    return EXIT_OK if n_ok == len(results) else EXIT_CHECKS


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="popbias", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = p.add_subparsers(dest="command", required=True)

    ing = sub.add_parser("ingest", help="parse, k-core filter and sample a raw dataset")
    ing.add_argument("--dataset", choices=("movielens", "yelp"), required=True)
    ing.add_argument("--input", nargs="+", required=True,
                     help="MovieLens directory or ratings.dat users.dat; Yelp reviews JSON-lines")
    ing.add_argument("--groups", help="user_id,group CSV (Yelp only)")
    ing.add_argument("--k-core", type=int, default=10)
    ing.add_argument("--sample-users", type=int, default=1000)
    ing.add_argument("--seed", type=int, default=0)
    ing.add_argument("--out", required=True)
    ing.set_defaults(func=cmd_ingest)

    sim = sub.add_parser("simulate", help="run the feedback loop for one algorithm")
    sim.add_argument("--data", required=True, help="directory written by ingest")
    sim.add_argument("--config", required=True, help="INI file with [simulation] and [hyperparams]")
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    rep = sub.add_parser("report", help="check metric series and print the worked scenarios")
    rep.add_argument("--in", dest="inputs", nargs="+", default=[], help="metrics.csv files")
    rep.add_argument("--check", help="criteria JSON (defaults to the bundled criteria)")
    rep.add_argument("--table3", action="store_true", help="print the between-group GAP scenarios")
    rep.set_defaults(func=cmd_report)
    return p


def _set_threads():
    raw = os.environ.get("POPBIAS_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        log.warning("ignoring POPBIAS_THREADS=%r", raw)
        return
    if n > 0:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    if args.command == "simulate":
        _set_threads()
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

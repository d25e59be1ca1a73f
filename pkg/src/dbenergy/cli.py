"""
dbenergy command-line interface.

Commands:
    tdp         resolve the TDP of a processor model (default: this host)
    ingest      create storage for a CSV dataset and load it into every target
    measure     measure one query on one database
    experiment  run the full randomized protocol over all databases and queries
    compare     compare one query across two or more databases

Exit codes: 0 ok, 1 usage, 2 configuration, 3 connection, 4 measurement/data.
"""

from __future__ import annotations

import argparse
import logging
import secrets
import statistics
import sys
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, NoReturn

from dbenergy import __version__
from dbenergy.config import load_query_file, load_tool_config
from dbenergy.energy import RAM_POWER_W_PER_GB
from dbenergy.errors import ConfigError, DbEnergyError, InsufficientDataError
from dbenergy.experiment import (
    DEFAULT_COOLDOWN_S,
    DEFAULT_TRIALS,
    ExperimentPlan,
    ExperimentRunner,
    JobFailure,
    aggregate,
    cells_of,
    warn_if_busy,
)
from dbenergy.ingest import (
    DEFAULT_BATCH_SIZE,
    SQL_KINDS,
    ingest_all,
    load_schema,
    prompt_schema,
    read_dataset,
    validate_schema,
)
from dbenergy.manager import ConnectionManager
from dbenergy.reporting import (
    AGGREGATE_FILE,
    MEASUREMENTS_FILE,
    RUN_META_FILE,
    format_timestamp,
    render_comparison,
    render_summary,
    write_aggregate_csv,
    write_measurements_csv,
    write_run_meta,
)
from dbenergy.sampler import open_sampler
from dbenergy.tdp import (
    Registry,
    convert_upstream,
    detect_cpu,
    load_bundled_registry,
    load_registry_file,
    resolve_tdp,
)
from dbenergy.tracker import Tracker
from dbenergy.types import (
    CpuIdentity,
    DbConfig,
    DbKind,
    QuerySpec,
    TdpResolution,
    ToolConfig,
    TrialRecord,
)

logger = logging.getLogger("dbenergy.cli")

USAGE_ERROR = 1


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


@dataclass
class HostContext:
    """Host facts and power coefficients shared by the measuring commands."""

    cpu: CpuIdentity
    model: str
    tdp: TdpResolution
    ram_power_w_per_gb: float
    ram_power_overridden: bool


def _registry(path: str | None) -> Registry:
    return load_registry_file(path) if path else load_bundled_registry()


def _host_context(config: ToolConfig) -> HostContext:
    cpu = detect_cpu()
    model = config.get("tdp_model") or cpu.raw_model_string
    tdp = resolve_tdp(_registry(config.get("tdp_registry_path")), model)
    override = config.get("ram_power_w_per_gb")
    logger.info(
        f"CPU {model!r}: {tdp.tdp_watts} W ({tdp.match_kind.value}), "
        f"{cpu.core_count} logical cores"
    )
    return HostContext(
        cpu=cpu,
        model=model,
        tdp=tdp,
        ram_power_w_per_gb=override if override is not None else RAM_POWER_W_PER_GB,
        ram_power_overridden=override is not None,
    )


def _find_query(queries: Sequence[QuerySpec], label: str) -> QuerySpec:
    for query in queries:
        if query.label == label:
            return query
    available = ", ".join(q.label for q in queries)
    raise ConfigError(f"unknown query label {label!r}; available labels: {available}")


def _select_databases(config: ToolConfig, ids: Sequence[str]) -> list[DbConfig]:
    by_id = {db["database_id"]: db for db in config["databases"]}
    unknown = [i for i in ids if i not in by_id]
    if unknown:
        raise ConfigError(
            f"unknown database id(s): {', '.join(unknown)}; configured: {', '.join(by_id)}"
        )
    return [by_id[i] for i in ids]


def _run_meta(
    command: str,
    plan: ExperimentPlan,
    host: HostContext,
    config: ToolConfig,
    run_id: str,
    started_at: datetime,
    failures: Sequence[JobFailure],
) -> dict[str, Any]:
    sampler = config["sampler"]
    return {
        "tool": "dbenergy",
        "version": __version__,
        "command": command,
        "run_id": run_id,
        "timestamp": format_timestamp(started_at),
        "seed": plan.rng_seed,
        "trials": plan.trials,
        "cooldown_s": plan.cooldown_s,
        "databases": [db["database_id"] for db in plan.databases],
        "queries": [q.label for q in plan.queries],
        "host_cpu": host.cpu.raw_model_string,
        "core_count": host.cpu.core_count,
        "tdp": {
            "model": host.model,
            "tdp_watts": host.tdp.tdp_watts,
            "match_kind": host.tdp.match_kind.value,
            "matched_key": host.tdp.matched_key,
            "score": host.tdp.score,
        },
        "ram_scope": sampler.get("ram_scope", "process"),
        "sampler_interval_s": sampler.get("interval_s"),
        "scripted_sampler": bool(sampler.get("script")),
        "ram_power_w_per_gb": host.ram_power_w_per_gb,
        "ram_power_overridden": host.ram_power_overridden,
        "failures": [asdict(f) for f in failures],
    }


def _run_plan(
    plan: ExperimentPlan,
    config: ToolConfig,
    host: HostContext,
    manager: ConnectionManager,
) -> tuple[ExperimentRunner, list[TrialRecord]]:
    adapters = manager.open(plan.databases)
    sampler = open_sampler(config["sampler"], host.cpu)
    try:
        tracker = Tracker(sampler, host.tdp, host.cpu, host.ram_power_w_per_gb)
        runner = ExperimentRunner(plan, adapters, tracker)
        return runner, runner.run()
    finally:
        sampler.close()


def _convert_registry(source: str, out: str | None) -> int:
    if not out:
        raise ConfigError("--convert needs --out (registry CSV to write)")
    try:
        with open(source, newline="", encoding="utf-8") as src:
            with open(out, "w", newline="", encoding="utf-8") as dest:
                count = convert_upstream(src, dest)
    except FileNotFoundError as e:
        raise ConfigError(f"upstream table not found: {e.filename}") from None
    except OSError as e:
        raise ConfigError(f"cannot convert {source} to {out}: {e}") from e
    load_registry_file(out)
    print(f"{count} processors written to {out}")
    return 0


def cmd_tdp(args: argparse.Namespace) -> int:
    """Print the TDP resolution of a model string or of the host CPU."""
    if args.convert:
        return _convert_registry(args.convert, args.out)
    model = args.model if args.model is not None else detect_cpu().raw_model_string
    resolution = resolve_tdp(_registry(args.registry), model)
    logger.info(f"Resolving {model!r}")
    parts = [str(resolution.tdp_watts), resolution.match_kind.value]
    if resolution.matched_key:
        parts.append(resolution.matched_key)
    print(" ".join(parts))
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    """Create storage for a dataset and load it into every configured target."""
    config = load_tool_config(args.config)
    dataset = read_dataset(args.dataset)
    schema = load_schema(args.schema) if args.schema else prompt_schema(dataset.header)
    sql_targets = any(DbKind(db["kind"]) in SQL_KINDS for db in config["databases"])
    validate_schema(schema, dataset.header, require_primary_key=sql_targets)
    table = args.table or config.get("table_name", "dataset")

    with ConnectionManager() as manager:
        adapters = manager.open(config["databases"])
        counts = ingest_all(
            adapters.values(),
            schema,
            dataset,
            table,
            replace=args.replace,
            batch_size=args.batch_size,
        )
    for database_id, count in counts.items():
        print(f"{database_id}: {count} rows")
    return 0


def cmd_measure(args: argparse.Namespace) -> int:
    """Measure one query on one database for N trials."""
    config = load_tool_config(args.config)
    queries = load_query_file(args.query_file)
    spec = _find_query(queries, args.label)
    (db,) = _select_databases(config, [args.db])
    plan = ExperimentPlan(
        databases=[db],
        queries=[spec],
        trials=args.trials,
        cooldown_s=args.cooldown,
        sampler=config["sampler"],
    )
    host = _host_context(config)

    with ConnectionManager() as manager:
        runner, records = _run_plan(plan, config, host, manager)

    if args.out:
        write_measurements_csv(records, args.out)
    if records:
        mean = statistics.fmean(r.measurement.total_energy_j for r in records)
        print(f"{db['database_id']}/{spec.label}: mean total {mean:.6f} J over {len(records)} trial(s)")
    for failure in runner.failures:
        logger.error(f"trial {failure.trial_index} {failure.database_id}/{failure.query_label}: {failure.error}")
    if runner.failures:
        return max(f.exit_code for f in runner.failures)
    return 0


def _experiment(
    args: argparse.Namespace,
    command: str,
    databases: list[DbConfig],
    queries: list[QuerySpec],
    config: ToolConfig,
) -> int:
    seed = args.seed if args.seed is not None else secrets.randbits(64)
    plan = ExperimentPlan(
        databases=databases,
        queries=queries,
        trials=args.trials,
        cooldown_s=args.cooldown,
        rng_seed=seed,
        sampler=config["sampler"],
    )
    host = _host_context(config)
    if not config["sampler"].get("script"):
        warn_if_busy()

    started_at = datetime.now(timezone.utc)
    with ConnectionManager() as manager:
        runner, records = _run_plan(plan, config, host, manager)
    result = aggregate(records, cells_of(plan))

    if args.out:
        out = Path(args.out)
        write_measurements_csv(records, out / MEASUREMENTS_FILE)
        write_aggregate_csv(result, out / AGGREGATE_FILE)
        write_run_meta(
            _run_meta(command, plan, host, config, runner.run_id, started_at, runner.failures),
            out / RUN_META_FILE,
        )

    for query in plan.queries:
        try:
            print(render_comparison(result, query.label))
        except InsufficientDataError as e:
            print(f"query: {query.label}\n{e}")
        print()
    if len(plan.queries) > 1:
        print(render_summary(result))

    if not records:
        logger.error("No job succeeded")
        return max((f.exit_code for f in runner.failures), default=4)
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    """Run every query on every database for N shuffled trials."""
    config = load_tool_config(args.config)
    queries = load_query_file(args.query_file)
    return _experiment(args, "experiment", config["databases"], queries, config)


def cmd_compare(args: argparse.Namespace) -> int:
    """Run one query on two or more databases and print the comparison."""
    config = load_tool_config(args.config)
    queries = load_query_file(args.query_file)
    spec = _find_query(queries, args.label)
    if args.dbs:
        ids = [i.strip() for i in args.dbs.split(",") if i.strip()]
    else:
        ids = [db["database_id"] for db in config["databases"]]
    databases = _select_databases(config, ids)
    if len(databases) < 2:
        raise ConfigError(f"need >= 2 databases to compare, got {len(databases)}")
    return _experiment(args, "compare", databases, [spec], config)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="dbenergy",
        description="Measure the CPU and RAM energy of database queries.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("tdp", help="resolve a processor model to its TDP")
    p.add_argument("model", nargs="?", help="model string (default: detected host CPU)")
    p.add_argument("--registry", help="TDP registry CSV (default: bundled)")
    p.add_argument("--convert", metavar="UPSTREAM", help="convert an upstream Model,TDP table")
    p.add_argument("--out", help="registry CSV written by --convert")
    p.set_defaults(func=cmd_tdp)

    p = sub.add_parser("ingest", help="load a CSV dataset into every configured database")
    p.add_argument("--config", required=True, help="tool config (JSON)")
    p.add_argument("--dataset", required=True, help="dataset CSV")
    p.add_argument("--schema", help="schema file (JSON); prompts when omitted")
    p.add_argument("--table", help="table/collection name (default: config table_name)")
    p.add_argument("--replace", action="store_true", help="drop and recreate existing storage")
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE, help="rows per insert batch")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("measure", help="measure one query on one database")
    p.add_argument("--config", required=True, help="tool config (JSON)")
    p.add_argument("--db", required=True, help="database_id to measure")
    p.add_argument("--query-file", required=True, help="query file (JSON)")
    p.add_argument("--label", required=True, help="query label")
    p.add_argument("--trials", type=int, default=1, help="number of executions (default 1)")
    p.add_argument("--cooldown", type=float, default=0.0, help="idle seconds after each run")
    p.add_argument("--out", help="measurements CSV to write")
    p.set_defaults(func=cmd_measure)

    for name, helptext in (
        ("experiment", "run all queries on all databases with shuffled trials"),
        ("compare", "compare one query across databases"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="tool config (JSON)")
        p.add_argument("--query-file", required=True, help="query file (JSON)")
        p.add_argument("--trials", type=int, default=DEFAULT_TRIALS, help="trials per job (default 10)")
        p.add_argument(
            "--cooldown",
            type=float,
            default=DEFAULT_COOLDOWN_S,
            help="idle seconds after each job (default 30)",
        )
        p.add_argument("--seed", type=int, help="unsigned 64-bit shuffle seed (default: random)")
        if name == "experiment":
            p.add_argument("--out", required=True, help="output directory")
            p.set_defaults(func=cmd_experiment)
        else:
            p.add_argument("--label", required=True, help="query label")
            p.add_argument("--dbs", help="comma-separated database ids (default: all)")
            p.add_argument("--out", help="output directory")
            p.set_defaults(func=cmd_compare)
    return parser


def configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger().setLevel(level)


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else USAGE_ERROR
    configure_logging(args.verbose, args.quiet)

    try:
        code: int = args.func(args)
    except DbEnergyError as e:
        logger.error(str(e))
        return e.exit_code
    return code


if __name__ == "__main__":
    sys.exit(main())

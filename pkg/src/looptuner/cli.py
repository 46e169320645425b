"""Command-line surface: optimize, check, campaign, report, replay.

Every flag has a config-file equivalent (dotted keys, `key = value` lines,
mandatory `version` key); precedence is flags > config file > defaults.
Exit codes are stable: 0 ok, 2 usage, 3 kernel parse error, 4 provider
error, 5 backend error, 6 aborted dialogue.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import re
import sys
from pathlib import Path

from .backend import BackendConfig, BackendError, ExecBackend
from .legality import (
    Illegal,
    Legal,
    SolverFailure,
    assert_semantics_preserved,
    check_legal,
)
from .llm import HttpProvider, LLMProviderConfig, TransportError
from .orchestrator import OrchestratorConfig, run_dialogue
from .parser import KernelParseError, parse_kernel, parse_kernel_file
from .records import (
    RecordFormatError,
    config_hash,
    kernel_hash,
    load_run_record,
    scripted_provider,
)
from .schedule import ScheduleParseError, parse_schedule, print_schedule
from .stats import (
    bootstrap_ci,
    load_pools,
    write_bestof_grid,
    write_median_report,
    write_token_report,
    write_viability_report,
)
from .transform import FuseShifts, SkewFactor, prevalidate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_KERNEL_PARSE = 3
EXIT_PROVIDER = 4
EXIT_BACKEND = 5
EXIT_ABORTED = 6

CONFIG_VERSION = 1


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# config file
# ---------------------------------------------------------------------------


def load_config_file(path: str | Path) -> dict:
    """Dotted-key `key = value` lines; `#` comments; explicit version key."""
    tree: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise CliError(f"{path}:{lineno}: expected 'key = value'", EXIT_USAGE)
        key, value = (p.strip() for p in body.split("=", 1))
        node = tree
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise CliError(f"{path}:{lineno}: {key} conflicts with a scalar", EXIT_USAGE)
        node[parts[-1]] = value
    version = tree.get("version")
    if version is None:
        raise CliError(f"{path}: config file must declare 'version = {CONFIG_VERSION}'", EXIT_USAGE)
    if int(version) != CONFIG_VERSION:
        raise CliError(f"{path}: unsupported config version {version}", EXIT_USAGE)
    return tree


def _cfg_get(tree: dict, dotted: str):
    node = tree
    for p in dotted.split("."):
        if not isinstance(node, dict) or p not in node:
            return None
        node = node[p]
    return node


def effective(flag_value, tree: dict, dotted: str, default, convert=str):
    """flags > config file > defaults."""
    if flag_value is not None:
        return flag_value
    raw = _cfg_get(tree, dotted)
    if raw is not None:
        if convert is bool:
            return str(raw).lower() in ("1", "true", "yes", "on")
        return convert(raw)
    return default


# ---------------------------------------------------------------------------
# shared construction
# ---------------------------------------------------------------------------


def _orchestrator_config(args, tree: dict) -> OrchestratorConfig:
    return OrchestratorConfig(
        max_iterations=effective(args.max_iters, tree, "orchestrator.max_iterations", 30, int),
        max_quit_pushes=effective(args.max_quit_pushes, tree, "orchestrator.max_quit_pushes", 5, int),
        max_exchanges=effective(args.max_exchanges, tree, "orchestrator.max_exchanges", 90, int),
        feedback_enabled=effective(args.feedback, tree, "orchestrator.feedback_enabled", True, bool),
        analysis_phase_enabled=effective(args.analysis, tree, "orchestrator.analysis_phase_enabled", True, bool),
        reasoning_required=effective(args.reasoning, tree, "orchestrator.reasoning_required", True, bool),
        hardware_in_prompt=effective(args.hardware, tree, "orchestrator.hardware_in_prompt", True, bool),
        hardware_description=effective(args.hardware_description, tree, "orchestrator.hardware_description", None),
    )


def _backend_config(args, tree: dict) -> BackendConfig:
    return BackendConfig(
        mode=effective(args.backend, tree, "backend.mode", "simulated"),
        compiler_cmd=effective(args.compiler_cmd, tree, "backend.compiler_cmd", "cc -O3 -fopenmp {src} -o {bin}"),
        timeout_s=effective(args.timeout, tree, "backend.timeout_s", 60, int),
        warmups=effective(args.warmups, tree, "backend.warmups", 1, int),
        reps=effective(args.reps, tree, "backend.reps", 5, int),
        threads=effective(args.threads, tree, "backend.threads", 0, int),
    )


def _provider(args, tree: dict):
    spec = effective(args.provider, tree, "provider.kind", None)
    if spec is None:
        raise CliError("no provider configured: pass --provider scripted:PATH or --provider http", EXIT_USAGE)
    if spec.startswith("scripted:"):
        path = spec.split(":", 1)[1]
        try:
            return lambda: scripted_provider(path)
        except RecordFormatError as e:
            raise CliError(str(e), EXIT_PROVIDER)
    if spec == "http":
        cfg = LLMProviderConfig(
            endpoint=effective(args.endpoint, tree, "provider.endpoint", ""),
            model=effective(args.model, tree, "provider.model", ""),
            temperature=effective(args.temperature, tree, "provider.temperature", None, float),
            max_output_tokens=effective(args.max_output_tokens, tree, "provider.max_output_tokens", None, int),
            retries=effective(args.retries, tree, "provider.retries", 2, int),
            api_key_env=effective(args.api_key_env, tree, "provider.api_key_env", "LOOPTUNER_API_KEY"),
        )
        if not cfg.endpoint:
            raise CliError("http provider requires --endpoint", EXIT_USAGE)
        return lambda: HttpProvider(cfg)
    raise CliError(f"unknown provider spec {spec!r}", EXIT_USAGE)


def _parse_kernel_or_die(path: str):
    p = Path(path)
    if not p.exists():
        raise CliError(f"kernel file not found: {path}", EXIT_KERNEL_PARSE)
    try:
        return parse_kernel_file(path)
    except KernelParseError as e:
        raise CliError(f"{path}: {e}", EXIT_KERNEL_PARSE)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_optimize(args) -> int:
    tree = load_config_file(args.config) if args.config else {}
    kernel = _parse_kernel_or_die(args.kernel)
    ocfg = _orchestrator_config(args, tree)
    bcfg = _backend_config(args, tree)
    make_provider = _provider(args, tree)
    try:
        record = run_dialogue(kernel, ocfg, make_provider(), ExecBackend(bcfg))
    except TransportError as e:
        raise CliError(f"provider failure: {e}", EXIT_PROVIDER)
    except BackendError as e:
        raise CliError(f"backend failure: {e}", EXIT_BACKEND)
    out = Path(args.out) if args.out else Path(f"{Path(args.kernel).stem}.record.jsonl")
    record.save(out)
    print(f"record: {out}")
    print(f"terminal reason: {record.terminal_reason}")
    print(f"iterations (T): {record.iterations}  exchanges: {record.total_exchanges}")
    if record.best_schedule:
        print(f"best schedule: {record.best_schedule}")
        print(f"final speedup: {record.best_speedup:.4f}x")
    else:
        print("best schedule: none (no successful proposal)")
    return EXIT_ABORTED if record.incomplete else EXIT_OK


def cmd_check(args) -> int:
    kernel = _parse_kernel_or_die(args.kernel)
    try:
        schedule = parse_schedule(args.schedule)
    except ScheduleParseError as e:
        print(f"validity: Invalid ({e})")
        return EXIT_OK
    bad = prevalidate(schedule, kernel)
    if bad is not None:
        print(f"validity: Invalid ({bad})")
        return EXIT_OK
    print("validity: Valid")
    verdict = check_legal(kernel, schedule)
    if isinstance(verdict, Illegal):
        print(f"legality: Illegal ({verdict.reason})")
        return EXIT_OK
    if isinstance(verdict, SolverFailure):
        print(f"legality: SolverFailure ({verdict.reason})")
        return EXIT_OK
    solved = []
    for res in verdict.solver_results:
        if isinstance(res, SkewFactor):
            solved.append(f"sigma={res.sigma}")
        elif isinstance(res, FuseShifts):
            solved.append(f"shifts={list(res.shifts)}")
    print("legality: Legal" + (f" ({', '.join(solved)})" if solved else ""))
    if args.oracle:
        shrunk = kernel.with_params(
            **{name: min(value, args.shrink) for name, value in kernel.params}
        )
        cx = assert_semantics_preserved(shrunk, schedule, seed=args.seed)
        print("oracle: pass" if cx is None else f"oracle: counterexample ({cx})")
    return EXIT_OK


def _campaign_run_name(kernel_path: Path, chash: str, index: int) -> str:
    return f"{kernel_path.stem}_{chash[:8]}_run{index:02d}.jsonl"


def cmd_campaign(args) -> int:
    tree = load_config_file(args.config) if args.config else {}
    ocfg = _orchestrator_config(args, tree)
    bcfg = _backend_config(args, tree)
    make_provider = _provider(args, tree)
    runs = effective(args.runs, tree, "campaign.runs", 1, int)
    jobs = effective(args.jobs, tree, "campaign.jobs", 1, int)
    out_dir = Path(effective(args.out, tree, "campaign.out", "records"))
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash({"orchestrator": ocfg.to_dict(), "backend": bcfg.__dict__})

    tasks = []
    for kpath in args.kernels:
        kernel_path = Path(kpath)
        kernel = _parse_kernel_or_die(kpath)
        for i in range(runs):
            out = out_dir / _campaign_run_name(kernel_path, chash, i)
            if out.exists():
                try:
                    rec = load_run_record(out)
                    if not rec.incomplete:
                        print(f"skip (complete): {out.name}")
                        continue
                except (RecordFormatError, ValueError):
                    pass
            tasks.append((kernel, out))

    def one(task):
        kernel, out = task
        record = run_dialogue(kernel, ocfg, make_provider(), ExecBackend(bcfg))
        record.save(out)
        return out, record

    failures = 0
    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            for out, record in pool.map(one, tasks):
                print(f"done: {out.name} (T={record.iterations}, reason={record.terminal_reason})")
                failures += int(record.incomplete)
    else:
        for task in tasks:
            out, record = one(task)
            print(f"done: {out.name} (T={record.iterations}, reason={record.terminal_reason})")
            failures += int(record.incomplete)
    print(f"campaign complete: {len(tasks)} run(s), {failures} aborted")
    return EXIT_ABORTED if failures else EXIT_OK


def cmd_report(args) -> int:
    out_dir = Path(args.out or args.records)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        pools = load_pools(args.records, include_incomplete=args.include_incomplete)
    except (RecordFormatError, ValueError) as e:
        raise CliError(str(e), EXIT_USAGE)
    t_max = min(p.t_max for p in pools)
    ts = [int(x) for x in args.at.split(",")] if args.at else [t_max]
    for t in ts:
        if not (0 <= t <= t_max):
            raise CliError(f"--at {t} outside recorded range 0..{t_max}", EXIT_USAGE)
    conv = args.median_convention
    print(write_median_report(pools, ts, out_dir / "median.csv", conv), end="")
    if args.bestof:
        ks = [int(x) for x in args.bestof.split(",")]
        print(write_bestof_grid(pools, ks, ts, out_dir / "bestof_grid.csv", conv), end="")
    print(write_viability_report(pools, ts[-1], out_dir / "viability.csv"), end="")
    print(write_token_report(pools, out_dir / "tokens.csv"), end="")
    if args.bootstrap:
        est = bootstrap_ci(pools, ts[-1], iterations=args.bootstrap, seed=args.seed, convention=conv)
        line = (
            f"geomean median@{ts[-1]}: {est.point:.4f} "
            f"[{est.ci_low:.4f}, {est.ci_high:.4f}] "
            f"({args.bootstrap} bootstrap iterations, seed {args.seed})\n"
        )
        (out_dir / "bootstrap.txt").write_text(line, encoding="utf-8")
        print(line, end="")
    print(f"reports written to {out_dir}")
    return EXIT_OK


_CODE_FENCE_RE = re.compile(r"```c\n(.*?)```", re.DOTALL)


def cmd_replay(args) -> int:
    try:
        record = load_run_record(args.record)
    except (RecordFormatError, FileNotFoundError, ValueError) as e:
        raise CliError(f"cannot load record: {e}", EXIT_USAGE)
    if args.kernel:
        kernel = _parse_kernel_or_die(args.kernel)
    else:
        kernel = _kernel_from_record(record)
    ocfg = OrchestratorConfig(**record.config["orchestrator"])
    bcfg = BackendConfig(**record.config["backend"])
    if bcfg.mode != "simulated":
        print("note: replaying against the simulated backend", file=sys.stderr)
        bcfg = BackendConfig(**{**record.config["backend"], "mode": "simulated"})
    try:
        new = run_dialogue(kernel, ocfg, scripted_provider(record), ExecBackend(bcfg))
    except TransportError as e:
        raise CliError(f"replay diverged: {e}", EXIT_PROVIDER)
    out = Path(args.out) if args.out else Path(str(args.record) + ".replay")
    new.save(out)
    print(f"replay record: {out}")
    if args.verify:
        same = new.to_jsonl() == Path(args.record).read_text(encoding="utf-8")
        print("verify: byte-identical" if same else "verify: DIFFERS from the source record")
        return EXIT_OK if same else EXIT_ABORTED
    return EXIT_OK


def _kernel_from_record(record):
    """Recover the kernel from the listing embedded in the first prompt."""
    for ex in record.exchanges:
        for m in ex.new_messages:
            match = _CODE_FENCE_RE.search(m.get("content", ""))
            if match:
                try:
                    return parse_kernel(match.group(1))
                except KernelParseError as e:
                    raise CliError(f"embedded kernel does not parse: {e}", EXIT_KERNEL_PARSE)
    raise CliError("record embeds no kernel listing; pass --kernel PATH", EXIT_USAGE)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_shared_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file (dotted keys, 'key = value')")
    p.add_argument("--backend", choices=["simulated", "real"], default=None)
    p.add_argument("--compiler-cmd", dest="compiler_cmd", default=None)
    p.add_argument("--timeout", type=int, default=None, help="per-run timeout seconds")
    p.add_argument("--warmups", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="OMP/model thread count")
    p.add_argument("--provider", default=None, help="scripted:PATH or http")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--max-output-tokens", dest="max_output_tokens", type=int, default=None)
    p.add_argument("--retries", type=int, default=None)
    p.add_argument("--api-key-env", dest="api_key_env", default=None)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    p.add_argument("--max-quit-pushes", dest="max_quit_pushes", type=int, default=None)
    p.add_argument("--max-exchanges", dest="max_exchanges", type=int, default=None)
    p.add_argument("--feedback", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--analysis", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--reasoning", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--hardware", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--hardware-description", dest="hardware_description", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="looptuner",
        description="LLM-guided loop-transformation search with legality checking",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run one optimization dialogue on a kernel")
    p.add_argument("kernel")
    p.add_argument("--out", help="run-record output path")
    _add_shared_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("check", help="classify one schedule offline")
    p.add_argument("kernel")
    p.add_argument("--schedule", required=True)
    p.add_argument("--oracle", action="store_true", help="run the interpreter oracle at shrunken sizes")
    p.add_argument("--shrink", type=int, default=6, help="parameter cap for --oracle")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("campaign", help="run K dialogues per kernel, resumably")
    p.add_argument("kernels", nargs="+")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--out", default=None, help="records output directory")
    p.add_argument("--jobs", type=int, default=None)
    _add_shared_flags(p)
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("report", help="compute statistics over recorded runs")
    p.add_argument("records", help="directory of .jsonl run records")
    p.add_argument("--at", help="comma-separated iteration indices T")
    p.add_argument("--bestof", help="comma-separated K values for the BestOf grid")
    p.add_argument("--bootstrap", type=int, default=None, help="bootstrap iterations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--include-incomplete", action="store_true")
    p.add_argument("--median-convention", choices=["midpoint", "lower"], default="midpoint")
    p.add_argument("--out", help="report output directory (default: records dir)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", help="re-run a recorded dialogue deterministically")
    p.add_argument("record")
    p.add_argument("--kernel", help="kernel file (default: recover from the record)")
    p.add_argument("--out")
    p.add_argument("--verify", action="store_true", help="compare the replay byte-for-byte")
    p.set_defaults(func=cmd_replay)

    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())

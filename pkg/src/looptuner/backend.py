"""Kernel execution backends: real (compile + run + time) and simulated.

The real backend compiles emitted C with a configurable command template,
runs the binary warmups+reps times with `OMP_NUM_THREADS` set, parses the
TIME_MS/CHECKSUM protocol lines, and reports the median (and minimum) of
the repetitions. A process-wide token serializes timed executions so
measurements never overlap; an acquisition log makes that assertable.

The simulated backend is a pure deterministic cost model used by tests,
demos and offline development:

    time_ms = sum over computations of
        instances(c) / parallelism(c) * unit_cost_ms * locality(c)

    parallelism(c) = min(threads, trip count of c's first parallel loop,
                         evaluated at the first entry of its enclosing
                         loops); 1 if c has no parallel loop
    locality(c)    = locality_factor ** (number of tiling commands whose
                     canonical target is c)

Identical inputs always produce identical simulated times.
"""

from __future__ import annotations

import math
import os
import re
import shlex
import statistics
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .affine import bound_eval, bound_names
from .cemit import emit_c
from .ir import Kernel, LoopNode, Node, StmtNode
from .schedule import Tile2D, Tile3D
from .transform import TransformedKernel, identity_transformed


@dataclass(frozen=True)
class Success:
    time_ms: float
    speedup: float
    min_ms: float
    checksum: Optional[str] = None


@dataclass(frozen=True)
class CompilerCrash:
    message: str


@dataclass(frozen=True)
class RuntimeCrash:
    message: str


@dataclass(frozen=True)
class Timeout:
    message: str


BackendResult = Union[Success, CompilerCrash, RuntimeCrash, Timeout]


@dataclass(frozen=True)
class BackendConfig:
    mode: str = "simulated"  # "simulated" | "real"
    compiler_cmd: str = "cc -O3 -fopenmp {src} -o {bin}"
    timeout_s: int = 60
    warmups: int = 1
    reps: int = 5
    threads: int = 0  # 0: use the host's cpu count
    unit_cost_ms: float = 1e-6
    locality_factor: float = 0.8
    workdir: Optional[str] = None

    def __post_init__(self) -> None:
        if self.mode not in ("simulated", "real"):
            raise ValueError(f"unknown backend mode {self.mode!r}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.warmups < 0:
            raise ValueError("warmups must be >= 0")

    @property
    def effective_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


# One token for every timed execution in the process; the log records
# acquisitions so tests can assert that timed runs never overlapped.
_TIMING_LOCK = threading.Lock()
TIMING_LOG: list[tuple[str, str]] = []  # (event, label)


class BackendError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# instance counting (shared by the cost model)
# ---------------------------------------------------------------------------


def count_instances(kernel: Kernel) -> dict[str, int]:
    """Executed statement instances per computation, guards respected.
    Rectangular subtrees are counted multiplicatively without enumeration."""
    counts = {c.comp_id: 0 for c in kernel.computations()}
    env = kernel.param_env()

    def references(nodes: tuple[Node, ...], name: str) -> bool:
        for n in nodes:
            if isinstance(n, StmtNode):
                if any(name in g.expr.names() for g in n.guards):
                    return True
            else:
                if name in bound_names(n.loop.lower) or name in bound_names(n.loop.upper):
                    return True
                if references(n.children, name):
                    return True
        return False

    def walk(nodes: tuple[Node, ...], scale: int) -> None:
        for n in nodes:
            if isinstance(n, StmtNode):
                if all(g.expr.evaluate(env) >= 0 for g in n.guards):
                    counts[n.comp_id] += scale
            else:
                lo = bound_eval(n.loop.lower, env)
                hi = bound_eval(n.loop.upper, env)
                if hi <= lo:
                    continue
                it = n.loop.iterator
                if references(n.children, it):
                    for v in range(lo, hi):
                        env[it] = v
                        walk(n.children, scale)
                    env.pop(it, None)
                else:
                    env[it] = lo
                    walk(n.children, scale * (hi - lo))
                    env.pop(it, None)

    walk(kernel.body, 1)
    return counts


def _average_trip(kernel: Kernel, loop_uid: int) -> float:
    """Average trip count of one loop: total iterations over times entered.
    Triangular and wavefront bounds average out instead of sampling the
    (possibly degenerate) first entry."""
    env = kernel.param_env()
    entered = 0
    iterations = 0

    def bounds_reference(node: Node, name: str) -> bool:
        if isinstance(node, StmtNode):
            return any(name in g.expr.names() for g in node.guards)
        if name in bound_names(node.loop.lower) or name in bound_names(node.loop.upper):
            return True
        return any(bounds_reference(c, name) for c in node.children)

    def contains(node: Node) -> bool:
        if isinstance(node, StmtNode):
            return False
        return node.uid == loop_uid or any(contains(c) for c in node.children)

    def walk(nodes: tuple[Node, ...], scale: int) -> None:
        nonlocal entered, iterations
        for n in nodes:
            if isinstance(n, StmtNode) or not contains(n):
                continue
            lo = bound_eval(n.loop.lower, env)
            hi = bound_eval(n.loop.upper, env)
            trip = max(0, hi - lo)
            if n.uid == loop_uid:
                entered += scale
                iterations += scale * trip
                continue
            if trip == 0:
                continue
            it = n.loop.iterator
            if any(bounds_reference(c, it) for c in n.children):
                for v in range(lo, hi):
                    env[it] = v
                    walk(n.children, scale)
                env.pop(it, None)
            else:
                env[it] = lo
                walk(n.children, scale * trip)
                env.pop(it, None)

    walk(kernel.body, 1)
    if entered == 0:
        return 0.0
    return iterations / entered


def simulate_cost(tk: TransformedKernel, cfg: BackendConfig) -> float:
    """Deterministic model time in milliseconds for a transformed kernel.

    Parallelism uses the average trip count of the parallelized loop
    (total iterations over entries), capped by the model thread count."""
    kernel = tk.kernel
    counts = count_instances(kernel)
    tiled: dict[str, int] = {}
    if tk.provenance is not None:
        for cmd in tk.provenance.commands:
            if isinstance(cmd, (Tile2D, Tile3D)):
                tiled[cmd.comp] = tiled.get(cmd.comp, 0) + 1
    total = 0.0
    for comp in kernel.computations():
        inst = counts[comp.comp_id]
        if inst == 0:
            continue
        parallelism = 1.0
        for uid in comp.loop_uids:
            if uid in tk.parallel_loop_uids:
                trip = _average_trip(kernel, uid)
                parallelism = min(float(cfg.effective_threads), max(1.0, trip))
                break
        locality = cfg.locality_factor ** tiled.get(comp.comp_id, 0)
        total += inst / parallelism * cfg.unit_cost_ms * locality
    return total


# ---------------------------------------------------------------------------
# the backend
# ---------------------------------------------------------------------------


@dataclass
class _RunOutput:
    time_ms: float
    checksum: str


class ExecBackend:
    """Compiles and measures kernels per a BackendConfig. Remembers the
    baseline checksum per kernel so run_schedule can cross-check results."""

    def __init__(self, cfg: BackendConfig):
        self.cfg = cfg
        self._baseline_checksum: dict[str, str] = {}

    # -- public operations ---------------------------------------------------

    def measure_baseline(self, kernel: Kernel) -> float:
        """Median time of the untransformed kernel over cfg.reps runs."""
        tk = identity_transformed(kernel)
        if self.cfg.mode == "simulated":
            return simulate_cost(tk, self.cfg)
        runs = self._compile_and_run(tk, label=f"{kernel.name}:baseline")
        if not isinstance(runs, list):
            raise BackendError(f"baseline measurement failed: {runs}")
        self._baseline_checksum[kernel.name] = runs[0].checksum
        return statistics.median(r.time_ms for r in runs)

    def run_schedule(self, tk: TransformedKernel, baseline_ms: float) -> BackendResult:
        """Measure a transformed kernel and report speedup over the baseline."""
        if baseline_ms <= 0:
            raise ValueError("baseline_ms must be positive")
        if self.cfg.mode == "simulated":
            time_ms = simulate_cost(tk, self.cfg)
            return Success(time_ms, baseline_ms / time_ms, time_ms)
        runs = self._compile_and_run(tk, label=f"{tk.kernel.name}:schedule")
        if not isinstance(runs, list):
            return runs
        expected = self._baseline_checksum.get(tk.kernel.name)
        got = runs[0].checksum
        if expected is not None and got != expected:
            return RuntimeCrash(
                f"checksum mismatch: transformed run produced {got}, baseline {expected}"
            )
        times = [r.time_ms for r in runs]
        return Success(statistics.median(times), baseline_ms / statistics.median(times), min(times), got)

    # -- real-mode internals ---------------------------------------------------

    def _compile_and_run(
        self, tk: TransformedKernel, label: str
    ) -> list[_RunOutput] | CompilerCrash | RuntimeCrash | Timeout:
        cfg = self.cfg
        workdir = Path(cfg.workdir) if cfg.workdir else None
        ctx = tempfile.TemporaryDirectory() if workdir is None else None
        base = Path(ctx.name) if ctx else workdir
        try:
            base.mkdir(parents=True, exist_ok=True)
            src = base / f"{label.replace(':', '_')}.c"
            binary = base / f"{label.replace(':', '_')}.bin"
            src.write_text(emit_c(tk), encoding="utf-8")
            cmd = [
                part.format(src=str(src), bin=str(binary))
                for part in shlex.split(cfg.compiler_cmd)
            ]
            try:
                proc = subprocess.run(
                    cmd, capture_output=True, text=True, timeout=cfg.timeout_s
                )
            except subprocess.TimeoutExpired:
                return Timeout(f"compilation exceeded {cfg.timeout_s}s")
            if proc.returncode != 0:
                tail = (proc.stderr or proc.stdout).strip()[-800:]
                return CompilerCrash(f"compiler exited {proc.returncode}: {tail}")
            outputs: list[_RunOutput] = []
            env = dict(os.environ)
            env["OMP_NUM_THREADS"] = str(cfg.effective_threads)
            for i in range(cfg.warmups + cfg.reps):
                with _TIMING_LOCK:
                    TIMING_LOG.append(("acquire", label))
                    try:
                        run = subprocess.run(
                            [str(binary)],
                            capture_output=True,
                            text=True,
                            timeout=cfg.timeout_s,
                            env=env,
                        )
                    except subprocess.TimeoutExpired:
                        return Timeout(f"execution exceeded {cfg.timeout_s}s")
                    finally:
                        TIMING_LOG.append(("release", label))
                if run.returncode != 0:
                    tail = (run.stderr or run.stdout).strip()[-800:]
                    return RuntimeCrash(f"binary exited {run.returncode}: {tail}")
                parsed = _parse_protocol(run.stdout)
                if parsed is None:
                    return RuntimeCrash("binary produced no TIME_MS/CHECKSUM output")
                if i >= cfg.warmups:
                    outputs.append(parsed)
            return outputs
        finally:
            if ctx:
                ctx.cleanup()


_TIME_RE = re.compile(r"^TIME_MS:\s*([0-9.eE+-]+)\s*$", re.MULTILINE)
_CHECKSUM_RE = re.compile(r"^CHECKSUM:\s*([0-9a-f]{16})\s*$", re.MULTILINE)


def _parse_protocol(stdout: str) -> _RunOutput | None:
    t = _TIME_RE.search(stdout)
    c = _CHECKSUM_RE.search(stdout)
    if not t or not c:
        return None
    return _RunOutput(float(t.group(1)), c.group(1))


def measure_baseline(kernel: Kernel, cfg: BackendConfig) -> float:
    return ExecBackend(cfg).measure_baseline(kernel)


def run_schedule(
    tk: TransformedKernel, baseline_ms: float, cfg: BackendConfig
) -> BackendResult:
    return ExecBackend(cfg).run_schedule(tk, baseline_ms)

"""Transformation legality: distance-vector rules plus skew/shift solvers.

check_legal() walks a schedule command by command, mapping every dependence
distance vector through each transformation's iteration-space effect and
applying the per-command rule:

  Parallelize(Lk)   no dependence carried at the parallelized loop
  Interchange       every permuted vector stays lexicographically non-negative
  Reverse(Lk)       negating entry k keeps every vector non-negative
  Tile2D/3D         every band entry of every dependence is non-negative
  Unroll            always legal
  Skew(Li,Lj)       solver: smallest sigma in [1,16] with dj + sigma*di >= 0
  Fuse(c1,c2,Lk)    solver: lexicographically smallest shifts in [0,16] keeping
                    all cross-dependences of the fused nests non-negative

Star (unknown) entries at any level a rule must inspect make the command
conservatively Illegal (or a SolverFailure for the two solver commands).
Checking is incremental, so validating a schedule as a whole equals
validating it command by command.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Union

from .deps import (
    Entry,
    _conflicting_pairs,
    compute_dependences,
    exact_aligned_distance,
)
from .interp import first_difference, interpret, seeded_buffers
from .ir import Kernel
from .schedule import (
    Fuse,
    Interchange,
    Parallelize,
    Reverse,
    Schedule,
    Skew,
    Tile2D,
    Tile3D,
    Unroll,
)
from .transform import (
    Engine,
    FuseShifts,
    SkewFactor,
    SolverResult,
    StructuralError,
    _check_and_canonicalize,
    _subtree_comp_ids,
    _Walk,
    apply_schedule,
)

SIGMA_MAX = 16
DELTA_MAX = 16


@dataclass(frozen=True)
class Legal:
    solver_results: tuple[SolverResult, ...]


@dataclass(frozen=True)
class Illegal:
    reason: str


@dataclass(frozen=True)
class SolverFailure:
    reason: str


LegalityResult = Union[Legal, Illegal, SolverFailure]


# ---------------------------------------------------------------------------
# vector rules
# ---------------------------------------------------------------------------


def _blocks_parallel(entries: list[Entry], p: int) -> bool:
    """True if the dependence may be carried at position p. Any exact nonzero
    entry before p proves the dependence is carried further out (validity of
    the current state forces an earlier positive level when it is negative)."""
    unknown_prefix = False
    for l in range(p):
        e = entries[l]
        if e is None:
            unknown_prefix = True
        elif e != 0:
            return False
    e = entries[p]
    if e is None:
        return True
    if e == 0:
        return False
    return True if unknown_prefix or e > 0 else False


def _provably_lex_nonneg(entries: list[Entry], same_comp: bool, src_first: bool) -> bool:
    for e in entries:
        if e is None:
            return False
        if e > 0:
            return True
        if e < 0:
            return False
    return (not same_comp) and src_first


@dataclass
class _DepState:
    source: str
    sink: str
    kind: str
    entries: list[Entry]
    uids: list[int]

    def describe(self) -> str:
        dist = ",".join("*" if e is None else str(e) for e in self.entries)
        return f"{self.kind} dependence {self.source}->{self.sink} distance ({dist})"


def _initial_state(kernel: Kernel) -> list[_DepState]:
    comps = {c.comp_id: c for c in kernel.computations()}
    out = []
    for d in compute_dependences(kernel):
        m = len(d.distance)
        uids = list(comps[d.source].loop_uids[:m])
        out.append(_DepState(d.source, d.sink, d.kind, list(d.distance), uids))
    return out


# ---------------------------------------------------------------------------
# the checker
# ---------------------------------------------------------------------------


class _Checker:
    def __init__(self, kernel: Kernel):
        self.engine = Engine(kernel)
        self.walk = _Walk()
        self.deps = _initial_state(kernel)
        self.order = {cid: i for i, cid in enumerate(self.engine.comp_ids())}
        self.results: list[SolverResult] = []

    def textual_first(self, src: str, snk: str) -> bool:
        return self.order[src] < self.order[snk]

    def check_valid(self, dep: _DepState, context: str) -> Illegal | None:
        ok = _provably_lex_nonneg(
            dep.entries, dep.source == dep.sink, self.textual_first(dep.source, dep.sink)
        )
        if not ok:
            return Illegal(f"{context} violates {dep.describe()}")
        return None

    def run(self, cmd) -> Illegal | SolverFailure | None:
        engine = self.engine
        if isinstance(cmd, Unroll):
            return None
        if isinstance(cmd, Parallelize):
            uid = engine.loop_chain(cmd.comp)[cmd.level.d].uid
            for dep in self.deps:
                if uid in dep.uids and _blocks_parallel(dep.entries, dep.uids.index(uid)):
                    return Illegal(
                        f"loop L{cmd.level.d} of {cmd.comp} carries {dep.describe()}"
                    )
            return None
        if isinstance(cmd, Interchange):
            i, j = sorted((cmd.level1.d, cmd.level2.d))
            affected = set(_subtree_comp_ids(engine.loop_chain(cmd.comp)[i]))
            for dep in self.deps:
                if dep.source in affected and dep.sink in affected:
                    new = list(dep.entries)
                    new[i], new[j] = new[j], new[i]
                    probe = replace_entries(dep, new)
                    bad = self.check_valid(probe, "interchange")
                    if bad:
                        return bad
            for dep in self.deps:
                if dep.source in affected and dep.sink in affected:
                    dep.entries[i], dep.entries[j] = dep.entries[j], dep.entries[i]
                    dep.uids[i], dep.uids[j] = dep.uids[j], dep.uids[i]
            return None
        if isinstance(cmd, Reverse):
            k = cmd.level.d
            uid = engine.loop_chain(cmd.comp)[k].uid
            changed: list[tuple[_DepState, list[Entry]]] = []
            for dep in self.deps:
                if cmd.comp not in (dep.source, dep.sink) or uid not in dep.uids:
                    continue
                pos = dep.uids.index(uid)
                new = list(dep.entries)
                if dep.source == dep.sink:
                    new[pos] = None if new[pos] is None else -new[pos]
                else:
                    new[pos] = None  # one side retraversed: distance unknown
                changed.append((dep, new))
            for dep, new in changed:
                bad = self.check_valid(replace_entries(dep, new), "reversal")
                if bad:
                    return bad
            for dep, new in changed:
                dep.entries[:] = new
            return None
        if isinstance(cmd, Skew):
            i, j = cmd.level1.d, cmd.level2.d
            affected = set(_subtree_comp_ids(engine.loop_chain(cmd.comp)[i]))
            band: list[_DepState] = [
                d for d in self.deps if d.source in affected and d.sink in affected
            ]
            for dep in band:
                if dep.entries[i] is None or dep.entries[j] is None:
                    return SolverFailure(
                        f"skewing factor search needs exact distances; {dep.describe()}"
                    )
            sigma = None
            for cand in range(1, SIGMA_MAX + 1):
                if all(d.entries[j] + cand * d.entries[i] >= 0 for d in band):
                    sigma = cand
                    break
            if sigma is None:
                return SolverFailure(
                    f"no skewing factor in [1,{SIGMA_MAX}] satisfies all "
                    f"dependences of {cmd.comp}'s band L{i}..L{j}"
                )
            for dep in band:
                dep.entries[j] = dep.entries[j] + sigma * dep.entries[i]
            self.results[-1] = SkewFactor(sigma)
            return None
        if isinstance(cmd, (Tile2D, Tile3D)):
            start = cmd.level1.d
            n = 2 if isinstance(cmd, Tile2D) else 3
            affected = set(_subtree_comp_ids(engine.loop_chain(cmd.comp)[start]))
            for dep in self.deps:
                if dep.source in affected and dep.sink in affected:
                    for b in range(start, start + n):
                        e = dep.entries[b]
                        if e is None:
                            return Illegal(
                                f"cannot prove band permutability: {dep.describe()}"
                            )
                        if e < 0:
                            return Illegal(
                                f"negative band entry at L{b}: {dep.describe()}"
                            )
            self._pending_tile = (cmd.comp, start, n, affected)
            return None
        if isinstance(cmd, Fuse):
            return self._solve_fusion(cmd)
        raise AssertionError(f"unhandled command {cmd}")  # pragma: no cover

    # -- post-apply state fixups -------------------------------------------

    def after_apply(self, cmd) -> None:
        if isinstance(cmd, (Tile2D, Tile3D)) and self._pending_tile:
            comp, start, n, affected = self._pending_tile
            self._pending_tile = None
            chain = self.engine.loop_chain(comp)
            tile_uids = [chain[start + t].uid for t in range(n)]
            for dep in self.deps:
                if dep.source in affected and dep.sink in affected:
                    band = dep.entries[start : start + n]
                    tiles: list[Entry] = [0 if e == 0 else None for e in band]
                    dep.entries[start:start] = tiles
                    dep.uids[start:start] = tile_uids
        if isinstance(cmd, Fuse) and self._pending_fusion:
            comps1, comps2, k, new_deps = self._pending_fusion
            self._pending_fusion = None
            pairs = {(a, b) for a in comps1 for b in comps2}
            pairs |= {(b, a) for a in comps1 for b in comps2}
            self.deps = [
                d for d in self.deps if (d.source, d.sink) not in pairs
            ]
            anchor = comps1[0]
            uids = list(self.engine.loop_uids(anchor)[: k + 1])
            for src, snk, kind, entries in new_deps:
                self.deps.append(_DepState(src, snk, kind, list(entries), list(uids)))

    _pending_tile: tuple | None = None
    _pending_fusion: tuple | None = None

    # -- fusion solver --------------------------------------------------------

    def _solve_fusion(self, cmd: Fuse) -> Illegal | SolverFailure | None:
        engine = self.engine
        k = cmd.level.d
        first, second = engine.fusion_order(cmd.comp, cmd.partner)
        m = engine.shared_prefix_len(cmd.comp, cmd.partner)
        entry1 = engine.stmt_path(first)[: m + 1]
        entry2 = engine.stmt_path(second)[: m + 1]
        from .transform import _node_at

        comps1 = _subtree_comp_ids(_node_at(engine.body, entry1))
        comps2 = _subtree_comp_ids(_node_at(engine.body, entry2))

        work = replace(engine.kernel, body=engine.body)
        views = {c.comp_id: c for c in work.computations()}

        # A conflict pair's dependence direction is its pre-fusion execution
        # order: decided by the already-shared loops, then by textual order
        # (the first nest runs first). The mirrored enumeration covers pairs
        # realized the other way around.
        aligned: list[tuple[bool, str, str, str, tuple[int, ...]]] = []
        for a in comps1:
            for b in comps2:
                for src, snk, from_first in ((a, b, True), (b, a, False)):
                    cs, cn = views[src], views[snk]
                    common_src = [lp.iterator for lp in cs.loops[: k + 1]]
                    common_snk = [lp.iterator for lp in cn.loops[: k + 1]]
                    own_src = frozenset(lp.iterator for lp in cs.loops[k + 1 :])
                    own_snk = frozenset(lp.iterator for lp in cn.loops[k + 1 :])
                    for kind, acc_s, acc_n in _conflicting_pairs(cs, cn):
                        dist = exact_aligned_distance(
                            acc_s, acc_n, common_src, common_snk, own_src, own_snk
                        )
                        if dist is None:
                            continue
                        if any(e is None for e in dist):
                            return SolverFailure(
                                "shifting solver needs exact cross-dependences to "
                                f"fuse {cmd.comp} with {cmd.partner}"
                            )
                        shared_sign = _lex_sign_int(dist[:m])
                        if shared_sign < 0 or (shared_sign == 0 and not from_first):
                            continue  # never realized source-before-sink
                        aligned.append((from_first, src, snk, kind, dist))

        nlev = k + 1 - m
        chosen: tuple[int, ...] | None = None
        for s in itertools.product(range(DELTA_MAX + 1), repeat=nlev):
            full = (0,) * m + s
            ok = True
            for from_first, _src, _snk, _kind, dist in aligned:
                adj = [
                    d + full[l] if from_first else d - full[l]
                    for l, d in enumerate(dist)
                ]
                if not _provably_lex_nonneg(adj, same_comp=False, src_first=from_first):
                    ok = False
                    break
            if ok:
                chosen = s
                break
        if chosen is None:
            return SolverFailure(
                f"no shift vector in [0,{DELTA_MAX}]^{nlev} makes fusing "
                f"{cmd.comp} with {cmd.partner} at L{k} legal"
            )
        full = (0,) * m + chosen
        new_deps = []
        for from_first, src, snk, kind, dist in aligned:
            adj = tuple(
                d + full[l] if from_first else d - full[l] for l, d in enumerate(dist)
            )
            new_deps.append((src, snk, kind, adj))
        self._pending_fusion = (comps1, comps2, k, new_deps)
        self.results[-1] = FuseShifts(chosen)
        return None


def replace_entries(dep: _DepState, entries: list[Entry]) -> _DepState:
    return _DepState(dep.source, dep.sink, dep.kind, entries, dep.uids)


def _lex_sign_int(vec) -> int:
    for e in vec:
        if e > 0:
            return 1
        if e < 0:
            return -1
    return 0


def check_legal(kernel: Kernel, schedule: Schedule) -> LegalityResult:
    """Decide legality of a prevalidated schedule. Returns Legal with one
    solver-result slot per command, or the first Illegal/SolverFailure."""
    checker = _Checker(kernel)
    for cmd in schedule.commands:
        try:
            canon = _check_and_canonicalize(checker.engine, cmd, checker.walk)
        except StructuralError as e:
            raise ValueError(f"schedule failed prevalidation: {e}") from e
        checker.results.append(None)
        verdict = checker.run(canon)
        if verdict is not None:
            return verdict
        checker.engine.apply(canon, checker.results[-1])
        checker.after_apply(canon)
    return Legal(tuple(checker.results))


@dataclass(frozen=True)
class Counterexample:
    buffer: str
    index: tuple[int, ...]
    expected: int
    actual: int

    def __str__(self) -> str:
        return (
            f"buffer {self.buffer}{list(self.index)}: "
            f"expected {self.expected}, got {self.actual}"
        )


def assert_semantics_preserved(
    kernel: Kernel,
    schedule: Schedule,
    seed: int = 0,
    require_legal: bool = True,
) -> Counterexample | None:
    """Interpreter-based oracle: run the original and the transformed kernel
    on identical seeded integer inputs and compare all buffers exactly.
    Returns None on pass, the first differing element otherwise. Pass
    require_legal=False only in negative-control tests that bypass
    check_legal on purpose."""
    solver_results = None
    if require_legal:
        res = check_legal(kernel, schedule)
        if not isinstance(res, Legal):
            raise ValueError(f"schedule is not legal: {res}")
        solver_results = list(res.solver_results)
    tk = apply_schedule(kernel, schedule, solver_results)
    init = seeded_buffers(kernel, seed)
    ref = interpret(kernel, init)
    got = interpret(tk.kernel, init)
    diff = first_difference(ref, got)
    if diff is None:
        return None
    return Counterexample(*diff)

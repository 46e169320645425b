"""Data-dependence analysis over affine kernels.

Dependences are summarized per pair of conflicting accesses as distance
vectors over the loops the two statements share, using the nearest-conflict
convention: flow = last write before each read, anti = the reads a write
overwrites, output = consecutive writes to an address; pairs within one
statement instance are excluded. Uniform access pairs (equal coefficients
on shared iterators and parameters, no private iterators) get exact integer
entries; anything the linear solve cannot pin down becomes Star (unknown),
which only ever over-approximates.

brute_force_dependences() enumerates every statement instance at small
sizes and derives the same information from the actual access trace; it is
the ground-truth oracle the static analysis is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .affine import bound_eval
from .ir import Access, Computation, Kernel, LoopNode, Node, StmtNode

Entry = Optional[int]  # None encodes Star (statically unknown distance)

KINDS = ("flow", "anti", "output")


@dataclass(frozen=True)
class Dependence:
    source: str
    sink: str
    kind: str
    distance: tuple[Entry, ...]

    @property
    def carried_level(self) -> int | None:
        """Index of the first positive exact entry, None if loop-independent."""
        for i, e in enumerate(self.distance):
            if e is not None and e > 0:
                return i
        return None

    def __str__(self) -> str:
        dist = ",".join("*" if e is None else str(e) for e in self.distance)
        return f"{self.source} {self.sink} {self.kind} ({dist})"


def format_dependences(deps: tuple[Dependence, ...]) -> str:
    """Line-oriented debug dump: `src sink kind (d0,d1,...)` per dependence."""
    return "\n".join(str(d) for d in deps) + ("\n" if deps else "")


def _sort_key(d: Dependence):
    return (d.source, d.sink, KINDS.index(d.kind), tuple(-2 if e is None else e for e in d.distance))


# ---------------------------------------------------------------------------
# linear solve for uniform access pairs
# ---------------------------------------------------------------------------


def _solve_distance(
    rows: list[list[int]], rhs: list[int], n: int
) -> tuple[dict[int, int], set[int]] | None:
    """Solve rows . delta = rhs for delta in Z^n. Returns (determined, free)
    where `determined` maps variable index -> unique integer value and `free`
    holds everything not uniquely pinned; None if no integer solution."""
    mat = [[Fraction(v) for v in row] + [Fraction(c)] for row, c in zip(rows, rhs)]
    pivots: list[tuple[int, int]] = []  # (row, col)
    r = 0
    for col in range(n):
        sel = next((i for i in range(r, len(mat)) if mat[i][col] != 0), None)
        if sel is None:
            continue
        mat[r], mat[sel] = mat[sel], mat[r]
        mat[r] = [v / mat[r][col] for v in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][col] != 0:
                f = mat[i][col]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[r])]
        pivots.append((r, col))
        r += 1
    for i in range(r, len(mat)):
        if mat[i][n] != 0:
            return None  # inconsistent
    pivot_cols = {c for _, c in pivots}
    free = set(range(n)) - pivot_cols
    determined: dict[int, int] = {}
    for row, col in pivots:
        if any(mat[row][fc] != 0 for fc in free):
            free.add(col)  # entangled with free variables: not pinned
            continue
        val = mat[row][n]
        if val.denominator != 1:
            return None  # unique rational value is non-integer
        determined[col] = int(val)
    return determined, free


def _lex_sign(vec: list[int]) -> int:
    for e in vec:
        if e > 0:
            return 1
        if e < 0:
            return -1
    return 0


def _summarize(
    determined: dict[int, int],
    free: set[int],
    n: int,
    same_comp: bool,
    src_textually_first: bool,
) -> tuple[Entry, ...] | None:
    """Turn a solved system into a nearest-conflict distance vector, or None
    when no conflicting pair can run source-before-sink."""
    if not free:
        vec = [determined[i] for i in range(n)]
        sign = _lex_sign(vec)
        if sign > 0:
            return tuple(vec)
        if sign == 0:
            if same_comp:
                return None  # same instance
            return tuple(vec) if src_textually_first else None
        return None
    if all(v == 0 for v in determined.values()):
        if len(free) == 1:
            val = 1 if same_comp or not src_textually_first else 0
            return tuple(determined.get(i, val) for i in range(n))
        return tuple(determined.get(i, None) for i in range(n))
    p = min(i for i, v in determined.items() if v != 0)
    if determined[p] > 0:
        # nearest source matches the sink on every outer free level
        return tuple(
            determined[i] if i in determined else (0 if i < p else None)
            for i in range(n)
        )
    if not any(i < p for i in free):
        return None  # provably runs sink-before-source; the mirrored pair covers it
    return tuple(determined.get(i, None) for i in range(n))


def _uniform_rows(
    src_acc: Access,
    snk_acc: Access,
    common_src: list[str],
    common_snk: list[str],
    own_src: frozenset[str],
    own_snk: frozenset[str],
) -> tuple[bool, list[list[int]], list[int]]:
    """Address-equality system over aligned common iterators; the pair is
    uniform when shared coefficients match, private iterators are absent and
    parameter coefficients agree."""
    uniform = True
    rows: list[list[int]] = []
    rhs: list[int] = []
    for s_src, s_snk in zip(src_acc.subscripts, snk_acc.subscripts):
        row = []
        for u_src, u_snk in zip(common_src, common_snk):
            c1, c2 = s_src.coeff(u_src), s_snk.coeff(u_snk)
            if c1 != c2:
                uniform = False
            row.append(c1)
        if s_src.names() & own_src or s_snk.names() & own_snk:
            uniform = False
        param_names = (
            (s_src.names() | s_snk.names())
            - set(common_src)
            - set(common_snk)
            - own_src
            - own_snk
        )
        for p in param_names:
            if s_src.coeff(p) != s_snk.coeff(p):
                uniform = False
        rows.append(row)
        rhs.append(s_src.const - s_snk.const)
    return uniform, rows, rhs


def _pair_distance(
    src_acc: Access,
    snk_acc: Access,
    common_src: list[str],
    common_snk: list[str],
    own_src: frozenset[str],
    own_snk: frozenset[str],
    same_comp: bool,
    src_textually_first: bool,
) -> tuple[Entry, ...] | None:
    """Distance vector over the shared loops for one ordered access pair,
    Star-filled when non-uniform, None when no dependence can exist."""
    n = len(common_src)
    uniform, rows, rhs = _uniform_rows(
        src_acc, snk_acc, common_src, common_snk, own_src, own_snk
    )
    if not uniform:
        if n == 0:
            return () if src_textually_first else None
        return (None,) * n
    solved = _solve_distance(rows, rhs, n)
    if solved is None:
        return None
    determined, free = solved
    return _summarize(determined, free, n, same_comp, src_textually_first)


def exact_aligned_distance(
    src_acc: Access,
    snk_acc: Access,
    common_src: list[str],
    common_snk: list[str],
    own_src: frozenset[str],
    own_snk: frozenset[str],
) -> tuple[Entry, ...] | None:
    """Positionally aligned distance for the fusion solver: exact entries
    where the address equations pin them, Star (None) entries where they do
    not, None when the accesses can never touch the same address. Direction
    filtering is the caller's job."""
    n = len(common_src)
    uniform, rows, rhs = _uniform_rows(
        src_acc, snk_acc, common_src, common_snk, own_src, own_snk
    )
    if not uniform:
        return (None,) * n
    solved = _solve_distance(rows, rhs, n)
    if solved is None:
        return None
    determined, _free = solved
    return tuple(determined.get(i) for i in range(n))


# ---------------------------------------------------------------------------
# static analysis
# ---------------------------------------------------------------------------


def _conflicting_pairs(src: Computation, snk: Computation):
    for kind in KINDS:
        src_accs = src.writes() if kind in ("flow", "output") else src.reads()
        snk_accs = snk.reads() if kind == "flow" else snk.writes()
        for a in src_accs:
            for b in snk_accs:
                if a.buffer == b.buffer:
                    yield kind, a, b


def compute_dependences(kernel: Kernel) -> tuple[Dependence, ...]:
    comps = kernel.computations()
    order = {c.comp_id: i for i, c in enumerate(comps)}
    out: set[Dependence] = set()
    for src in comps:
        for snk in comps:
            m = kernel.common_prefix_len(src.comp_id, snk.comp_id)
            common_src = [lp.iterator for lp in src.loops[:m]]
            common_snk = [lp.iterator for lp in snk.loops[:m]]
            own_src = frozenset(lp.iterator for lp in src.loops[m:])
            own_snk = frozenset(lp.iterator for lp in snk.loops[m:])
            same = src.comp_id == snk.comp_id
            first = order[src.comp_id] < order[snk.comp_id]
            for kind, a, b in _conflicting_pairs(src, snk):
                dist = _pair_distance(
                    a, b, common_src, common_snk, own_src, own_snk, same, first
                )
                if dist is not None:
                    out.add(Dependence(src.comp_id, snk.comp_id, kind, dist))
    return tuple(sorted(out, key=_sort_key))


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


def brute_force_dependences(
    kernel: Kernel, max_points: int = 10**5
) -> tuple[Dependence, ...]:
    """Ground-truth dependences from an exhaustive execution trace at the
    kernel's (shrunken) sizes. Test oracle for compute_dependences."""
    comps = {c.comp_id: c for c in kernel.computations()}
    prefix: dict[tuple[str, str], int] = {}
    for a in comps:
        for b in comps:
            prefix[(a, b)] = kernel.common_prefix_len(a, b)

    env: dict[str, int] = kernel.param_env()
    last_write: dict[tuple, tuple[str, tuple[int, ...]]] = {}
    pending_reads: dict[tuple, list[tuple[str, tuple[int, ...]]]] = {}
    found: set[Dependence] = set()
    budget = [max_points]

    def record(kind: str, src: tuple[str, tuple[int, ...]], snk: tuple[str, tuple[int, ...]]) -> None:
        m = prefix[(src[0], snk[0])]
        dist = tuple(snk[1][i] - src[1][i] for i in range(m))
        found.add(Dependence(src[0], snk[0], kind, dist))

    def run(nodes: tuple[Node, ...], iters: list[int]) -> None:
        for node in nodes:
            if isinstance(node, StmtNode):
                if any(g.expr.evaluate(env) < 0 for g in node.guards):
                    continue
                budget[0] -= 1
                if budget[0] < 0:
                    raise RuntimeError(f"brute-force budget of {max_points} points exceeded")
                comp = comps[node.comp_id]
                inst = (node.comp_id, tuple(env[lp.iterator] for lp in comp.loops))
                for acc in comp.reads():
                    addr = (acc.buffer, tuple(s.evaluate(env) for s in acc.subscripts))
                    w = last_write.get(addr)
                    if w is not None and w != inst:
                        record("flow", w, inst)
                    pending_reads.setdefault(addr, []).append(inst)
                acc = comp.body.target
                addr = (acc.buffer, tuple(s.evaluate(env) for s in acc.subscripts))
                w = last_write.get(addr)
                if w is not None and w != inst:
                    record("output", w, inst)
                keep: list[tuple[str, tuple[int, ...]]] = []
                for r in pending_reads.get(addr, []):
                    if r == inst:
                        keep.append(r)  # same instance: the next write gets it
                    else:
                        record("anti", r, inst)
                pending_reads[addr] = keep
                last_write[addr] = inst
            else:
                lo = bound_eval(node.loop.lower, env)
                hi = bound_eval(node.loop.upper, env)
                it = node.loop.iterator
                for v in range(lo, hi):
                    env[it] = v
                    run(node.children, iters)
                env.pop(it, None)

    run(kernel.body, [])
    return tuple(sorted(found, key=_sort_key))

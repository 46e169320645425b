"""Structural schedule application: the pre-filter, canonicalizer and applier.

One engine drives all three so the pre-filter is sound with respect to the
applier by construction: prevalidate() dry-runs every command structurally
(with placeholder skew/shift parameters), canonicalize() reuses the dry-run's
level/alias resolution, and apply_schedule() replays the same steps with the
legality checker's solved parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .affine import (
    AffineExpr,
    BoundExpr,
    CeilDiv,
    FloorDiv,
    bound_add,
    bound_is_affine,
    bound_is_div_free,
    bound_max,
    bound_min,
    bound_names,
    bound_rename,
    bound_substitute,
)
from .ir import (
    Assignment,
    Access,
    Guard,
    Kernel,
    Loop,
    LoopNode,
    Node,
    StmtNode,
    expr_substitute,
)
from . import schedule as dsl
from .schedule import (
    Depth,
    Fuse,
    Innermost,
    Interchange,
    Parallelize,
    Reverse,
    Schedule,
    Skew,
    Tile2D,
    Tile3D,
    Transformation,
    Unroll,
)

MAX_UNROLL_FACTOR = 64
MAX_TILE_FACTOR = 512


class StructuralError(ValueError):
    """A command that cannot be applied to the current loop structure."""


@dataclass(frozen=True)
class InvalidReason:
    index: int
    reason: str

    def __str__(self) -> str:
        return f"command {self.index}: {self.reason}"


@dataclass(frozen=True)
class SkewFactor:
    sigma: int


@dataclass(frozen=True)
class FuseShifts:
    shifts: tuple[int, ...]  # one per newly fused level


SolverResult = Union[SkewFactor, FuseShifts, None]


@dataclass(frozen=True)
class TransformedKernel:
    kernel: Kernel
    parallel_levels: frozenset[tuple[str, int]]
    unroll_directives: tuple[tuple[str, int, int], ...]
    provenance: Optional[Schedule]
    parallel_loop_uids: frozenset[int]
    unroll_loop_factors: tuple[tuple[int, int], ...]
    directives_reordered: bool = False


def identity_transformed(kernel: Kernel) -> TransformedKernel:
    return TransformedKernel(kernel, frozenset(), (), None, frozenset(), ())


# ---------------------------------------------------------------------------
# tree navigation / rebuilding
# ---------------------------------------------------------------------------


def _stmt_path(body: tuple[Node, ...], comp_id: str) -> tuple[int, ...] | None:
    for i, node in enumerate(body):
        if isinstance(node, StmtNode):
            if node.comp_id == comp_id:
                return (i,)
        else:
            sub = _stmt_path(node.children, comp_id)
            if sub is not None:
                return (i,) + sub
    return None


def _node_at(body: tuple[Node, ...], path: tuple[int, ...]) -> Node:
    node = body[path[0]]
    for idx in path[1:]:
        assert isinstance(node, LoopNode)
        node = node.children[idx]
    return node


def _replace_at(
    body: tuple[Node, ...], path: tuple[int, ...], repl: tuple[Node, ...]
) -> tuple[Node, ...]:
    """Replace the node at `path` with the splice `repl`."""
    i = path[0]
    if len(path) == 1:
        return body[:i] + repl + body[i + 1 :]
    node = body[i]
    assert isinstance(node, LoopNode)
    new_children = _replace_at(node.children, path[1:], repl)
    return body[:i] + (replace(node, children=new_children),) + body[i + 1 :]


def _subtree_comp_ids(node: Node) -> tuple[str, ...]:
    if isinstance(node, StmtNode):
        return (node.comp_id,)
    out: tuple[str, ...] = ()
    for c in node.children:
        out += _subtree_comp_ids(c)
    return out


def _substitute_everywhere(node: Node, name: str, repl: AffineExpr) -> Node:
    if isinstance(node, StmtNode):
        tgt = Access(
            node.body.target.buffer,
            tuple(s.substitute(name, repl) for s in node.body.target.subscripts),
        )
        rhs = expr_substitute(node.body.rhs, name, repl)
        guards = tuple(Guard(g.expr.substitute(name, repl)) for g in node.guards)
        return StmtNode(node.comp_id, Assignment(tgt, rhs), guards)
    lp = Loop(
        node.loop.iterator,
        bound_substitute(node.loop.lower, name, repl),
        bound_substitute(node.loop.upper, name, repl),
    )
    children = tuple(_substitute_everywhere(c, name, repl) for c in node.children)
    return LoopNode(lp, children, node.uid)


def _all_names(body: tuple[Node, ...]) -> set[str]:
    names: set[str] = set()

    def walk(nodes: tuple[Node, ...]) -> None:
        for n in nodes:
            if isinstance(n, LoopNode):
                names.add(n.loop.iterator)
                names.update(bound_names(n.loop.lower))
                names.update(bound_names(n.loop.upper))
                walk(n.children)
            else:
                for acc in (n.body.target,):
                    for s in acc.subscripts:
                        names.update(s.names())

    walk(body)
    return names


# ---------------------------------------------------------------------------
# Fourier-Motzkin loop reordering (exact for unit coefficients)
# ---------------------------------------------------------------------------


def _fm_reorder(loops: list[Loop], order: list[int]) -> list[Loop]:
    """Recompute bounds for a permuted perfectly-nested band. All bounds must
    be affine with |coefficient| <= 1 on band iterators (checked by caller)."""
    names = [lp.iterator for lp in loops]
    band_names = set(names)
    ineqs: list[AffineExpr] = []
    for lp in loops:
        assert isinstance(lp.lower, AffineExpr) and isinstance(lp.upper, AffineExpr)
        it = AffineExpr.name_expr(lp.iterator)
        ineqs.append(it - lp.lower)  # it - lb >= 0
        ineqs.append(lp.upper - 1 - it)  # ub - 1 - it >= 0

    results: dict[int, tuple[list[AffineExpr], list[AffineExpr]]] = {}
    remaining = ineqs
    for pos in reversed(range(len(order))):
        var = names[order[pos]]
        allowed = {names[order[q]] for q in range(pos)}
        lowers: list[AffineExpr] = []
        uppers: list[AffineExpr] = []
        keep: list[AffineExpr] = []
        for e in remaining:
            c = e.coeff(var)
            if c == 0:
                keep.append(e)
                continue
            rest = e - AffineExpr.name_expr(var, c)
            if c > 0:
                lowers.append(-rest)  # var >= -rest
            else:
                uppers.append(rest)  # var <= rest
        for b in lowers + uppers:
            bad = (b.names() & band_names) - allowed
            if bad:
                raise StructuralError(
                    f"cannot reorder: bound on {var} depends on inner iterator {sorted(bad)}"
                )
        results[order[pos]] = (lowers, uppers)
        new_remaining = keep
        for lo in lowers:
            for hi in uppers:
                comb = hi - lo
                if comb.is_const:
                    if comb.const < 0:
                        raise StructuralError("reordering produced an empty loop band")
                elif comb.names() & band_names:
                    new_remaining.append(comb)
        remaining = new_remaining

    out: list[Loop] = []
    for pos in range(len(order)):
        old = order[pos]
        lowers, uppers = results[old]
        lo_exprs = list(dict.fromkeys(lowers))
        hi_exprs = list(dict.fromkeys(e + 1 for e in uppers))
        lower: BoundExpr = lo_exprs[0] if len(lo_exprs) == 1 else bound_max(*lo_exprs)
        upper: BoundExpr = hi_exprs[0] if len(hi_exprs) == 1 else bound_min(*hi_exprs)
        out.append(Loop(names[old], lower, upper))
    return out


# ---------------------------------------------------------------------------
# the shared engine
# ---------------------------------------------------------------------------


@dataclass
class _Directive:
    kind: str  # "parallel" | "unroll"
    comp: str
    loop_uid: int
    factor: int = 0


class Engine:
    """Mutable working state for validating and applying one schedule."""

    def __init__(self, kernel: Kernel):
        self.kernel = kernel
        self.body: tuple[Node, ...] = kernel.body
        self.directives: list[_Directive] = []
        self.directives_reordered = False

    # -- queries ------------------------------------------------------------

    def comp_ids(self) -> tuple[str, ...]:
        out: tuple[str, ...] = ()
        for node in self.body:
            out += _subtree_comp_ids(node)
        return out

    def stmt_path(self, comp: str) -> tuple[int, ...]:
        path = _stmt_path(self.body, comp)
        if path is None:
            raise StructuralError(f"unknown comp_ID {comp}")
        return path

    def loop_chain(self, comp: str) -> list[LoopNode]:
        path = self.stmt_path(comp)
        chain: list[LoopNode] = []
        node: tuple[Node, ...] = self.body
        for idx in path[:-1]:
            ln = node[idx]
            assert isinstance(ln, LoopNode)
            chain.append(ln)
            node = ln.children
        return chain

    def depth(self, comp: str) -> int:
        return len(self.loop_chain(comp))

    def loop_uids(self, comp: str) -> tuple[int, ...]:
        return tuple(n.uid for n in self.loop_chain(comp))

    def resolve_level(self, comp: str, level: dsl.LoopLevel) -> int:
        if isinstance(level, Innermost):
            return self.depth(comp) - 1
        return level.d

    def shared_prefix_len(self, a: str, b: str) -> int:
        ua, ub = self.loop_uids(a), self.loop_uids(b)
        n = 0
        for x, y in zip(ua, ub):
            if x != y:
                break
            n += 1
        return n

    def alias_rep(self, comp: str, max_level: int) -> str:
        """Lexicographically smallest comp sharing loops 0..max_level with comp."""
        best = comp
        for other in self.comp_ids():
            if other < best and self.shared_prefix_len(comp, other) >= max_level + 1:
                best = other
        return best

    def band_is_perfect(self, comp: str, lo: int, hi: int) -> bool:
        chain = self.loop_chain(comp)
        return all(len(chain[d].children) == 1 for d in range(lo, hi + 1))

    def comps_under(self, comp: str, level: int) -> tuple[str, ...]:
        """All comp_ids whose path includes comp's loop at `level`."""
        chain = self.loop_chain(comp)
        return _subtree_comp_ids(chain[level])

    # -- structural operations ----------------------------------------------

    def _mark_structural(self) -> None:
        if self.directives:
            self.directives_reordered = True

    def apply(self, cmd: Transformation, solver: SolverResult = None) -> None:
        """Apply one canonical (concrete-level) command."""
        if isinstance(cmd, Parallelize):
            level = self.resolve_level(cmd.comp, cmd.level)
            uid = self.loop_chain(cmd.comp)[level].uid
            self.directives.append(_Directive("parallel", cmd.comp, uid))
        elif isinstance(cmd, Unroll):
            level = self.resolve_level(cmd.comp, cmd.level)
            uid = self.loop_chain(cmd.comp)[level].uid
            self.directives.append(_Directive("unroll", cmd.comp, uid, cmd.factor))
        elif isinstance(cmd, Interchange):
            self._mark_structural()
            self._interchange(cmd.comp, cmd.level1.d, cmd.level2.d)
        elif isinstance(cmd, Reverse):
            self._mark_structural()
            self._reverse(cmd.comp, cmd.level.d)
        elif isinstance(cmd, Skew):
            self._mark_structural()
            sigma = solver.sigma if isinstance(solver, SkewFactor) else 1
            self._skew(cmd.comp, cmd.level1.d, sigma)
        elif isinstance(cmd, Tile2D):
            self._mark_structural()
            self._tile(cmd.comp, cmd.level1.d, (cmd.factor1, cmd.factor2))
        elif isinstance(cmd, Tile3D):
            self._mark_structural()
            self._tile(cmd.comp, cmd.level1.d, (cmd.factor1, cmd.factor2, cmd.factor3))
        elif isinstance(cmd, Fuse):
            self._mark_structural()
            shifts = solver.shifts if isinstance(solver, FuseShifts) else None
            self._fuse(cmd.comp, cmd.partner, cmd.level.d, shifts)
        else:  # pragma: no cover
            raise StructuralError(f"unsupported command {cmd}")

    def _interchange(self, comp: str, i: int, j: int) -> None:
        chain = self.loop_chain(comp)
        band = chain[i : j + 1]
        loops = [n.loop for n in band]
        order = [j - i] + list(range(1, j - i)) + [0]
        new_loops = _fm_reorder(loops, order)
        innermost_children = band[-1].children
        node: Node = None  # type: ignore[assignment]
        for pos in reversed(range(len(new_loops))):
            uid = band[order[pos]].uid
            children = innermost_children if node is None else (node,)
            node = LoopNode(new_loops[pos], children, uid)
        path = self.stmt_path(comp)[: i + 1]
        self.body = _replace_at(self.body, path, (node,))

    def _reverse(self, comp: str, k: int) -> None:
        chain = self.loop_chain(comp)
        target = chain[k]
        lower, upper = target.loop.lower, target.loop.upper
        assert isinstance(lower, AffineExpr) and isinstance(upper, AffineExpr)
        repl = lower + (upper - 1) - AffineExpr.name_expr(target.loop.iterator)
        path = self.stmt_path(comp)
        exclusive = len(_subtree_comp_ids(target)) == 1
        if exclusive:
            new_node = LoopNode(
                target.loop,
                tuple(
                    _substitute_everywhere(c, target.loop.iterator, repl)
                    for c in target.children
                ),
                target.uid,
            )
            self.body = _replace_at(self.body, path[: k + 1], (new_node,))
        else:
            # shared loop: remap only this computation's branch
            branch_path = path[: k + 2]
            branch = _node_at(self.body, branch_path)
            new_branch = _substitute_everywhere(branch, target.loop.iterator, repl)
            self.body = _replace_at(self.body, branch_path, (new_branch,))

    def _skew(self, comp: str, i: int, sigma: int) -> None:
        chain = self.loop_chain(comp)
        outer, inner = chain[i], chain[i + 1]
        u, v = outer.loop.iterator, inner.loop.iterator
        offset = AffineExpr.name_expr(u, sigma)
        new_inner_loop = Loop(
            v, bound_add(inner.loop.lower, offset), bound_add(inner.loop.upper, offset)
        )
        # the skewed iterator now carries  v_new = v_old + sigma*u : rewrite uses
        repl = AffineExpr.name_expr(v) - offset
        children = tuple(_substitute_everywhere(c, v, repl) for c in inner.children)
        new_inner = LoopNode(new_inner_loop, children, inner.uid)
        path = self.stmt_path(comp)[: i + 2]
        self.body = _replace_at(self.body, path, (new_inner,))

    def _fresh_iter(self, base: str) -> str:
        names = _all_names(self.body) | {n for n, _ in self.kernel.params}
        cand = base + "t"
        while cand in names:
            cand += "t"
        return cand

    def _tile(self, comp: str, start: int, factors: tuple[int, ...]) -> None:
        chain = self.loop_chain(comp)
        band = chain[start : start + len(factors)]
        loops = [n.loop for n in band]
        band_iters = [lp.iterator for lp in loops]

        tile_loops: list[Loop] = []
        point_loops: list[Loop] = []
        tile_names: list[str] = []
        for d, (lp, f) in enumerate(zip(loops, factors)):
            tname = self._fresh_iter(lp.iterator)
            tile_names.append(tname)
            glb, gub = lp.lower, lp.upper
            # eliminate references to outer band iterators from tile-index bounds
            for outer_idx in range(d - 1, -1, -1):
                it = band_iters[outer_idx]
                if it in bound_names(glb) or it in bound_names(gub):
                    olo, ohi = loops[outer_idx].lower, loops[outer_idx].upper
                    if not (isinstance(olo, AffineExpr) and isinstance(ohi, AffineExpr)):
                        raise StructuralError(
                            f"tiling this band requires affine bounds for {it}"
                        )
                    glb = bound_min(
                        bound_substitute(glb, it, olo),
                        bound_substitute(glb, it, ohi - 1),
                    )
                    gub = bound_max(
                        bound_substitute(gub, it, olo),
                        bound_substitute(gub, it, ohi - 1),
                    )
            tile_loops.append(Loop(tname, _floordiv(glb, f), _ceildiv(gub, f)))
            t_expr = AffineExpr.name_expr(tname, f)
            if isinstance(lp.lower, AffineExpr) and lp.lower.is_const and lp.lower.const % f == 0:
                plo: BoundExpr = t_expr
            else:
                plo = bound_max(lp.lower, t_expr)
            point_loops.append(Loop(lp.iterator, plo, bound_min(lp.upper, t_expr + f)))

        innermost_children = band[-1].children
        node: Node = None  # type: ignore[assignment]
        for d in reversed(range(len(factors))):
            children = innermost_children if node is None else (node,)
            node = LoopNode(point_loops[d], children, band[d].uid)
        for d in reversed(range(len(factors))):
            node = LoopNode(tile_loops[d], (node,))
        path = self.stmt_path(comp)[: start + 1]
        self.body = _replace_at(self.body, path, (node,))

    def _fuse(
        self, comp: str, partner: str, k: int, shifts: tuple[int, ...] | None
    ) -> None:
        first, second = self.fusion_order(comp, partner)
        m = self.shared_prefix_len(comp, partner)
        nlev = k + 1 - m
        if shifts is None:
            shifts = (0,) * nlev
        assert len(shifts) == nlev, "one shift per newly fused level"

        path1 = self.stmt_path(first)
        path2 = self.stmt_path(second)
        parent = path1[:m]
        chain1 = self.loop_chain(first)[m : k + 1]
        chain2 = self.loop_chain(second)[m : k + 1]

        # rename second's band iterators to first's, applying shifts; goes
        # through temporaries because the two nests may reuse the same names
        tail2_parent = _node_at(self.body, path2[: k + 1])
        assert isinstance(tail2_parent, LoopNode)
        tail2 = tail2_parent.children
        uid_map: dict[int, int] = {}
        for d in range(nlev):
            uid_map[chain2[d].uid] = chain1[d].uid
            tmp = AffineExpr.name_expr(f"__fuse{d}")
            tail2 = tuple(
                _substitute_everywhere(c, chain2[d].loop.iterator, tmp) for c in tail2
            )
        for d in range(nlev):
            repl = AffineExpr.name_expr(chain1[d].loop.iterator) - shifts[d]
            tail2 = tuple(
                _substitute_everywhere(c, f"__fuse{d}", repl) for c in tail2
            )

        # guards where a positive shift staggers the two bodies
        guards1: list[Guard] = []
        guards2: list[Guard] = []
        fused_loops: list[Loop] = []
        for d in range(nlev):
            lp1 = chain1[d].loop
            s = shifts[d]
            assert isinstance(lp1.lower, AffineExpr) and isinstance(lp1.upper, AffineExpr)
            it = AffineExpr.name_expr(lp1.iterator)
            upper: BoundExpr = lp1.upper + s if s else lp1.upper
            fused_loops.append(Loop(lp1.iterator, lp1.lower, upper))
            if s:
                guards1.append(Guard(lp1.upper - 1 - it))  # it < original upper
                guards2.append(Guard(it - (lp1.lower + s)))  # it >= lower + shift

        def add_guards(node: Node, guards: list[Guard]) -> Node:
            if not guards:
                return node
            if isinstance(node, StmtNode):
                return StmtNode(node.comp_id, node.body, node.guards + tuple(guards))
            return LoopNode(
                node.loop, tuple(add_guards(c, guards) for c in node.children), node.uid
            )

        tail1_parent = _node_at(self.body, path1[: k + 1])
        assert isinstance(tail1_parent, LoopNode)
        tail1 = tuple(add_guards(c, guards1) for c in tail1_parent.children)
        tail2 = tuple(add_guards(c, guards2) for c in tail2)

        merged: Node = None  # type: ignore[assignment]
        for d in reversed(range(nlev)):
            children = tail1 + tail2 if merged is None else (merged,)
            merged = LoopNode(fused_loops[d], children, chain1[d].uid)

        # remove the second subtree, then replace the first with the merged nest
        entry1, entry2 = path1[m], path2[m]
        assert entry2 == entry1 + 1, "fusion requires adjacent siblings"
        container = self.body if not parent else _node_at(self.body, parent)
        if parent:
            assert isinstance(container, LoopNode)
            kids = container.children
            new_kids = kids[:entry1] + (merged,) + kids[entry2 + 1 :]
            self.body = _replace_at(self.body, parent, (replace(container, children=new_kids),))
        else:
            self.body = self.body[:entry1] + (merged,) + self.body[entry2 + 1 :]

        for dv in self.directives:
            dv.loop_uid = uid_map.get(dv.loop_uid, dv.loop_uid)

    def fusion_order(self, comp: str, partner: str) -> tuple[str, str]:
        """Textual order of the two fusion subtrees (first, second)."""
        m = self.shared_prefix_len(comp, partner)
        p1, p2 = self.stmt_path(comp), self.stmt_path(partner)
        return (comp, partner) if p1[m] < p2[m] else (partner, comp)

    # -- finishing ----------------------------------------------------------

    def finish(self, schedule: Schedule | None) -> TransformedKernel:
        kernel = replace(self.kernel, body=self.body)
        parallel_uids: set[int] = set()
        unrolls: list[tuple[int, int]] = []
        parallel_levels: set[tuple[str, int]] = set()
        unroll_dirs: list[tuple[str, int, int]] = []
        for dv in self.directives:
            uids = self.loop_uids(dv.comp)
            if dv.loop_uid not in uids:
                raise StructuralError(
                    f"internal: directive loop for {dv.comp} disappeared"
                )
            level = uids.index(dv.loop_uid)
            if dv.kind == "parallel":
                parallel_uids.add(dv.loop_uid)
                parallel_levels.add((dv.comp, level))
            else:
                unrolls.append((dv.loop_uid, dv.factor))
                unroll_dirs.append((dv.comp, level, dv.factor))
        return TransformedKernel(
            kernel,
            frozenset(parallel_levels),
            tuple(unroll_dirs),
            schedule,
            frozenset(parallel_uids),
            tuple(unrolls),
            self.directives_reordered,
        )


def _floordiv(b: BoundExpr, d: int) -> BoundExpr:
    if isinstance(b, AffineExpr) and b.is_const:
        return AffineExpr.const_expr(b.const // d)
    return FloorDiv(b, d)


def _ceildiv(b: BoundExpr, d: int) -> BoundExpr:
    if isinstance(b, AffineExpr) and b.is_const:
        return AffineExpr.const_expr(-((-b.const) // d))
    return CeilDiv(b, d)


# ---------------------------------------------------------------------------
# validation + canonicalization walk
# ---------------------------------------------------------------------------


@dataclass
class _Walk:
    canonical: list[Transformation] = field(default_factory=list)
    seen: set[str] = field(default_factory=set)
    parallelized: set[str] = field(default_factory=set)


def _check_and_canonicalize(
    engine: Engine, cmd: Transformation, walk: _Walk
) -> Transformation:
    """Resolve levels and aliases for one command, enforcing all structural
    preconditions against the engine's current tree. Raises StructuralError."""

    comps = engine.comp_ids()
    if cmd.comp not in comps:
        raise StructuralError(f"unknown comp_ID {cmd.comp}")
    if isinstance(cmd, Fuse) and cmd.partner not in comps:
        raise StructuralError(f"unknown comp_ID {cmd.partner}")

    depth = engine.depth(cmd.comp)

    def resolve(level: dsl.LoopLevel, role: str) -> Depth:
        d = engine.resolve_level(cmd.comp, level)
        if not (0 <= d < depth):
            raise StructuralError(
                f"{role} L{d} is outside {cmd.comp}'s nest (depth {depth})"
            )
        return Depth(d)

    def check_band_perfect(lo: int, hi: int, what: str) -> None:
        if not engine.band_is_perfect(cmd.comp, lo, hi):
            raise StructuralError(
                f"{what} requires perfect nesting of {cmd.comp}'s loops L{lo}..L{hi}"
            )

    chain = engine.loop_chain(cmd.comp)

    if isinstance(cmd, Parallelize):
        level = resolve(cmd.level, "level")
        canon: Transformation = Parallelize(
            engine.alias_rep(cmd.comp, level.d), level
        )
        if canon.comp in walk.parallelized:
            raise StructuralError(f"{canon.comp} already has a Parallelize command")
    elif isinstance(cmd, Unroll):
        if cmd.factor > MAX_UNROLL_FACTOR:
            raise StructuralError(
                f"unroll factor {cmd.factor} exceeds the limit of {MAX_UNROLL_FACTOR}"
            )
        level = resolve(cmd.level, "level")
        canon = Unroll(engine.alias_rep(cmd.comp, level.d), level, cmd.factor)
    elif isinstance(cmd, Interchange):
        l1 = resolve(cmd.level1, "level")
        l2 = resolve(cmd.level2, "level")
        lo, hi = min(l1.d, l2.d), max(l1.d, l2.d)
        if lo == hi:
            raise StructuralError("Interchange levels must be distinct")
        check_band_perfect(lo, hi, "loop interchange")
        band_iters = {chain[d].loop.iterator for d in range(lo, hi + 1)}
        for d in range(lo, hi + 1):
            for b in (chain[d].loop.lower, chain[d].loop.upper):
                if not bound_is_affine(b):
                    raise StructuralError(
                        "loop interchange requires affine band bounds "
                        "(tiled loops cannot be interchanged)"
                    )
                for name in b.names() & band_iters:
                    if abs(b.coeff(name)) > 1:
                        raise StructuralError(
                            f"interchange bound coefficient on {name} exceeds 1"
                        )
        canon = Interchange(engine.alias_rep(cmd.comp, hi), l1, l2)
    elif isinstance(cmd, Reverse):
        level = resolve(cmd.level, "level")
        lp = chain[level.d].loop
        if not (bound_is_affine(lp.lower) and bound_is_affine(lp.upper)):
            raise StructuralError("cannot reverse a min/max-bounded loop")
        for d in range(level.d + 1, depth):
            if len(_subtree_comp_ids(chain[d])) != 1:
                raise StructuralError(
                    f"cannot reverse L{level.d}: {cmd.comp}'s inner loops are "
                    "shared with other computations"
                )
        # no alias rewrite: reversal retraverses only the named computation
        canon = Reverse(cmd.comp, level)
    elif isinstance(cmd, Skew):
        l1 = resolve(cmd.level1, "level")
        l2 = resolve(cmd.level2, "level")
        if l2.d != l1.d + 1:
            raise StructuralError("Skew levels must be adjacent and ordered")
        check_band_perfect(l1.d, l2.d, "loop skewing")
        for d in (l1.d, l2.d):
            for b in (chain[d].loop.lower, chain[d].loop.upper):
                if not bound_is_div_free(b):
                    raise StructuralError("cannot skew tile-index loops")
        canon = Skew(engine.alias_rep(cmd.comp, l2.d), l1, l2)
    elif isinstance(cmd, Tile2D):
        l1 = resolve(cmd.level1, "level")
        l2 = resolve(cmd.level2, "level")
        if l2.d != l1.d + 1:
            raise StructuralError("Tile2D levels must be adjacent and ordered")
        for f in (cmd.factor1, cmd.factor2):
            if f > MAX_TILE_FACTOR:
                raise StructuralError(
                    f"tile factor {f} exceeds the limit of {MAX_TILE_FACTOR}"
                )
        check_band_perfect(l1.d, l2.d, "2D tiling")
        canon = Tile2D(
            engine.alias_rep(cmd.comp, l2.d), l1, l2, cmd.factor1, cmd.factor2
        )
    elif isinstance(cmd, Tile3D):
        l1 = resolve(cmd.level1, "level")
        l2 = resolve(cmd.level2, "level")
        l3 = resolve(cmd.level3, "level")
        if l2.d != l1.d + 1 or l3.d != l2.d + 1:
            raise StructuralError("Tile3D levels must be consecutive")
        for f in (cmd.factor1, cmd.factor2, cmd.factor3):
            if f > MAX_TILE_FACTOR:
                raise StructuralError(
                    f"tile factor {f} exceeds the limit of {MAX_TILE_FACTOR}"
                )
        check_band_perfect(l1.d, l3.d, "3D tiling")
        canon = Tile3D(
            engine.alias_rep(cmd.comp, l3.d),
            l1,
            l2,
            l3,
            cmd.factor1,
            cmd.factor2,
            cmd.factor3,
        )
    elif isinstance(cmd, Fuse):
        level = resolve(cmd.level, "level")
        k = level.d
        pdepth = engine.depth(cmd.partner)
        if pdepth < k + 1:
            raise StructuralError(
                f"{cmd.partner} has depth {pdepth}, too shallow to fuse at L{k}"
            )
        m = engine.shared_prefix_len(cmd.comp, cmd.partner)
        if m > k:
            raise StructuralError(
                f"{cmd.comp} and {cmd.partner} already share loops through L{k}; "
                "nothing to fuse"
            )
        first, second = engine.fusion_order(cmd.comp, cmd.partner)
        p1, p2 = engine.stmt_path(first), engine.stmt_path(second)
        if p2[m] != p1[m] + 1:
            raise StructuralError(
                f"fusion requires {cmd.comp} and {cmd.partner} to be adjacent "
                "sibling loop nests"
            )
        ch1, ch2 = engine.loop_chain(first), engine.loop_chain(second)
        for d in range(m, k):
            if len(ch1[d].children) != 1 or len(ch2[d].children) != 1:
                raise StructuralError(
                    f"fusion at L{k} requires unbranched loop chains down to L{k}"
                )
        rename = {
            ch2[d].loop.iterator: ch1[d].loop.iterator for d in range(m, k + 1)
        }
        for d in range(m, k + 1):
            b1l, b1u = ch1[d].loop.lower, ch1[d].loop.upper
            b2l, b2u = ch2[d].loop.lower, ch2[d].loop.upper
            if not all(bound_is_affine(b) for b in (b1l, b1u, b2l, b2u)):
                raise StructuralError("fusion requires affine bounds at fused levels")
            if bound_rename(b2l, rename) != b1l or bound_rename(b2u, rename) != b1u:
                raise StructuralError(
                    f"loop bounds differ at L{d}; cannot fuse {cmd.comp} with {cmd.partner}"
                )
        canon = Fuse(
            engine.alias_rep(cmd.comp, k), engine.alias_rep(cmd.partner, k), level
        )
    else:  # pragma: no cover
        raise StructuralError(f"unsupported command {cmd}")

    key = str(canon)
    if key in walk.seen:
        raise StructuralError(f"duplicate command {key}")
    walk.seen.add(key)
    if isinstance(canon, Parallelize):
        walk.parallelized.add(canon.comp)
    walk.canonical.append(canon)
    return canon


def prevalidate(schedule: Schedule, kernel: Kernel) -> InvalidReason | None:
    """Compiler-independent validity pre-filter. Returns None when the
    schedule is structurally applicable, else the first InvalidReason."""
    engine = Engine(kernel)
    walk = _Walk()
    for index, cmd in enumerate(schedule.commands):
        try:
            canon = _check_and_canonicalize(engine, cmd, walk)
            engine.apply(canon)
        except StructuralError as e:
            return InvalidReason(index, str(e))
    return None


def canonicalize_impl(kernel: Kernel, schedule: Schedule) -> Schedule:
    engine = Engine(kernel)
    walk = _Walk()
    for cmd in schedule.commands:
        canon = _check_and_canonicalize(engine, cmd, walk)
        engine.apply(canon)
    return Schedule(tuple(walk.canonical))


def apply_schedule(
    kernel: Kernel,
    schedule: Schedule,
    solver_results: list[SolverResult] | None = None,
) -> TransformedKernel:
    """Apply a legal schedule, producing the transformed kernel plus the
    recorded parallel/unroll directives. Requires prevalidation (and, for
    Skew/Fuse commands, the legality checker's solver results)."""
    if solver_results is None:
        solver_results = [None] * len(schedule.commands)
    if len(solver_results) != len(schedule.commands):
        raise ValueError("one solver result slot per command is required")
    engine = Engine(kernel)
    walk = _Walk()
    for cmd, solver in zip(schedule.commands, solver_results):
        canon = _check_and_canonicalize(engine, cmd, walk)
        engine.apply(canon, solver)
    return engine.finish(schedule)

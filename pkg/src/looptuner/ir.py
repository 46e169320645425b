"""Affine loop-nest IR.

A kernel is a parameterized program: buffer declarations plus an ordered
body tree of unit-step `for` loops and single-assignment statements. Each
statement carries a unique compNN identifier and is viewed, for analysis,
as a Computation: the statement together with its enclosing loop chain
(outermost to innermost). Loops may be shared between computations (two
statements under one textual loop), which the tree makes explicit.

All values are immutable after construction; transformations build new
trees.
"""

from __future__ import annotations

import itertools
import re
import string
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Optional, Union

from .affine import (
    AffineExpr,
    BoundExpr,
    bound_eval,
    bound_names,
    bound_rename,
    bound_str,
)

COMP_ID_RE = re.compile(r"^comp\d{2}$")

_uid_counter = itertools.count(1)


def fresh_uid() -> int:
    return next(_uid_counter)


# ---------------------------------------------------------------------------
# value expressions (statement right-hand sides)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class NameRef:
    """Reference to an iterator or parameter used as a value."""

    name: str


@dataclass(frozen=True)
class Access:
    buffer: str
    subscripts: tuple[AffineExpr, ...]

    def __str__(self) -> str:
        return self.buffer + "".join(f"[{s}]" for s in self.subscripts)


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


Expr = Union[IntLit, NameRef, Access, BinOp]


def expr_accesses(e: Expr) -> Iterator[Access]:
    if isinstance(e, Access):
        yield e
    elif isinstance(e, BinOp):
        yield from expr_accesses(e.left)
        yield from expr_accesses(e.right)


def expr_substitute(e: Expr, name: str, repl: AffineExpr) -> Expr:
    if isinstance(e, IntLit):
        return e
    if isinstance(e, NameRef):
        if e.name != name:
            return e
        return _affine_to_expr(repl)
    if isinstance(e, Access):
        return Access(e.buffer, tuple(s.substitute(name, repl) for s in e.subscripts))
    return BinOp(e.op, expr_substitute(e.left, name, repl), expr_substitute(e.right, name, repl))


def expr_rename(e: Expr, mapping: Mapping[str, str], buffers: Mapping[str, str]) -> Expr:
    if isinstance(e, IntLit):
        return e
    if isinstance(e, NameRef):
        return NameRef(mapping.get(e.name, e.name))
    if isinstance(e, Access):
        return Access(
            buffers.get(e.buffer, e.buffer),
            tuple(s.rename(mapping) for s in e.subscripts),
        )
    return BinOp(e.op, expr_rename(e.left, mapping, buffers), expr_rename(e.right, mapping, buffers))


def _affine_to_expr(a: AffineExpr) -> Expr:
    out: Optional[Expr] = None
    for n, c in a.terms:
        term: Expr = NameRef(n) if c == 1 else BinOp("*", IntLit(c), NameRef(n))
        out = term if out is None else BinOp("+", out, term)
    if out is None:
        return IntLit(a.const)
    if a.const:
        out = BinOp("+", out, IntLit(a.const))
    return out


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def expr_str(e: Expr, parent_prec: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value) if e.value >= 0 else f"({e.value})"
    if isinstance(e, NameRef):
        return e.name
    if isinstance(e, Access):
        return str(e)
    p = _PREC[e.op]
    left = expr_str(e.left, p)
    # right child of - and / needs parens at equal precedence
    right = expr_str(e.right, p + (1 if e.op in "-/" else 0))
    s = f"{left} {e.op} {right}"
    return f"({s})" if p < parent_prec else s


# ---------------------------------------------------------------------------
# program tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Loop:
    iterator: str
    lower: BoundExpr
    upper: BoundExpr  # exclusive; step is always +1


@dataclass(frozen=True)
class Assignment:
    target: Access
    rhs: Expr


@dataclass(frozen=True)
class Guard:
    """Affine inequality `expr >= 0` attached to a statement (fusion shifts)."""

    expr: AffineExpr


@dataclass(frozen=True)
class StmtNode:
    comp_id: str
    body: Assignment
    guards: tuple[Guard, ...] = ()


@dataclass(frozen=True)
class LoopNode:
    loop: Loop
    children: tuple["Node", ...]
    # node identity survives copies/renames but never affects structural equality
    uid: int = field(default_factory=fresh_uid, compare=False)


Node = Union[LoopNode, StmtNode]


@dataclass(frozen=True)
class BufferDecl:
    name: str
    ctype: str  # "double" or "long"
    extents: tuple[AffineExpr, ...]

    @property
    def rank(self) -> int:
        return len(self.extents)


@dataclass(frozen=True)
class Computation:
    """Analysis view of one statement: its loop chain and the statement."""

    comp_id: str
    loops: tuple[Loop, ...]
    loop_uids: tuple[int, ...]
    body: Assignment
    guards: tuple[Guard, ...] = ()

    @property
    def depth(self) -> int:
        return len(self.loops)

    def iterator(self, level: int) -> str:
        return self.loops[level].iterator

    def writes(self) -> tuple[Access, ...]:
        return (self.body.target,)

    def reads(self) -> tuple[Access, ...]:
        return tuple(expr_accesses(self.body.rhs))


@dataclass(frozen=True)
class Kernel:
    name: str
    params: tuple[tuple[str, int], ...]
    buffers: tuple[BufferDecl, ...]
    body: tuple[Node, ...]

    def param_env(self) -> dict[str, int]:
        return dict(self.params)

    def buffer(self, name: str) -> BufferDecl:
        for b in self.buffers:
            if b.name == name:
                return b
        raise KeyError(name)

    def with_params(self, **sizes: int) -> "Kernel":
        """Rebind parameter sizes (bounds/extents are symbolic, so this is free)."""
        known = dict(self.params)
        for k, v in sizes.items():
            if k not in known:
                raise KeyError(f"unknown parameter {k!r}")
            if v < 1:
                raise ValueError(f"parameter {k} must be >= 1, got {v}")
            known[k] = v
        return replace(self, params=tuple(known.items()))

    # -- computation views -------------------------------------------------

    def computations(self) -> tuple[Computation, ...]:
        out: list[Computation] = []

        def walk(nodes: tuple[Node, ...], loops: list[Loop], uids: list[int]) -> None:
            for node in nodes:
                if isinstance(node, StmtNode):
                    out.append(
                        Computation(
                            node.comp_id,
                            tuple(loops),
                            tuple(uids),
                            node.body,
                            node.guards,
                        )
                    )
                else:
                    loops.append(node.loop)
                    uids.append(node.uid)
                    walk(node.children, loops, uids)
                    loops.pop()
                    uids.pop()

        walk(self.body, [], [])
        return tuple(out)

    def computation(self, comp_id: str) -> Computation:
        for c in self.computations():
            if c.comp_id == comp_id:
                return c
        raise KeyError(f"unknown comp_ID {comp_id}")

    def comp_ids(self) -> tuple[str, ...]:
        return tuple(c.comp_id for c in self.computations())

    def common_prefix_len(self, a: str, b: str) -> int:
        """Number of textually shared enclosing loops of two computations."""
        ca, cb = self.computation(a), self.computation(b)
        if a == b:
            return ca.depth
        n = 0
        for ua, ub in zip(ca.loop_uids, cb.loop_uids):
            if ua != ub:
                break
            n += 1
        return n

    def validate(self) -> None:
        seen: set[str] = set()
        declared = {b.name for b in self.buffers}
        params = {n for n, _ in self.params}
        for n, v in self.params:
            if v < 1:
                raise ValueError(f"parameter {n} must be >= 1, got {v}")
        for b in self.buffers:
            for e in b.extents:
                bad = e.names() - params
                if bad:
                    raise ValueError(f"buffer {b.name} extent uses unknown names {sorted(bad)}")
        for comp in self.computations():
            if not COMP_ID_RE.match(comp.comp_id):
                raise ValueError(f"malformed comp_ID {comp.comp_id!r}")
            if comp.comp_id in seen:
                raise ValueError(f"duplicate comp_ID {comp.comp_id}")
            seen.add(comp.comp_id)
            if comp.depth < 1:
                raise ValueError(f"{comp.comp_id}: loop depth must be >= 1")
            bound = set(params)
            for lp in comp.loops:
                if lp.iterator in bound:
                    raise ValueError(
                        f"{comp.comp_id}: iterator {lp.iterator} shadows an "
                        "enclosing iterator or parameter"
                    )
                bad = bound_names(lp.lower) - bound
                bad |= bound_names(lp.upper) - bound
                if bad:
                    raise ValueError(
                        f"{comp.comp_id}: loop {lp.iterator} bounds use unbound names {sorted(bad)}"
                    )
                bound.add(lp.iterator)
            for acc in comp.writes() + comp.reads():
                if acc.buffer not in declared:
                    raise ValueError(f"{comp.comp_id}: undeclared buffer {acc.buffer}")
                if len(acc.subscripts) != self.buffer(acc.buffer).rank:
                    raise ValueError(
                        f"{comp.comp_id}: access {acc} has {len(acc.subscripts)} "
                        f"subscripts, buffer rank is {self.buffer(acc.buffer).rank}"
                    )
                for s in acc.subscripts:
                    bad = s.names() - bound
                    if bad:
                        raise ValueError(
                            f"{comp.comp_id}: access {acc} uses unbound names {sorted(bad)}"
                        )


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------


def print_kernel(kernel: Kernel) -> str:
    lines: list[str] = []
    params = ",".join(f"{n}={v}" for n, v in kernel.params)
    lines.append(f"#pragma kernel {kernel.name} params({params})")
    for b in kernel.buffers:
        dims = "".join(f"[{e}]" for e in b.extents)
        lines.append(f"{b.ctype} {b.name}{dims};")
    lines.append("")

    def emit(nodes: tuple[Node, ...], indent: int) -> None:
        pad = "  " * indent
        for node in nodes:
            if isinstance(node, StmtNode):
                lines.append(f"{pad}// comp_ID: {node.comp_id}")
                stmt = f"{node.body.target} = {expr_str(node.body.rhs)};"
                if node.guards:
                    cond = " && ".join(f"{g.expr} >= 0" for g in node.guards)
                    stmt = f"if ({cond}) {stmt}"
                lines.append(f"{pad}{stmt}")
            else:
                lp = node.loop
                lines.append(
                    f"{pad}for ({lp.iterator} = {bound_str(lp.lower)}; "
                    f"{lp.iterator} < {bound_str(lp.upper)}; {lp.iterator}++) {{"
                )
                emit(node.children, indent + 1)
                lines.append(f"{pad}}}")

    emit(kernel.body, 0)
    return "\n".join(lines) + "\n"


def render_for_prompt(kernel: Kernel, initial_time_ms: float) -> str:
    """Annotated listing plus the measured starting time, as shown to the model."""
    if not (initial_time_ms > 0):
        raise ValueError(f"initial_time_ms must be positive, got {initial_time_ms}")
    listing = print_kernel(kernel)
    return (
        "Here is the loop nest to optimize:\n\n```c\n"
        + listing
        + "```\n\n"
        + f"Initial execution time: {initial_time_ms:g} ms\n"
    )


# ---------------------------------------------------------------------------
# anonymization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NameMap:
    """Anonymized-name -> original-name mappings, for de-anonymized reporting."""

    buffers: tuple[tuple[str, str], ...]
    iterators: tuple[tuple[str, tuple[tuple[str, str], ...]], ...]

    def original_buffer(self, anon: str) -> str:
        return dict(self.buffers)[anon]


def _iterator_letters(reserved: set[str]) -> list[str]:
    letters = [c for c in string.ascii_lowercase if c not in reserved]
    extra = [a + b for a in string.ascii_lowercase for b in string.ascii_lowercase]
    return letters + [x for x in extra if x not in reserved]


def anonymize(kernel: Kernel) -> tuple[Kernel, NameMap]:
    """Rename iterators to a, b, c, ... by depth and buffers to buf0, buf1, ...
    in first-occurrence order. Parameters keep their names."""
    params = {n for n, _ in kernel.params}
    letters = _iterator_letters(params)

    # buffers in first-occurrence order over statements (target, then rhs),
    # then any never-referenced declarations in declaration order
    order: list[str] = []
    for comp in kernel.computations():
        for acc in (comp.body.target, *expr_accesses(comp.body.rhs)):
            if acc.buffer not in order:
                order.append(acc.buffer)
    for b in kernel.buffers:
        if b.name not in order:
            order.append(b.name)
    buf_map = {old: f"buf{i}" for i, old in enumerate(order)}

    def rewrite(nodes: tuple[Node, ...], iter_map: dict[str, str], depth: int) -> tuple[Node, ...]:
        out: list[Node] = []
        for node in nodes:
            if isinstance(node, StmtNode):
                tgt = Access(
                    buf_map[node.body.target.buffer],
                    tuple(s.rename(iter_map) for s in node.body.target.subscripts),
                )
                rhs = expr_rename(node.body.rhs, iter_map, buf_map)
                guards = tuple(Guard(g.expr.rename(iter_map)) for g in node.guards)
                out.append(StmtNode(node.comp_id, Assignment(tgt, rhs), guards))
            else:
                new_name = letters[depth]
                inner = dict(iter_map)
                inner[node.loop.iterator] = new_name
                lp = Loop(
                    new_name,
                    bound_rename(node.loop.lower, iter_map),
                    bound_rename(node.loop.upper, iter_map),
                )
                out.append(LoopNode(lp, rewrite(node.children, inner, depth + 1), node.uid))
        return tuple(out)

    new_body = rewrite(kernel.body, {}, 0)
    new_buffers = tuple(
        BufferDecl(buf_map[b.name], b.ctype, b.extents) for b in kernel.buffers
    )
    anon = replace(kernel, buffers=new_buffers, body=new_body)

    iter_maps: list[tuple[str, tuple[tuple[str, str], ...]]] = []
    for before, after in zip(kernel.computations(), anon.computations()):
        pairs = tuple(
            (new.iterator, old.iterator) for new, old in zip(after.loops, before.loops)
        )
        iter_maps.append((after.comp_id, pairs))
    name_map = NameMap(
        buffers=tuple((new, old) for old, new in buf_map.items()),
        iterators=tuple(iter_maps),
    )
    return anon, name_map

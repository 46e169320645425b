"""C code generation for transformed kernels.

Emits a self-contained C99 translation unit: seeded deterministic buffer
initialization, the loop nests with `#pragma omp parallel for` on parallel
levels, unrolling realized by body replication with a remainder epilogue,
a monotonic-clock timing harness around the kernel region, and a checksum
over all buffers. Output protocol on stdout:

    TIME_MS: <float>
    CHECKSUM: <16 hex digits>

Emission is deterministic: identical transformed kernels yield identical
bytes.
"""

from __future__ import annotations

from typing import Mapping

from .affine import AffineExpr, BoundExpr, CeilDiv, FloorDiv, MaxExpr, MinExpr
from .ir import Access, BinOp, Expr, IntLit, Kernel, LoopNode, NameRef, Node, StmtNode
from .transform import TransformedKernel

_PRELUDE = r"""#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <time.h>

static long lt_min2(long a, long b) { return a < b ? a : b; }
static long lt_max2(long a, long b) { return a > b ? a : b; }
static long lt_floordiv(long a, long b) {
  long q = a / b;
  return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
}
static long lt_ceildiv(long a, long b) { return -lt_floordiv(-a, b); }

static unsigned long lt_rng = 88172645463325252UL;
static long lt_init_value(void) {
  lt_rng = lt_rng * 6364136223846793005UL + 1442695040888963407UL;
  return (long)((lt_rng >> 33) % 10UL);
}
"""


def _affine_c(e: AffineExpr, offsets: Mapping[str, int]) -> str:
    shifted_const = e.const + sum(c * offsets.get(n, 0) for n, c in e.terms)
    parts: list[str] = []
    for n, c in e.terms:
        if c == 1:
            parts.append(n if not parts else f" + {n}")
        elif c == -1:
            parts.append(f"-{n}" if not parts else f" - {n}")
        elif c > 0:
            parts.append(f"{c}*{n}" if not parts else f" + {c}*{n}")
        else:
            parts.append(f"{c}*{n}" if not parts else f" - {-c}*{n}")
    if not parts:
        return str(shifted_const)
    if shifted_const > 0:
        parts.append(f" + {shifted_const}")
    elif shifted_const < 0:
        parts.append(f" - {-shifted_const}")
    return "".join(parts)


def _bound_c(b: BoundExpr, offsets: Mapping[str, int]) -> str:
    if isinstance(b, AffineExpr):
        return _affine_c(b, offsets)
    if isinstance(b, MinExpr):
        out = _bound_c(b.args[0], offsets)
        for a in b.args[1:]:
            out = f"lt_min2({out}, {_bound_c(a, offsets)})"
        return out
    if isinstance(b, MaxExpr):
        out = _bound_c(b.args[0], offsets)
        for a in b.args[1:]:
            out = f"lt_max2({out}, {_bound_c(a, offsets)})"
        return out
    if isinstance(b, FloorDiv):
        return f"lt_floordiv({_bound_c(b.arg, offsets)}, {b.divisor})"
    return f"lt_ceildiv({_bound_c(b.arg, offsets)}, {b.divisor})"


class _Emitter:
    def __init__(self, tk: TransformedKernel):
        self.tk = tk
        self.kernel = tk.kernel
        self.lines: list[str] = []
        self.indent = 0
        self.tmp = 0
        self.unroll = dict(tk.unroll_loop_factors)

    def out(self, s: str = "") -> None:
        self.lines.append(("  " * self.indent + s) if s else "")

    def fresh(self, base: str) -> str:
        self.tmp += 1
        return f"lt_{base}{self.tmp}"

    # -- expressions ---------------------------------------------------------

    def access_c(self, acc: Access, offsets: Mapping[str, int]) -> str:
        decl = self.kernel.buffer(acc.buffer)
        idx = _affine_c(acc.subscripts[0], offsets)
        for d in range(1, decl.rank):
            idx = f"({idx}) * {acc.buffer}_d{d} + ({_affine_c(acc.subscripts[d], offsets)})"
        return f"{acc.buffer}[{idx}]"

    def expr_c(self, e: Expr, offsets: Mapping[str, int], prec: int = 0) -> str:
        if isinstance(e, IntLit):
            return str(e.value) if e.value >= 0 else f"({e.value})"
        if isinstance(e, NameRef):
            off = offsets.get(e.name, 0)
            return f"({e.name} + {off})" if off else e.name
        if isinstance(e, Access):
            return self.access_c(e, offsets)
        p = {"+": 1, "-": 1, "*": 2, "/": 2}[e.op]
        left = self.expr_c(e.left, offsets, p)
        right = self.expr_c(e.right, offsets, p + (1 if e.op in "-/" else 0))
        s = f"{left} {e.op} {right}"
        return f"({s})" if p < prec else s

    # -- statements and loops ------------------------------------------------

    def emit_stmt(self, node: StmtNode, offsets: Mapping[str, int]) -> None:
        stmt = (
            f"{self.access_c(node.body.target, offsets)} = "
            f"{self.expr_c(node.body.rhs, offsets)};"
        )
        if node.guards:
            cond = " && ".join(
                f"({_affine_c(g.expr, offsets)}) >= 0" for g in node.guards
            )
            stmt = f"if ({cond}) {stmt}"
        self.out(stmt)

    def emit_body(self, nodes: tuple[Node, ...], offsets: Mapping[str, int]) -> None:
        for node in nodes:
            if isinstance(node, StmtNode):
                self.emit_stmt(node, offsets)
            else:
                self.emit_loop(node, offsets)

    def emit_loop(self, node: LoopNode, offsets: Mapping[str, int]) -> None:
        it = node.loop.iterator
        lb = _bound_c(node.loop.lower, offsets)
        ub = _bound_c(node.loop.upper, offsets)
        parallel = node.uid in self.tk.parallel_loop_uids
        factor = self.unroll.get(node.uid, 0)
        if factor:
            lo_v, hi_v, end_v = self.fresh("lo"), self.fresh("hi"), self.fresh("end")
            self.out("{")
            self.indent += 1
            self.out(f"long {lo_v} = {lb};")
            self.out(f"long {hi_v} = {ub};")
            self.out(
                f"long {end_v} = {lo_v} + ({hi_v} > {lo_v} ? (({hi_v} - {lo_v}) / {factor}) * {factor} : 0);"
            )
            if parallel:
                self.out("#pragma omp parallel for")
            self.out(f"for (long {it} = {lo_v}; {it} < {end_v}; {it} += {factor}) {{")
            self.indent += 1
            for t in range(factor):
                inner = dict(offsets)
                inner[it] = inner.get(it, 0) + t
                self.emit_body(node.children, inner)
            self.indent -= 1
            self.out("}")
            self.out(f"for (long {it} = {end_v}; {it} < {hi_v}; {it}++) {{")
            self.indent += 1
            self.emit_body(node.children, offsets)
            self.indent -= 1
            self.out("}")
            self.indent -= 1
            self.out("}")
        else:
            if parallel:
                self.out("#pragma omp parallel for")
            self.out(f"for (long {it} = {lb}; {it} < {ub}; {it}++) {{")
            self.indent += 1
            self.emit_body(node.children, offsets)
            self.indent -= 1
            self.out("}")

    # -- whole program ---------------------------------------------------------

    def emit(self) -> str:
        k = self.kernel
        self.out(f"/* kernel {k.name}: generated code, do not edit */")
        self.lines.append(_PRELUDE)
        for name, value in k.params:
            self.out(f"static const long {name} = {value};")
        self.out()
        for b in k.buffers:
            ctype = "double" if b.ctype == "double" else "long"
            self.out(f"static {ctype} *{b.name};")
            for d in range(1, b.rank):
                self.out(f"static long {b.name}_d{d};")
        self.out()
        self.out("int main(void) {")
        self.indent += 1
        for b in k.buffers:
            ctype = "double" if b.ctype == "double" else "long"
            size = " * ".join(f"({_affine_c(e, {})})" for e in b.extents)
            self.out(f"{b.name} = ({ctype} *)malloc(sizeof({ctype}) * ({size}));")
            for d in range(1, b.rank):
                self.out(f"{b.name}_d{d} = {_affine_c(b.extents[d], {})};")
            total = self.fresh("n")
            idx = self.fresh("i")
            self.out(f"long {total} = {size};")
            self.out(f"for (long {idx} = 0; {idx} < {total}; {idx}++) "
                     f"{b.name}[{idx}] = ({ctype})lt_init_value();")
        self.out()
        self.out("struct timespec lt_t0, lt_t1;")
        self.out("clock_gettime(CLOCK_MONOTONIC, &lt_t0);")
        self.emit_body(k.body, {})
        self.out("clock_gettime(CLOCK_MONOTONIC, &lt_t1);")
        self.out(
            "double lt_ms = (lt_t1.tv_sec - lt_t0.tv_sec) * 1000.0 + "
            "(lt_t1.tv_nsec - lt_t0.tv_nsec) / 1.0e6;"
        )
        self.out('printf("TIME_MS: %.6f\\n", lt_ms);')
        self.out("unsigned long lt_cs = 1469598103934665603UL;")
        for b in k.buffers:
            size = " * ".join(f"({_affine_c(e, {})})" for e in b.extents)
            idx = self.fresh("i")
            self.out(f"for (long {idx} = 0; {idx} < {size}; {idx}++) {{")
            self.indent += 1
            if b.ctype == "double":
                self.out("unsigned long lt_bits;")
                self.out(f"memcpy(&lt_bits, &{b.name}[{idx}], sizeof lt_bits);")
                self.out("lt_cs = (lt_cs ^ lt_bits) * 1099511628211UL;")
            else:
                self.out(f"lt_cs = (lt_cs ^ (unsigned long){b.name}[{idx}]) * 1099511628211UL;")
            self.indent -= 1
            self.out("}")
        self.out('printf("CHECKSUM: %016lx\\n", lt_cs);')
        for b in k.buffers:
            self.out(f"free({b.name});")
        self.out("return 0;")
        self.indent -= 1
        self.out("}")
        return "\n".join(self.lines) + "\n"


def emit_c(tk: TransformedKernel) -> str:
    """Emit a compilable C translation unit for a transformed kernel."""
    return _Emitter(tk).emit()

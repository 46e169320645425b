"""Parser for the restricted-C kernel input format.

Format: one `#pragma kernel <name> params(N=...,M=...)` header line, buffer
declarations (`double buf0[N][N];` or `long`), then annotated loop nests.
Loops are `for (i = LB; i < UB; i++)` with affine bounds and unit step;
bodies are single assignments, each preceded by a `// comp_ID: compNN`
comment. No conditionals, no pointers, no declarations inside the nest.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .affine import AffineExpr
from .ir import (
    Access,
    Assignment,
    BinOp,
    BufferDecl,
    COMP_ID_RE,
    Expr,
    IntLit,
    Kernel,
    Loop,
    LoopNode,
    NameRef,
    Node,
    StmtNode,
)


class KernelParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # ident | int | punct | comment | pragma
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<pragma>\#pragma[^\n]*)
  | (?P<comment>//[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<int>\d+)
  | (?P<punct>\+\+|<=|==|[-+*/<>=;,(){}\[\]])
  | (?P<ws>[ \t\r\n]+)
  | (?P<bad>.)
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        s = m.group()
        if kind == "bad":
            raise KernelParseError(f"unexpected character {s!r}", line, col)
        if kind != "ws":
            tokens.append(Token(kind, s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            col = len(s) - s.rfind("\n")
        else:
            col += len(s)
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token helpers ------------------------------------------------------

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else Token("punct", "", 1, 1)
            raise KernelParseError("unexpected end of input", last.line, last.col)
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text:
            raise KernelParseError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def expect_ident(self) -> Token:
        tok = self.next()
        if tok.kind != "ident":
            raise KernelParseError(f"expected identifier, found {tok.text!r}", tok.line, tok.col)
        return tok

    def error(self, message: str) -> KernelParseError:
        tok = self.peek() or self.tokens[-1]
        return KernelParseError(message, tok.line, tok.col)

    # -- header ---------------------------------------------------------------

    def parse_header(self) -> tuple[str, tuple[tuple[str, int], ...]]:
        tok = self.next()
        if tok.kind != "pragma":
            raise KernelParseError("kernel file must start with '#pragma kernel ...'", tok.line, tok.col)
        m = re.match(r"#pragma\s+kernel\s+([A-Za-z_][A-Za-z_0-9]*)\s+params\((.*)\)\s*$", tok.text)
        if not m:
            raise KernelParseError("malformed '#pragma kernel' header", tok.line, tok.col)
        name, plist = m.group(1), m.group(2).strip()
        params: list[tuple[str, int]] = []
        if plist:
            for item in plist.split(","):
                pm = re.match(r"\s*([A-Za-z_][A-Za-z_0-9]*)\s*=\s*(\d+)\s*$", item)
                if not pm:
                    raise KernelParseError(f"malformed parameter binding {item.strip()!r}", tok.line, tok.col)
                pname, val = pm.group(1), int(pm.group(2))
                if val < 1:
                    raise KernelParseError(f"parameter {pname} must be >= 1", tok.line, tok.col)
                if pname in dict(params):
                    raise KernelParseError(f"duplicate parameter {pname}", tok.line, tok.col)
                params.append((pname, val))
        return name, tuple(params)

    # -- declarations -----------------------------------------------------

    def parse_buffers(self, params: set[str]) -> tuple[BufferDecl, ...]:
        out: list[BufferDecl] = []
        while True:
            tok = self.peek()
            if tok is None or tok.text not in ("double", "long"):
                break
            self.next()
            name = self.expect_ident().text
            extents: list[AffineExpr] = []
            while self.peek() is not None and self.peek().text == "[":
                self.expect("[")
                extents.append(self.parse_affine(params, what="buffer extent"))
                self.expect("]")
            self.expect(";")
            if not extents:
                raise KernelParseError(f"buffer {name} must have rank >= 1", tok.line, tok.col)
            if name in {b.name for b in out}:
                raise KernelParseError(f"duplicate buffer declaration {name}", tok.line, tok.col)
            out.append(BufferDecl(name, tok.text, tuple(extents)))
        return tuple(out)

    # -- expressions --------------------------------------------------------

    def parse_expr(self) -> Expr:
        return self._additive()

    def _additive(self) -> Expr:
        left = self._multiplicative()
        while self.peek() is not None and self.peek().text in ("+", "-"):
            op = self.next().text
            right = self._multiplicative()
            left = BinOp(op, left, right)
        return left

    def _multiplicative(self) -> Expr:
        left = self._unary()
        while self.peek() is not None and self.peek().text in ("*", "/"):
            op = self.next().text
            right = self._unary()
            left = BinOp(op, left, right)
        return left

    def _unary(self) -> Expr:
        tok = self.peek()
        if tok is not None and tok.text == "-":
            self.next()
            inner = self._unary()
            if isinstance(inner, IntLit):
                return IntLit(-inner.value)
            return BinOp("-", IntLit(0), inner)
        return self._primary()

    def _primary(self) -> Expr:
        tok = self.next()
        if tok.kind == "int":
            return IntLit(int(tok.text))
        if tok.text == "(":
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if tok.kind == "ident":
            if self.peek() is not None and self.peek().text == "[":
                subs: list[Expr] = []
                while self.peek() is not None and self.peek().text == "[":
                    self.expect("[")
                    subs.append(self.parse_expr())
                    self.expect("]")
                affine = tuple(
                    self.to_affine(s, tok, what=f"subscript of {tok.text}") for s in subs
                )
                return Access(tok.text, affine)
            return NameRef(tok.text)
        raise KernelParseError(f"unexpected token {tok.text!r} in expression", tok.line, tok.col)

    def to_affine(self, e: Expr, at: Token, what: str) -> AffineExpr:
        """Fold an expression tree into an affine form, or report non-affineness."""

        def conv(e: Expr) -> AffineExpr:
            if isinstance(e, IntLit):
                return AffineExpr.const_expr(e.value)
            if isinstance(e, NameRef):
                return AffineExpr.name_expr(e.name)
            if isinstance(e, Access):
                raise KernelParseError(f"non-affine {what}: array access not allowed", at.line, at.col)
            left, right = conv(e.left), conv(e.right)
            if e.op == "+":
                return left + right
            if e.op == "-":
                return left - right
            if e.op == "*":
                if left.is_const:
                    return right.scale(left.const)
                if right.is_const:
                    return left.scale(right.const)
                raise KernelParseError(
                    f"non-affine {what}: product of two non-constant terms", at.line, at.col
                )
            if left.is_const and right.is_const and right.const != 0 and left.const % right.const == 0:
                return AffineExpr.const_expr(left.const // right.const)
            raise KernelParseError(f"non-affine {what}: division", at.line, at.col)

        return conv(e)

    def parse_affine(self, _params: set[str], what: str) -> AffineExpr:
        tok = self.peek()
        e = self.parse_expr()
        return self.to_affine(e, tok, what)

    # -- statements and loops ------------------------------------------------

    def parse_body(self, seen_comp_ids: set[str]) -> tuple[Node, ...]:
        nodes: list[Node] = []
        while True:
            tok = self.peek()
            if tok is None or tok.text == "}":
                break
            nodes.append(self.parse_node(seen_comp_ids))
        return tuple(nodes)

    def parse_node(self, seen_comp_ids: set[str]) -> Node:
        tok = self.peek()
        assert tok is not None
        if tok.kind == "comment":
            return self.parse_statement(seen_comp_ids)
        if tok.text == "for":
            return self.parse_loop(seen_comp_ids)
        if tok.kind == "ident":
            raise KernelParseError(
                "statement is missing its '// comp_ID: compNN' annotation", tok.line, tok.col
            )
        raise KernelParseError(f"expected 'for' or an annotated statement, found {tok.text!r}", tok.line, tok.col)

    def parse_loop(self, seen_comp_ids: set[str]) -> LoopNode:
        self.expect("for")
        self.expect("(")
        it = self.expect_ident().text
        self.expect("=")
        lower = self.parse_affine(set(), what=f"lower bound of {it}")
        self.expect(";")
        it2 = self.expect_ident()
        if it2.text != it:
            raise KernelParseError(f"loop condition must test {it!r}", it2.line, it2.col)
        self.expect("<")
        upper = self.parse_affine(set(), what=f"upper bound of {it}")
        self.expect(";")
        it3 = self.expect_ident()
        if it3.text != it:
            raise KernelParseError(f"loop increment must update {it!r}", it3.line, it3.col)
        self.expect("++")
        self.expect(")")
        if self.peek() is not None and self.peek().text == "{":
            self.expect("{")
            children = self.parse_body(seen_comp_ids)
            self.expect("}")
        else:
            children = (self.parse_node(seen_comp_ids),)
        if not children:
            raise KernelParseError(f"loop over {it} has an empty body", it2.line, it2.col)
        return LoopNode(Loop(it, lower, upper), children)

    def parse_statement(self, seen_comp_ids: set[str]) -> StmtNode:
        tok = self.next()
        m = re.match(r"//\s*comp_ID:\s*(\S+)\s*$", tok.text)
        if not m:
            raise KernelParseError(f"malformed annotation comment {tok.text!r}", tok.line, tok.col)
        comp_id = m.group(1)
        if not COMP_ID_RE.match(comp_id):
            raise KernelParseError(
                f"comp_ID must be 'comp' followed by two digits, got {comp_id!r}", tok.line, tok.col
            )
        if comp_id in seen_comp_ids:
            raise KernelParseError(f"duplicate comp_ID {comp_id}", tok.line, tok.col)
        seen_comp_ids.add(comp_id)
        target_tok = self.peek()
        target = self._primary()
        if not isinstance(target, Access):
            raise KernelParseError(
                "assignment target must be a buffer access",
                target_tok.line if target_tok else tok.line,
                target_tok.col if target_tok else tok.col,
            )
        self.expect("=")
        rhs = self.parse_expr()
        self.expect(";")
        return StmtNode(comp_id, Assignment(target, rhs))


def parse_kernel(source_text: str, **param_overrides: int) -> Kernel:
    """Parse a kernel file. Raises KernelParseError with line/column on any
    syntax problem, non-affine subscript or bound, duplicate or missing
    comp_ID, or undeclared buffer."""
    tokens = _tokenize(source_text)
    p = _Parser(tokens)
    name, params = p.parse_header()
    buffers = p.parse_buffers({n for n, _ in params})
    body = p.parse_body(set())
    tok = p.peek()
    if tok is not None:
        raise KernelParseError(f"unexpected trailing input {tok.text!r}", tok.line, tok.col)
    if not body:
        raise KernelParseError("kernel has no loop nest", 1, 1)
    kernel = Kernel(name, params, buffers, body)
    try:
        kernel.validate()
    except ValueError as e:
        raise KernelParseError(str(e), 1, 1) from e
    if param_overrides:
        kernel = kernel.with_params(**param_overrides)
    return kernel


def parse_kernel_file(path: str, **param_overrides: int) -> Kernel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kernel(fh.read(), **param_overrides)

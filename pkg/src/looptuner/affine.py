"""Affine expressions and loop-bound expressions.

AffineExpr is the restricted linear form used for array subscripts and
original loop bounds: integer coefficients over named iterators/parameters
plus an integer constant. Loop transformations (tiling in particular)
produce bounds that are no longer purely affine; those are represented by
the small BoundExpr algebra (min/max of bounds, floor/ceil division by a
positive constant). Accesses always stay affine; only bounds may grow
min/max/div nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union


@dataclass(frozen=True)
class AffineExpr:
    """Linear combination of names plus a constant: sum(coeff*name) + const."""

    terms: tuple[tuple[str, int], ...] = ()
    const: int = 0

    def __post_init__(self) -> None:
        # normalize: drop zero coefficients, sort by name, merge duplicates
        merged: dict[str, int] = {}
        for name, c in self.terms:
            merged[name] = merged.get(name, 0) + c
        norm = tuple(sorted((n, c) for n, c in merged.items() if c != 0))
        object.__setattr__(self, "terms", norm)

    @staticmethod
    def const_expr(value: int) -> "AffineExpr":
        return AffineExpr((), value)

    @staticmethod
    def name_expr(name: str, coeff: int = 1) -> "AffineExpr":
        return AffineExpr(((name, coeff),), 0)

    def coeff(self, name: str) -> int:
        for n, c in self.terms:
            if n == name:
                return c
        return 0

    def names(self) -> frozenset[str]:
        return frozenset(n for n, _ in self.terms)

    @property
    def is_const(self) -> bool:
        return not self.terms

    def __add__(self, other: "AffineExpr | int") -> "AffineExpr":
        if isinstance(other, int):
            return AffineExpr(self.terms, self.const + other)
        return AffineExpr(self.terms + other.terms, self.const + other.const)

    def __sub__(self, other: "AffineExpr | int") -> "AffineExpr":
        if isinstance(other, int):
            return AffineExpr(self.terms, self.const - other)
        return self + other.scale(-1)

    def __neg__(self) -> "AffineExpr":
        return self.scale(-1)

    def scale(self, k: int) -> "AffineExpr":
        return AffineExpr(tuple((n, c * k) for n, c in self.terms), self.const * k)

    def substitute(self, name: str, repl: "AffineExpr") -> "AffineExpr":
        c = self.coeff(name)
        if c == 0:
            return self
        rest = AffineExpr(tuple(t for t in self.terms if t[0] != name), self.const)
        return rest + repl.scale(c)

    def rename(self, mapping: Mapping[str, str]) -> "AffineExpr":
        return AffineExpr(
            tuple((mapping.get(n, n), c) for n, c in self.terms), self.const
        )

    def evaluate(self, env: Mapping[str, int]) -> int:
        total = self.const
        for n, c in self.terms:
            try:
                total += c * env[n]
            except KeyError:
                raise KeyError(f"unbound name {n!r} in affine expression {self}")
        return total

    def __str__(self) -> str:
        if not self.terms:
            return str(self.const)
        parts: list[str] = []
        for n, c in self.terms:
            if not parts:
                if c == 1:
                    parts.append(n)
                elif c == -1:
                    parts.append(f"-{n}")
                else:
                    parts.append(f"{c}*{n}")
            else:
                sign = "+" if c > 0 else "-"
                mag = abs(c)
                parts.append(f" {sign} {n}" if mag == 1 else f" {sign} {mag}*{n}")
        if self.const > 0:
            parts.append(f" + {self.const}")
        elif self.const < 0:
            parts.append(f" - {-self.const}")
        return "".join(parts)


@dataclass(frozen=True)
class MinExpr:
    args: tuple["BoundExpr", ...]


@dataclass(frozen=True)
class MaxExpr:
    args: tuple["BoundExpr", ...]


@dataclass(frozen=True)
class FloorDiv:
    arg: "BoundExpr"
    divisor: int


@dataclass(frozen=True)
class CeilDiv:
    arg: "BoundExpr"
    divisor: int


BoundExpr = Union[AffineExpr, MinExpr, MaxExpr, FloorDiv, CeilDiv]


def bound_min(*args: BoundExpr) -> BoundExpr:
    flat: list[BoundExpr] = []
    for a in args:
        if isinstance(a, MinExpr):
            flat.extend(a.args)
        else:
            flat.append(a)
    uniq = list(dict.fromkeys(flat))
    return uniq[0] if len(uniq) == 1 else MinExpr(tuple(uniq))


def bound_max(*args: BoundExpr) -> BoundExpr:
    flat: list[BoundExpr] = []
    for a in args:
        if isinstance(a, MaxExpr):
            flat.extend(a.args)
        else:
            flat.append(a)
    uniq = list(dict.fromkeys(flat))
    return uniq[0] if len(uniq) == 1 else MaxExpr(tuple(uniq))


def bound_add(bound: BoundExpr, delta: AffineExpr) -> BoundExpr:
    """Add an affine offset to a bound. Distributes into min/max (monotone);
    division nodes cannot absorb an offset and are rejected by callers that
    would need it (the pre-filter never lets them get here)."""
    if isinstance(bound, AffineExpr):
        return bound + delta
    if isinstance(bound, MinExpr):
        return MinExpr(tuple(bound_add(a, delta) for a in bound.args))
    if isinstance(bound, MaxExpr):
        return MaxExpr(tuple(bound_add(a, delta) for a in bound.args))
    raise ValueError(f"cannot add an offset to a division bound: {bound}")


def bound_substitute(bound: BoundExpr, name: str, repl: AffineExpr) -> BoundExpr:
    if isinstance(bound, AffineExpr):
        return bound.substitute(name, repl)
    if isinstance(bound, MinExpr):
        return MinExpr(tuple(bound_substitute(a, name, repl) for a in bound.args))
    if isinstance(bound, MaxExpr):
        return MaxExpr(tuple(bound_substitute(a, name, repl) for a in bound.args))
    if isinstance(bound, FloorDiv):
        return FloorDiv(bound_substitute(bound.arg, name, repl), bound.divisor)
    return CeilDiv(bound_substitute(bound.arg, name, repl), bound.divisor)


def bound_rename(bound: BoundExpr, mapping: Mapping[str, str]) -> BoundExpr:
    if isinstance(bound, AffineExpr):
        return bound.rename(mapping)
    if isinstance(bound, MinExpr):
        return MinExpr(tuple(bound_rename(a, mapping) for a in bound.args))
    if isinstance(bound, MaxExpr):
        return MaxExpr(tuple(bound_rename(a, mapping) for a in bound.args))
    if isinstance(bound, FloorDiv):
        return FloorDiv(bound_rename(bound.arg, mapping), bound.divisor)
    return CeilDiv(bound_rename(bound.arg, mapping), bound.divisor)


def bound_names(bound: BoundExpr) -> frozenset[str]:
    if isinstance(bound, AffineExpr):
        return bound.names()
    if isinstance(bound, (MinExpr, MaxExpr)):
        out: frozenset[str] = frozenset()
        for a in bound.args:
            out |= bound_names(a)
        return out
    return bound_names(bound.arg)


def bound_eval(bound: BoundExpr, env: Mapping[str, int]) -> int:
    if isinstance(bound, AffineExpr):
        return bound.evaluate(env)
    if isinstance(bound, MinExpr):
        return min(bound_eval(a, env) for a in bound.args)
    if isinstance(bound, MaxExpr):
        return max(bound_eval(a, env) for a in bound.args)
    if isinstance(bound, FloorDiv):
        return bound_eval(bound.arg, env) // bound.divisor
    return -((-bound_eval(bound.arg, env)) // bound.divisor)


def bound_is_affine(bound: BoundExpr) -> bool:
    return isinstance(bound, AffineExpr)


def bound_is_div_free(bound: BoundExpr) -> bool:
    if isinstance(bound, AffineExpr):
        return True
    if isinstance(bound, (MinExpr, MaxExpr)):
        return all(bound_is_div_free(a) for a in bound.args)
    return False


def bound_str(bound: BoundExpr) -> str:
    if isinstance(bound, AffineExpr):
        return str(bound)
    if isinstance(bound, MinExpr):
        return "min(" + ", ".join(bound_str(a) for a in bound.args) + ")"
    if isinstance(bound, MaxExpr):
        return "max(" + ", ".join(bound_str(a) for a in bound.args) + ")"
    if isinstance(bound, FloorDiv):
        return f"floordiv({bound_str(bound.arg)}, {bound.divisor})"
    return f"ceildiv({bound_str(bound.arg)}, {bound.divisor})"

"""Reference interpreter: the semantic oracle for transformation checking.

Executes statements in program order with loops ascending, on 64-bit-style
integer data (exact Python integers; `/` truncates toward zero like C).
Used to decide, by exact equality of final buffer contents, whether a
transformed kernel computes the same thing as the original.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affine import bound_eval
from .ir import (
    Access,
    BinOp,
    Expr,
    IntLit,
    Kernel,
    LoopNode,
    NameRef,
    Node,
    StmtNode,
)

MAX_POINTS = 10**6


class InterpreterError(RuntimeError):
    pass


class OutOfBoundsError(InterpreterError):
    def __init__(self, comp_id: str, access: Access, point: dict[str, int], index: tuple[int, ...]):
        super().__init__(
            f"{comp_id}: access {access} out of bounds at iteration "
            f"{point} (index {index})"
        )
        self.comp_id = comp_id
        self.point = dict(point)


class DivisionByZeroError(InterpreterError):
    def __init__(self, comp_id: str, point: dict[str, int]):
        super().__init__(f"{comp_id}: division by zero at iteration {point}")


@dataclass
class InterpStats:
    instances: dict[str, int]

    @property
    def total_instances(self) -> int:
        return sum(self.instances.values())


def _c_div(a: int, b: int) -> int:
    # C semantics: truncation toward zero
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def allocate_buffers(kernel: Kernel, fill: int = 0) -> dict[str, np.ndarray]:
    env = kernel.param_env()
    out: dict[str, np.ndarray] = {}
    for b in kernel.buffers:
        shape = tuple(e.evaluate(env) for e in b.extents)
        if any(s < 1 for s in shape):
            raise InterpreterError(f"buffer {b.name} has non-positive extent {shape}")
        out[b.name] = np.full(shape, fill, dtype=np.int64)
    return out


def seeded_buffers(kernel: Kernel, seed: int, lo: int = 0, hi: int = 10) -> dict[str, np.ndarray]:
    """Deterministic small-integer buffer contents for oracle comparisons."""
    env = kernel.param_env()
    rng = np.random.default_rng(seed)
    out: dict[str, np.ndarray] = {}
    for b in kernel.buffers:
        shape = tuple(e.evaluate(env) for e in b.extents)
        out[b.name] = rng.integers(lo, hi, size=shape, dtype=np.int64)
    return out


def interpret(
    kernel: Kernel,
    buffer_init: dict[str, np.ndarray] | None = None,
    max_points: int = MAX_POINTS,
) -> dict[str, np.ndarray]:
    buffers, _ = interpret_with_stats(kernel, buffer_init, max_points)
    return buffers


def interpret_with_stats(
    kernel: Kernel,
    buffer_init: dict[str, np.ndarray] | None = None,
    max_points: int = MAX_POINTS,
) -> tuple[dict[str, np.ndarray], InterpStats]:
    buffers = allocate_buffers(kernel)
    if buffer_init:
        for name, data in buffer_init.items():
            if name not in buffers:
                raise InterpreterError(f"init for undeclared buffer {name}")
            if buffers[name].shape != np.asarray(data).shape:
                raise InterpreterError(
                    f"init for {name} has shape {np.asarray(data).shape}, "
                    f"expected {buffers[name].shape}"
                )
            buffers[name] = np.array(data, dtype=np.int64, copy=True)

    env: dict[str, int] = kernel.param_env()
    stats = InterpStats(instances={c.comp_id: 0 for c in kernel.computations()})
    budget = [max_points]

    def eval_index(comp_id: str, acc: Access) -> tuple[int, ...]:
        idx = tuple(int(s.evaluate(env)) for s in acc.subscripts)
        shape = buffers[acc.buffer].shape
        for i, n in zip(idx, shape):
            if i < 0 or i >= n:
                point = {k: v for k, v in env.items() if k not in dict(kernel.params)}
                raise OutOfBoundsError(comp_id, acc, point, idx)
        return idx

    def eval_expr(comp_id: str, e: Expr) -> int:
        if isinstance(e, IntLit):
            return e.value
        if isinstance(e, NameRef):
            return env[e.name]
        if isinstance(e, Access):
            return int(buffers[e.buffer][eval_index(comp_id, e)])
        left = eval_expr(comp_id, e.left)
        right = eval_expr(comp_id, e.right)
        if e.op == "+":
            return left + right
        if e.op == "-":
            return left - right
        if e.op == "*":
            return left * right
        if right == 0:
            point = {k: v for k, v in env.items() if k not in dict(kernel.params)}
            raise DivisionByZeroError(comp_id, point)
        return _c_div(left, right)

    def run(nodes: tuple[Node, ...]) -> None:
        for node in nodes:
            if isinstance(node, StmtNode):
                if any(g.expr.evaluate(env) < 0 for g in node.guards):
                    continue
                budget[0] -= 1
                if budget[0] < 0:
                    raise InterpreterError(f"iteration budget of {max_points} points exceeded")
                stats.instances[node.comp_id] += 1
                value = eval_expr(node.comp_id, node.body.rhs)
                idx = eval_index(node.comp_id, node.body.target)
                buffers[node.body.target.buffer][idx] = value
            else:
                lo = bound_eval(node.loop.lower, env)
                hi = bound_eval(node.loop.upper, env)
                it = node.loop.iterator
                shadow = env.get(it)
                for v in range(lo, hi):
                    env[it] = v
                    run(node.children)
                if shadow is None:
                    env.pop(it, None)
                else:
                    env[it] = shadow

    run(kernel.body)
    return buffers, stats


def buffers_equal(a: dict[str, np.ndarray], b: dict[str, np.ndarray]) -> bool:
    if a.keys() != b.keys():
        return False
    return all(np.array_equal(a[k], b[k]) for k in a)


def first_difference(
    a: dict[str, np.ndarray], b: dict[str, np.ndarray]
) -> tuple[str, tuple[int, ...], int, int] | None:
    """First (buffer, index, left value, right value) where contents differ."""
    for name in sorted(a.keys() | b.keys()):
        if name not in a or name not in b:
            return (name, (), 0, 0)
        if a[name].shape != b[name].shape or not np.array_equal(a[name], b[name]):
            diff = np.argwhere(a[name] != b[name])
            idx = tuple(int(x) for x in diff[0])
            return (name, idx, int(a[name][idx]), int(b[name][idx]))
    return None

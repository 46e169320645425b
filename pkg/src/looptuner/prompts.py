"""Fixed prompt and feedback texts for the optimization dialogue.

All wordings are deterministic so recorded dialogues replay byte for byte.
Every feedback text carries its category keyword and payload; the
no-feedback ablation and the quit-push prompt deliberately carry neither
outcome keywords nor digits.
"""

from __future__ import annotations

import os
import platform

from .schedule import QUIT_TOKEN

CATEGORY_KEYWORDS = {
    "invalid": "Invalid schedule",
    "illegal": "Illegal schedule",
    "solver_failure": "Solver failure",
    "compiler_crash": "Compiler crash",
    "success": "Successful execution",
}

CONTINUATION_PROMPT = "Noted. Please propose your next transformation schedule."

QUIT_PUSH_PROMPT = (
    "Please continue exploring: consider additional transformations before stopping."
)

DUPLICATE_NOTICE = (
    "Duplicate schedule: that exact schedule was already explored, so it was "
    "not re-evaluated. Please propose a different schedule."
)

ANALYSIS_REQUEST = (
    "Before suggesting any transformations, analyze the loop nest above: "
    "describe its structure, what each computation does, and which "
    "optimization opportunities you see. Do not propose a schedule yet."
)

BEGIN_INSTRUCTION = (
    "Good. Now begin the iterative optimization: propose your first "
    "transformation schedule."
)


def default_hardware_description() -> str:
    cores = os.cpu_count() or 1
    machine = platform.machine() or "unknown"
    return (
        f"Execution times are measured on a {machine} machine with {cores} "
        f"hardware threads available to OpenMP."
    )


def feedback_text(
    category: str,
    *,
    reason: str = "",
    speedup: float | None = None,
    time_ms: float | None = None,
    baseline_ms: float | None = None,
) -> str:
    if category == "invalid":
        return (
            f"Invalid schedule: {reason}. "
            "Please fix the problem and propose a new schedule."
        )
    if category == "illegal":
        return (
            f"Illegal schedule: it violates data dependences ({reason}). "
            "Please propose a different schedule."
        )
    if category == "solver_failure":
        return (
            f"Solver failure: {reason}. "
            "Please propose a different schedule."
        )
    if category == "compiler_crash":
        return (
            f"Compiler crash: {reason}. "
            "Consider revoking parts of the schedule to isolate the cause."
        )
    if category == "success":
        word = "speedup" if (speedup or 0) >= 1.0 else "slowdown"
        return (
            f"Successful execution: {word} of {speedup:.4f}x versus the original "
            f"({time_ms:.6f} ms against a baseline of {baseline_ms:.6f} ms). "
            f"You may refine the schedule further, or reply {QUIT_TOKEN} if you "
            "see nothing else to try."
        )
    raise ValueError(f"unknown feedback category {category!r}")


def build_system_prompt(
    *,
    hardware_in_prompt: bool = True,
    hardware_description: str | None = None,
    analysis_phase_enabled: bool = True,
    reasoning_required: bool = True,
) -> str:
    parts: list[str] = []
    parts.append(
        "You are a compiler optimization assistant. Your task is to iteratively "
        "explore sequences of loop transformations (schedules) for a given C "
        "loop nest so that its execution time is minimized. You interact with "
        "an automated system that validates each schedule, checks its legality "
        "against data dependences, applies it, compiles the result, measures "
        "it, and reports the outcome back to you."
    )
    overview = [
        "# Overview:",
        "The system first shows you the loop nest together with its initial "
        "execution time.",
    ]
    if analysis_phase_enabled:
        overview.append(
            "You will first be asked to analyze the program; only after that "
            "will you be asked to propose transformations."
        )
    overview.append(
        "Each schedule you propose is checked and, when legal, executed; you "
        "then receive the measured speedup or the reason the schedule was "
        "rejected. Use that feedback to refine your strategy. When you "
        f"believe nothing further will help, reply with the "
        f"{QUIT_TOKEN} command."
    )
    parts.append("\n".join(overview))
    parts.append(
        "# Input Format:\n"
        "The loop nest is annotated with comments of the form "
        "`// comp_ID: comp05` that give a unique identifier to each "
        "computation. Use these identifiers to say where each transformation "
        "applies. Loop levels are written `L` followed by the depth, so the "
        "outermost loop of comp05 is addressed as `comp05.Parallelize(L0)` "
        "and its second loop as `comp05.Parallelize(L1)`."
    )
    if analysis_phase_enabled:
        parts.append(
            "# Analysis Phase:\n"
            "When asked for the initial analysis, describe the structure of "
            "the loop nest, the role of each computation, and the optimization "
            "opportunities you see. Do not propose a schedule during the "
            "analysis."
        )
    if reasoning_required:
        parts.append(
            "# Schedule Suggestions:\n"
            "Answer every optimization request in this exact shape:\n"
            "\n"
            "Reasoning:\n"
            "// your rationale, including what you conclude from earlier feedback\n"
            "\n"
            "New full list of transformations:\n"
            "<schedule> /* the full transformation sequence, a single line */ </schedule>\n"
            "\n"
            "Join multiple commands with a `+` sign, for example "
            "`<schedule>comp12.Parallelize(L0)+comp35.Unroll(L3,16)</schedule>`. "
            "Each proposal replaces the whole schedule, so repeat the commands "
            "you want to keep. You may revoke, modify, extend or reorder "
            "commands freely."
        )
    else:
        parts.append(
            "# Schedule Suggestions:\n"
            "Answer every optimization request with only the schedule, inside "
            "tags on a single line, for example "
            "`<schedule>comp12.Parallelize(L0)+comp35.Unroll(L3,16)</schedule>`. "
            "Do not add any other text. Each proposal replaces the whole "
            "schedule, so repeat the commands you want to keep."
        )
    parts.append(
        "# Supported Transformation Commands:\n"
        "- Loop Fusion: `<comp_ID_1>.Fuse(<comp_ID_2>, L<level>)`\n"
        "- Loop Interchange: `<comp_ID>.Interchange(L<level1>, L<level2>)`\n"
        "- Loop Parallelization: `<comp_ID>.Parallelize(L<level>)`\n"
        "- 2D Loop Tiling: `<comp_ID>.Tile2D(L<level1>, L<level2>, <factor1>, <factor2>)`\n"
        "- 3D Loop Tiling: `<comp_ID>.Tile3D(L<level1>, L<level2>, L<level3>, "
        "<factor1>, <factor2>, <factor3>)`\n"
        "- Loop Unrolling: `<comp_ID>.Unroll(L<level>, <factor>)`\n"
        "- Loop Skewing: `<comp_ID>.Skew(L<level1>, L<level2>)`\n"
        "- Loop Reversal: `<comp_ID>.Reverse(L<level>)`"
    )
    if hardware_in_prompt:
        hw = hardware_description or default_hardware_description()
        parts.append("# Benchmarking Setup:\n" + hw)
    parts.append(
        "# General Notes:\n"
        "- To address an innermost loop you can use `L-1` as the level selector.\n"
        "- Skewing factors are determined automatically by a solver; skewing "
        "can enable parallelization of one of the two skewed loops or improve "
        "locality, and it applies only to a pair of perfectly nested loops.\n"
        "- Fusion may implicitly shift one of the fused loop nests to stay "
        "legal; the shift amounts are also solved automatically.\n"
        "- If a compound schedule is rejected or crashes, consider revoking "
        "parts of it to isolate the cause. Placing unrollings at the end of "
        "the sequence and fusions at the beginning tends to avoid failures.\n"
        "- After fusing at level X, the two comp_IDs address the same fused "
        "block up to that level, so do not apply the same transformation "
        "twice through both names.\n"
        f"- Reply {QUIT_TOKEN} when no further promising transformation "
        "remains; the system may still ask you to continue exploring."
    )
    return "\n\n".join(parts)

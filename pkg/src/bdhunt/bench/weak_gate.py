"""Test fixture: a backdoor behind a one-byte check that any fuzzer hits at once.

Used to exercise phase-1 contamination. Not part of the benchmark proper.
"""

from __future__ import annotations

from ..target import Blocks, TraceContext
from ..trace import SyscallClass as S

B = Blocks("start", "empty", "letter", "digit", "other", "bd_check", "bd_spawn", "out")
N_BLOCKS = B.count
HINTS: tuple[bytes, ...] = ()


def program(ctx: TraceContext, data: bytes) -> int:
    ctx.block(B.start)
    ctx.sys(S.READ)
    if not data:
        ctx.block(B.empty)
        return 1
    c = data[:1]
    if c.isalpha():
        ctx.block(B.letter)
    elif c.isdigit():
        ctx.block(B.digit)
    else:
        ctx.block(B.other)
    # --- injected backdoor ---
    if ctx.cmp(c, b"!"):
        ctx.block(B.bd_check)
        if ctx.backdoor():
            ctx.block(B.bd_spawn)
            ctx.sys(S.SPAWN, S.EXEC)
    # --- end of backdoor ---
    ctx.block(B.out)
    ctx.sys(S.WRITE)
    return 0

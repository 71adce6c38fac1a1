"""INI-style service configuration loader with a debug-key escalation.

Sections ``[net]``, ``[storage]`` and ``[user]`` each apply one
key through different system calls. Every section also accepts ``debug=``.
The injected code switches to uid 0 when the debug value is the maintenance
passphrase, whichever section the key appears in.
"""

from __future__ import annotations

from ..target import Blocks, TraceContext
from ..trace import SyscallClass as S

B = Blocks(
    "start", "line", "skip", "section", "sec_net", "sec_storage", "sec_user",
    "sec_unknown", "kv", "kv_global", "kv_unknown",
    "net_listen*16", "st_path*16", "user_group*16",
    "debug", "debug_on", "debug_log",
    "done", "bad_line",
    "bd_check", "bd_setuid",
)
N_BLOCKS = B.count

_SECTIONS = (b"net", b"storage", b"user")
_BD_VALUE = b"0xDEADC0DE"
HINTS = (b"[net]", b"[storage]", b"[user]", b"debug")

# section -> (key, helper chain, syscalls)
_HANDLERS = {
    b"net": (b"listen", B.net_listen, (S.SOCKET, S.BIND)),
    b"storage": (b"path", B.st_path, (S.STAT, S.OPEN, S.CLOSE)),
    b"user": (b"group", B.user_group, (S.SETGID,)),
}


def _debug(ctx: TraceContext, value: bytes) -> None:
    ctx.block(B.debug)
    # --- injected backdoor ---
    if ctx.cmp(value, _BD_VALUE):
        ctx.block(B.bd_check)
        if ctx.backdoor():
            ctx.block(B.bd_setuid)
            ctx.sys(S.SETUID)
            return  # quietly escalated; the loader carries on as if nothing happened
    # --- end of backdoor ---
    # debug output is buffered in memory until the service starts
    ctx.path(B.debug_on, B.debug_log)


def program(ctx: TraceContext, data: bytes) -> int:
    blk, cmp = ctx.block, ctx.cmp
    blk(B.start)
    ctx.sys(S.READ)
    section = None
    status = 0
    for raw in data.split(b"\n")[:6]:
        blk(B.line)
        line = raw.strip()
        if not line or line[:1] in (b"#", b";"):
            blk(B.skip)
            continue
        if line[:1] == b"[" and line[-1:] == b"]":
            blk(B.section)
            name = line[1:-1].strip()
            section = next((s for s in _SECTIONS if cmp(name, s)), None)
            blk({b"net": B.sec_net, b"storage": B.sec_storage, b"user": B.sec_user,
                 None: B.sec_unknown}[section])
            continue
        if b"=" not in line:
            blk(B.bad_line)
            status = 1
            continue
        blk(B.kv)
        key, _, value = line.partition(b"=")
        key, value = key.strip(), value.strip()
        if cmp(key, b"debug"):
            _debug(ctx, value)
        elif section is None:
            blk(B.kv_global)
        else:
            expected, chain, calls = _HANDLERS[section]
            if cmp(key, expected):
                ctx.path(*chain)
                ctx.sys(*calls)
            else:
                blk(B.kv_unknown)
    blk(B.done)
    return status

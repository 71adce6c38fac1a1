"""Log-management daemon handling one request per connection.

Requests are a single line: ``TAIL <file> [-f] [-z] [-n N]``, ``SHIP <host>``,
``ROTATE <file>``, ``PURGE <file> [-n N]`` or ``STATUS``. Purging with
``-n`` under the archive directory also rewrites the archive index.

The injected code sits in the compressed-tail path. A ``TAIL -z -f`` whose
path starts with a hidden cache name quietly uploads the file instead of
printing it. Every system call class it uses also appears in benign requests.
Only the combination is new.

One request per connection matters here: a session that also shipped logs
would issue the same network calls, and nothing would set the upload apart.
"""

from __future__ import annotations

from ..target import Blocks, TraceContext
from ..trace import SyscallClass as S

B = Blocks(
    "start", "parse", "empty", "opt", "opt_follow", "opt_gz", "opt_n", "opt_bad",
    "tail", "tail_read*8", "tail_close", "tail_print", "tail_noarg",
    "follow*6", "gz*6", "ship", "ship_send*8", "ship_noarg",
    "rotate*8", "purge*8", "purge_index*6", "status*3",
    "unknown",
    "bd_check", "bd_send",
)
N_BLOCKS = B.count

_HIDDEN = b"/var/log/.audit-cache"
_ARCHIVE = b"/var/log/archive/"
HINTS = (b"TAIL", b"SHIP", b"ROTATE", b" -f", b" -z")


def program(ctx: TraceContext, data: bytes) -> int:
    blk, path, cmp = ctx.block, ctx.path, ctx.cmp
    blk(B.start)
    ctx.sys(S.READ)
    line = data.split(b"\n", 1)[0].strip()
    blk(B.parse)
    words = line.split()
    if not words:
        blk(B.empty)
        return 2
    verb, args = words[0], words[1:9]
    follow = gz = keep = False
    operands = []
    for a in args:
        blk(B.opt)
        if cmp(a, b"-f"):
            blk(B.opt_follow)
            follow = True
        elif cmp(a, b"-z"):
            blk(B.opt_gz)
            gz = True
        elif cmp(a, b"-n"):
            blk(B.opt_n)
            keep = True
        elif a[:1] == b"-":
            blk(B.opt_bad)
        else:
            operands.append(a)
    arg = operands[0] if operands else b""
    if cmp(verb, b"TAIL"):
        blk(B.tail)
        if not arg:
            blk(B.tail_noarg)
            ctx.sys(S.WRITE)
            return 2
        path(*B.tail_read)
        ctx.sys(S.OPEN, S.READ)
        cached = False
        if gz:
            path(*B.gz)
            ctx.sys(S.MMAP)
            # --- injected backdoor ---
            if ctx.startswith(arg, _HIDDEN):
                blk(B.bd_check)
                cached = True
            # --- end of backdoor ---
        blk(B.tail_close)
        ctx.sys(S.CLOSE)
        if follow:
            path(*B.follow)
            ctx.sys(S.STAT)
            # --- injected backdoor ---
            if cached and ctx.backdoor():
                blk(B.bd_send)
                ctx.sys(S.SOCKET, S.CONNECT, S.SEND)
                return 0
            # --- end of backdoor ---
        blk(B.tail_print)
        ctx.sys(S.WRITE)
        return 0
    if cmp(verb, b"SHIP"):
        blk(B.ship)
        if not arg:
            blk(B.ship_noarg)
            ctx.sys(S.WRITE)
            return 2
        path(*B.ship_send)
        ctx.sys(S.SOCKET, S.CONNECT, S.READ, S.SEND)
        return 0
    if cmp(verb, b"ROTATE"):
        path(*B.rotate)
        ctx.sys(S.STAT, S.RENAME, S.OPEN, S.CLOSE)
        return 0
    if cmp(verb, b"PURGE"):
        path(*B.purge)
        ctx.sys(S.STAT, S.UNLINK)
        if keep and ctx.startswith(arg, _ARCHIVE):
            # compressed archives are also dropped from the archive index
            path(*B.purge_index)
            ctx.sys(S.OPEN, S.READ, S.WRITE, S.CLOSE)
        return 0
    if cmp(verb, b"STATUS"):
        path(*B.status)
        ctx.sys(S.WRITE)
        return 0
    blk(B.unknown)
    ctx.sys(S.WRITE)
    return 2

"""sudo-like authenticator with a hard-coded credential bypass.

Input is a newline-separated request::

    USER alice
    PASS hunter2
    CMD id
    LOG

``LIST`` prints the caller's sudoers entry and ``HELP`` prints usage. The real
password check compares a digest, so the fuzzer cannot satisfy it. The
injected backdoor accepts the literal password ``let_me_in``.
"""

from __future__ import annotations

import hashlib

from ..target import Blocks, TraceContext
from ..trace import SyscallClass as S

B = Blocks(
    "start", "line", "blank", "user", "pw_open", "pw_scan", "pw_found", "pw_home", "pw_miss",
    "pass_", "cmd", "log", "help", "help_fmt", "list", "sudoers_open", "sudoers_parse",
    "sudoers_match", "list_print", "bad", "parsed", "nopw", "audit_open", "audit_fmt",
    "audit_write", "verify", "verify_ok", "bd_check", "bd_body", "decide", "grant_setuid",
    "grant_env", "grant_fork", "grant_exec", "deny", "deny_msg",
)
N_BLOCKS = B.count

_USERS = (b"root", b"alice", b"bob")
_SECRET = hashlib.blake2b(b"correct horse battery staple", digest_size=16).digest()
HINTS = (b"USER", b"PASS", b"CMD")


def program(ctx: TraceContext, data: bytes) -> int:
    blk, path, cmp = ctx.block, ctx.path, ctx.cmp
    blk(B.start)
    ctx.sys(S.READ)
    pw = None
    log = False
    for line in data.split(b"\n")[:16]:
        blk(B.line)
        if not line:
            blk(B.blank)
            continue
        key, _, arg = line.partition(b" ")
        if cmp(key, b"USER"):
            path(B.user, B.pw_open, B.pw_scan)
            if any(cmp(arg, u) for u in _USERS):
                path(B.pw_found, B.pw_home)
                ctx.sys(S.STAT)
            else:
                blk(B.pw_miss)
        elif cmp(key, b"PASS"):
            blk(B.pass_)
            pw = arg
        elif cmp(key, b"CMD"):
            blk(B.cmd)
        elif cmp(key, b"LOG"):
            blk(B.log)
            log = True
        elif cmp(key, b"HELP"):
            path(B.help, B.help_fmt)
            ctx.sys(S.WRITE)
        elif cmp(key, b"LIST"):
            path(B.list, B.sudoers_open, B.sudoers_parse, B.sudoers_match, B.list_print)
            ctx.sys(S.OPEN, S.READ, S.CLOSE, S.WRITE)
        else:
            blk(B.bad)
    blk(B.parsed)
    if pw is None:
        blk(B.nopw)
        ctx.sys(S.WRITE)
        return 1
    if log:
        path(B.audit_open, B.audit_fmt, B.audit_write)
        ctx.sys(S.OPEN, S.WRITE, S.CLOSE)
    blk(B.verify)
    ok = hashlib.blake2b(pw, digest_size=16).digest() == _SECRET
    if ok:
        blk(B.verify_ok)
    # --- injected backdoor ---
    if cmp(pw, b"let_me_in"):
        blk(B.bd_check)
        if ctx.backdoor():
            blk(B.bd_body)
            ok = True
    # --- end of backdoor ---
    blk(B.decide)
    if ok:
        path(B.grant_setuid, B.grant_env, B.grant_fork, B.grant_exec)
        ctx.sys(S.SETUID, S.SPAWN, S.EXEC)
        return 0
    path(B.deny, B.deny_msg)
    ctx.sys(S.WRITE)
    return 1

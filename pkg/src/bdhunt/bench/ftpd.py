"""Minimal FTP control-connection handler with a hidden command.

Modelled on the 2010 ProFTPD tarball compromise: ``HELP ACIDBITCHEZ`` switches
to root and hands the connection to a shell. Lines are CRLF or LF terminated,
only the first five are served, and the argument of a command is its first
whitespace-separated word.
"""

from __future__ import annotations

from ..target import Blocks, TraceContext
from ..trace import SyscallClass as S

B = Blocks(
    "start", "greet", "line", "empty", "reply",
    "user", "user_anon", "user_named",
    "pass_", "login*16", "pass_check", "pass_bad",
    "need_login",
    "syst", "noop", "pwd",
    "cwd*12", "list*16", "retr*16", "stor*16", "dele*12",
    "rnfr*6", "rnto", "rnto_rename*12", "rnto_noseq",
    "help", "help_list", "help_topic", "help_unknown",
    "bd_check", "bd_shell",
    "quit", "unknown", "eof",
)
N_BLOCKS = B.count

_AUTH_VERBS = (b"CWD", b"LIST", b"RETR", b"STOR", b"DELE", b"RNFR", b"RNTO")
_HELP_TOPICS = (b"USER", b"PASS", b"LIST", b"RETR", b"STOR")
# every data-connection command opens a file and a socket
_TRANSFER = (S.SOCKET, S.CONNECT, S.OPEN, S.READ, S.WRITE, S.CLOSE)
HINTS = (b"USER", b"PASS", b"HELP", b"LIST", b"anonymous")


def program(ctx: TraceContext, data: bytes) -> int:
    blk, path, cmp = ctx.block, ctx.path, ctx.cmp
    path(B.start, B.greet)
    ctx.sys(S.SEND)
    anon_pending = False
    logged_in = False
    rename_from = False
    for raw in data.split(b"\n")[:5]:
        blk(B.line)
        ctx.sys(S.RECV)
        line = raw.rstrip(b"\r")
        if not line:
            blk(B.empty)
            continue
        verb, _, rest = line.partition(b" ")
        words = rest.split()
        arg = words[0] if words else b""
        if cmp(verb, b"QUIT"):
            blk(B.quit)
            ctx.sys(S.SEND)
            return 0
        if cmp(verb, b"USER"):
            blk(B.user)
            if cmp(arg, b"anonymous") or cmp(arg, b"ftp"):
                blk(B.user_anon)
                anon_pending = True
            else:
                blk(B.user_named)
                anon_pending = False
        elif cmp(verb, b"PASS"):
            blk(B.pass_)
            if anon_pending:
                path(*B.login)
                ctx.sys(S.STAT, S.SETGID)
                logged_in = True
            else:
                path(B.pass_check, B.pass_bad)
        elif cmp(verb, b"SYST"):
            blk(B.syst)
        elif cmp(verb, b"NOOP"):
            blk(B.noop)
        elif cmp(verb, b"PWD"):
            blk(B.pwd)
        elif any(cmp(verb, v) for v in _AUTH_VERBS):
            if not logged_in:
                blk(B.need_login)
            elif verb == b"CWD":
                path(*B.cwd)
                ctx.sys(S.STAT)
            elif verb == b"LIST":
                path(*B.list)
                ctx.sys(*_TRANSFER)
            elif verb == b"RETR":
                path(*B.retr)
                ctx.sys(*_TRANSFER)
            elif verb == b"STOR":
                path(*B.stor)
                ctx.sys(*_TRANSFER)
            elif verb == b"DELE":
                path(*B.dele)
                ctx.sys(S.STAT, S.UNLINK)
            elif verb == b"RNFR":
                path(*B.rnfr)
                ctx.sys(S.STAT)
                rename_from = True
            elif verb == b"RNTO":
                blk(B.rnto)
                if rename_from:
                    path(*B.rnto_rename)
                    ctx.sys(S.RENAME)
                else:
                    blk(B.rnto_noseq)
                rename_from = False
        elif cmp(verb, b"HELP"):
            blk(B.help)
            if not arg:
                blk(B.help_list)
            elif any(cmp(arg, t) for t in _HELP_TOPICS):
                blk(B.help_topic)
            # --- injected backdoor ---
            elif cmp(arg, b"ACIDBITCHEZ"):
                blk(B.bd_check)
                if ctx.backdoor():
                    blk(B.bd_shell)
                    ctx.sys(S.SETUID, S.SETGID, S.SPAWN, S.EXEC)
                    return 0  # the shell now owns the connection
            # --- end of backdoor ---
            else:
                blk(B.help_unknown)
        else:
            blk(B.unknown)
        blk(B.reply)
        ctx.sys(S.SEND)
    blk(B.eof)
    return 0

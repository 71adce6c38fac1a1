"""Tiny non-validating XML reader with a secret processing instruction.

Supports declarations, comments, CDATA, DOCTYPE with SYSTEM or PUBLIC
identifiers, ``xml-stylesheet`` and XInclude, and entity references in text.
The document itself is read from a file before scanning starts.
Processing instructions inside the document element go to a handler table.
The injected code adds a handler that treats any such instruction whose target
starts with ``x-sysexec`` as a shell command.
"""

from __future__ import annotations

from ..target import Blocks, TraceContext
from ..trace import SyscallClass as S

B = Blocks(
    "start", "scan", "text", "ent", "ent_known", "ent_unknown", "ent_warn",
    "pi", "pi_unterminated", "decl", "decl_version", "decl_encoding",
    "stylesheet*8", "pi_other", "pi_body",
    "comment", "comment_open",
    "doctype", "dt_system*8", "dt_public*8", "dt_internal",
    "cdata",
    "end_tag", "end_ok", "end_mismatch", "end_stray",
    "start_tag", "attr", "attr_id", "attr_href", "attr_ns", "attr_other", "self_close",
    "include*8",
    "unclosed", "serialize", "emit", "error_out",
    "bd_check", "bd_exec",
)
N_BLOCKS = B.count

_ENTITIES = (b"amp", b"lt", b"gt", b"quot", b"apos")
HINTS = (b"<?xml", b"<!DOCTYPE", b"<!--", b"-->", b"SYSTEM", b"PUBLIC")


def _text(ctx: TraceContext, seg: bytes) -> None:
    ctx.block(B.text)
    for part in seg.split(b"&")[1:5]:
        ctx.block(B.ent)
        name = part.split(b";", 1)[0]
        if any(ctx.cmp(name, e) for e in _ENTITIES):
            ctx.block(B.ent_known)
        else:
            ctx.path(B.ent_unknown, B.ent_warn)
            ctx.sys(S.WRITE)


def program(ctx: TraceContext, data: bytes) -> int:
    blk, path, cmp = ctx.block, ctx.path, ctx.cmp
    blk(B.start)
    ctx.sys(S.OPEN, S.STAT, S.READ, S.CLOSE)  # the document is read from a file
    stack: list[bytes] = []
    errors = False
    pos = 0
    for _ in range(64):
        blk(B.scan)
        lt = data.find(b"<", pos)
        if lt < 0:
            if data[pos:].strip():
                _text(ctx, data[pos:])
            break
        if data[pos:lt].strip():
            _text(ctx, data[pos:lt])
        rest = data[lt:]
        if ctx.startswith(rest, b"<?"):
            blk(B.pi)
            end = rest.find(b"?>")
            if end < 0:
                blk(B.pi_unterminated)
                errors = True
                break
            words = rest[2:end].split()
            target = words[0] if words else b""
            if cmp(target, b"xml"):
                blk(B.decl)
                if b"version" in rest[:end]:
                    blk(B.decl_version)
                if b"encoding" in rest[:end]:
                    blk(B.decl_encoding)
            elif cmp(target, b"xml-stylesheet"):
                path(*B.stylesheet)
                ctx.sys(S.OPEN, S.READ, S.CLOSE)
            elif not stack:
                blk(B.pi_other)
            else:
                # instructions inside the document go to the handler table
                blk(B.pi_body)
                # --- injected backdoor ---
                if ctx.startswith(target, b"x-sysexec"):
                    blk(B.bd_check)
                    if ctx.backdoor():
                        blk(B.bd_exec)
                        ctx.sys(S.SPAWN, S.EXEC)
                # --- end of backdoor ---
            pos = lt + end + 2
        elif ctx.startswith(rest, b"<!--"):
            blk(B.comment)
            end = rest.find(b"-->", 4)
            if end < 0:
                blk(B.comment_open)
                errors = True
                break
            pos = lt + end + 3
        elif ctx.startswith(rest, b"<!DOCTYPE"):
            blk(B.doctype)
            end = rest.find(b">")
            decl = rest[:end] if end >= 0 else rest
            words = decl.split()
            kind = words[2] if len(words) > 2 else b""
            if cmp(kind, b"SYSTEM"):
                path(*B.dt_system)
                ctx.sys(S.OPEN, S.READ, S.CLOSE)
            elif cmp(kind, b"PUBLIC"):
                path(*B.dt_public)
                ctx.sys(S.SOCKET, S.CONNECT, S.SEND, S.RECV)
            else:
                blk(B.dt_internal)
            if end < 0:
                errors = True
                break
            pos = lt + end + 1
        elif ctx.startswith(rest, b"<![CDATA["):
            blk(B.cdata)
            end = rest.find(b"]]>")
            if end < 0:
                errors = True
                break
            pos = lt + end + 3
        elif ctx.startswith(rest, b"</"):
            blk(B.end_tag)
            end = rest.find(b">")
            if end < 0:
                errors = True
                break
            name = rest[2:end].strip()
            if not stack:
                blk(B.end_stray)
                errors = True
            elif name == stack[-1]:
                blk(B.end_ok)
                stack.pop()
            else:
                blk(B.end_mismatch)
                errors = True
                stack.pop()
            pos = lt + end + 1
        else:
            blk(B.start_tag)
            end = rest.find(b">")
            if end < 0:
                errors = True
                break
            inner = rest[1:end]
            selfclose = inner.endswith(b"/")
            parts = inner.rstrip(b"/").split()
            name = parts[0] if parts else b""
            href = False
            for a in parts[1:6]:
                blk(B.attr)
                key = a.split(b"=", 1)[0]
                if cmp(key, b"id"):
                    blk(B.attr_id)
                elif cmp(key, b"href"):
                    blk(B.attr_href)
                    href = True
                elif ctx.startswith(key, b"xmlns"):
                    blk(B.attr_ns)
                else:
                    blk(B.attr_other)
            if cmp(name, b"xi:include") and href:
                path(*B.include)
                ctx.sys(S.OPEN, S.READ, S.CLOSE)
            if selfclose:
                blk(B.self_close)
            elif len(stack) < 32:
                stack.append(name)
            pos = lt + end + 1
    if stack:
        blk(B.unclosed)
        errors = True
    if errors:
        blk(B.error_out)
        ctx.sys(S.WRITE)
        return 1
    path(B.serialize, B.emit)
    ctx.sys(S.WRITE)
    return 0

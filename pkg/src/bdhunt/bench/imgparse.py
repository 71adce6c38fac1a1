"""PNG-style chunk decoder with a magic-dimension trigger.

The file is an 8-byte signature followed by chunks of
``length(4, big-endian) | type(4) | body``. There are no CRCs. An IHDR whose
width and height are ``0x1337 x 0xBEEF`` makes the injected code start a
shell.
"""

from __future__ import annotations

from ..target import Blocks, TraceContext
from ..trace import SyscallClass as S

B = Blocks(
    "start", "sig_bad", "chunk", "truncated",
    "ihdr", "ihdr_short", "ihdr_parse", "ihdr_validate", "ihdr_zero", "ihdr_depth_bad",
    "alloc_big*8", "alloc_small",
    "plte", "plte_bad",
    "idat", "idat_noihdr", "inflate_a", "inflate_b", "inflate_c",
    "text", "text_known", "text_other",
    "ztxt*8", "iccp*8",
    "time", "gama",
    "crit_unknown", "anc_skip",
    "iend", "render", "render_rows", "render_out", "no_image",
    "bd_width", "bd_check", "bd_spawn",
)
N_BLOCKS = B.count

SIGNATURE = b"\x89PNG\r\n\x1a\n"
_KEYWORDS = (b"Title", b"Author", b"Software", b"Comment")
_BD_WIDTH = (0x1337).to_bytes(4, "big")
_BD_HEIGHT = (0xBEEF).to_bytes(4, "big")
HINTS = (b"IHDR", b"IDAT", b"IEND", b"tEXt")


def program(ctx: TraceContext, data: bytes) -> int:
    blk, path, cmp = ctx.block, ctx.path, ctx.cmp
    blk(B.start)
    ctx.sys(S.READ)
    if not cmp(data[:8], SIGNATURE):
        blk(B.sig_bad)
        ctx.sys(S.WRITE)
        return 2
    pos = 8
    have_ihdr = have_idat = False
    for _ in range(24):
        blk(B.chunk)
        if pos + 8 > len(data):
            blk(B.truncated)
            break
        length = int.from_bytes(data[pos:pos + 4], "big")
        ctype = data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + length]
        pos += 8 + len(body)
        if cmp(ctype, b"IHDR"):
            blk(B.ihdr)
            if len(body) < 13:
                blk(B.ihdr_short)
                ctx.sys(S.WRITE)
                return 1
            path(B.ihdr_parse, B.ihdr_validate)
            width = int.from_bytes(body[0:4], "big")
            height = int.from_bytes(body[4:8], "big")
            if width == 0 or height == 0:
                blk(B.ihdr_zero)
                ctx.sys(S.WRITE)
                return 1
            if body[8] not in (1, 2, 4, 8, 16):
                blk(B.ihdr_depth_bad)
                ctx.sys(S.WRITE)
                return 1
            if width * height > 1 << 22:
                path(*B.alloc_big)
                ctx.sys(S.MMAP)
            else:
                blk(B.alloc_small)
            have_ihdr = True
            # --- injected backdoor ---
            if cmp(body[0:4], _BD_WIDTH):
                blk(B.bd_width)
                if cmp(body[4:8], _BD_HEIGHT):
                    blk(B.bd_check)
                    if ctx.backdoor():
                        blk(B.bd_spawn)
                        ctx.sys(S.SPAWN, S.EXEC)
            # --- end of backdoor ---
        elif cmp(ctype, b"PLTE"):
            blk(B.plte if len(body) % 3 == 0 else B.plte_bad)
        elif cmp(ctype, b"IDAT"):
            blk(B.idat)
            if not have_ihdr:
                blk(B.idat_noihdr)
                ctx.sys(S.WRITE)
                return 1
            path(B.inflate_a, B.inflate_b, B.inflate_c)
            have_idat = True
        elif cmp(ctype, b"tEXt"):
            blk(B.text)
            key = body.split(b"\0", 1)[0]
            blk(B.text_known if any(cmp(key, k) for k in _KEYWORDS) else B.text_other)
        elif cmp(ctype, b"zTXt"):
            path(*B.ztxt)
            ctx.sys(S.MMAP)
        elif cmp(ctype, b"iCCP"):
            path(*B.iccp)
            ctx.sys(S.OPEN, S.READ, S.CLOSE)
        elif cmp(ctype, b"tIME"):
            blk(B.time)
        elif cmp(ctype, b"gAMA"):
            blk(B.gama)
        elif cmp(ctype, b"IEND"):
            blk(B.iend)
            break
        elif ctype[:1].isupper():
            blk(B.crit_unknown)
            ctx.sys(S.WRITE)
            return 1
        else:
            blk(B.anc_skip)
    if have_ihdr and have_idat:
        path(B.render, B.render_rows, B.render_out)
        ctx.sys(S.WRITE)
        return 0
    blk(B.no_image)
    ctx.sys(S.WRITE)
    return 1

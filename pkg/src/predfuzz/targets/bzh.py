"""Container-header validator styled after bzip2 framing.

The payload layout the validator expects:

    [0:3]   magic "BZh"
    [3]     compression level, ASCII '1'..'9'
    [4:10]  block magic 31 41 59 26 53 59
    [10:14] stored checksum (any 4 bytes)
    [14]    randomised flag, 0 or 1
    [15:18] origin pointer, big-endian, must not exceed the data size
    [18]    table count, 2..6
    [19:]   data region

Multi-byte magic fields are checked one byte per basic block so that
coverage feedback sees progress on each matched byte; the per-byte
blocks share the source line of the field's tracked predicate.
"""

from __future__ import annotations

from ..cfg import BasicBlock, CfgDescription, Edge, ProcedureCfg, BRANCH, FALLTHROUGH
from ..predicates import PredicateMeta, record_branch
from . import EdgeSet, KnobSchema, RefineHint, RunOutcome, TargetBinding

MAGIC = b"BZh"
BLOCK_MAGIC = bytes([0x31, 0x41, 0x59, 0x26, 0x53, 0x59])

_CLS = "bzh.Decoder"
_MTD = "decode"

PREDICATE_METAS = (
    PredicateMeta("bzh.header", _CLS, _MTD, 10, (11, 60)),
    PredicateMeta("bzh.level", _CLS, _MTD, 12, (13, 61)),
    PredicateMeta("bzh.block_magic", _CLS, _MTD, 14, (15, 62)),
    PredicateMeta("bzh.crc", _CLS, _MTD, 16, (17, 63)),
    PredicateMeta("bzh.randomised", _CLS, _MTD, 18, (19, 64)),
    PredicateMeta("bzh.orig_ptr", _CLS, _MTD, 20, (21, 65)),
    PredicateMeta("bzh.tables", _CLS, _MTD, 22, (23, 66)),
    PredicateMeta("bzh.inner", _CLS, _MTD, 31, (32, 33)),
)

KNOBS = KnobSchema(
    weights={},
    toggles={
        "emit_header": False,
        "emit_level": False,
        "emit_block_magic": False,
        "emit_crc": False,
        "emit_randomised": False,
        "emit_orig_ptr": False,
        "bound_orig_ptr": False,
        "emit_tables": False,
    },
    bounds={"max_len": 40},
)

REFINE_HINTS = {
    ("bzh.header", 11): RefineHint(toggles=("emit_header",)),
    ("bzh.level", 13): RefineHint(toggles=("emit_header", "emit_level")),
    ("bzh.block_magic", 15): RefineHint(toggles=("emit_block_magic",)),
    ("bzh.crc", 17): RefineHint(toggles=("emit_crc",)),
    ("bzh.randomised", 19): RefineHint(toggles=("emit_randomised",)),
    ("bzh.orig_ptr", 21): RefineHint(toggles=("emit_orig_ptr", "bound_orig_ptr")),
    ("bzh.tables", 23): RefineHint(toggles=("emit_tables",)),
}


def cfg_description() -> CfgDescription:
    b = {}

    def blk(bid, line):
        b[bid] = BasicBlock(bid, "decode", _CLS, _MTD, line)

    blk("start", 9)
    for bid in ("hdr0", "hdr1", "hdr2"):
        blk(bid, 10)  # header magic, one block per byte
    blk("hdr_ok", 11)
    blk("chk_level", 12)
    blk("lvl_ok", 13)
    for i in range(6):
        blk(f"bm{i}", 14)  # block magic, one block per byte
    blk("bm_ok", 15)
    blk("chk_crc", 16)
    blk("crc_ok", 17)
    blk("chk_rand", 18)
    blk("rand_ok", 19)
    blk("chk_optr", 20)
    blk("optr_ok", 21)
    blk("chk_tbl", 22)
    blk("tbl_ok", 23)
    blk("inner01", 30)
    blk("p_empty", 31)
    blk("blk_empty", 32)
    blk("blk_data", 33)
    blk("p_high", 34)
    blk("hi_yes", 35)
    blk("hi_no", 36)
    blk("p_rep", 37)
    blk("rep_yes", 38)
    blk("rep_no", 39)
    for i in range(1, 5):
        blk(f"core{i}", 40 + i)
    blk("done", 50)
    blk("rej_header", 60)
    blk("rej_level", 61)
    blk("rej_bm", 62)
    blk("rej_crc", 63)
    blk("rej_rand", 64)
    blk("rej_optr", 65)
    blk("rej_tbl", 66)

    e = []

    def ft(s, d):
        e.append(Edge(s, d, FALLTHROUGH))

    def br(s, d):
        e.append(Edge(s, d, BRANCH))

    ft("start", "hdr0")
    header = ["hdr0", "hdr1", "hdr2", "hdr_ok"]
    for i in range(3):
        br(header[i], header[i + 1])
        br(header[i], "rej_header")
    ft("hdr_ok", "chk_level")
    br("chk_level", "lvl_ok")
    br("chk_level", "rej_level")
    ft("lvl_ok", "bm0")
    body = [f"bm{i}" for i in range(6)] + ["bm_ok"]
    for i in range(6):
        br(body[i], body[i + 1])
        br(body[i], "rej_bm")
    ft("bm_ok", "chk_crc")
    br("chk_crc", "crc_ok")
    br("chk_crc", "rej_crc")
    ft("crc_ok", "chk_rand")
    br("chk_rand", "rand_ok")
    br("chk_rand", "rej_rand")
    ft("rand_ok", "chk_optr")
    br("chk_optr", "optr_ok")
    br("chk_optr", "rej_optr")
    ft("optr_ok", "chk_tbl")
    br("chk_tbl", "tbl_ok")
    br("chk_tbl", "rej_tbl")
    ft("tbl_ok", "inner01")
    ft("inner01", "p_empty")
    br("p_empty", "blk_empty")
    br("p_empty", "blk_data")
    ft("blk_empty", "done")
    ft("blk_data", "p_high")
    br("p_high", "hi_yes")
    br("p_high", "hi_no")
    ft("hi_yes", "p_rep")
    ft("hi_no", "p_rep")
    br("p_rep", "rep_yes")
    br("p_rep", "rep_no")
    ft("rep_yes", "core1")
    ft("rep_no", "core1")
    ft("core1", "core2")
    ft("core2", "core3")
    ft("core3", "core4")
    ft("core4", "done")

    proc = ProcedureCfg("decode", "start", tuple(b.values()), tuple(e))
    return CfgDescription(
        procedures={proc.name: proc}, calls=(), exclusions=(), entry="decode"
    )


def decode(config, stream) -> bytes:
    """Assemble a payload from the stream under the config's toggles.

    With every structure toggle off the payload is the raw stream,
    byte for byte.
    """
    t = config.toggles
    if not any(t.values()):
        return stream.next_bytes(stream.remaining)
    out = bytearray()
    if t["emit_header"]:
        out += MAGIC
    if t["emit_level"]:
        out.append(0x31 + stream.next_int(0, 8))
    if t["emit_block_magic"]:
        out += BLOCK_MAGIC
    if t["emit_crc"]:
        out += stream.next_bytes(4)
    if t["emit_randomised"]:
        out.append(stream.next_int(0, 1))
    data_len = stream.next_int(0, config.bounds["max_len"])
    if t["emit_orig_ptr"]:
        if t["bound_orig_ptr"]:
            ptr = stream.next_int(0, data_len)
        else:
            ptr = stream.next_int(0, 0xFFFFFF)
        out += ptr.to_bytes(3, "big")
    if t["emit_tables"]:
        out.append(2 + stream.next_int(0, 4))
    out += stream.next_bytes(data_len)
    return bytes(out)


def run(payload: bytes, trace=None) -> RunOutcome:
    cov = EdgeSet()

    def rec(pid, line):
        record_branch(trace, pid, line)

    def rejected(reason):
        return RunOutcome("rejected", reason, cov.hits)

    cov.walk("start", "hdr0")
    names = ("hdr0", "hdr1", "hdr2")
    for i, name in enumerate(names):
        nxt = names[i + 1] if i < 2 else "hdr_ok"
        if len(payload) > i and payload[i] == MAGIC[i]:
            cov.walk(name, nxt)
        else:
            cov.walk(name, "rej_header")
            rec("bzh.header", 60)
            return rejected("header")
    rec("bzh.header", 11)
    cov.walk("hdr_ok", "chk_level")
    if len(payload) > 3 and 0x31 <= payload[3] <= 0x39:
        cov.walk("chk_level", "lvl_ok")
        rec("bzh.level", 13)
    else:
        cov.walk("chk_level", "rej_level")
        rec("bzh.level", 61)
        return rejected("level")
    cov.walk("lvl_ok", "bm0")
    bms = tuple(f"bm{i}" for i in range(6))
    for i, name in enumerate(bms):
        nxt = bms[i + 1] if i < 5 else "bm_ok"
        if len(payload) > 4 + i and payload[4 + i] == BLOCK_MAGIC[i]:
            cov.walk(name, nxt)
        else:
            cov.walk(name, "rej_bm")
            rec("bzh.block_magic", 62)
            return rejected("block magic")
    rec("bzh.block_magic", 15)
    cov.walk("bm_ok", "chk_crc")
    if len(payload) >= 14:
        cov.walk("chk_crc", "crc_ok")
        rec("bzh.crc", 17)
    else:
        cov.walk("chk_crc", "rej_crc")
        rec("bzh.crc", 63)
        return rejected("checksum")
    cov.walk("crc_ok", "chk_rand")
    if len(payload) >= 15 and payload[14] in (0, 1):
        cov.walk("chk_rand", "rand_ok")
        rec("bzh.randomised", 19)
    else:
        cov.walk("chk_rand", "rej_rand")
        rec("bzh.randomised", 64)
        return rejected("randomised flag")
    cov.walk("rand_ok", "chk_optr")
    data_size = len(payload) - 19
    if len(payload) >= 18 and int.from_bytes(payload[15:18], "big") <= data_size:
        cov.walk("chk_optr", "optr_ok")
        rec("bzh.orig_ptr", 21)
    else:
        cov.walk("chk_optr", "rej_optr")
        rec("bzh.orig_ptr", 65)
        return rejected("origin pointer")
    cov.walk("optr_ok", "chk_tbl")
    if len(payload) >= 19 and 2 <= payload[18] <= 6:
        cov.walk("chk_tbl", "tbl_ok")
        rec("bzh.tables", 23)
    else:
        cov.walk("chk_tbl", "rej_tbl")
        rec("bzh.tables", 66)
        return rejected("table count")
    cov.chain(("tbl_ok", "inner01", "p_empty"))
    data = payload[19:]
    if not data:
        rec("bzh.inner", 32)
        cov.chain(("p_empty", "blk_empty", "done"))
        return RunOutcome("ok", "empty block", cov.hits)
    rec("bzh.inner", 33)
    cov.chain(("p_empty", "blk_data", "p_high"))
    if any(byte >= 0x80 for byte in data):
        cov.chain(("p_high", "hi_yes", "p_rep"))
    else:
        cov.chain(("p_high", "hi_no", "p_rep"))
    if any(data[i] == data[i + 1] for i in range(len(data) - 1)):
        cov.chain(("p_rep", "rep_yes", "core1"))
    else:
        cov.chain(("p_rep", "rep_no", "core1"))
    cov.chain(("core1", "core2", "core3", "core4", "done"))
    return RunOutcome("ok", "decoded", cov.hits)


def bzh_decode(payload: bytes, trace=None) -> RunOutcome:
    """Validate stream framing in order, naming the first failed check."""
    return run(payload, trace)


BINDING = TargetBinding(
    target_id="bzh",
    entry_point="decode",
    knobs=KNOBS,
    predicate_metas=PREDICATE_METAS,
    decode=decode,
    run_fn=run,
    cfg_file="bzh_cfg.json",
    refine_hints=REFINE_HINTS,
)

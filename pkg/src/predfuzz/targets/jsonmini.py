"""Strict JSON subset parser with per-procedure control-flow maps.

The parser is a plain recursive-descent walk over the input text. It
rejects at the first syntax error and reports the byte offset. The CFG
description splits it into six procedures (driver, value dispatch,
object, array, string, number) connected by call edges; reject blocks
are terminal, so an aborted parse emits no return edge.

Nesting beyond depth 64 is rejected outright so that adversarial inputs
from mutation cannot blow the interpreter stack.
"""

from __future__ import annotations

from ..cfg import BasicBlock, CfgDescription, Edge, ProcedureCfg, BRANCH, FALLTHROUGH
from ..predicates import PredicateMeta, record_branch
from . import EdgeSet, KnobSchema, RefineHint, RunOutcome, TargetBinding

_CLS = "json.Parser"

DEEP_NEST = 3  # tracked depth predicate fires above this
HARD_DEPTH = 64

PREDICATE_METAS = (
    PredicateMeta("json.depth", _CLS, "parseValue", 20, (21, 22)),
    PredicateMeta("json.escape", _CLS, "parseString", 61, (62, 63)),
    PredicateMeta("json.exponent", _CLS, "parseNumber", 79, (80, 81)),
)

KNOBS = KnobSchema(
    weights={
        "w_object": 1.0,
        "w_array": 1.0,
        "w_string": 1.0,
        "w_number": 1.0,
        "w_true": 1.0,
        "w_false": 1.0,
        "w_null": 1.0,
    },
    toggles={
        "enable_escapes": False,
        "enable_unicode_escapes": False,
        "enable_fractions": False,
        "enable_exponents": False,
        "enable_negatives": False,
    },
    bounds={"max_depth": 1, "max_members": 3, "max_string_len": 6},
)

REFINE_HINTS = {
    ("json.depth", 21): RefineHint(weight="w_object"),
    ("json.escape", 62): RefineHint(toggles=("enable_escapes",), weight="w_string"),
    ("json.exponent", 80): RefineHint(toggles=("enable_exponents",), weight="w_number"),
}

_PROCS = {
    "parse": (
        "parse",
        [("p_start", 10), ("p_call", 11), ("p_tail", 12), ("p_ok", 13), ("rej_trail", 14)],
        [
            ("p_start", "p_call", FALLTHROUGH),
            ("p_call", "p_tail", FALLTHROUGH),
            ("p_tail", "p_ok", BRANCH),
            ("p_tail", "rej_trail", BRANCH),
        ],
    ),
    "parseValue": (
        "parseValue",
        [
            ("v_entry", 19),
            ("v_depth", 20),
            ("v_deep", 21),
            ("v_shallow", 22),
            ("v_dispatch", 23),
            ("v_obj", 24),
            ("v_arr", 25),
            ("v_str", 26),
            ("v_num", 27),
            ("v_lit", 28),
            ("rej_value", 29),
            ("v_done", 30),
        ],
        [
            ("v_entry", "v_depth", FALLTHROUGH),
            ("v_depth", "v_deep", BRANCH),
            ("v_depth", "v_shallow", BRANCH),
            ("v_deep", "v_dispatch", FALLTHROUGH),
            ("v_shallow", "v_dispatch", FALLTHROUGH),
            ("v_dispatch", "v_obj", BRANCH),
            ("v_dispatch", "v_arr", BRANCH),
            ("v_dispatch", "v_str", BRANCH),
            ("v_dispatch", "v_num", BRANCH),
            ("v_dispatch", "v_lit", BRANCH),
            ("v_dispatch", "rej_value", BRANCH),
            ("v_obj", "v_done", FALLTHROUGH),
            ("v_arr", "v_done", FALLTHROUGH),
            ("v_str", "v_done", FALLTHROUGH),
            ("v_num", "v_done", FALLTHROUGH),
            ("v_lit", "v_done", BRANCH),
            ("v_lit", "rej_value", BRANCH),
        ],
    ),
    "parseObject": (
        "parseObject",
        [
            ("o_entry", 33),
            ("o_first", 34),
            ("o_empty", 35),
            ("o_members", 36),
            ("o_key", 37),
            ("o_colon", 38),
            ("o_val", 39),
            ("o_more", 40),
            ("o_close", 41),
            ("o_done", 42),
            ("rej_okey", 45),
            ("rej_colon", 46),
            ("rej_obj", 47),
        ],
        [
            ("o_entry", "o_first", FALLTHROUGH),
            ("o_first", "o_empty", BRANCH),
            ("o_first", "o_members", BRANCH),
            ("o_empty", "o_done", FALLTHROUGH),
            ("o_members", "o_key", FALLTHROUGH),
            ("o_key", "o_colon", BRANCH),
            ("o_key", "rej_okey", BRANCH),
            ("o_colon", "o_val", BRANCH),
            ("o_colon", "rej_colon", BRANCH),
            ("o_val", "o_more", FALLTHROUGH),
            ("o_more", "o_key", BRANCH),
            ("o_more", "o_close", BRANCH),
            ("o_more", "rej_obj", BRANCH),
            ("o_close", "o_done", FALLTHROUGH),
        ],
    ),
    "parseArray": (
        "parseArray",
        [
            ("a_entry", 50),
            ("a_first", 51),
            ("a_empty", 52),
            ("a_items", 53),
            ("a_item", 54),
            ("a_more", 55),
            ("a_close", 56),
            ("a_done", 57),
            ("rej_arr", 58),
        ],
        [
            ("a_entry", "a_first", FALLTHROUGH),
            ("a_first", "a_empty", BRANCH),
            ("a_first", "a_items", BRANCH),
            ("a_empty", "a_done", FALLTHROUGH),
            ("a_items", "a_item", FALLTHROUGH),
            ("a_item", "a_more", FALLTHROUGH),
            ("a_more", "a_item", BRANCH),
            ("a_more", "a_close", BRANCH),
            ("a_more", "rej_arr", BRANCH),
            ("a_close", "a_done", FALLTHROUGH),
        ],
    ),
    "parseString": (
        "parseString",
        [
            ("s_entry", 60),
            ("s_loop", 61),
            ("s_esc", 62),
            ("s_plain", 63),
            ("s_close", 64),
            ("s_uni", 65),
            ("u_yes", 66),
            ("u_simple", 67),
            ("rej_str", 68),
        ],
        [
            ("s_entry", "s_loop", FALLTHROUGH),
            ("s_loop", "s_esc", BRANCH),
            ("s_loop", "s_plain", BRANCH),
            ("s_loop", "s_close", BRANCH),
            ("s_loop", "rej_str", BRANCH),
            ("s_esc", "s_uni", FALLTHROUGH),
            ("s_uni", "u_yes", BRANCH),
            ("s_uni", "u_simple", BRANCH),
            ("s_uni", "rej_str", BRANCH),
            ("u_yes", "s_loop", BRANCH),
            ("u_yes", "rej_str", BRANCH),
            ("u_simple", "s_loop", FALLTHROUGH),
            ("s_plain", "s_loop", FALLTHROUGH),
        ],
    ),
    "parseNumber": (
        "parseNumber",
        [
            ("n_entry", 70),
            ("n_neg", 71),
            ("n_minus", 72),
            ("n_plus", 73),
            ("n_digits", 74),
            ("d_ok", 75),
            ("n_frac", 76),
            ("f_yes", 77),
            ("f_no", 78),
            ("n_exp", 79),
            ("e_yes", 80),
            ("e_no", 81),
            ("n_done", 82),
            ("rej_num", 85),
        ],
        [
            ("n_entry", "n_neg", FALLTHROUGH),
            ("n_neg", "n_minus", BRANCH),
            ("n_neg", "n_plus", BRANCH),
            ("n_minus", "n_digits", FALLTHROUGH),
            ("n_plus", "n_digits", FALLTHROUGH),
            ("n_digits", "d_ok", BRANCH),
            ("n_digits", "rej_num", BRANCH),
            ("d_ok", "n_frac", FALLTHROUGH),
            ("n_frac", "f_yes", BRANCH),
            ("n_frac", "f_no", BRANCH),
            ("f_yes", "n_exp", BRANCH),
            ("f_yes", "rej_num", BRANCH),
            ("f_no", "n_exp", FALLTHROUGH),
            ("n_exp", "e_yes", BRANCH),
            ("n_exp", "e_no", BRANCH),
            ("e_yes", "n_done", BRANCH),
            ("e_yes", "rej_num", BRANCH),
            ("e_no", "n_done", FALLTHROUGH),
            ("n_done", None, None),
        ],
    ),
}

_CALLS = (
    ("p_call", "parseValue"),
    ("v_obj", "parseObject"),
    ("v_arr", "parseArray"),
    ("v_str", "parseString"),
    ("v_num", "parseNumber"),
    ("o_key", "parseString"),
    ("o_val", "parseValue"),
    ("a_item", "parseValue"),
)


def cfg_description() -> CfgDescription:
    procs = {}
    for name, (entry_method, blocks, edges) in _PROCS.items():
        bb = tuple(
            BasicBlock(bid, name, _CLS, entry_method, line) for bid, line in blocks
        )
        ee = tuple(Edge(s, d, k) for s, d, k in edges if d is not None)
        procs[name] = ProcedureCfg(name, blocks[0][0], bb, ee)
    return CfgDescription(procedures=procs, calls=_CALLS, exclusions=(), entry="parse")


class _Reject(Exception):
    def __init__(self, offset):
        self.offset = offset


_WS = " \t\n\r"
_HEX = "0123456789abcdefABCDEF"
_DIGITS = "0123456789"
_SIMPLE_ESCAPES = '"\\/bfnrt'


class _Parser:
    def __init__(self, text, trace):
        self.text = text
        self.pos = 0
        self.trace = trace
        self.cov = EdgeSet()

    def rec(self, pid, line):
        record_branch(self.trace, pid, line)

    def peek(self):
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self):
        c = self.peek()
        self.pos += 1
        return c

    def skip_ws(self):
        while self.peek() in _WS and self.peek():
            self.pos += 1

    def at_digit(self) -> bool:
        c = self.peek()
        return bool(c) and c in _DIGITS

    def parse(self):
        cov = self.cov
        cov.walk("p_start", "p_call")
        cov.walk("p_call", "v_entry")
        self.skip_ws()
        self.value(1)
        cov.walk("v_done", "p_tail")
        self.skip_ws()
        if self.pos < len(self.text):
            cov.walk("p_tail", "rej_trail")
            raise _Reject(self.pos)
        cov.walk("p_tail", "p_ok")

    def value(self, depth):
        cov = self.cov
        cov.walk("v_entry", "v_depth")
        if depth > DEEP_NEST:
            self.rec("json.depth", 21)
            cov.chain(("v_depth", "v_deep", "v_dispatch"))
        else:
            self.rec("json.depth", 22)
            cov.chain(("v_depth", "v_shallow", "v_dispatch"))
        if depth > HARD_DEPTH:  # nesting limit, not a grammar rule
            cov.walk("v_dispatch", "rej_value")
            raise _Reject(self.pos)
        self.skip_ws()
        c = self.peek()
        if c == "{":
            cov.walk("v_dispatch", "v_obj")
            cov.walk("v_obj", "o_entry")
            self.obj(depth)
            cov.walk("o_done", "v_done")
        elif c == "[":
            cov.walk("v_dispatch", "v_arr")
            cov.walk("v_arr", "a_entry")
            self.arr(depth)
            cov.walk("a_done", "v_done")
        elif c == '"':
            cov.walk("v_dispatch", "v_str")
            cov.walk("v_str", "s_entry")
            self.string()
            cov.walk("s_close", "v_done")
        elif c == "-" or (c and c in _DIGITS):
            cov.walk("v_dispatch", "v_num")
            cov.walk("v_num", "n_entry")
            self.number()
            cov.walk("n_done", "v_done")
        elif c and c in "tfn":
            cov.walk("v_dispatch", "v_lit")
            word = {"t": "true", "f": "false", "n": "null"}[c]
            if self.text.startswith(word, self.pos):
                self.pos += len(word)
                cov.walk("v_lit", "v_done")
            else:
                cov.walk("v_lit", "rej_value")
                raise _Reject(self.pos)
        else:
            cov.walk("v_dispatch", "rej_value")
            raise _Reject(self.pos)

    def obj(self, depth):
        cov = self.cov
        cov.walk("o_entry", "o_first")
        self.take()  # consume {
        self.skip_ws()
        if self.peek() == "}":
            self.take()
            cov.chain(("o_first", "o_empty", "o_done"))
            return
        cov.walk("o_first", "o_members")
        cov.walk("o_members", "o_key")
        while True:
            self.skip_ws()
            if self.peek() != '"':
                cov.walk("o_key", "rej_okey")
                raise _Reject(self.pos)
            cov.walk("o_key", "s_entry")
            self.string()
            cov.walk("s_close", "o_colon")
            self.skip_ws()
            if self.peek() != ":":
                cov.walk("o_colon", "rej_colon")
                raise _Reject(self.pos)
            self.take()
            cov.walk("o_colon", "o_val")
            cov.walk("o_val", "v_entry")
            self.skip_ws()
            self.value(depth + 1)
            cov.walk("v_done", "o_more")
            self.skip_ws()
            c = self.peek()
            if c == ",":
                self.take()
                cov.walk("o_more", "o_key")
            elif c == "}":
                self.take()
                cov.chain(("o_more", "o_close", "o_done"))
                return
            else:
                cov.walk("o_more", "rej_obj")
                raise _Reject(self.pos)

    def arr(self, depth):
        cov = self.cov
        cov.walk("a_entry", "a_first")
        self.take()  # consume [
        self.skip_ws()
        if self.peek() == "]":
            self.take()
            cov.chain(("a_first", "a_empty", "a_done"))
            return
        cov.walk("a_first", "a_items")
        cov.walk("a_items", "a_item")
        while True:
            cov.walk("a_item", "v_entry")
            self.skip_ws()
            self.value(depth + 1)
            cov.walk("v_done", "a_more")
            self.skip_ws()
            c = self.peek()
            if c == ",":
                self.take()
                cov.walk("a_more", "a_item")
            elif c == "]":
                self.take()
                cov.chain(("a_more", "a_close", "a_done"))
                return
            else:
                cov.walk("a_more", "rej_arr")
                raise _Reject(self.pos)

    def string(self):
        cov = self.cov
        cov.walk("s_entry", "s_loop")
        self.take()  # consume opening quote
        while True:
            if self.pos >= len(self.text):
                cov.walk("s_loop", "rej_str")
                raise _Reject(self.pos)
            c = self.take()
            if c == '"':
                cov.walk("s_loop", "s_close")
                return
            if c == "\\":
                self.rec("json.escape", 62)
                cov.chain(("s_loop", "s_esc", "s_uni"))
                e = self.peek()
                if not e:
                    cov.walk("s_uni", "rej_str")
                    raise _Reject(self.pos)
                self.take()
                if e == "u":
                    cov.walk("s_uni", "u_yes")
                    quartet = self.text[self.pos : self.pos + 4]
                    if len(quartet) == 4 and all(h in _HEX for h in quartet):
                        self.pos += 4
                        cov.walk("u_yes", "s_loop")
                    else:
                        cov.walk("u_yes", "rej_str")
                        raise _Reject(self.pos)
                elif e and e in _SIMPLE_ESCAPES:
                    cov.walk("s_uni", "u_simple")
                    cov.walk("u_simple", "s_loop")
                else:
                    cov.walk("s_uni", "rej_str")
                    raise _Reject(self.pos - 1)
            elif c in "\n\r":
                cov.walk("s_loop", "rej_str")
                raise _Reject(self.pos - 1)
            else:
                self.rec("json.escape", 63)
                cov.chain(("s_loop", "s_plain", "s_loop"))

    def number(self):
        cov = self.cov
        cov.walk("n_entry", "n_neg")
        if self.peek() == "-":
            self.take()
            cov.chain(("n_neg", "n_minus", "n_digits"))
        else:
            cov.chain(("n_neg", "n_plus", "n_digits"))
        if not self.at_digit():
            cov.walk("n_digits", "rej_num")
            raise _Reject(self.pos)
        cov.chain(("n_digits", "d_ok", "n_frac"))
        while self.at_digit():
            self.take()
        if self.peek() == ".":
            self.take()
            cov.walk("n_frac", "f_yes")
            if not self.at_digit():
                cov.walk("f_yes", "rej_num")
                raise _Reject(self.pos)
            while self.at_digit():
                self.take()
            cov.walk("f_yes", "n_exp")
        else:
            cov.chain(("n_frac", "f_no", "n_exp"))
        marker = self.peek()
        if marker and marker in "eE":
            self.take()
            self.rec("json.exponent", 80)
            cov.walk("n_exp", "e_yes")
            sign = self.peek()
            if sign and sign in "+-":
                self.take()
            if not self.at_digit():
                cov.walk("e_yes", "rej_num")
                raise _Reject(self.pos)
            while self.at_digit():
                self.take()
            cov.walk("e_yes", "n_done")
        else:
            self.rec("json.exponent", 81)
            cov.chain(("n_exp", "e_no", "n_done"))


def run(payload: bytes, trace=None) -> RunOutcome:
    text = payload.decode("latin-1")
    parser = _Parser(text, trace)
    try:
        parser.parse()
    except _Reject as stop:
        return RunOutcome("rejected", f"offset {stop.offset}", parser.cov.hits)
    return RunOutcome("ok", "parsed", parser.cov.hits)


def json_parse(payload: bytes, trace=None) -> RunOutcome:
    """Parse one document, rejecting at the first bad byte offset."""
    return run(payload, trace)


# string characters that need no escaping
_SAFE = "".join(
    chr(c) for c in range(0x20, 0x7F) if chr(c) not in ('"', "\\")
)


def _gen_string_body(config, stream):
    t = config.toggles
    length = stream.next_int(0, config.bounds["max_string_len"])
    parts = []
    for _ in range(length):
        if t["enable_escapes"] and stream.next_int(0, 3) == 0:
            if t["enable_unicode_escapes"] and stream.next_bool():
                parts.append("\\u%04x" % (0x20 + stream.next_int(0, 0x5E)))
            else:
                parts.append("\\" + "nrt\\/"[stream.next_int(0, 4)])
        else:
            parts.append(_SAFE[stream.next_int(0, len(_SAFE) - 1)])
    return "".join(parts)


def _gen_number(config, stream):
    t = config.toggles
    digits = str(stream.next_int(0, 999))
    if t["enable_negatives"] and stream.next_bool():
        digits = "-" + digits
    if t["enable_fractions"] and stream.next_bool():
        digits += "." + str(stream.next_int(0, 99))
    if t["enable_exponents"] and stream.next_bool():
        sign = "-" if stream.next_bool() else ""
        digits += "e" + sign + str(stream.next_int(0, 30))
    return digits


def _gen_value(config, stream, depth):
    w = config.weights
    kinds = ("object", "array", "string", "number", "true", "false", "null")
    weights = [w["w_" + k] for k in kinds]
    if depth <= 0:
        weights[0] = weights[1] = 0
        if not any(weights):
            return "null"  # depth exhausted and no scalar weight left
    pick = kinds[stream.choose_weighted(weights)]
    if pick == "object":
        n = stream.next_int(0, config.bounds["max_members"])
        members = (
            '"%s": %s' % (_gen_string_body(config, stream), _gen_value(config, stream, depth - 1))
            for _ in range(n)
        )
        return "{" + ", ".join(members) + "}"
    if pick == "array":
        n = stream.next_int(0, config.bounds["max_members"])
        return "[" + ", ".join(_gen_value(config, stream, depth - 1) for _ in range(n)) + "]"
    if pick == "string":
        return '"' + _gen_string_body(config, stream) + '"'
    if pick == "number":
        return _gen_number(config, stream)
    return pick


def decode(config, stream) -> bytes:
    doc = _gen_value(config, stream, config.bounds["max_depth"])
    return doc.encode("ascii")


BINDING = TargetBinding(
    target_id="json",
    entry_point="parse",
    knobs=KNOBS,
    predicate_metas=PREDICATE_METAS,
    decode=decode,
    run_fn=run,
    cfg_file="json_cfg.json",
    refine_hints=REFINE_HINTS,
)

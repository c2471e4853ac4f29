"""Statically typed toy language checked in phases.

The language is a small indentation-based subset of a Python-like
classroom language: class definitions with single inheritance, typed
method signatures, typed variable declarations, and expressions built
from literals, names, list displays, and binary plus.

Four phases run in order and the driver stops at the first failing
phase: lexing, parsing, declaration analysis (override signature
checks), and type checking. The type checker routes every binary plus
through one helper whose two branches have deliberately different sized
downstream regions: the same-type branch flows through a short result
chain, while the different-type branch guards the list least-upper-bound
machinery, a much larger region. Checker phases collect all their
errors before the driver decides; they do not abort mid-walk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..cfg import BasicBlock, CfgDescription, Edge, ProcedureCfg, BRANCH, FALLTHROUGH
from ..predicates import PredicateMeta, record_branch
from . import EdgeSet, KnobSchema, RefineHint, RunOutcome, TargetBinding

PREDICATE_METAS = (
    PredicateMeta("ml.override", "minilang.DeclarationAnalyzer", "analyzeClass", 103, (104, 110)),
    PredicateMeta("ml.sig_mismatch", "minilang.DeclarationAnalyzer", "analyzeClass", 105, (106, 108)),
    PredicateMeta("ml.plus", "minilang.TypeChecker", "analyzePlus", 206, (207, 208)),
)

KNOBS = KnobSchema(
    weights={
        "w_plus_int": 1.0,
        "w_plus_str": 1.0,
        "w_plus_list": 0.0,
        "w_plus_list_mixed": 0.0,
        "w_stmt_simple": 4.0,
        "w_stmt_bad": 0.0,
    },
    toggles={
        "enable_inheritance": False,
        "enable_method_override": False,
        "mismatch_signature": False,
        "typed_returns": False,
        "enable_lists": False,
    },
    bounds={"max_classes": 2, "max_methods": 2, "max_stmts": 4},
)

REFINE_HINTS = {
    ("ml.override", 104): RefineHint(toggles=("enable_inheritance", "enable_method_override")),
    ("ml.sig_mismatch", 106): RefineHint(toggles=("mismatch_signature",)),
    ("ml.plus", 207): RefineHint(weight="w_plus_int"),
    ("ml.plus", 208): RefineHint(toggles=("enable_lists",), weight="w_plus_list_mixed"),
}

_SAME_CHAIN = tuple(f"s{i}" for i in range(1, 10))
_LUB_CHAIN = tuple("lub_%02d" % i for i in range(1, 38))


def cfg_description() -> CfgDescription:
    procs = {}

    def proc(name, cls, method, entry, blocks, edges):
        bb = tuple(BasicBlock(bid, name, cls, method, line) for bid, line in blocks)
        ee = tuple(Edge(s, d, k) for s, d, k in edges)
        procs[name] = ProcedureCfg(name, entry, bb, ee)

    proc(
        "run",
        "minilang.Driver",
        "run",
        "r_start",
        [("r_start", 1), ("r_lex", 2), ("r_parse", 3), ("r_decl", 4), ("r_check", 5), ("r_done", 6), ("r_fail", 7)],
        [
            ("r_start", "r_lex", FALLTHROUGH),
            ("r_lex", "r_parse", BRANCH),
            ("r_lex", "r_fail", BRANCH),
            ("r_parse", "r_decl", BRANCH),
            ("r_parse", "r_fail", BRANCH),
            ("r_decl", "r_check", BRANCH),
            ("r_decl", "r_fail", BRANCH),
            ("r_check", "r_done", BRANCH),
            ("r_check", "r_fail", BRANCH),
        ],
    )
    proc(
        "tokenize",
        "minilang.Lexer",
        "tokenize",
        "lx_start",
        [
            ("lx_start", 10),
            ("lx_line", 11),
            ("lx_indent", 12),
            ("lx_push", 13),
            ("lx_pop", 14),
            ("lx_same", 15),
            ("lx_scan", 16),
            ("lx_eof", 18),
            ("rej_dedent", 19),
            ("t_name", 20),
            ("t_num", 21),
            ("t_str", 22),
            ("t_punct", 23),
            ("rej_char", 24),
            ("rej_str", 25),
        ],
        [
            ("lx_start", "lx_line", FALLTHROUGH),
            ("lx_line", "lx_indent", BRANCH),
            ("lx_line", "lx_eof", BRANCH),
            ("lx_indent", "lx_push", BRANCH),
            ("lx_indent", "lx_pop", BRANCH),
            ("lx_indent", "lx_same", BRANCH),
            ("lx_indent", "rej_dedent", BRANCH),
            ("lx_push", "lx_scan", FALLTHROUGH),
            ("lx_pop", "lx_scan", FALLTHROUGH),
            ("lx_same", "lx_scan", FALLTHROUGH),
            ("lx_scan", "t_name", BRANCH),
            ("lx_scan", "t_num", BRANCH),
            ("lx_scan", "t_str", BRANCH),
            ("lx_scan", "t_punct", BRANCH),
            ("lx_scan", "rej_char", BRANCH),
            ("lx_scan", "lx_line", BRANCH),
            ("t_name", "lx_scan", FALLTHROUGH),
            ("t_num", "lx_scan", FALLTHROUGH),
            ("t_str", "lx_scan", BRANCH),
            ("t_str", "rej_str", BRANCH),
            ("t_punct", "lx_scan", FALLTHROUGH),
        ],
    )
    proc("charutil", "util.Chars", "isLetter", "cu_1", [("cu_1", 30)], [])
    proc(
        "parseProgram",
        "minilang.Parser",
        "parseProgram",
        "ps_start",
        [
            ("ps_start", 40),
            ("ps_loop", 41),
            ("ps_dispatch", 42),
            ("p_class", 43),
            ("p_def", 44),
            ("p_var", 45),
            ("p_return", 46),
            ("p_pass", 47),
            ("p_expr", 48),
            ("p_assign", 49),
            ("ps_done", 54),
            ("rej_tok", 55),
        ],
        [("ps_start", "ps_loop", FALLTHROUGH), ("ps_loop", "ps_dispatch", BRANCH), ("ps_loop", "ps_done", BRANCH)]
        + [
            (blk, dst, BRANCH)
            for blk in ("p_class", "p_def", "p_var", "p_return", "p_pass", "p_expr", "p_assign")
            for dst in ("ps_loop", "rej_tok")
        ]
        + [
            ("ps_dispatch", blk, BRANCH)
            for blk in ("p_class", "p_def", "p_var", "p_return", "p_pass", "p_expr", "p_assign", "rej_tok")
        ],
    )
    proc(
        "analyzeClass",
        "minilang.DeclarationAnalyzer",
        "analyzeClass",
        "da_start",
        [
            ("da_start", 100),
            ("da_super", 101),
            ("da_known", 102),
            ("da_override", 103),
            ("da_found", 104),
            ("da_sig", 105),
            ("da_mismatch", 106),
            ("da_err", 107),
            ("da_match", 108),
            ("da_ok", 109),
            ("da_fresh", 110),
            ("da_loop", 111),
            ("da_end", 112),
            ("da_badsuper", 115),
        ],
        [
            ("da_start", "da_super", FALLTHROUGH),
            ("da_super", "da_known", BRANCH),
            ("da_super", "da_badsuper", BRANCH),
            ("da_known", "da_loop", FALLTHROUGH),
            ("da_badsuper", "da_loop", FALLTHROUGH),
            ("da_loop", "da_override", BRANCH),
            ("da_loop", "da_end", BRANCH),
            ("da_override", "da_found", BRANCH),
            ("da_override", "da_fresh", BRANCH),
            ("da_found", "da_sig", FALLTHROUGH),
            ("da_sig", "da_mismatch", BRANCH),
            ("da_sig", "da_match", BRANCH),
            ("da_mismatch", "da_err", FALLTHROUGH),
            ("da_err", "da_loop", FALLTHROUGH),
            ("da_match", "da_ok", FALLTHROUGH),
            ("da_ok", "da_loop", FALLTHROUGH),
            ("da_fresh", "da_loop", FALLTHROUGH),
        ],
    )
    proc(
        "check",
        "minilang.TypeChecker",
        "check",
        "tc_start",
        [
            ("tc_start", 200),
            ("tc_stmt", 201),
            ("tc_dispatch", 202),
            ("tc_var", 203),
            ("tc_assign", 204),
            ("tc_ret", 209),
            ("tc_exprstmt", 210),
            ("tc_pass", 211),
            ("tc_expr", 212),
            ("tc_ok", 213),
            ("tc_end", 214),
        ],
        [
            ("tc_start", "tc_stmt", FALLTHROUGH),
            ("tc_stmt", "tc_dispatch", BRANCH),
            ("tc_stmt", "tc_end", BRANCH),
            ("tc_dispatch", "tc_var", BRANCH),
            ("tc_dispatch", "tc_assign", BRANCH),
            ("tc_dispatch", "tc_ret", BRANCH),
            ("tc_dispatch", "tc_exprstmt", BRANCH),
            ("tc_dispatch", "tc_pass", BRANCH),
            ("tc_var", "tc_expr", FALLTHROUGH),
            ("tc_assign", "tc_expr", FALLTHROUGH),
            ("tc_ret", "tc_expr", FALLTHROUGH),
            ("tc_exprstmt", "tc_expr", FALLTHROUGH),
            ("tc_pass", "tc_ok", FALLTHROUGH),
            ("tc_expr", "tc_ok", FALLTHROUGH),
            ("tc_ok", "tc_stmt", FALLTHROUGH),
        ],
    )
    ap_blocks = [("ap_entry", 205), ("ap_eq", 206), ("b207", 207), ("b208", 208)]
    ap_blocks += [(s, 220 + i) for i, s in enumerate(_SAME_CHAIN, start=1)]
    ap_blocks += [("p_lists", 231)]
    ap_blocks += [(s, 231 + i) for i, s in enumerate(_LUB_CHAIN, start=1)]
    ap_blocks += [("err_plus", 269), ("join_ret", 270)]
    ap_edges = [
        ("ap_entry", "ap_eq", FALLTHROUGH),
        ("ap_eq", "b207", BRANCH),
        ("ap_eq", "b208", BRANCH),
        ("b207", _SAME_CHAIN[0], FALLTHROUGH),
        (_SAME_CHAIN[-1], "join_ret", FALLTHROUGH),
        ("b208", "p_lists", FALLTHROUGH),
        ("p_lists", _LUB_CHAIN[0], BRANCH),
        ("p_lists", "err_plus", BRANCH),
        (_LUB_CHAIN[-1], "join_ret", FALLTHROUGH),
        ("err_plus", "join_ret", FALLTHROUGH),
    ]
    ap_edges += [(a, b, FALLTHROUGH) for a, b in zip(_SAME_CHAIN, _SAME_CHAIN[1:])]
    ap_edges += [(a, b, FALLTHROUGH) for a, b in zip(_LUB_CHAIN, _LUB_CHAIN[1:])]
    proc("analyzePlus", "minilang.TypeChecker", "analyzePlus", "ap_entry", ap_blocks, ap_edges)

    calls = (
        ("r_lex", "tokenize"),
        ("r_parse", "parseProgram"),
        ("r_decl", "analyzeClass"),
        ("r_check", "check"),
        ("tc_expr", "analyzePlus"),
        ("t_name", "charutil"),
    )
    return CfgDescription(
        procedures=procs, calls=calls, exclusions=("util.",), entry="run"
    )


# lexing


class LexError(Exception):
    def __init__(self, offset, message):
        self.offset = offset
        self.message = message


class ParseError(Exception):
    def __init__(self, offset, message):
        self.offset = offset
        self.message = message


@dataclass(frozen=True)
class Token:
    kind: str  # name num str punct newline indent dedent eof
    text: str
    offset: int


_PUNCT_SINGLE = "()[]:,=+"
_ASCII_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
_ASCII_DIGITS = "0123456789"


def _is_name_start(ch: str) -> bool:
    return ch in _ASCII_LETTERS or ch == "_"


def _is_name_char(ch: str) -> bool:
    return ch in _ASCII_LETTERS or ch in _ASCII_DIGITS or ch == "_"


def _tokenize(text: str, cov: EdgeSet) -> list[Token]:
    toks: list[Token] = []
    indents = [0]
    pos = 0
    for raw in text.split("\n"):
        line_start = pos
        pos += len(raw) + 1
        stripped = raw.lstrip(" ")
        if not stripped or stripped.startswith("#"):
            continue
        cov.walk("lx_line", "lx_indent")
        width = len(raw) - len(stripped)
        if width > indents[-1]:
            indents.append(width)
            toks.append(Token("indent", "", line_start))
            arm = "lx_push"
        elif width < indents[-1]:
            while indents and indents[-1] > width:
                indents.pop()
                toks.append(Token("dedent", "", line_start))
            if not indents or indents[-1] != width:
                cov.walk("lx_indent", "rej_dedent")
                raise LexError(line_start + width, "inconsistent dedent")
            arm = "lx_pop"
        else:
            arm = "lx_same"
        cov.walk("lx_indent", arm)
        cov.walk(arm, "lx_scan")
        i = width
        while i < len(raw):
            ch = raw[i]
            col = line_start + i
            if ch == " ":
                i += 1
                continue
            if ch == "#":
                break
            if _is_name_start(ch):
                cov.walk("lx_scan", "t_name")
                j = i
                while j < len(raw) and _is_name_char(raw[j]):
                    j += 1
                toks.append(Token("name", raw[i:j], col))
                i = j
                cov.walk("t_name", "lx_scan")
            elif ch in _ASCII_DIGITS:
                cov.walk("lx_scan", "t_num")
                j = i
                while j < len(raw) and raw[j] in _ASCII_DIGITS:
                    j += 1
                toks.append(Token("num", raw[i:j], col))
                i = j
                cov.walk("t_num", "lx_scan")
            elif ch == '"':
                cov.walk("lx_scan", "t_str")
                j = raw.find('"', i + 1)
                if j < 0:
                    cov.walk("t_str", "rej_str")
                    raise LexError(col, "unterminated string")
                toks.append(Token("str", raw[i + 1 : j], col))
                i = j + 1
                cov.walk("t_str", "lx_scan")
            elif raw.startswith("->", i):
                cov.walk("lx_scan", "t_punct")
                toks.append(Token("punct", "->", col))
                i += 2
                cov.walk("t_punct", "lx_scan")
            elif ch in _PUNCT_SINGLE:
                cov.walk("lx_scan", "t_punct")
                toks.append(Token("punct", ch, col))
                i += 1
                cov.walk("t_punct", "lx_scan")
            else:
                cov.walk("lx_scan", "rej_char")
                raise LexError(col, f"unexpected character {ch!r}")
        cov.walk("lx_scan", "lx_line")
        toks.append(Token("newline", "", pos - 1))
    cov.walk("lx_line", "lx_eof")
    while len(indents) > 1:
        indents.pop()
        toks.append(Token("dedent", "", len(text)))
    toks.append(Token("eof", "", len(text)))
    return toks


# parsing


@dataclass
class Program:
    body: list


@dataclass
class ClassDef:
    name: str
    parent: str
    members: list
    offset: int


@dataclass
class FuncDef:
    name: str
    params: list
    ret: str
    body: list
    offset: int


@dataclass
class VarDecl:
    name: str
    typ: str
    expr: object
    offset: int


@dataclass
class Assign:
    name: str
    expr: object
    offset: int


@dataclass
class Return:
    expr: object
    offset: int


@dataclass
class Pass:
    offset: int


@dataclass
class ExprStmt:
    expr: object
    offset: int


@dataclass
class IntLit:
    value: int


@dataclass
class StrLit:
    value: str


@dataclass
class BoolLit:
    value: bool


@dataclass
class NoneLit:
    pass


@dataclass
class NameRef:
    name: str


@dataclass
class ListLit:
    items: list


@dataclass
class Plus:
    left: object
    right: object


_MAX_TYPE_NEST = 16


class _Parser:
    def __init__(self, toks, cov):
        self.toks = toks
        self.i = 0
        self.cov = cov

    def peek(self) -> Token:
        return self.toks[min(self.i, len(self.toks) - 1)]

    def advance(self) -> Token:
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, kind, text=None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            raise ParseError(tok.offset, f"expected {want}")
        return self.advance()

    def parse_program(self) -> Program:
        self.cov.walk("ps_start", "ps_loop")
        body = []
        while self.peek().kind != "eof":
            self.cov.walk("ps_loop", "ps_dispatch")
            body.append(self.declaration(top=True))
        self.cov.walk("ps_loop", "ps_done")
        return Program(body)

    def declaration(self, top):
        tok = self.peek()
        if tok.kind == "name" and tok.text == "class" and top:
            return self.guarded("p_class", self.class_def)
        if tok.kind == "name" and tok.text == "def":
            return self.guarded("p_def", self.func_def)
        if tok.kind == "name" and tok.text == "return":
            return self.guarded("p_return", self.return_stmt)
        if tok.kind == "name" and tok.text == "pass":
            return self.guarded("p_pass", self.pass_stmt)
        if tok.kind == "name" and self.lookahead_punct(":"):
            return self.guarded("p_var", self.var_decl)
        if tok.kind == "name" and self.lookahead_punct("="):
            return self.guarded("p_assign", self.assign_stmt)
        return self.guarded("p_expr", self.expr_stmt)

    def guarded(self, block, production):
        self.cov.walk("ps_dispatch", block)
        try:
            node = production()
        except ParseError:
            self.cov.walk(block, "rej_tok")
            raise
        self.cov.walk(block, "ps_loop")
        return node

    def lookahead_punct(self, text) -> bool:
        nxt = self.toks[min(self.i + 1, len(self.toks) - 1)]
        return nxt.kind == "punct" and nxt.text == text

    def class_def(self):
        start = self.expect("name", "class")
        name = self.expect("name")
        self.expect("punct", "(")
        parent = self.expect("name")
        self.expect("punct", ")")
        self.expect("punct", ":")
        self.expect("newline")
        self.expect("indent")
        members = []
        while self.peek().kind != "dedent":
            self.cov.walk("ps_loop", "ps_dispatch")
            members.append(self.declaration(top=False))
        self.expect("dedent")
        return ClassDef(name.text, parent.text, members, start.offset)

    def func_def(self):
        start = self.expect("name", "def")
        name = self.expect("name")
        self.expect("punct", "(")
        params = []
        if not (self.peek().kind == "punct" and self.peek().text == ")"):
            while True:
                pname = self.expect("name")
                self.expect("punct", ":")
                params.append((pname.text, self.type_expr(0)))
                if self.peek().kind == "punct" and self.peek().text == ",":
                    self.advance()
                    continue
                break
        self.expect("punct", ")")
        ret = "<None>"
        if self.peek().kind == "punct" and self.peek().text == "->":
            self.advance()
            ret = self.type_expr(0)
        self.expect("punct", ":")
        self.expect("newline")
        self.expect("indent")
        body = []
        while self.peek().kind != "dedent":
            self.cov.walk("ps_loop", "ps_dispatch")
            body.append(self.declaration(top=False))
        self.expect("dedent")
        return FuncDef(name.text, params, ret, body, start.offset)

    def type_expr(self, depth) -> str:
        if depth > _MAX_TYPE_NEST:
            raise ParseError(self.peek().offset, "type too deeply nested")
        tok = self.peek()
        if tok.kind == "punct" and tok.text == "[":
            self.advance()
            inner = self.type_expr(depth + 1)
            self.expect("punct", "]")
            return f"[{inner}]"
        return self.expect("name").text

    def var_decl(self):
        name = self.expect("name")
        self.expect("punct", ":")
        typ = self.type_expr(0)
        self.expect("punct", "=")
        expr = self.expression(0)
        self.expect("newline")
        return VarDecl(name.text, typ, expr, name.offset)

    def assign_stmt(self):
        name = self.expect("name")
        self.expect("punct", "=")
        expr = self.expression(0)
        self.expect("newline")
        return Assign(name.text, expr, name.offset)

    def return_stmt(self):
        start = self.expect("name", "return")
        expr = None
        if self.peek().kind != "newline":
            expr = self.expression(0)
        self.expect("newline")
        return Return(expr, start.offset)

    def pass_stmt(self):
        start = self.expect("name", "pass")
        self.expect("newline")
        return Pass(start.offset)

    def expr_stmt(self):
        start = self.peek()
        expr = self.expression(0)
        self.expect("newline")
        return ExprStmt(expr, start.offset)

    def expression(self, depth):
        node = self.atom(depth)
        while self.peek().kind == "punct" and self.peek().text == "+":
            self.advance()
            node = Plus(node, self.atom(depth))
        return node

    def atom(self, depth):
        if depth > _MAX_TYPE_NEST:
            raise ParseError(self.peek().offset, "expression too deeply nested")
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return IntLit(int(tok.text))
        if tok.kind == "str":
            self.advance()
            return StrLit(tok.text)
        if tok.kind == "name" and tok.text in ("True", "False"):
            self.advance()
            return BoolLit(tok.text == "True")
        if tok.kind == "name" and tok.text == "None":
            self.advance()
            return NoneLit()
        if tok.kind == "name":
            self.advance()
            return NameRef(tok.text)
        if tok.kind == "punct" and tok.text == "[":
            self.advance()
            items = []
            if not (self.peek().kind == "punct" and self.peek().text == "]"):
                while True:
                    items.append(self.expression(depth + 1))
                    if self.peek().kind == "punct" and self.peek().text == ",":
                        self.advance()
                        continue
                    break
            self.expect("punct", "]")
            return ListLit(items)
        raise ParseError(tok.offset, "expected an expression")


# semantic analysis

_PRIMITIVES = ("int", "bool", "str")


@dataclass
class _Analysis:
    classes: dict
    cov: EdgeSet
    trace: object
    errors: list = field(default_factory=list)


def _superclass_chain(analysis, name):
    """Ancestor class names, nearest first, cycle-safe."""
    chain = []
    seen = set()
    cur = analysis.classes.get(name)
    while cur is not None and cur.parent not in seen:
        seen.add(cur.name)
        if cur.parent == "object" or cur.parent not in analysis.classes:
            break
        chain.append(cur.parent)
        cur = analysis.classes[cur.parent]
    return chain


def _find_method(analysis, class_name, method_name):
    for ancestor in _superclass_chain(analysis, class_name):
        for mem in analysis.classes[ancestor].members:
            if isinstance(mem, FuncDef) and mem.name == method_name:
                return mem
    return None


def _analyze_class(analysis, cls):
    cov = analysis.cov
    cov.walk("da_start", "da_super")
    if cls.parent == "object" or cls.parent in analysis.classes:
        cov.walk("da_super", "da_known")
        cov.walk("da_known", "da_loop")
    else:
        analysis.errors.append(f"Unknown superclass: {cls.parent}")
        cov.walk("da_super", "da_badsuper")
        cov.walk("da_badsuper", "da_loop")
    for mem in cls.members:
        if not isinstance(mem, FuncDef):
            continue
        cov.walk("da_loop", "da_override")
        parent_method = _find_method(analysis, cls.name, mem.name)
        if parent_method is not None:
            record_branch(analysis.trace, "ml.override", 104)
            cov.walk("da_override", "da_found")
            cov.walk("da_found", "da_sig")
            same_params = [t for _, t in parent_method.params] == [t for _, t in mem.params]
            if same_params and parent_method.ret == mem.ret:
                record_branch(analysis.trace, "ml.sig_mismatch", 108)
                cov.chain(("da_sig", "da_match", "da_ok", "da_loop"))
            else:
                record_branch(analysis.trace, "ml.sig_mismatch", 106)
                analysis.errors.append(
                    f"Method overridden with different type signature: {mem.name}"
                )
                cov.chain(("da_sig", "da_mismatch", "da_err", "da_loop"))
        else:
            record_branch(analysis.trace, "ml.override", 110)
            cov.chain(("da_override", "da_fresh", "da_loop"))
    cov.walk("da_loop", "da_end")


class _TypeChecker:
    def __init__(self, analysis):
        self.a = analysis
        self.cov = analysis.cov
        self.errors = analysis.errors

    def valid_type(self, typ) -> bool:
        while typ.startswith("[") and typ.endswith("]"):
            typ = typ[1:-1]
        return typ in _PRIMITIVES or typ == "object" or typ in self.a.classes

    def assignable(self, declared, actual) -> bool:
        if declared == actual or declared == "object":
            return True
        if actual == "<None>":
            return declared not in _PRIMITIVES
        if declared.startswith("[") and actual.startswith("["):
            return declared == "[object]"
        if actual in self.a.classes:
            return declared in _superclass_chain(self.a, actual)
        return False

    def lub(self, a, b) -> str:
        if a == b:
            return a
        if a in self.a.classes and b in self.a.classes:
            chain_a = [a] + _superclass_chain(self.a, a) + ["object"]
            chain_b = set([b] + _superclass_chain(self.a, b) + ["object"])
            for candidate in chain_a:
                if candidate in chain_b:
                    return candidate
        return "object"

    def check_program(self, prog):
        self.cov.walk("tc_start", "tc_stmt")
        scope = {}
        for st in prog.body:
            if isinstance(st, ClassDef):
                self.check_class(st)
            elif isinstance(st, FuncDef):
                self.check_method(st)
            else:
                self.leaf(st, scope, None, in_func=False)
        self.cov.walk("tc_stmt", "tc_end")

    def check_class(self, cls):
        attrs = {}
        for mem in cls.members:
            if isinstance(mem, FuncDef):
                self.check_method(mem)
            elif not isinstance(mem, Pass):
                self.leaf(mem, attrs, None, in_func=False)

    def check_method(self, fn):
        scope = {}
        for pname, ptyp in fn.params:
            if not self.valid_type(ptyp):
                self.errors.append(f"Unknown type: {ptyp}")
            scope[pname] = ptyp
        if fn.ret != "<None>" and not self.valid_type(fn.ret):
            self.errors.append(f"Unknown type: {fn.ret}")
        for st in fn.body:
            self.leaf(st, scope, fn.ret, in_func=True)

    def leaf(self, st, scope, ret, in_func):
        cov = self.cov
        cov.walk("tc_stmt", "tc_dispatch")
        if isinstance(st, VarDecl):
            cov.walk("tc_dispatch", "tc_var")
            cov.walk("tc_var", "tc_expr")
            actual = self.expr_type(st.expr, scope)
            if not self.valid_type(st.typ):
                self.errors.append(f"Unknown type: {st.typ}")
            elif not self.assignable(st.typ, actual):
                self.errors.append(f"Expected {st.typ} but got {actual}")
            scope[st.name] = st.typ
            cov.walk("tc_expr", "tc_ok")
        elif isinstance(st, Assign):
            cov.walk("tc_dispatch", "tc_assign")
            cov.walk("tc_assign", "tc_expr")
            actual = self.expr_type(st.expr, scope)
            declared = scope.get(st.name)
            if declared is None:
                self.errors.append(f"Undefined variable: {st.name}")
            elif not self.assignable(declared, actual):
                self.errors.append(f"Expected {declared} but got {actual}")
            cov.walk("tc_expr", "tc_ok")
        elif isinstance(st, Return):
            cov.walk("tc_dispatch", "tc_ret")
            cov.walk("tc_ret", "tc_expr")
            actual = "<None>" if st.expr is None else self.expr_type(st.expr, scope)
            if not in_func:
                self.errors.append("Return outside of a function")
            elif not self.assignable(ret, actual):
                self.errors.append(f"Expected {ret} but got {actual}")
            cov.walk("tc_expr", "tc_ok")
        elif isinstance(st, Pass):
            cov.walk("tc_dispatch", "tc_pass")
            cov.walk("tc_pass", "tc_ok")
        else:
            cov.walk("tc_dispatch", "tc_exprstmt")
            cov.walk("tc_exprstmt", "tc_expr")
            self.expr_type(st.expr, scope)
            cov.walk("tc_expr", "tc_ok")
        cov.walk("tc_ok", "tc_stmt")

    def expr_type(self, e, scope) -> str:
        if isinstance(e, IntLit):
            return "int"
        if isinstance(e, StrLit):
            return "str"
        if isinstance(e, BoolLit):
            return "bool"
        if isinstance(e, NoneLit):
            return "<None>"
        if isinstance(e, NameRef):
            typ = scope.get(e.name)
            if typ is None:
                self.errors.append(f"Undefined variable: {e.name}")
                return "object"
            return typ
        if isinstance(e, ListLit):
            if not e.items:
                return "[object]"
            elem = self.expr_type(e.items[0], scope)
            for item in e.items[1:]:
                elem = self.lub(elem, self.expr_type(item, scope))
            return f"[{elem}]"
        return self.analyze_plus(self.expr_type(e.left, scope), self.expr_type(e.right, scope))

    def analyze_plus(self, lt, rt) -> str:
        cov = self.cov
        cov.walk("tc_expr", "ap_entry")
        cov.walk("ap_entry", "ap_eq")
        if lt == rt:
            record_branch(self.a.trace, "ml.plus", 207)
            cov.walk("ap_eq", "b207")
            cov.chain(("b207",) + _SAME_CHAIN + ("join_ret",))
            if lt in ("int", "str") or lt.startswith("["):
                result = lt
            else:
                self.errors.append(f"Unsupported operand types for +: {lt} and {rt}")
                result = "object"
        else:
            record_branch(self.a.trace, "ml.plus", 208)
            cov.walk("ap_eq", "b208")
            cov.walk("b208", "p_lists")
            if lt.startswith("[") and rt.startswith("["):
                cov.walk("p_lists", _LUB_CHAIN[0])
                cov.chain(_LUB_CHAIN + ("join_ret",))
                result = f"[{self.lub(lt[1:-1], rt[1:-1])}]"
            else:
                cov.chain(("p_lists", "err_plus", "join_ret"))
                self.errors.append(f"Unsupported operand types for +: {lt} and {rt}")
                result = "object"
        cov.walk("join_ret", "tc_ok")
        return result


def run(payload: bytes, trace=None) -> RunOutcome:
    text = payload.decode("latin-1")
    cov = EdgeSet()
    cov.walk("r_start", "r_lex")
    cov.walk("r_lex", "lx_start")
    try:
        toks = _tokenize(text, cov)
    except LexError as stop:
        cov.walk("r_lex", "r_fail")
        return RunOutcome("rejected", f"lex error at offset {stop.offset}: {stop.message}", cov.hits)
    cov.walk("lx_eof", "r_parse")
    cov.walk("r_lex", "r_parse")
    cov.walk("r_parse", "ps_start")
    try:
        prog = _Parser(toks, cov).parse_program()
    except ParseError as stop:
        cov.walk("r_parse", "r_fail")
        return RunOutcome("rejected", f"parse error at offset {stop.offset}: {stop.message}", cov.hits)
    cov.walk("ps_done", "r_decl")
    cov.walk("r_parse", "r_decl")
    classes = {}
    for st in prog.body:
        if isinstance(st, ClassDef) and st.name not in classes:
            classes[st.name] = st
    analysis = _Analysis(classes, cov, trace)
    for cls in classes.values():
        cov.walk("r_decl", "da_start")
        _analyze_class(analysis, cls)
    if analysis.errors:
        if classes:
            cov.walk("da_end", "r_fail")
        cov.walk("r_decl", "r_fail")
        return RunOutcome("rejected", "declaration error: " + analysis.errors[0], cov.hits)
    if classes:
        cov.walk("da_end", "r_check")
    cov.walk("r_decl", "r_check")
    cov.walk("r_check", "tc_start")
    checker = _TypeChecker(analysis)
    checker.check_program(prog)
    if analysis.errors:
        cov.walk("tc_end", "r_fail")
        cov.walk("r_check", "r_fail")
        return RunOutcome("rejected", "type error: " + analysis.errors[0], cov.hits)
    cov.walk("tc_end", "r_done")
    cov.walk("r_check", "r_done")
    return RunOutcome("ok", "checked", cov.hits)


def minilang_check(source: str | bytes, trace=None) -> RunOutcome:
    """Lex, parse, and check one program, reporting which phase rejected it."""
    data = source.encode("utf-8") if isinstance(source, str) else source
    return run(data, trace)


# program synthesis

_WORDS = ("ab", "cd", "xy", "zq", "hi")
_METHOD_NAMES = ("m", "f", "g", "h")


def _pick_type(config, stream) -> str:
    pool = list(_PRIMITIVES)
    if config.toggles["enable_lists"]:
        pool += ["[int]", "[str]"]
    return pool[stream.next_int(0, len(pool) - 1)]


def _literal_of(typ, stream) -> str:
    if typ == "int":
        return str(stream.next_int(0, 99))
    if typ == "str":
        return '"%s"' % _WORDS[stream.next_int(0, len(_WORDS) - 1)]
    if typ == "bool":
        return "True" if stream.next_bool() else "False"
    if typ == "[int]":
        return "[%d, %d]" % (stream.next_int(0, 9), stream.next_int(0, 9))
    if typ == "[str]":
        return '["%s"]' % _WORDS[stream.next_int(0, len(_WORDS) - 1)]
    return "None"


def _emit_method(lines, config, stream, name, params, ret):
    sig = ", ".join(f"{p}: {t}" for p, t in params)
    lines.append(f"    def {name}({sig}) -> {ret}:")
    if config.toggles["typed_returns"]:
        lines.append(f"        return {_literal_of(ret, stream)}")
    else:
        lines.append(f"        return {_literal_of(_pick_type(config, stream), stream)}")


def _gen_classes(lines, config, stream):
    t = config.toggles
    n_methods = 1 + stream.next_int(0, max(0, config.bounds["max_methods"] - 1))
    methods = []
    for k in range(n_methods):
        n_params = stream.next_int(0, 2)
        params = [(chr(ord("a") + j), _pick_type(config, stream)) for j in range(n_params)]
        methods.append((_METHOD_NAMES[k % len(_METHOD_NAMES)], params, _pick_type(config, stream)))
    lines.append("class A(object):")
    if stream.next_bool():
        lines.append("    y: int = 0")
    for name, params, ret in methods:
        _emit_method(lines, config, stream, name, params, ret)
    if t["enable_method_override"]:
        name, params, ret = methods[0]
        params = list(params)
        if t["mismatch_signature"] and stream.next_bool():
            # flip one type in the signature so the override no longer matches
            swap = {"int": "str", "str": "int", "bool": "int", "[int]": "[str]", "[str]": "[int]"}
            if params and stream.next_bool():
                pname, ptyp = params[0]
                params[0] = (pname, swap.get(ptyp, "int"))
            else:
                ret = swap.get(ret, "int")
        lines.append("class B(A):")
        _emit_method(lines, config, stream, name, params, ret)
    extra = stream.next_int(0, max(0, config.bounds["max_classes"] - 2))
    for k in range(extra):
        lines.append(f"class C{k}(object):")
        lines.append("    pass")


def _gen_stmt(index, config, stream) -> str:
    w = config.weights
    weights = [
        w["w_plus_int"],
        w["w_plus_str"],
        w["w_plus_list"],
        w["w_plus_list_mixed"],
        w["w_stmt_simple"],
        w["w_stmt_bad"],
    ]
    if not any(wt > 0 for wt in weights):
        kind = 4  # nothing enabled, fall back to a plain declaration
    else:
        kind = stream.choose_weighted(weights)
    x = f"x{index}"
    if kind == 0:
        return f"{x}: int = {stream.next_int(0, 99)} + {stream.next_int(0, 99)}"
    if kind == 1:
        a = _WORDS[stream.next_int(0, len(_WORDS) - 1)]
        b = _WORDS[stream.next_int(0, len(_WORDS) - 1)]
        return f'{x}: str = "{a}" + "{b}"'
    if kind == 2:
        return "%s: [int] = [%d] + [%d, %d]" % (
            x,
            stream.next_int(0, 9),
            stream.next_int(0, 9),
            stream.next_int(0, 9),
        )
    if kind == 3:
        word = _WORDS[stream.next_int(0, len(_WORDS) - 1)]
        return '%s: [object] = [%d] + ["%s"]' % (x, stream.next_int(0, 9), word)
    if kind == 4:
        typ = _pick_type(config, stream)
        return f"{x}: {typ} = {_literal_of(typ, stream)}"
    word = _WORDS[stream.next_int(0, len(_WORDS) - 1)]
    return f'{x}: int = "{word}"'


def decode(config, stream) -> bytes:
    lines = []
    if config.toggles["enable_inheritance"]:
        _gen_classes(lines, config, stream)
    n_stmts = 1 + stream.next_int(0, max(0, config.bounds["max_stmts"] - 1))
    for i in range(n_stmts):
        lines.append(_gen_stmt(i, config, stream))
    return ("\n".join(lines) + "\n").encode("ascii")


BINDING = TargetBinding(
    target_id="minilang",
    entry_point="run",
    knobs=KNOBS,
    predicate_metas=PREDICATE_METAS,
    decode=decode,
    run_fn=run,
    cfg_file="minilang_cfg.json",
    refine_hints=REFINE_HINTS,
)

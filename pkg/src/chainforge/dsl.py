"""Textual frontend: parse `.rsys` model files and `.props` property files
into semantic objects, and pretty-print them back.

Grammar (frozen; see README for the full EBNF):

    model NAME { item* }
    item  := "state" IDENT ":" domain ("init" literal)? ";"
           | "input" IDENT ("," IDENT)* ":" domain ";"
           | "assume" expr ";" | "invariant" expr ";" | "init" expr ";"
           | "trans" "{" (IDENT "'" "=" expr ";")* "}"
    domain := "bool" | INT ".." INT | "{" IDENT ("," IDENT)* "}"
    property := "property" NAME "{" "assume" expr ";" "assert" expr ";" "}"

Expressions use C-like precedence over `? : => || && == != < <= + - !`,
with `next(v)` referencing the post-state (assertions only).  Comments run
from `//` to end of line.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .model import (BOOL, CMP_OPS, BoolDomain, BinOp, Const, Domain,
                    EnumDomain, Expr, IntRange, Ite, Model, Not,
                    Property, Ref, SortError, eval_expr, sort_of,
                    SPACE_INPUT, SPACE_NEXT, SPACE_STATE, TRUE)

KEYWORDS = {"model", "state", "input", "assume", "invariant", "init", "trans",
            "property", "assert", "next", "bool", "true", "false"}

PUNCT = ["==", "!=", "<=", "&&", "||", "=>", "..",
         "{", "}", "(", ")", ":", ";", ",", "?", "'", "=", "<", "!", "+", "-"]


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    col: int
    end_line: int
    end_col: int

    def __post_init__(self):
        if (self.end_line, self.end_col) < (self.line, self.col):
            raise ValueError("span ends before it starts")

    def __str__(self):
        return f"{self.file}:{self.line}:{self.col}"


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    span: SourceSpan

    def __str__(self):
        return f"{self.span}: {self.severity}: {self.message}"


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan):
        super().__init__(message)
        self.diagnostic = Diagnostic("error", message, span)


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "int", "punct", "eof"
    text: str
    span: SourceSpan


def tokenize(text: str, filename: str) -> list[Token]:
    toks: list[Token] = []
    line, col, i = 1, 1, 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start = SourceSpan(filename, line, col, line, col)
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("int", text[i:j],
                              SourceSpan(filename, line, col, line, col + (j - i) - 1)))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(Token("ident", text[i:j],
                              SourceSpan(filename, line, col, line, col + (j - i) - 1)))
            col += j - i
            i = j
            continue
        for p in PUNCT:
            if text.startswith(p, i):
                toks.append(Token("punct", p,
                                  SourceSpan(filename, line, col, line, col + len(p) - 1)))
                col += len(p)
                i += len(p)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", start)
    toks.append(Token("eof", "", SourceSpan(filename, line, col, line, col)))
    return toks


# ---------------------------------------------------------------------------
# Raw (unresolved) expression AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RName:
    name: str
    span: SourceSpan


@dataclass(frozen=True)
class RNext:
    name: str
    span: SourceSpan


@dataclass(frozen=True)
class RInt:
    value: int
    span: SourceSpan


@dataclass(frozen=True)
class RBool:
    value: bool
    span: SourceSpan


@dataclass(frozen=True)
class RNot:
    a: "RawExpr"
    span: SourceSpan


@dataclass(frozen=True)
class RBin:
    op: str
    a: "RawExpr"
    b: "RawExpr"
    span: SourceSpan


@dataclass(frozen=True)
class RIte:
    cond: "RawExpr"
    then: "RawExpr"
    other: "RawExpr"
    span: SourceSpan


RawExpr = Union[RName, RNext, RInt, RBool, RNot, RBin, RIte]


class _Parser:
    def __init__(self, text: str, filename: str):
        self.toks = tokenize(text, filename)
        self.pos = 0

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.peek()
        if not self.at(kind, text):
            want = text if text is not None else kind
            raise ParseError(f"expected '{want}', found '{t.text or t.kind}'", t.span)
        return self.next()

    def ident(self, what: str) -> Token:
        t = self.peek()
        if t.kind != "ident" or t.text in KEYWORDS:
            raise ParseError(f"expected {what}, found '{t.text or t.kind}'", t.span)
        return self.next()

    # -- expressions (C-like precedence) ------------------------------------

    def expr(self) -> RawExpr:
        return self.ternary()

    def ternary(self) -> RawExpr:
        c = self.implies()
        if self.at("punct", "?"):
            self.next()
            t = self.expr()
            self.expect("punct", ":")
            e = self.ternary()
            return RIte(c, t, e, c.span)
        return c

    def implies(self) -> RawExpr:
        a = self.or_()
        if self.at("punct", "=>"):
            self.next()
            b = self.implies()
            return RBin("=>", a, b, a.span)
        return a

    def or_(self) -> RawExpr:
        a = self.and_()
        while self.at("punct", "||"):
            self.next()
            a = RBin("||", a, self.and_(), a.span)
        return a

    def and_(self) -> RawExpr:
        a = self.cmp()
        while self.at("punct", "&&"):
            self.next()
            a = RBin("&&", a, self.cmp(), a.span)
        return a

    def cmp(self) -> RawExpr:
        a = self.add()
        t = self.peek()
        if t.kind == "punct" and t.text in CMP_OPS:
            self.next()
            return RBin(t.text, a, self.add(), a.span)
        return a

    def add(self) -> RawExpr:
        a = self.unary()
        while self.peek().kind == "punct" and self.peek().text in ("+", "-"):
            op = self.next().text
            a = RBin(op, a, self.unary(), a.span)
        return a

    def unary(self) -> RawExpr:
        if self.at("punct", "!"):
            t = self.next()
            return RNot(self.unary(), t.span)
        return self.atom()

    def atom(self) -> RawExpr:
        t = self.peek()
        if self.at("punct", "("):
            self.next()
            e = self.expr()
            self.expect("punct", ")")
            return e
        if self.at("punct", "-"):
            self.next()
            num = self.expect("int")
            return RInt(-int(num.text), t.span)
        if t.kind == "int":
            self.next()
            return RInt(int(t.text), t.span)
        if t.kind == "ident":
            if t.text == "true":
                self.next()
                return RBool(True, t.span)
            if t.text == "false":
                self.next()
                return RBool(False, t.span)
            if t.text == "next":
                self.next()
                self.expect("punct", "(")
                name = self.ident("a state variable name")
                self.expect("punct", ")")
                return RNext(name.text, t.span)
            if t.text in KEYWORDS:
                raise ParseError(f"unexpected keyword '{t.text}'", t.span)
            self.next()
            return RName(t.text, t.span)
        raise ParseError(f"expected an expression, found '{t.text or t.kind}'", t.span)

    # -- domains -------------------------------------------------------------

    def domain(self, enum_name: str) -> Domain:
        t = self.peek()
        if self.at("ident", "bool"):
            self.next()
            return BOOL
        if self.at("punct", "{"):
            self.next()
            consts = [self.ident("an enum constant").text]
            while self.at("punct", ","):
                self.next()
                consts.append(self.ident("an enum constant").text)
            self.expect("punct", "}")
            if len(set(consts)) != len(consts):
                raise ParseError("duplicate constants in enum domain", t.span)
            return EnumDomain(enum_name, tuple(consts))
        neg = False
        if self.at("punct", "-"):
            self.next()
            neg = True
        lo_t = self.expect("int")
        lo = -int(lo_t.text) if neg else int(lo_t.text)
        self.expect("punct", "..")
        neg = False
        if self.at("punct", "-"):
            self.next()
            neg = True
        hi_t = self.expect("int")
        hi = -int(hi_t.text) if neg else int(hi_t.text)
        if lo > hi:
            raise ParseError(f"empty domain {lo}..{hi}", t.span)
        return IntRange(lo, hi)

    def literal(self, dom: Domain, what: str) -> object:
        t = self.peek()
        if isinstance(dom, BoolDomain):
            if self.at("ident", "true") or self.at("ident", "false"):
                return self.next().text == "true"
            raise ParseError(f"expected true/false for {what}", t.span)
        if isinstance(dom, IntRange):
            neg = False
            if self.at("punct", "-"):
                self.next()
                neg = True
            v = int(self.expect("int").text)
            v = -v if neg else v
            if not dom.contains(v):
                raise ParseError(f"initial value {v} outside domain {dom}", t.span)
            return v
        name = self.ident("an enum constant")
        if name.text not in dom.constants:
            raise ParseError(f"'{name.text}' is not a constant of {dom}", name.span)
        return name.text


# ---------------------------------------------------------------------------
# Resolution: raw AST -> typed Expr against a model's declarations
# ---------------------------------------------------------------------------

class _Symbols:
    def __init__(self):
        self.state: dict[str, Domain] = {}
        self.input: dict[str, Domain] = {}
        self.consts: dict[str, EnumDomain] = {}

    def declare(self, name: str, dom: Domain, space: str, span: SourceSpan):
        if name in self.state or name in self.input or name in self.consts:
            raise ParseError(f"duplicate name '{name}'", span)
        (self.state if space == SPACE_STATE else self.input)[name] = dom
        if isinstance(dom, EnumDomain):
            for c in dom.constants:
                if c in self.consts or c in self.state or c in self.input:
                    raise ParseError(f"enum constant '{c}' clashes with an existing name", span)
                self.consts[c] = dom


def _resolve(raw: RawExpr, sym: _Symbols, allowed: frozenset[str]) -> Expr:
    if isinstance(raw, RBool):
        return Const(raw.value, BOOL)
    if isinstance(raw, RInt):
        return Const(raw.value, IntRange(raw.value, raw.value))
    if isinstance(raw, RName):
        if raw.name in sym.consts:
            return Const(raw.name, sym.consts[raw.name])
        if raw.name in sym.state:
            if SPACE_STATE not in allowed:
                raise ParseError(f"state variable '{raw.name}' is not allowed here", raw.span)
            return Ref(raw.name, SPACE_STATE, sym.state[raw.name])
        if raw.name in sym.input:
            if SPACE_INPUT not in allowed:
                raise ParseError(f"input variable '{raw.name}' is not allowed here", raw.span)
            return Ref(raw.name, SPACE_INPUT, sym.input[raw.name])
        raise ParseError(f"undeclared name '{raw.name}'", raw.span)
    if isinstance(raw, RNext):
        if SPACE_NEXT not in allowed:
            raise ParseError("next() is not allowed here", raw.span)
        if raw.name not in sym.state:
            raise ParseError(f"next() needs a state variable, got '{raw.name}'", raw.span)
        return Ref(raw.name, SPACE_NEXT, sym.state[raw.name])
    if isinstance(raw, RNot):
        return _typed(Not(_resolve(raw.a, sym, allowed)), raw.span)
    if isinstance(raw, RBin):
        return _typed(BinOp(raw.op, _resolve(raw.a, sym, allowed),
                            _resolve(raw.b, sym, allowed)), raw.span)
    if isinstance(raw, RIte):
        return _typed(Ite(_resolve(raw.cond, sym, allowed),
                          _resolve(raw.then, sym, allowed),
                          _resolve(raw.other, sym, allowed)), raw.span)
    raise AssertionError(raw)


def _typed(e: Expr, span: SourceSpan) -> Expr:
    try:
        sort_of(e)
    except SortError as ex:
        raise ParseError(str(ex), span) from ex
    return e


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------

#: Abort satisfiability sanity checks past this many candidate states.
ENUM_CHECK_LIMIT = 1 << 16


def parse_model(text: str, filename: str = "<model>"):
    """Parse one model file.  Returns (Model | None, diagnostics)."""
    diags: list[Diagnostic] = []
    try:
        m = _parse_model(text, filename, diags)
    except ParseError as ex:
        diags.append(ex.diagnostic)
        return None, diags
    return m, diags


def _parse_model(text: str, filename: str, diags: list[Diagnostic]) -> Model:
    p = _Parser(text, filename)
    p.expect("ident", "model")
    name = p.ident("a model name").text
    p.expect("punct", "{")

    sym = _Symbols()
    state_vars: list[tuple[str, Domain]] = []
    inputs: list[tuple[str, Domain]] = []
    init_values: list[tuple[str, object]] = []
    raw_items: list[tuple[str, object, SourceSpan]] = []

    while not p.at("punct", "}"):
        t = p.peek()
        if p.at("ident", "state"):
            p.next()
            n = p.ident("a state variable name")
            p.expect("punct", ":")
            dom = p.domain(enum_name=n.text)
            sym.declare(n.text, dom, SPACE_STATE, n.span)
            state_vars.append((n.text, dom))
            if p.at("ident", "init"):
                p.next()
                init_values.append((n.text, p.literal(dom, f"init of '{n.text}'")))
            p.expect("punct", ";")
        elif p.at("ident", "input"):
            p.next()
            names = [p.ident("an input variable name")]
            while p.at("punct", ","):
                p.next()
                names.append(p.ident("an input variable name"))
            p.expect("punct", ":")
            dom = p.domain(enum_name=names[0].text)
            for n in names:
                sym.declare(n.text, dom, SPACE_INPUT, n.span)
                inputs.append((n.text, dom))
            p.expect("punct", ";")
        elif p.at("ident", "assume") or p.at("ident", "invariant") or p.at("ident", "init"):
            kind = p.next().text
            raw = p.expr()
            p.expect("punct", ";")
            raw_items.append((kind, raw, t.span))
        elif p.at("ident", "trans"):
            p.next()
            p.expect("punct", "{")
            while not p.at("punct", "}"):
                n = p.ident("a state variable name")
                p.expect("punct", "'")
                p.expect("punct", "=")
                raw = p.expr()
                p.expect("punct", ";")
                raw_items.append(("trans:" + n.text, raw, n.span))
            p.expect("punct", "}")
        else:
            raise ParseError(f"unexpected '{t.text or t.kind}' in model body", t.span)
    p.expect("punct", "}")
    p.expect("eof")

    assumption: Expr = TRUE
    invariant: Expr = TRUE
    init_pred: Expr = TRUE
    transition: list[tuple[str, Expr]] = []
    seen_trans: set[str] = set()

    def boolean(raw, allowed, span, what):
        e = _resolve(raw, sym, allowed)
        if sort_of(e) != BOOL:
            raise ParseError(f"'{what}' needs a boolean expression", span)
        return e

    for kind, raw, span in raw_items:
        if kind == "assume":
            assumption = boolean(raw, frozenset({SPACE_INPUT}), span, kind)
        elif kind == "invariant":
            invariant = boolean(raw, frozenset({SPACE_STATE}), span, kind)
        elif kind == "init":
            init_pred = boolean(raw, frozenset({SPACE_STATE}), span, kind)
        else:
            var = kind.split(":", 1)[1]
            if var not in sym.state:
                raise ParseError(f"'{var}' is not a state variable", span)
            if var in seen_trans:
                raise ParseError(f"duplicate update for '{var}'", span)
            seen_trans.add(var)
            e = _resolve(raw, sym, frozenset({SPACE_STATE, SPACE_INPUT}))
            target = sym.state[var]
            src = sort_of(e)
            if isinstance(target, IntRange):
                if not isinstance(src, IntRange):
                    raise ParseError(f"update of '{var}' is not an integer expression", span)
            elif src != target:
                raise ParseError(f"update of '{var}' has sort {src}, expected {target}", span)
            transition.append((var, e))

    m = Model(name=name,
              state_vars=tuple(state_vars),
              inputs=tuple(inputs),
              init_values=tuple(init_values),
              init_pred=init_pred,
              input_assumption=assumption,
              state_invariant=invariant,
              transition=tuple(transition))

    if m.state_space_size() <= ENUM_CHECK_LIMIT:
        if not any(eval_expr(m.init_pred, s) and eval_expr(m.state_invariant, s)
                   for s in m.all_states()
                   if all(s[n] == v for n, v in m.init_values)):
            raise ParseError("no state satisfies init together with the invariant",
                             SourceSpan(filename, 1, 1, 1, 1))
        if not m.legal_inputs():
            raise ParseError("the input assumption is unsatisfiable",
                             SourceSpan(filename, 1, 1, 1, 1))
    return m


def parse_properties(text: str, model: Model, filename: str = "<props>"):
    """Parse a property file against a model.  Returns (list, diagnostics);
    the list is only usable when no error diagnostics were produced."""
    diags: list[Diagnostic] = []
    props: list[Property] = []
    sym = _model_symbols(model)
    try:
        p = _Parser(text, filename)
        seen: set[str] = set()
        while not p.at("eof"):
            t = p.expect("ident", "property")
            name = p.ident("a property name")
            if name.text in seen:
                raise ParseError(f"duplicate property '{name.text}'", name.span)
            seen.add(name.text)
            p.expect("punct", "{")
            p.expect("ident", "assume")
            raw_phi = p.expr()
            p.expect("punct", ";")
            p.expect("ident", "assert")
            raw_psi = p.expr()
            p.expect("punct", ";")
            p.expect("punct", "}")
            phi = _resolve(raw_phi, sym, frozenset({SPACE_STATE, SPACE_INPUT}))
            psi = _resolve(raw_psi, sym, frozenset({SPACE_STATE, SPACE_INPUT, SPACE_NEXT}))
            for b, span in ((phi, t.span), (psi, t.span)):
                if sort_of(b) != BOOL:
                    raise ParseError("assume/assert need boolean expressions", span)
            props.append(Property(name.text, phi, psi))
            if not _trigger_satisfiable(model, phi):
                diags.append(Diagnostic(
                    "warning",
                    f"trigger of '{name.text}' is unsatisfiable under the state invariant",
                    name.span))
    except ParseError as ex:
        diags.append(ex.diagnostic)
        return [], diags
    return props, diags


def _trigger_satisfiable(model: Model, phi: Expr) -> bool:
    if model.state_space_size() * model.input_space_size() > ENUM_CHECK_LIMIT:
        return True  # too big to enumerate; skip the sanity warning
    legal = model.legal_inputs()
    for s in model.all_states():
        if not eval_expr(model.state_invariant, s):
            continue
        if any(eval_expr(phi, s, i) for i in legal):
            return True
    return False


def _model_symbols(model: Model) -> _Symbols:
    sym = _Symbols()
    for n, d in model.state_vars:
        sym.declare(n, d, SPACE_STATE, SourceSpan("<model>", 1, 1, 1, 1))
    for n, d in model.inputs:
        sym.declare(n, d, SPACE_INPUT, SourceSpan("<model>", 1, 1, 1, 1))
    return sym


def parse_state_set(text: str, model: Model, filename: str = "<expr>"):
    """Parse a state-set predicate (state variables only).
    Returns (Expr | None, diagnostics)."""
    diags: list[Diagnostic] = []
    try:
        p = _Parser(text, filename)
        raw = p.expr()
        p.expect("eof")
        e = _resolve(raw, _model_symbols(model), frozenset({SPACE_STATE}))
        if sort_of(e) != BOOL:
            raise ParseError("a state set must be a boolean expression",
                             SourceSpan(filename, 1, 1, 1, 1))
        return e, diags
    except ParseError as ex:
        diags.append(ex.diagnostic)
        return None, diags


# ---------------------------------------------------------------------------
# Pretty-printing (parse . print . parse is a fixpoint)
# ---------------------------------------------------------------------------

_PREC = {"?:": 1, "=>": 2, "||": 3, "&&": 4,
         "==": 5, "!=": 5, "<": 5, "<=": 5, "+": 6, "-": 6, "!": 7}


def format_expr(e: Expr, parent_prec: int = 0) -> str:
    if isinstance(e, Const):
        if isinstance(e.value, bool):
            return "true" if e.value else "false"
        return str(e.value)
    if isinstance(e, Ref):
        return f"next({e.name})" if e.space == SPACE_NEXT else e.name
    if isinstance(e, Not):
        s = "!" + format_expr(e.a, _PREC["!"])
        return s
    if isinstance(e, Ite):
        s = (f"{format_expr(e.cond, _PREC['?:'] + 1)} ? {format_expr(e.then, 0)}"
             f" : {format_expr(e.other, _PREC['?:'])}")
        return f"({s})" if parent_prec > _PREC["?:"] else s
    if isinstance(e, BinOp):
        prec = _PREC[e.op]
        right_assoc = e.op == "=>"
        la = format_expr(e.a, prec + (1 if right_assoc else 0))
        rb = format_expr(e.b, prec + (0 if right_assoc else 1))
        s = f"{la} {e.op} {rb}"
        return f"({s})" if parent_prec > prec else s
    raise AssertionError(e)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def format_model(m: Model) -> str:
    lines = [f"model {m.name} {{"]
    inits = dict(m.init_values)
    for n, d in m.state_vars:
        init = f" init {_format_value(inits[n])}" if n in inits else ""
        lines.append(f"  state {n} : {d}{init};")
    for n, d in m.inputs:
        lines.append(f"  input {n} : {d};")
    if m.input_assumption != TRUE:
        lines.append(f"  assume {format_expr(m.input_assumption)};")
    if m.state_invariant != TRUE:
        lines.append(f"  invariant {format_expr(m.state_invariant)};")
    if m.init_pred != TRUE:
        lines.append(f"  init {format_expr(m.init_pred)};")
    if m.transition:
        lines.append("  trans {")
        for n, e in m.transition:
            lines.append(f"    {n}' = {format_expr(e)};")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def format_properties(props) -> str:
    lines = []
    for p in props:
        lines.append(f"property {p.name} {{")
        lines.append(f"  assume {format_expr(p.assumption)};")
        lines.append(f"  assert {format_expr(p.assertion)};")
        lines.append("}")
    return "\n".join(lines) + "\n"

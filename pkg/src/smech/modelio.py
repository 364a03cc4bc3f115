"""Parser and serializer for model files, expression text, Grassmann-element
text, reparametrisation blocks, and trajectory files.

Model grammar (whitespace-insensitive, ``#`` comments to end of line, commas
between block entries optional)::

    model   := "model" IDENT block*
    block   := "coords"  "{" (IDENT ":" ("even"|"odd"))+ "}"
             | "params"  "{" (IDENT "=" NUMBER)+ "}"
             | "consts"  "{" (IDENT ":" ("even"|"odd"))+ "}"
             | "lagrangian" ":" expr
             | "constraint" "{" (IDENT "=" "0")+ "}"      # IDENT is a velocity, e.g. dpsi_m
             | "field" IDENT "{" (IDENT "=" expr)+ "}"
             | "solution"   "{" (IDENT "=" expr)+ "}"     # expressions may use t

Expressions use the usual precedence with ``^`` for integer powers and ``/``
by numeric literals only.  The velocity of coordinate ``x`` is spelled ``dx``,
its momentum ``p_x``, the momentum velocity ``dp_x``.  Calls ``sin cos sinh
cosh exp`` hit the function library; any other called name is a formal
function whose trailing digits count formal derivatives (``U1`` is U', ``U2``
is U'').

Grassmann elements serialize as ``c0 + c1*z1 + c12*z1^z2`` with generators
``z1..zq`` and ``^`` separating generators of one monomial.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .grassmann import GrassmannElement, Parity
from .superexpr import (
    LIBRARY_FUNCS,
    SuperExpr,
    SymbolTable,
    apply_func,
    deven,
    format_number,
    render_expr,
)
from .trajectory import Trajectory, parse_mask_label


class ModelSyntaxError(ValueError):
    """Parse or validation failure with a source position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col
        self.message = message


class SchemaError(ValueError):
    """Trajectory file does not match the expected schema."""


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<WS>\s+)
  | (?P<COMMENT>\#[^\n]*)
  | (?P<NUMBER>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<PUNCT>[{}():=+\-*/^,])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    type: str  # NUMBER, IDENT, one of the punct characters, or EOF
    value: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line = 1
    line_start = 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ModelSyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        value = m.group()
        if kind not in ("WS", "COMMENT"):
            ttype = value if kind == "PUNCT" else kind
            tokens.append(Token(ttype, value, line, pos - line_start + 1))
        nl = value.count("\n")
        if nl:
            line += nl
            line_start = pos + value.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("EOF", "", line, len(text) - line_start + 1))
    return tokens


class _Stream:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        t = self.tokens[self.i]
        if t.type != "EOF":
            self.i += 1
        return t

    def expect(self, ttype: str) -> Token:
        t = self.peek()
        if t.type != ttype:
            raise ModelSyntaxError(
                f"expected {ttype!r}, found {t.value!r}" if t.type != "EOF"
                else f"expected {ttype!r}, found end of input",
                t.line, t.col,
            )
        return self.next()

    def accept(self, ttype: str) -> Token | None:
        if self.peek().type == ttype:
            return self.next()
        return None

    def error(self, message: str, token: Token | None = None):
        t = token or self.peek()
        raise ModelSyntaxError(message, t.line, t.col)


# ---------------------------------------------------------------------------
# expression parsing
# ---------------------------------------------------------------------------

_BLOCK_KEYWORDS = {
    "coords", "params", "consts", "lagrangian", "constraint", "field", "solution",
}

_FORMAL_SPLIT = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*?)(\d+)$")


def _split_formal(name: str) -> tuple[str, int]:
    m = _FORMAL_SPLIT.match(name)
    if m and not m.group(1).endswith("_"):
        return m.group(1), int(m.group(2))
    return name, 0


class ExprParser:
    """Recursive-descent expression parser over a symbol table.

    ``allowed`` restricts which symbol kinds may appear; identifiers that are
    block keywords terminate the expression so block-structured files parse
    without separators.
    """

    def __init__(self, stream: _Stream, table: SymbolTable, allowed: set[str]):
        self.s = stream
        self.table = table
        self.allowed = allowed

    def parse(self) -> SuperExpr:
        return self._sum()

    def _starts_atom(self, t: Token) -> bool:
        if t.type == "NUMBER" or t.type == "(":
            return True
        return t.type == "IDENT" and t.value not in _BLOCK_KEYWORDS

    def _sum(self) -> SuperExpr:
        t = self.s.peek()
        if t.type == "-":
            self.s.next()
            acc = -self._product()
        else:
            acc = self._product()
        while True:
            t = self.s.peek()
            if t.type == "+":
                self.s.next()
                acc = acc + self._product()
            elif t.type == "-":
                self.s.next()
                acc = acc - self._product()
            else:
                return acc

    def _product(self) -> SuperExpr:
        acc = self._power()
        while True:
            t = self.s.peek()
            if t.type == "*":
                self.s.next()
                acc = acc * self._power()
            elif t.type == "/":
                self.s.next()
                neg = self.s.accept("-") is not None
                num = self.s.expect("NUMBER")
                value = float(num.value)
                if value == 0.0:
                    self.s.error("division by zero", num)
                acc = acc.scale(-1.0 / value if neg else 1.0 / value)
            else:
                return acc

    def _power(self) -> SuperExpr:
        base = self._atom()
        if self.s.peek().type == "^":
            self.s.next()
            neg = self.s.accept("-") is not None
            num = self.s.expect("NUMBER")
            if "." in num.value or "e" in num.value or "E" in num.value:
                self.s.error("exponents must be integers", num)
            n = int(num.value)
            return base ** (-n if neg else n)
        return base

    def _atom(self) -> SuperExpr:
        t = self.s.peek()
        if t.type == "NUMBER":
            self.s.next()
            return SuperExpr.num(float(t.value))
        if t.type == "(":
            self.s.next()
            inner = self._sum()
            self.s.expect(")")
            return inner
        if t.type == "IDENT":
            if t.value in _BLOCK_KEYWORDS:
                self.s.error(f"expected an expression, found keyword {t.value!r}", t)
            self.s.next()
            if self.s.peek().type == "(":
                return self._call(t)
            sym = self.table.get(t.value)
            if sym is None:
                self.s.error(f"undeclared symbol {t.value!r}", t)
            if sym.kind not in self.allowed:
                self.s.error(
                    f"symbol {t.value!r} ({sym.kind.replace('_', ' ')}) "
                    "is not allowed in this expression", t,
                )
            return SuperExpr.sym(sym)
        self.s.error(f"expected an expression, found {t.value!r}" if t.type != "EOF"
                     else "expected an expression, found end of input", t)

    def _call(self, name_tok: Token) -> SuperExpr:
        name, order = _split_formal(name_tok.value)
        if name_tok.value in LIBRARY_FUNCS:
            name, order = name_tok.value, 0
        elif name_tok.value in self.table:
            self.s.error(f"{name_tok.value!r} is a declared symbol, not a function", name_tok)
        elif name in self.table and name not in LIBRARY_FUNCS:
            self.s.error(f"{name_tok.value!r} shadows declared symbol {name!r}", name_tok)
        self.s.expect("(")
        arg = self._sum()
        self.s.expect(")")
        p = arg.parity()
        if p is not Parity.EVEN:
            self.s.error(f"argument of {name_tok.value} must be even", name_tok)
        return apply_func(name, order, arg)


_MODEL_EXPR_KINDS = {"coord", "velocity", "momentum", "momentum_velocity", "param"}
_LAGRANGIAN_KINDS = {"coord", "velocity", "param"}
_FIELD_KINDS = {"coord", "momentum", "param", "const"}
_SOLUTION_EXPR_KINDS = {"param", "const", "time"}


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

@dataclass
class ModelFile:
    """Parsed model: chart, parameters, Lagrangian, and auxiliary blocks."""

    name: str
    table: SymbolTable
    coord_decls: list  # [(name, Parity)]
    params: dict  # name -> float
    const_decls: list  # [(name, Parity)]
    lagrangian: SuperExpr | None = None
    constraint: list = field(default_factory=list)  # velocity symbol names
    fields: dict = field(default_factory=dict)  # name -> {symbol name: SuperExpr}
    solution: dict = field(default_factory=dict)  # coord name -> SuperExpr in t

    def __eq__(self, other):
        if not isinstance(other, ModelFile):
            return NotImplemented
        return (
            self.name == other.name
            and self.coord_decls == other.coord_decls
            and self.params == other.params
            and self.const_decls == other.const_decls
            and self.lagrangian == other.lagrangian
            and self.constraint == other.constraint
            and self.fields == other.fields
            and self.solution == other.solution
        )

    def model_hash(self) -> str:
        return hashlib.sha256(render_model(self).encode()).hexdigest()[:16]

    def param_values(self, overrides: dict | None = None) -> dict:
        out = {self.table[n]: v for n, v in self.params.items()}
        if overrides:
            for name, v in overrides.items():
                out[self.table[name]] = v
        return out

    def solution_velocity(self, coord_name: str) -> SuperExpr:
        """Symbolic d/dt of a solution-block expression."""
        return deven(self.solution[coord_name], self.table["t"])


def parse_model(text: str) -> ModelFile:
    s = _Stream(tokenize(text))
    kw = s.expect("IDENT")
    if kw.value != "model":
        s.error("model file must start with 'model <name>'", kw)
    name = s.expect("IDENT").value

    table = SymbolTable()
    coord_decls: list = []
    const_decls: list = []
    params: dict = {}
    lagrangian = None
    lagrangian_tok = None
    constraint: list = []
    fields: dict = {}
    solution_raw: list = []

    while s.peek().type != "EOF":
        head = s.expect("IDENT")
        if head.value == "coords":
            for nm, parity, tok in _parse_decl_block(s):
                if nm in table:
                    s.error(f"duplicate declaration of {nm!r}", tok)
                try:
                    table.add_coord(nm, parity)
                except ValueError as exc:
                    s.error(str(exc), tok)
                coord_decls.append((nm, parity))
            if not coord_decls:
                s.error("empty coordinate block", head)
        elif head.value == "params":
            s.expect("{")
            while not s.accept("}"):
                tok = s.expect("IDENT")
                s.expect("=")
                neg = s.accept("-") is not None
                num = s.expect("NUMBER")
                if tok.value in table:
                    s.error(f"duplicate declaration of {tok.value!r}", tok)
                table.add_param(tok.value)
                params[tok.value] = -float(num.value) if neg else float(num.value)
                s.accept(",")
        elif head.value == "consts":
            for nm, parity, tok in _parse_decl_block(s):
                if nm in table:
                    s.error(f"duplicate declaration of {nm!r}", tok)
                table.add_const(nm, parity)
                const_decls.append((nm, parity))
        elif head.value == "lagrangian":
            s.expect(":")
            lagrangian_tok = s.peek()
            lagrangian = ExprParser(s, table, _LAGRANGIAN_KINDS).parse()
        elif head.value == "constraint":
            s.expect("{")
            while not s.accept("}"):
                tok = s.expect("IDENT")
                sym = table.get(tok.value)
                if sym is None or sym.kind != "velocity":
                    s.error(
                        f"constraint entries must be velocities of declared "
                        f"coordinates, got {tok.value!r}", tok)
                s.expect("=")
                num = s.expect("NUMBER")
                if float(num.value) != 0.0:
                    s.error("constraints must set a velocity to 0", num)
                constraint.append(tok.value)
                s.accept(",")
        elif head.value == "field":
            fname = s.expect("IDENT").value
            comps: dict = {}
            s.expect("{")
            while not s.accept("}"):
                tok = s.expect("IDENT")
                sym = table.get(tok.value)
                if sym is None or sym.kind not in ("coord", "momentum"):
                    s.error(
                        "field components are indexed by coordinates or "
                        f"momenta, got {tok.value!r}", tok)
                s.expect("=")
                comps[tok.value] = ExprParser(s, table, _FIELD_KINDS).parse()
                s.accept(",")
            fields[fname] = comps
        elif head.value == "solution":
            if "t" not in table:
                table.add_time("t")
            s.expect("{")
            while not s.accept("}"):
                tok = s.expect("IDENT")
                sym = table.get(tok.value)
                if sym is None or sym.kind != "coord":
                    s.error(f"solution entries are indexed by coordinates, "
                            f"got {tok.value!r}", tok)
                s.expect("=")
                expr = ExprParser(s, table, _SOLUTION_EXPR_KINDS).parse()
                solution_raw.append((tok.value, expr, tok))
                s.accept(",")
        else:
            s.error(f"unknown block {head.value!r}", head)

    if not coord_decls:
        tok = s.peek()
        raise ModelSyntaxError("model declares no coordinates", tok.line, tok.col)

    solution: dict = {}
    for nm, expr, tok in solution_raw:
        p = expr.parity()
        want = table[nm].parity
        # solution components built from even scalars and odd consts
        if not expr.is_zero() and p is not want:
            raise ModelSyntaxError(
                f"solution for {nm} must be {want.name.lower()}", tok.line, tok.col)
        solution[nm] = expr

    if lagrangian is not None:
        bad = [t for t in lagrangian.terms if len(t[2]) & 1]
        if bad:
            offender = render_expr(SuperExpr([bad[0]]))
            raise ModelSyntaxError(
                f"lagrangian must be even: term '{offender}' is odd",
                lagrangian_tok.line, lagrangian_tok.col)

    return ModelFile(
        name=name,
        table=table,
        coord_decls=coord_decls,
        params=params,
        const_decls=const_decls,
        lagrangian=lagrangian,
        constraint=constraint,
        fields=fields,
        solution=solution,
    )


def _parse_decl_block(s: _Stream):
    s.expect("{")
    out = []
    while not s.accept("}"):
        tok = s.expect("IDENT")
        s.expect(":")
        ptok = s.expect("IDENT")
        if ptok.value not in ("even", "odd"):
            s.error(f"parity must be 'even' or 'odd', got {ptok.value!r}", ptok)
        out.append((tok.value, Parity.EVEN if ptok.value == "even" else Parity.ODD, tok))
        s.accept(",")
    return out


def render_model(m: ModelFile) -> str:
    lines = [f"model {m.name}", ""]
    lines.append("coords {")
    for nm, parity in m.coord_decls:
        lines.append(f"  {nm}: {parity.name.lower()}")
    lines.append("}")
    if m.params:
        lines.append("")
        lines.append("params {")
        for nm, v in m.params.items():
            lines.append(f"  {nm} = {format_number(v)}")
        lines.append("}")
    if m.const_decls:
        lines.append("")
        lines.append("consts {")
        for nm, parity in m.const_decls:
            lines.append(f"  {nm}: {parity.name.lower()}")
        lines.append("}")
    if m.lagrangian is not None:
        lines.append("")
        lines.append(f"lagrangian: {render_expr(m.lagrangian)}")
    if m.constraint:
        lines.append("")
        lines.append("constraint {")
        for nm in m.constraint:
            lines.append(f"  {nm} = 0")
        lines.append("}")
    for fname, comps in m.fields.items():
        lines.append("")
        lines.append(f"field {fname} {{")
        for nm, expr in comps.items():
            lines.append(f"  {nm} = {render_expr(expr)}")
        lines.append("}")
    if m.solution:
        lines.append("")
        lines.append("solution {")
        for nm, expr in m.solution.items():
            lines.append(f"  {nm} = {render_expr(expr)}")
        lines.append("}")
    return "\n".join(lines) + "\n"


def load_model(path) -> ModelFile:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())


def parse_expr_text(text: str, table: SymbolTable, allowed: set[str] | None = None) -> SuperExpr:
    """Parse a standalone expression against an existing table."""
    s = _Stream(tokenize(text))
    kinds = allowed if allowed is not None else (
        _MODEL_EXPR_KINDS | {"accel", "const", "time"})
    expr = ExprParser(s, table, kinds).parse()
    if s.peek().type != "EOF":
        s.error(f"unexpected trailing input {s.peek().value!r}")
    return expr


# ---------------------------------------------------------------------------
# Grassmann element text
# ---------------------------------------------------------------------------

_GEN_RE = re.compile(r"^z(\d+)$")


def parse_element(text: str, q: int) -> GrassmannElement:
    """Parse ``c0 + c1*z1 + c12*z1^z2`` style element text."""
    s = _Stream(tokenize(text))
    terms: dict[int, float] = {}
    sign = 1.0
    if s.accept("-"):
        sign = -1.0
    while True:
        coeff, mask = _parse_element_term(s, q)
        terms[mask] = terms.get(mask, 0.0) + sign * coeff
        t = s.peek()
        if t.type == "+":
            sign = 1.0
            s.next()
        elif t.type == "-":
            sign = -1.0
            s.next()
        elif t.type == "EOF":
            break
        else:
            s.error(f"unexpected {t.value!r} in element text", t)
    return GrassmannElement(q, terms)


def _parse_element_term(s: _Stream, q: int) -> tuple[float, int]:
    t = s.peek()
    coeff = 1.0
    if t.type == "NUMBER":
        s.next()
        coeff = float(t.value)
        if s.peek().type == "/":
            s.next()
            d = s.expect("NUMBER")
            coeff /= float(d.value)
        if not s.accept("*"):
            return coeff, 0
    mask = 0
    while True:
        tok = s.expect("IDENT")
        m = _GEN_RE.match(tok.value)
        if not m:
            s.error(f"expected generator z1..z{q}, got {tok.value!r}", tok)
        i = int(m.group(1))
        if not 1 <= i <= q:
            s.error(f"generator z{i} outside z1..z{q}", tok)
        bit = 1 << (i - 1)
        if mask & bit:
            s.error(f"repeated generator z{i}", tok)
        if bit < mask:
            s.error("generators must appear in ascending order", tok)
        mask |= bit
        if not s.accept("^"):
            break
    return coeff, mask


def render_element(e: GrassmannElement) -> str:
    if not e.terms:
        return "0"
    parts = []
    for mask in sorted(e.terms, key=lambda m: (bin(m).count("1"), m)):
        c = e.terms[mask]
        mono = "^".join(f"z{i + 1}" for i in range(mask.bit_length()) if mask >> i & 1)
        mag = abs(c)
        if mask == 0:
            body = format_number(mag)
        elif mag == 1.0:
            body = mono
        else:
            body = f"{format_number(mag)}*{mono}"
        if not parts:
            parts.append(body if c > 0 else f"-{body}")
        else:
            parts.append(f"+ {body}" if c > 0 else f"- {body}")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# reparametrisation blocks
# ---------------------------------------------------------------------------

def parse_reparam(text: str, target_q: int | None = None) -> tuple[int, int, dict]:
    """Parse ``reparam { z1 = <element>, ... }``.

    Returns (source q, target q, {generator index: image element}).  The
    target q defaults to the highest generator mentioned in the images.
    """
    s = _Stream(tokenize(text))
    head = s.expect("IDENT")
    if head.value != "reparam":
        s.error("reparametrisation file must start with 'reparam {'", head)
    s.expect("{")
    raw: dict[int, str] = {}
    entries = []
    while not s.accept("}"):
        tok = s.expect("IDENT")
        m = _GEN_RE.match(tok.value)
        if not m:
            s.error(f"expected source generator z<k>, got {tok.value!r}", tok)
        i = int(m.group(1))
        if i in raw:
            s.error(f"duplicate image for z{i}", tok)
        s.expect("=")
        start = s.i
        depth = 0
        while s.peek().type not in ("EOF",):
            t = s.peek()
            if t.type == "," and depth == 0:
                break
            if t.type == "}" and depth == 0:
                break
            s.next()
        chunk = " ".join(t.value for t in s.tokens[start:s.i])
        raw[i] = chunk
        entries.append((i, tok))
        s.accept(",")
    if not raw:
        s.error("empty reparametrisation block", head)
    source_q = max(raw)
    if sorted(raw) != list(range(1, source_q + 1)):
        i, tok = entries[-1]
        raise ModelSyntaxError(
            f"images must cover z1..z{source_q} exactly", tok.line, tok.col)
    if target_q is None:
        target_q = 0
        for chunk in raw.values():
            for gm in re.finditer(r"\bz(\d+)\b", chunk):
                target_q = max(target_q, int(gm.group(1)))
    images = {i: parse_element(chunk, target_q) for i, chunk in raw.items()}
    return source_q, target_q, images


# ---------------------------------------------------------------------------
# trajectory files
# ---------------------------------------------------------------------------

def write_trajectory(traj: Trajectory, path, fmt: str | None = None) -> None:
    path = str(path)
    if fmt is None:
        fmt = "json" if path.endswith(".json") else "csv"
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(trajectory_to_csv(traj))
    elif fmt == "json":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(trajectory_to_json(traj))
    else:
        raise SchemaError(f"unknown trajectory format {fmt!r}")


def trajectory_to_csv(traj: Trajectory) -> str:
    header = ",".join(["t"] + traj.labels())
    lines = [header]
    for i in range(traj.n_samples):
        row = [f"{traj.times[i]:.17g}"]
        row.extend(f"{v:.17g}" for v in traj.data[i])
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def trajectory_to_json(traj: Trajectory) -> str:
    meta = dict(traj.meta)
    meta["q"] = traj.q
    if traj.n_samples > 1:
        meta.setdefault("dt", float(traj.times[1] - traj.times[0]))
    payload = {
        "meta": meta,
        "columns": ["t"] + traj.labels(),
        "data": [
            [float(traj.times[i])] + [float(v) for v in traj.data[i]]
            for i in range(traj.n_samples)
        ],
    }
    return json.dumps(payload, indent=1) + "\n"


def read_trajectory(path, q: int | None = None) -> Trajectory:
    path = str(path)
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        columns = payload["columns"]
        rows = np.array(payload["data"], dtype=float)
        meta = payload.get("meta", {})
        qq = int(meta.get("q", q if q is not None else 0))
    else:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        if not lines:
            raise SchemaError(f"{path}: empty trajectory file")
        columns = lines[0].split(",")
        rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        meta = {}
        qq = q if q is not None else 0
    if columns[0] != "t":
        raise SchemaError(f"{path}: first column must be t, got {columns[0]!r}")
    colspec = []
    for label in columns[1:]:
        if "." not in label:
            raise SchemaError(f"{path}: malformed column label {label!r}")
        name, _, sub = label.rpartition(".")
        mask = parse_mask_label(sub)
        qq = max(qq, mask.bit_length())
        colspec.append((name, mask))
    if rows.size == 0:
        raise SchemaError(f"{path}: trajectory has no samples")
    return Trajectory(qq, tuple(colspec), rows[:, 0], rows[:, 1:], meta)

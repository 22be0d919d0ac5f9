"""Conjunctive predicate language for scans and deletes.

Grammar (keywords case-insensitive):

    expr    := atom ("AND" atom)*
    atom    := column op literal
             | column "IS" ["NOT"] "NULL"
             | "(" expr ")"
    op      := "=" | "!=" | "<" | "<=" | ">" | ">="
    literal := integer | float | 'string' | "true" | "false"
             | "DATE" 'YYYY-MM-DD' | "TIMESTAMP" 'ISO-8601 Z'

Strings escape the quote by doubling it. Empty or whitespace-only input
is the empty conjunction and matches every row. Parentheses only group;
there is no OR or NOT, so every parse flattens to one list of atoms.

Evaluation is three-valued: a comparison against null is unknown, and a
row passes only when the whole conjunction is definitely true. IS NULL
and IS NOT NULL are never unknown.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from . import canonical
from .errors import ParseError, TypeMismatch
from .model import Schema

COMPARE_OPS = ("=", "!=", "<", "<=", ">", ">=")
_KEYWORDS = {"and", "is", "not", "null", "true", "false", "date", "timestamp"}


# --- tokens ---------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str  # IDENT KEYWORD OP LPAREN RPAREN INT FLOAT STRING EOF
    text: str
    value: Any
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c == "(":
            tokens.append(_Token("LPAREN", "(", None, i))
            i += 1
            continue
        if c == ")":
            tokens.append(_Token("RPAREN", ")", None, i))
            i += 1
            continue
        if c in "<>!=":
            if text[i : i + 2] in ("<=", ">=", "!="):
                tokens.append(_Token("OP", text[i : i + 2], None, i))
                i += 2
                continue
            if c in "<>=":
                tokens.append(_Token("OP", c, None, i))
                i += 1
                continue
            raise ParseError(f"stray {c!r}", i, ("operator",))
        if c == "'":
            start = i
            i += 1
            chunks: list[str] = []
            while True:
                if i >= n:
                    raise ParseError("unterminated string literal", start, ("'",))
                if text[i] == "'":
                    if i + 1 < n and text[i + 1] == "'":
                        chunks.append("'")
                        i += 2
                        continue
                    i += 1
                    break
                chunks.append(text[i])
                i += 1
            tokens.append(_Token("STRING", text[start:i], "".join(chunks), start))
            continue
        if c.isdigit() or (c == "-" and i + 1 < n and text[i + 1].isdigit()):
            start = i
            if c == "-":
                i += 1
            while i < n and text[i].isdigit():
                i += 1
            is_float = False
            if i < n and text[i] == "." and i + 1 < n and text[i + 1].isdigit():
                is_float = True
                i += 1
                while i < n and text[i].isdigit():
                    i += 1
            if i < n and text[i] in "eE":
                j = i + 1
                if j < n and text[j] in "+-":
                    j += 1
                if j < n and text[j].isdigit():
                    is_float = True
                    i = j
                    while i < n and text[i].isdigit():
                        i += 1
            raw = text[start:i]
            if is_float:
                tokens.append(_Token("FLOAT", raw, float(raw), start))
            else:
                tokens.append(_Token("INT", raw, int(raw), start))
            continue
        if c.isalpha() or c == "_":
            start = i
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            word = text[start:i]
            if word.lower() in _KEYWORDS:
                tokens.append(_Token("KEYWORD", word.lower(), None, start))
            else:
                tokens.append(_Token("IDENT", word, None, start))
            continue
        raise ParseError(f"unexpected character {c!r}", i, ())
    tokens.append(_Token("EOF", "", None, n))
    return tokens


# --- ast ---------------------------------------------------------------------

@dataclass(frozen=True)
class Compare:
    column: str
    field_id: int
    col_type: str
    op: str
    literal: Any


@dataclass(frozen=True)
class NullCheck:
    column: str
    field_id: int
    col_type: str
    negated: bool  # True means IS NOT NULL


Atom = Compare | NullCheck


@dataclass(frozen=True)
class Predicate:
    atoms: tuple[Atom, ...]

    @property
    def field_ids(self) -> frozenset[int]:
        return frozenset(a.field_id for a in self.atoms)


TRUE_PREDICATE = Predicate(atoms=())


# --- parser --------------------------------------------------------------------

_LITERAL_KIND = {"INT": "int", "FLOAT": "float", "STRING": "string"}


class _Parser:
    def __init__(self, tokens: list[_Token], schema: Schema):
        self.tokens = tokens
        self.i = 0
        self.schema = schema

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_keyword(self, word: str) -> _Token:
        tok = self.peek()
        if tok.kind == "KEYWORD" and tok.text == word:
            return self.advance()
        raise ParseError(f"unexpected {tok.text or 'end of input'!r}", tok.pos, (word.upper(),))

    def parse(self) -> Predicate:
        atoms = self.expr()
        tok = self.peek()
        if tok.kind != "EOF":
            raise ParseError(
                f"unexpected {tok.text!r}", tok.pos, ("AND", "end of input")
            )
        return Predicate(atoms=tuple(atoms))

    def expr(self) -> list[Atom]:
        atoms = self.atom()
        while True:
            tok = self.peek()
            if tok.kind == "KEYWORD" and tok.text == "and":
                self.advance()
                atoms.extend(self.atom())
                continue
            return atoms

    def atom(self) -> list[Atom]:
        tok = self.peek()
        if tok.kind == "LPAREN":
            self.advance()
            atoms = self.expr()
            closing = self.peek()
            if closing.kind != "RPAREN":
                raise ParseError(
                    f"unexpected {closing.text or 'end of input'!r}",
                    closing.pos,
                    ("')'", "AND"),
                )
            self.advance()
            return atoms
        if tok.kind != "IDENT":
            raise ParseError(
                f"unexpected {tok.text or 'end of input'!r}",
                tok.pos,
                ("column name", "'('"),
            )
        self.advance()
        field = self.schema.field_by_name(tok.text)  # raises UnknownColumn
        nxt = self.peek()
        if nxt.kind == "KEYWORD" and nxt.text == "is":
            self.advance()
            negated = False
            if self.peek().kind == "KEYWORD" and self.peek().text == "not":
                self.advance()
                negated = True
            self.expect_keyword("null")
            return [
                NullCheck(
                    column=field.name,
                    field_id=field.field_id,
                    col_type=field.type,
                    negated=negated,
                )
            ]
        if nxt.kind != "OP":
            raise ParseError(
                f"unexpected {nxt.text or 'end of input'!r}",
                nxt.pos,
                ("operator", "IS"),
            )
        op_tok = self.advance()
        literal, kind, lit_pos = self.literal()
        value = _check_types(field.name, field.type, op_tok.text, literal, kind, lit_pos)
        return [
            Compare(
                column=field.name,
                field_id=field.field_id,
                col_type=field.type,
                op=op_tok.text,
                literal=value,
            )
        ]

    def literal(self) -> tuple[Any, str, int]:
        tok = self.peek()
        if tok.kind in _LITERAL_KIND:
            self.advance()
            return tok.value, _LITERAL_KIND[tok.kind], tok.pos
        if tok.kind == "KEYWORD" and tok.text in ("true", "false"):
            self.advance()
            return tok.text == "true", "bool", tok.pos
        if tok.kind == "KEYWORD" and tok.text in ("date", "timestamp"):
            self.advance()
            s = self.peek()
            if s.kind != "STRING":
                raise ParseError(
                    f"unexpected {s.text or 'end of input'!r}",
                    s.pos,
                    ("quoted string",),
                )
            self.advance()
            try:
                if tok.text == "date":
                    return canonical.parse_date(s.value), "date", s.pos
                return canonical.parse_timestamp(s.value), "timestamp", s.pos
            except ValueError as exc:
                raise ParseError(f"bad {tok.text} literal: {exc}", s.pos, ()) from exc
        raise ParseError(
            f"unexpected {tok.text or 'end of input'!r}", tok.pos, ("literal",)
        )


def _check_types(
    column: str, col_type: str, op: str, literal: Any, kind: str, pos: int
) -> Any:
    """Validate literal kind against column type; returns the coerced literal."""
    if col_type == "bool":
        if kind != "bool":
            raise TypeMismatch(f"column {column!r} is bool, literal is {kind}")
        if op not in ("=", "!="):
            raise TypeMismatch(f"bool column {column!r} supports only = and !=")
        return literal
    if kind == "bool":
        raise TypeMismatch(f"column {column!r} is {col_type}, literal is bool")
    if col_type == "int64":
        if kind != "int":
            raise TypeMismatch(f"column {column!r} is int64, literal is {kind}")
        return literal
    if col_type == "float64":
        if kind == "int":
            return float(literal)  # widening an exact int is safe
        if kind != "float":
            raise TypeMismatch(f"column {column!r} is float64, literal is {kind}")
        return literal
    if col_type == "string":
        if kind != "string":
            raise TypeMismatch(f"column {column!r} is string, literal is {kind}")
        return literal
    if col_type == "date":
        if kind != "date":
            raise TypeMismatch(
                f"column {column!r} is date, literal is {kind} (use DATE '...')"
            )
        return literal
    if col_type == "timestamp":
        if kind != "timestamp":
            raise TypeMismatch(
                f"column {column!r} is timestamp, literal is {kind}"
                " (use TIMESTAMP '...')"
            )
        return literal
    raise TypeMismatch(f"column {column!r} has unknown type {col_type!r}")


def parse_predicate(text: str, schema: Schema) -> Predicate:
    """Parse and bind predicate text against a schema."""
    tokens = _tokenize(text)
    if tokens[0].kind == "EOF":  # empty conjunction matches everything
        return TRUE_PREDICATE
    return _Parser(tokens, schema).parse()


# --- evaluation ------------------------------------------------------------------

def _eval_atom(atom: Atom, row: dict[str, Any]) -> bool | None:
    """Three-valued atom evaluation; None means unknown."""
    value = row.get(atom.column)
    if isinstance(atom, NullCheck):
        is_null = value is None
        return is_null != atom.negated
    if value is None:
        return None
    op = atom.op
    lit = atom.literal
    if op == "=":
        return value == lit
    if op == "!=":
        return value != lit
    if op == "<":
        return value < lit
    if op == "<=":
        return value <= lit
    if op == ">":
        return value > lit
    if op == ">=":
        return value >= lit
    raise AssertionError(f"unknown op {op!r}")


def evaluate(pred: Predicate, row: dict[str, Any]) -> bool:
    """True only when every atom is definitely true."""
    result: bool | None = True
    for atom in pred.atoms:
        r = _eval_atom(atom, row)
        if r is False:
            return False
        if r is None:
            result = None
    return result is True


# --- printing ---------------------------------------------------------------------

def _render_literal(value: Any, col_type: str) -> str:
    if col_type == "bool":
        return "true" if value else "false"
    if col_type == "int64":
        return str(value)
    if col_type == "float64":
        return canonical.render_float(value)
    if col_type == "string":
        return "'" + value.replace("'", "''") + "'"
    if col_type == "date":
        return f"DATE '{canonical.format_date(value)}'"
    if col_type == "timestamp":
        return f"TIMESTAMP '{canonical.format_timestamp(value)}'"
    raise ValueError(f"unknown column type {col_type!r}")


def pretty(pred: Predicate) -> str:
    """Canonical text for a predicate; parse(pretty(p)) rebuilds p."""
    parts = []
    for atom in pred.atoms:
        if isinstance(atom, NullCheck):
            middle = "IS NOT NULL" if atom.negated else "IS NULL"
            parts.append(f"{atom.column} {middle}")
        else:
            parts.append(
                f"{atom.column} {atom.op} {_render_literal(atom.literal, atom.col_type)}"
            )
    return " AND ".join(parts)

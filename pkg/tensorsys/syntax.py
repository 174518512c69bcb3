"""Source files: declarations, Einstein expressions in text and printing.

The grammar below is handed to lark; ``_SourceTransformer`` turns the parse
tree into raw declarations and ``Parser`` checks them in file order (names
declared before use, label types inferred, label discipline).

``delta`` names the delta element. ``#`` starts a comment. The
backslash-underscore namespace is reserved for generated labels and
rejected here.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any

from lark import Lark, Token, Transformer, v_args
from lark.exceptions import UnexpectedCharacters, UnexpectedInput, UnexpectedToken

from tensorsys.config import RESERVED_PREFIX
from tensorsys.core import (
    Alphabet,
    Delta,
    EinsteinExpression,
    Factor,
    Label,
    LabelDisciplineError,
    SymbolDeclaration,
    TensorSymbol,
    TensorSystemError,
    TypeMismatchError,
    TypeName,
    UndeclaredSymbolError,
)
from tensorsys.valuation import ConcreteTensor, Signature, Valuation, ValuationError

logger = logging.getLogger(__name__)

GRAMMAR = r"""
    start: decl*

    ?decl: type_decl | dim_decl | sym_decl | bind_decl | expr_decl

    type_decl: "type" NAME ("," NAME)* ";"
    dim_decl: "dim" NAME "=" NAT ";"
    sym_decl: "sym" NAME ":" types "->" types ";"
    types: (NAME ("," NAME)*)?
    bind_decl: "bind" NAME "=" value ";"
    expr_decl: "expr" NAME "=" body ";"

    body: NAT       -> numeral
        | term+     -> terms
    term: NAME lower? upper?
    lower: "_{" labels "}"
    upper: "^{" labels "}"
    labels: (label ("," label)*)?
    label: NAME (":" NAME)?     -> named_label
         | CANONICAL            -> canonical_label

    ?value: object
          | array
          | ESCAPED_STRING      -> string
          | JSON_NUMBER         -> number
          | "true"              -> true
          | "false"             -> false
          | "null"              -> null
    object: "{" (pair ("," pair)*)? "}"
    pair: ESCAPED_STRING ":" value
    array: "[" (value ("," value)*)? "]"

    // an underscore directly before "{" opens a subscript
    NAME: /(?:[A-Za-z]|_(?!\{))(?:[A-Za-z0-9]|_(?!\{))*/
    NAT: /[0-9]+/
    CANONICAL: /@[A-Za-z_][A-Za-z0-9_]*\.[0-9]+\.[01]/
    JSON_NUMBER: /-?(?:0|[1-9][0-9]*)(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?/
    COMMENT: /#[^\n]*/

    %import common.ESCAPED_STRING
    %import common.WS
    %ignore WS
    %ignore COMMENT
"""

_LARK = Lark(GRAMMAR, parser="lalr", start=["start", "body"])


class ParseError(TensorSystemError):
    """Raised for lexical and grammatical errors; carries line and column."""

    code = "parse-error"
    exit_status = 3

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{line}:{column}: {message}"
        super().__init__(message)


class UnknownExpressionError(TensorSystemError):
    """Raised when a command names an expression the file does not define."""

    code = "unknown-expression"
    exit_status = 2


def _location(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    column = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, column


def _syntax_error(text: str, e: UnexpectedInput) -> ParseError:
    """Translate a lark error into a ParseError at the same place."""
    if isinstance(e, UnexpectedCharacters):
        if text.startswith(RESERVED_PREFIX, e.pos_in_stream):
            message = "labels in the \\_ namespace are reserved"
        else:
            message = f"unexpected character {text[e.pos_in_stream]!r}"
        return ParseError(message, e.line, e.column)
    if isinstance(e, UnexpectedToken) and e.token.type != "$END":
        expected = ", ".join(sorted(e.expected))
        return ParseError(f"unexpected {str(e.token)!r}, expected one of {expected}", e.line, e.column)
    return ParseError("unexpected end of input", *_location(text, len(text)))


@dataclass(frozen=True)
class _RawLabel:
    name: str | None
    annotation: str | None
    pos: int
    # (type, position, polarity) as written, for @T.i.p labels
    canonical: tuple[str, int, int] | None = None
    annotation_pos: int = 0


@dataclass(frozen=True)
class _RawTerm:
    name: str
    lower: tuple[_RawLabel, ...]
    upper: tuple[_RawLabel, ...]
    pos: int


@v_args(inline=True)
class _SourceTransformer(Transformer):
    """Parse tree to ``(kind, args)`` declarations, raw terms and JSON values."""

    def start(self, *decls):
        return list(decls)

    def type_decl(self, *names):
        return "type", names

    def dim_decl(self, name, value):
        return "dim", (name, value)

    def sym_decl(self, name, inputs, outputs):
        return "sym", (name, inputs, outputs)

    def types(self, *names):
        return names

    def bind_decl(self, name, value):
        return "bind", (name, value)

    def expr_decl(self, name, body):
        return "expr", (name, body)

    def numeral(self, token):
        return token

    def terms(self, *terms):
        return terms

    def term(self, name, *scripts):
        sides = dict(scripts)
        return _RawTerm(str(name), sides.get("lower", ()), sides.get("upper", ()), name.start_pos)

    def lower(self, labels):
        return "lower", labels

    def upper(self, labels):
        return "upper", labels

    def labels(self, *labels):
        return labels

    def named_label(self, name, annotation=None):
        if annotation is None:
            return _RawLabel(str(name), None, name.start_pos)
        return _RawLabel(str(name), str(annotation), name.start_pos, annotation_pos=annotation.start_pos)

    def canonical_label(self, token):
        t, position, polarity = str(token)[1:].rsplit(".", 2)
        return _RawLabel(None, None, token.start_pos, (t, int(position), int(polarity)))

    def object(self, *pairs):
        return dict(pairs)

    def pair(self, key, value):
        return json.loads(key), value

    def array(self, *values):
        return list(values)

    def string(self, token):
        return json.loads(token)

    def number(self, token):
        return json.loads(token)

    def true(self):
        return True

    def false(self):
        return False

    def null(self):
        return None


@dataclass(frozen=True)
class SourceFile:
    alphabet: Alphabet
    expressions: dict[str, EinsteinExpression] = field(default_factory=dict)
    dims: dict[TypeName, int] = field(default_factory=dict)
    bindings: dict[str, ConcreteTensor] = field(default_factory=dict)

    def expression(self, name: str) -> EinsteinExpression:
        try:
            return self.expressions[name]
        except KeyError:
            raise UnknownExpressionError(f"no expression named {name!r}") from None

    @property
    def has_valuation(self) -> bool:
        return bool(self.dims or self.bindings)

    def valuation(self) -> Valuation:
        return Valuation(Signature.from_alphabet(self.alphabet), dict(self.dims), dict(self.bindings))


class Parser:
    """Checks parsed declarations in file order and builds the SourceFile."""

    def __init__(self, text: str):
        self.text = text
        self.types: list[TypeName] = []
        self.declarations: list[SymbolDeclaration] = []
        self.expressions: dict[str, EinsteinExpression] = {}
        self.dims: dict[TypeName, int] = {}
        self.bindings: dict[str, ConcreteTensor] = {}

    def tree(self, start: str) -> Any:
        try:
            tree = _LARK.parse(self.text, start=start)
        except UnexpectedInput as e:
            raise _syntax_error(self.text, e) from None
        return _SourceTransformer().transform(tree)

    def error(self, message: str, pos: int) -> ParseError:
        return ParseError(message, *_location(self.text, pos))

    def where(self, pos: int) -> str:
        line, column = _location(self.text, pos)
        return f"{line}:{column}"

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(tuple(self.types), tuple(self.declarations))

    def parse(self) -> SourceFile:
        for kind, args in self.tree("start"):
            getattr(self, f"_decl_{kind}")(*args)

        source = SourceFile(self.alphabet, self.expressions, self.dims, self.bindings)
        if source.has_valuation:
            source.valuation()
        logger.info(
            f"parsed {len(self.types)} types, {len(self.declarations)} symbols, "
            f"{len(self.expressions)} expressions"
        )
        return source

    def _declared_type(self, name: str, pos: int) -> TypeName:
        if name not in self.types:
            raise TypeMismatchError(f"{self.where(pos)}: type {name} is not declared")
        return name

    def _decl_type(self, *names: Token) -> None:
        for token in names:
            if str(token) in self.types:
                raise self.error(f"type {token} is declared twice", token.start_pos)
            self.types.append(str(token))

    def _decl_dim(self, name: Token, value: Token) -> None:
        t = self._declared_type(str(name), name.start_pos)
        if int(value) < 1:
            raise self.error("dimensions must be positive", value.start_pos)
        self.dims[t] = int(value)

    def _decl_sym(self, name: Token, inputs: tuple[Token, ...], outputs: tuple[Token, ...]) -> None:
        if name == "delta" or any(d.name == name for d in self.declarations):
            raise self.error(f"symbol {name} cannot be declared here", name.start_pos)
        self.declarations.append(
            SymbolDeclaration(
                str(name),
                tuple(self._declared_type(str(t), t.start_pos) for t in inputs),
                tuple(self._declared_type(str(t), t.start_pos) for t in outputs),
            )
        )

    def _decl_bind(self, name: Token, value: Any) -> None:
        self.alphabet.declaration(str(name))
        try:
            self.bindings[str(name)] = ConcreteTensor.from_json(value)
        except ValuationError as e:
            raise ValuationError(f"{self.where(name.start_pos)}: {e}") from e

    def _decl_expr(self, name: Token, body: Token | tuple[_RawTerm, ...]) -> None:
        if str(name) in self.expressions:
            raise self.error(f"expression {name} is defined twice", name.start_pos)
        self.expressions[str(name)] = self.body(body)

    def body(self, body: Token | tuple[_RawTerm, ...]) -> EinsteinExpression:
        if isinstance(body, Token):
            if body != "1":
                raise self.error("the only numeral expression is 1", body.start_pos)
            return EinsteinExpression()
        return self._build(list(body))

    def _canonical(self, label: _RawLabel) -> Label:
        t, position, polarity = label.canonical
        self._declared_type(t, label.pos)
        if position < 1:
            raise self.error("canonical positions start at 1", label.pos)
        return Label.canonical(t, position, polarity)

    def _build(self, terms: list[_RawTerm]) -> EinsteinExpression:
        """Resolve label types, then build and validate the expression."""
        alphabet = self.alphabet
        types: dict[str, TypeName] = {}
        fixed = {
            label: self._canonical(label)
            for term in terms
            for label in term.lower + term.upper
            if label.canonical is not None
        }

        def assign(label: _RawLabel, t: TypeName | None) -> bool:
            if t is None:
                return False
            if label in fixed:
                if fixed[label].type != t:
                    raise TypeMismatchError(
                        f"{self.where(label.pos)}: {fixed[label]} has type "
                        f"{fixed[label].type}, expected {t}"
                    )
                return False
            known = types.get(label.name)
            if known is None:
                types[label.name] = t
                return True
            if known != t:
                raise TypeMismatchError(
                    f"{self.where(label.pos)}: label {label.name} is used with types {known} and {t}"
                )
            return False

        def type_of(label: _RawLabel) -> TypeName | None:
            return fixed[label].type if label in fixed else types.get(label.name)

        for term in terms:
            for label in term.lower + term.upper:
                if label.annotation is not None:
                    assign(label, self._declared_type(label.annotation, label.annotation_pos))
            if term.name == "delta":
                if len(term.lower) != 1 or len(term.upper) != 1:
                    raise self.error("delta takes exactly one lower and one upper label", term.pos)
                continue
            try:
                d = alphabet.declaration(term.name)
            except UndeclaredSymbolError as e:
                raise UndeclaredSymbolError(f"{self.where(term.pos)}: {e}") from None
            if len(term.lower) != len(d.inputs) or len(term.upper) != len(d.outputs):
                raise TypeMismatchError(
                    f"{self.where(term.pos)}: {term.name} takes {len(d.inputs)} lower and "
                    f"{len(d.outputs)} upper labels, got {len(term.lower)} and {len(term.upper)}"
                )
            for label, t in zip(term.lower + term.upper, d.inputs + d.outputs):
                assign(label, t)

        deltas = [term for term in terms if term.name == "delta"]
        changed = True
        while changed:
            changed = False
            for term in deltas:
                a, b = term.lower[0], term.upper[0]
                ta, tb = type_of(a), type_of(b)
                if ta is not None and tb is not None and ta != tb:
                    raise TypeMismatchError(f"{self.where(term.pos)}: delta joins types {ta} and {tb}")
                changed |= assign(b, ta) or assign(a, tb)

        def resolve(label: _RawLabel) -> Label:
            if label in fixed:
                return fixed[label]
            t = types.get(label.name)
            if t is None:
                raise TypeMismatchError(f"{self.where(label.pos)}: cannot infer the type of label {label.name}")
            return Label.named(label.name, t)

        factors: list[Factor] = []
        for term in terms:
            lower = tuple(resolve(x) for x in term.lower)
            upper = tuple(resolve(y) for y in term.upper)
            if term.name == "delta":
                factors.append(Delta(lower[0], upper[0]))
            else:
                factors.append(TensorSymbol(term.name, lower, upper))

        E = EinsteinExpression(tuple(factors))
        try:
            return E.validate(alphabet)
        except LabelDisciplineError as e:
            where = self.where(terms[0].pos) if terms else "1:1"
            raise LabelDisciplineError(f"{where}: {e}") from None


def parse(text: str) -> SourceFile:
    """Parse a source file; see ``GRAMMAR`` for the syntax."""
    return Parser(text).parse()


def parse_expression(text: str, alphabet: Alphabet) -> EinsteinExpression:
    """Parse a bare expression body (``term+`` or ``1``) against an alphabet."""
    parser = Parser(text)
    parser.types = list(alphabet.types)
    parser.declarations = list(alphabet.declarations)
    return parser.body(parser.tree("body"))


def format_label(label: Label, annotate: bool = False) -> str:
    if label.is_canonical:
        return str(label)
    return f"{label.name}:{label.type}" if annotate else label.name


def printable(E: EinsteinExpression) -> EinsteinExpression:
    """E with reserved labels renamed to unused names k1, k2, ..."""
    used = {x.name for x in E.labels() if x.name is not None}
    rename: dict[Label, Label] = {}
    n = 0
    for label in sorted(x for x in E.labels() if x.is_reserved):
        n += 1
        while f"k{n}" in used:
            n += 1
        rename[label] = Label.named(f"k{n}", label.type)
    return E.map_labels(rename, rename) if rename else E


def _format_factor(factor: Factor) -> str:
    if isinstance(factor, Delta):
        return f"delta_{{{format_label(factor.lower, True)}}}^{{{format_label(factor.upper, True)}}}"
    if not factor.lower and not factor.upper:
        return factor.name
    lower = ",".join(format_label(x) for x in factor.lower)
    upper = ",".join(format_label(y) for y in factor.upper)
    return f"{factor.name}_{{{lower}}}^{{{upper}}}"


def format_expression(E: EinsteinExpression) -> str:
    if not E.factors:
        return "1"
    return " ".join(_format_factor(f) for f in printable(E).factors)


def format_source(source: SourceFile) -> str:
    lines = []
    if source.alphabet.types:
        lines.append(f"type {', '.join(source.alphabet.types)};")
    for t, d in source.dims.items():
        lines.append(f"dim {t} = {d};")
    for decl in source.alphabet.declarations:
        signature = " ".join(filter(None, [", ".join(decl.inputs), "->", ", ".join(decl.outputs)]))
        lines.append(f"sym {decl.name} : {signature};")
    for name, tensor in source.bindings.items():
        lines.append(f"bind {name} = {json.dumps(tensor.to_json())};")
    for name, E in source.expressions.items():
        lines.append(f"expr {name} = {format_expression(E)};")
    return "\n".join(lines) + "\n"

"""Manifest files: charts, named fields, frames, points, boxes, tubes and command parameters.

One statement per line, ``#`` starts a comment::

    # presymplectic-strata manifest v1
    chart x1, x2, x3, x4
    chart S = x2, x3, x4
    omega = x1*dx1^dx2 + dx3^dx4, closed
    omega_s on S = dx3^dx4, closed = true
    frame K on S = d/dx2
    point y0 = 0, 0, 0, 0
    box B = [-1,1]^4
    tube T = x1 scale 1
    polarization P = omega_s, K
    set samples = 500

Expressions use rational literals, coordinates, differentials ``dx1``, vectors ``d/dx1``,
earlier definitions and ``+ - * ^``. ``^`` is the wedge product, or a power when the right
operand is an integer literal. Without an unnamed ``chart`` line the default chart is
``x1, ..., xN`` for the largest ``N`` in use.
"""

import logging
import re
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import pyparsing as pp
from sympy import Rational

from presymplectic_strata.core.config import LOGGER_NAME, MANIFEST_HEADER
from presymplectic_strata.errors import ManifestError, StrataError
from presymplectic_strata.services.algebra.fields import (
    DiffForm,
    GradedField,
    MultiVector,
    exterior_d,
    wedge,
)
from presymplectic_strata.services.algebra.polynomials import Chart
from presymplectic_strata.services.foliation.distributions import (
    FrameDistribution,
    Polarization,
    polarization_complement,
)
from presymplectic_strata.services.foliation.tubes import TubeSystem
from presymplectic_strata.services.geometry.stratify import Box, FormField
from presymplectic_strata.utils.lists import parse_box

logger = logging.getLogger(LOGGER_NAME)

_DEFAULT_COORD = re.compile(r"x(\d+)")


@dataclass(frozen=True)
class _Symbol:
    text: str
    loc: int


def _symbol(s: str, loc: int, toks: pp.ParseResults) -> _Symbol:
    return _Symbol(toks[0], loc)


_IDENT = pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*").set_name("name")
_SIGNED = pp.Regex(r"[+-]?\d+(?:/\d+|\.\d+)?").set_name("signed rational")
_EQ = pp.Suppress("=")

_operand = (
    pp.Regex(r"d/d[A-Za-z_][A-Za-z0-9_]*").set_name("vector").set_parse_action(_symbol)
    | pp.Regex(r"\d+(?:/\d+|\.\d+)?").set_name("rational").set_parse_action(lambda t: Rational(t[0]))
    | _IDENT.copy().set_parse_action(_symbol)
)
EXPRESSION = pp.infix_notation(
    _operand,
    [
        ("^", 2, pp.OpAssoc.RIGHT),
        (pp.one_of("+ -"), 1, pp.OpAssoc.RIGHT),
        ("*", 2, pp.OpAssoc.LEFT),
        (pp.one_of("+ -"), 2, pp.OpAssoc.LEFT),
    ],
).set_name("expression")

_ON = pp.Suppress(pp.Keyword("on")) + _IDENT("chart")
_CLOSED = pp.Keyword("closed") + pp.Optional(_EQ + (pp.Keyword("true") | pp.Keyword("false"))("flag"))
_NAMES = pp.Group(pp.DelimitedList(_IDENT))

_STATEMENT = (
    (pp.Keyword("chart")("kind") + pp.Optional(_IDENT("name") + _EQ) + _NAMES("coords"))
    | (
        pp.Keyword("frame")("kind")
        + _IDENT("name")
        + pp.Optional(_ON)
        + _EQ
        + pp.Group(pp.DelimitedList(pp.Group(EXPRESSION)))("fields")
    )
    | (pp.Keyword("point")("kind") + _IDENT("name") + _EQ + pp.Group(pp.DelimitedList(_SIGNED))("values"))
    | (pp.Keyword("box")("kind") + _IDENT("name") + _EQ + pp.Regex(r"\S.*")("text"))
    | (
        pp.Keyword("tube")("kind")
        + _IDENT("name")
        + pp.Optional(_ON)
        + _EQ
        + _NAMES("normal")
        + pp.Optional(pp.Suppress(pp.Keyword("scale")) + _SIGNED("scale"))
    )
    | (
        pp.Keyword("polarization")("kind")
        + _IDENT("name")
        + _EQ
        + _IDENT("form")
        + pp.Suppress(",")
        + _IDENT("kernel")
        + pp.Optional(pp.Suppress(",") + _IDENT("complement"))
    )
    | (pp.Keyword("set")("kind") + _IDENT("name") + _EQ + pp.Regex(r"\S.*")("text"))
    | (
        pp.Optional(pp.Keyword("form")("kind"))
        + _IDENT("name")
        + pp.Optional(_ON)
        + _EQ
        + pp.Group(EXPRESSION)("value")
        + pp.Optional(pp.Suppress(",") + _CLOSED("closed"))
    )
)


def _expected(exc: pp.ParseBaseException) -> tuple[str, ...]:
    message = exc.msg or ""
    if message.startswith("Expected "):
        return tuple(part.strip() for part in message.removeprefix("Expected ").split(", or "))
    return ()


def _walk(node: Any) -> Iterator[_Symbol]:
    if isinstance(node, _Symbol):
        yield node
    elif isinstance(node, (pp.ParseResults, list)):
        for item in node:
            yield from _walk(item)


def _first_loc(node: Any) -> int | None:
    return next((s.loc for s in _walk(node)), None)


@dataclass
class _Statement:
    line_no: int
    line: str
    result: pp.ParseResults

    @property
    def kind(self) -> str:
        return self.result.get("kind", "form")

    @property
    def name(self) -> str | None:
        return self.result.get("name")

    @property
    def chart_name(self) -> str | None:
        return self.result.get("chart")

    def error(self, message: str, loc: int | None = None, expected: Sequence[str] = ()) -> ManifestError:
        column = pp.col(loc, self.line) if loc is not None else None
        return ManifestError(message, self.line_no, column, expected)

    def trees(self) -> list[Any]:
        if self.kind == "form":
            return [self.result["value"][0]]
        if self.kind == "frame":
            return [group[0] for group in self.result["fields"]]
        return []


class _Evaluator:
    """Folds an expression tree into a form or a multivector on ``chart``."""

    def __init__(self, chart: Chart, known: Mapping[str, GradedField], statement: _Statement):
        self.chart = chart
        self.known = known
        self.statement = statement

    def resolve(self, symbol: _Symbol) -> GradedField:
        chart, text = self.chart, symbol.text
        names = chart.coord_names
        if text.startswith("d/d") and text[3:] in names:
            return MultiVector.coordinate_vector(chart, chart.index(text[3:]))
        if text in names:
            return DiffForm.scalar(chart, chart.coordinate(text))
        if text.startswith("d") and text[1:] in names:
            return DiffForm.differential(chart, chart.index(text[1:]))
        if text in self.known:
            value = self.known[text]
            if value.chart != chart:
                raise self.statement.error(f"{text!r} lives on chart {value.chart.coord_names}", symbol.loc)
            return value
        expected = [f"coordinate of {names}"] + sorted(self.known)
        raise self.statement.error(f"Unresolved name {text!r}", symbol.loc, expected)

    def evaluate(self, node: Any) -> GradedField:
        if isinstance(node, Rational):
            return DiffForm.scalar(self.chart, node)
        if isinstance(node, _Symbol):
            return self.resolve(node)
        items = list(node)
        if len(items) == 1:
            return self.evaluate(items[0])
        if len(items) == 2:
            op, operand = items
            value = self.evaluate(operand)
            return -value if op == "-" else value
        if items[1] == "^":
            return self._caret(items)
        value = self.evaluate(items[0])
        for op, operand in zip(items[1::2], items[2::2]):
            right = self.evaluate(operand)
            value, right = self._align(value, right, operand)
            if op == "*":
                value = wedge(value, right)
                continue
            if value.degree != right.degree and not (value.is_zero or right.is_zero):
                raise self.statement.error(
                    f"Cannot add terms of degree {value.degree} and {right.degree}", _first_loc(operand)
                )
            value = value + right if op == "+" else value - right
        return value

    def _caret(self, items: list) -> GradedField:
        left_node, rest = items[0], items[2:]
        left = self.evaluate(left_node)
        if len(rest) == 1 and isinstance(rest[0], Rational):
            exponent = rest[0]
            if not exponent.is_integer or exponent < 0:
                raise self.statement.error(f"Exponent {exponent} is not a non-negative integer", _first_loc(left_node))
            if not (isinstance(left, DiffForm) and left.degree == 0):
                raise self.statement.error("Only scalars can be raised to a power", _first_loc(left_node))
            return DiffForm.scalar(self.chart, left.coefficient(()) ** int(exponent))
        right = self._caret(rest) if len(rest) > 1 else self.evaluate(rest[0])
        left, right = self._align(left, right, rest[0])
        return wedge(left, right)

    def _align(self, a: GradedField, b: GradedField, node: Any) -> tuple[GradedField, GradedField]:
        if type(a) is type(b):
            return a, b
        if isinstance(a, DiffForm) and a.degree == 0:
            return MultiVector.scalar(self.chart, a.coefficient(())), b
        if isinstance(b, DiffForm) and b.degree == 0:
            return a, MultiVector.scalar(self.chart, b.coefficient(()))
        raise self.statement.error("Cannot combine a differential form with a multivector", _first_loc(node))


@dataclass(frozen=True, eq=False)
class Manifest:
    """Named objects of a manifest; every field sits on ``chart`` or a named chart."""

    chart: Chart
    charts: Mapping[str, Chart] = field(default_factory=dict)
    fields: Mapping[str, GradedField] = field(default_factory=dict)
    frames: Mapping[str, tuple[MultiVector, ...]] = field(default_factory=dict)
    points: Mapping[str, tuple[Rational, ...]] = field(default_factory=dict)
    boxes: Mapping[str, Box] = field(default_factory=dict)
    tubes: Mapping[str, TubeSystem] = field(default_factory=dict)
    polarizations: Mapping[str, Polarization] = field(default_factory=dict)
    params: Mapping[str, str] = field(default_factory=dict)
    closed: frozenset[str] = frozenset()
    chart_declared: bool = True
    polarization_sources: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def _lookup(self, table: Mapping[str, Any], name: str, what: str) -> Any:
        try:
            return table[name]
        except KeyError:
            raise ManifestError(f"Unknown {what} {name!r}", expected=sorted(table)) from None

    def form(self, name: str) -> DiffForm:
        value = self._lookup(self.fields, name, "form")
        if not isinstance(value, DiffForm):
            raise ManifestError(f"{name!r} is a multivector, not a form")
        return value

    def form_field(self, name: str) -> FormField:
        value = self.form(name)
        if value.is_zero:
            value = DiffForm.zero(value.chart, 2)
        if value.degree != 2:
            raise ManifestError(f"{name!r} has degree {value.degree}, expected a 2-form")
        return FormField(value)

    def vector(self, name: str) -> MultiVector:
        value = self._lookup(self.fields, name, "field")
        if isinstance(value, DiffForm) and value.is_zero:
            return MultiVector.zero(value.chart, 1)
        if not isinstance(value, MultiVector):
            raise ManifestError(f"{name!r} is a form, not a multivector")
        return value

    def frame(self, name: str, base_point: Sequence[Any] | None = None) -> FrameDistribution:
        fields = self._lookup(self.frames, name, "frame")
        if not fields:
            raise ManifestError(f"Frame {name!r} is empty")
        return FrameDistribution(fields[0].chart, fields, None, base_point)

    def point(self, name: str) -> tuple[Rational, ...]:
        return self._lookup(self.points, name, "point")

    def box(self, name: str) -> Box:
        return self._lookup(self.boxes, name, "box")

    def tube(self, name: str) -> TubeSystem:
        return self._lookup(self.tubes, name, "tube")

    def polarization(self, name: str) -> Polarization:
        return self._lookup(self.polarizations, name, "polarization")

    def param(self, name: str, default: Any = None) -> Any:
        return self.params.get(name, default)

    def chart_named(self, name: str | None) -> Chart:
        if name is None:
            return self.chart
        return self._lookup(self.charts, name, "chart")

    def to_text(self) -> str:
        """Canonical manifest text; parsing it gives back the same objects."""
        chart_names = {c.coord_names: n for n, c in self.charts.items()}

        def on(chart: Chart) -> str:
            return "" if chart == self.chart else f" on {chart_names[chart.coord_names]}"

        lines = [MANIFEST_HEADER]
        if self.chart_declared:
            lines.append("chart " + ", ".join(self.chart.coord_names))
        lines += [f"chart {name} = " + ", ".join(c.coord_names) for name, c in self.charts.items()]
        for name, value in self.fields.items():
            flag = ", closed" if name in self.closed else ""
            lines.append(f"{name}{on(value.chart)} = {value.to_text()}{flag}")
        for name, fields in self.frames.items():
            lines.append(f"frame {name}{on(fields[0].chart)} = " + ", ".join(v.to_text() for v in fields))
        lines += [f"point {name} = " + ", ".join(str(c) for c in p) for name, p in self.points.items()]
        lines += [f"box {name} = " + "x".join(f"[{lo},{hi}]" for lo, hi in b) for name, b in self.boxes.items()]
        for name, tube in self.tubes.items():
            normal = ", ".join(tube.chart.coord_names[i] for i in tube.normal)
            lines.append(f"tube {name}{on(tube.chart)} = {normal} scale {tube.scale}")
        lines += [f"polarization {name} = " + ", ".join(src) for name, src in self.polarization_sources.items()]
        lines += [f"set {name} = {value}" for name, value in self.params.items()]
        return "\n".join(lines) + "\n"


def _strip(line: str) -> str:
    return line.split("#", 1)[0].rstrip()


def _parse_lines(text: str) -> list[_Statement]:
    statements = []
    lines = text.splitlines()
    if lines and lines[0].startswith("# presymplectic-strata manifest") and lines[0].strip() != MANIFEST_HEADER:
        raise ManifestError(f"Unsupported manifest header {lines[0].strip()!r}", 1, 1, (MANIFEST_HEADER,))
    for line_no, raw in enumerate(lines, start=1):
        line = _strip(raw)
        if not line.strip():
            continue
        try:
            result = _STATEMENT.parse_string(line, parse_all=True)
        except pp.ParseBaseException as exc:
            raise ManifestError(f"Syntax error: {exc.msg}", line_no, exc.col, _expected(exc)) from None
        statements.append(_Statement(line_no, line, result))
    return statements


def _infer_chart(statements: Sequence[_Statement]) -> Chart:
    top = 0
    for st in statements:
        if st.chart_name is not None:
            continue
        texts = [s.text for tree in st.trees() for s in _walk(tree)]
        if st.kind == "tube":
            texts += list(st.result["normal"])
        for text in texts:
            bare = text[3:] if text.startswith("d/d") else text
            match = _DEFAULT_COORD.fullmatch(bare) or _DEFAULT_COORD.fullmatch(bare[1:])
            if match:
                top = max(top, int(match.group(1)))
    if not top:
        raise ManifestError("No chart declared and no coordinates x1, x2, ... in use", 1, 1, ("chart",))
    return Chart(tuple(f"x{i}" for i in range(1, top + 1)))


def parse_manifest(text: str) -> Manifest:
    """Parse and resolve a manifest; forms declared ``closed`` are checked to satisfy ``d = 0``."""
    statements = _parse_lines(text)

    default: Chart | None = None
    charts: dict[str, Chart] = {}
    for st in (s for s in statements if s.kind == "chart"):
        try:
            chart = Chart(tuple(st.result["coords"]))
        except ValueError as exc:
            raise st.error(str(exc), 0) from None
        if st.name is None:
            if default is not None:
                raise st.error("Default chart declared twice", 0)
            default = chart
        elif st.name in charts:
            raise st.error(f"Chart {st.name!r} declared twice", 0)
        else:
            charts[st.name] = chart
    declared = default is not None
    default = default or _infer_chart(statements)

    def chart_of(st: _Statement) -> Chart:
        name = st.chart_name
        if name is None:
            return default
        if name not in charts:
            raise st.error(f"Unknown chart {name!r}", st.line.find(f" on {name}") + 4, sorted(charts))
        return charts[name]

    fields: dict[str, GradedField] = {}
    frames: dict[str, tuple[MultiVector, ...]] = {}
    points: dict[str, tuple[Rational, ...]] = {}
    boxes: dict[str, Box] = {}
    tubes: dict[str, TubeSystem] = {}
    polarizations: dict[str, Polarization] = {}
    sources: dict[str, tuple[str, ...]] = {}
    params: dict[str, str] = {}
    closed: set[str] = set()
    taken: set[str] = set()

    for st in statements:
        kind, name = st.kind, st.name
        if kind == "chart":
            continue
        if name in taken:
            raise st.error(f"{name!r} is defined twice", st.line.find(name))
        taken.add(name)

        if kind == "form":
            value = _Evaluator(chart_of(st), fields, st).evaluate(st.result["value"][0])
            if "closed" in st.result and st.result.get("flag", "true") == "true":
                if not isinstance(value, DiffForm):
                    raise st.error(f"{name!r} is declared closed but is not a form", 0)
                d_value = exterior_d(value)
                if not d_value.is_zero:
                    raise st.error(f"{name!r} is declared closed but d({name}) = {d_value.to_text()}", 0)
                closed.add(name)
            fields[name] = value
        elif kind == "frame":
            evaluator = _Evaluator(chart_of(st), fields, st)
            vectors = []
            for tree in st.trees():
                v = evaluator.evaluate(tree)
                if isinstance(v, DiffForm) and v.is_zero:
                    v = MultiVector.zero(v.chart, 1)
                if not isinstance(v, MultiVector) or v.degree != 1:
                    raise st.error(f"Frame {name!r} needs vector fields", _first_loc(tree), ("d/dx...",))
                vectors.append(v)
            frames[name] = tuple(vectors)
        elif kind == "point":
            points[name] = tuple(Rational(c) for c in st.result["values"])
        elif kind == "box":
            try:
                boxes[name] = parse_box(st.result["text"])
            except ValueError as exc:
                raise st.error(str(exc), st.line.find(st.result["text"])) from None
        elif kind == "tube":
            chart = chart_of(st)
            unknown = [c for c in st.result["normal"] if c not in chart.coord_names]
            if unknown:
                raise st.error(f"Unknown normal coordinate {unknown[0]!r}", st.line.find(unknown[0]), chart.coord_names)
            normal = tuple(chart.index(c) for c in st.result["normal"])
            tubes[name] = TubeSystem(chart, normal, Rational(st.result.get("scale", 1)))
        elif kind == "polarization":
            names = (st.result["form"], st.result["kernel"])
            if "complement" in st.result:
                names += (st.result["complement"],)
            try:
                omega = FormField(fields[names[0]])
                f_frame = FrameDistribution(frames[names[1]][0].chart, frames[names[1]])
                hint = None
                if len(names) > 2:
                    hint = FrameDistribution(frames[names[2]][0].chart, frames[names[2]], None, f_frame.base_point)
                polarizations[name] = polarization_complement(omega, f_frame, hint)
            except KeyError as exc:
                raise st.error(f"Unresolved name {exc.args[0]!r}", st.line.find(exc.args[0])) from None
            except (StrataError, ValueError) as exc:
                raise st.error(f"Polarization {name!r}: {exc}", 0) from None
            sources[name] = names
        else:
            params[name] = st.result["text"].strip()

    logger.debug(f"Manifest: chart {default.coord_names}, {len(fields)} fields, {len(frames)} frames")
    return Manifest(
        chart=default,
        charts=charts,
        fields=fields,
        frames=frames,
        points=points,
        boxes=boxes,
        tubes=tubes,
        polarizations=polarizations,
        params=params,
        closed=frozenset(closed),
        chart_declared=declared,
        polarization_sources=sources,
    )


def parse_field(text: str, chart: Chart, known: Mapping[str, GradedField] | None = None) -> GradedField:
    """One expression on ``chart``, for command-line options."""
    statement = _Statement(1, text, pp.ParseResults())
    try:
        tree = pp.Group(EXPRESSION).parse_string(text, parse_all=True)[0][0]
    except pp.ParseBaseException as exc:
        raise ManifestError(f"Syntax error: {exc.msg}", 1, exc.col, _expected(exc)) from None
    return _Evaluator(chart, known or {}, statement).evaluate(tree)


def load_manifest(path) -> Manifest:
    with open(path, encoding="utf-8") as f:
        return parse_manifest(f.read())

"""Binary threshold decision trees over named lab features.

A rule file looks like::

    rule "yan2020";
    feature LDH unit "U/L" assay_sensitive;
    feature hs_CRP unit "mg/L";
    tree
      if LDH >= 365 then
        leaf Death
      else
        if hs_CRP >= 41.2 then leaf Death else leaf Survival

``parse_rule`` turns text into an immutable :class:`RuleTree`, ``print_rule``
produces the canonical text, and ``predict`` walks the tree for one patient.
"""

from __future__ import annotations

import math
import operator
import re
import sys
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Mapping, NamedTuple, Union

from .errors import (
    DegenerateRule,
    DuplicateFeature,
    MissingFeature,
    NonFiniteValue,
    RuleError,
    RuleSyntaxError,
    UnknownFeature,
)
from .numfmt import format_number

MAX_DEPTH = 256

COMPARATORS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}
_NEGATED = {"<": ">=", "<=": ">", ">": "<=", ">=": "<"}

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
KEYWORDS = frozenset(
    {"rule", "feature", "unit", "assay_sensitive", "tree", "leaf", "if", "then", "else", "Survival", "Death"}
)


class Outcome(str, Enum):
    SURVIVAL = "Survival"
    DEATH = "Death"


@dataclass(frozen=True)
class FeatureDef:
    name: str
    unit: str
    assay_sensitive: bool = False

    def __post_init__(self) -> None:
        if not _IDENT_RE.fullmatch(self.name) or self.name in KEYWORDS:
            raise RuleError(f"invalid feature name {self.name!r}")
        if not self.unit:
            raise RuleError(f"feature {self.name!r} has an empty unit")


@dataclass(frozen=True)
class Leaf:
    outcome: Outcome


@dataclass(frozen=True)
class Split:
    """Internal node: go to ``if_true`` when ``value <cmp> threshold`` holds."""

    feature: str
    cmp: str
    threshold: float
    if_true: Node
    if_false: Node

    def __post_init__(self) -> None:
        if self.cmp not in COMPARATORS:
            raise RuleError(f"unknown comparator {self.cmp!r}")
        if not math.isfinite(self.threshold):
            raise RuleError(f"threshold for {self.feature!r} is not finite")

    def test(self, value: float) -> bool:
        return COMPARATORS[self.cmp](value, self.threshold)


Node = Union[Leaf, Split]


class Condition(NamedTuple):
    """One decision on a root-to-leaf path; ``holds`` is the branch taken."""

    feature: str
    cmp: str
    threshold: float
    holds: bool

    @property
    def relation(self) -> str:
        return self.cmp if self.holds else _NEGATED[self.cmp]


class LeafPath(NamedTuple):
    outcome: Outcome
    conditions: tuple[Condition, ...]


@dataclass(frozen=True)
class RuleTree:
    name: str
    features: tuple[FeatureDef, ...]
    root: Node

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(self.features))
        seen = set()
        for f in self.features:
            if f.name in seen:
                raise DuplicateFeature(f"feature {f.name!r} declared twice")
            seen.add(f.name)
        for split in self.splits():
            if split.feature not in seen:
                raise UnknownFeature(f"node references undeclared feature {split.feature!r}")
        if self.depth > MAX_DEPTH:
            raise RuleError(f"tree deeper than {MAX_DEPTH}")
        reachable = {path.outcome for path in leaf_paths(self) if path_box(path.conditions) is not None}
        if reachable != set(Outcome):
            only = ", ".join(sorted(o.value for o in reachable)) or "none"
            raise DegenerateRule(f"rule {self.name!r} can only reach outcome {only}")

    def feature(self, name: str) -> FeatureDef:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def assay_sensitive(self) -> frozenset[str]:
        return frozenset(f.name for f in self.features if f.assay_sensitive)

    @property
    def used_features(self) -> tuple[str, ...]:
        """Features referenced by at least one split, in declaration order."""
        used = {s.feature for s in self.splits()}
        return tuple(f.name for f in self.features if f.name in used)

    @property
    def depth(self) -> int:
        """Number of splits on the longest root-to-leaf path."""
        best = 0
        stack = [(self.root, 0)]
        while stack:
            node, d = stack.pop()
            if isinstance(node, Split):
                stack.append((node.if_true, d + 1))
                stack.append((node.if_false, d + 1))
            else:
                best = max(best, d)
        return best

    def splits(self) -> Iterator[Split]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Split):
                yield node
                stack.append(node.if_false)
                stack.append(node.if_true)


def leaf_paths(tree: RuleTree) -> list[LeafPath]:
    """Every root-to-leaf path, left (true) branches first."""
    out = []
    stack: list[tuple[Node, tuple[Condition, ...]]] = [(tree.root, ())]
    while stack:
        node, conds = stack.pop()
        if isinstance(node, Leaf):
            out.append(LeafPath(node.outcome, conds))
            continue
        stack.append((node.if_false, conds + (Condition(node.feature, node.cmp, node.threshold, False),)))
        stack.append((node.if_true, conds + (Condition(node.feature, node.cmp, node.threshold, True),)))
    return out


def path_box(
    conditions: tuple[Condition, ...],
    bounds: Mapping[str, tuple[float, float]] | None = None,
    margin: float = 0.0,
) -> dict[str, tuple[float, float]] | None:
    """Closed per-feature intervals satisfying all ``conditions``, or ``None`` if empty.

    With ``margin == 0`` strict comparisons are resolved exactly over doubles
    (``x > t`` becomes ``x >= nextafter(t, +inf)``). With a positive margin every
    bound is kept ``margin`` away from its threshold regardless of strictness.
    Features absent from ``bounds`` default to the whole finite real line.
    """
    big = sys.float_info.max
    box = dict(bounds or {})
    for c in conditions:
        lo, hi = box.get(c.feature, (-big, big))
        rel = c.relation
        if rel in (">", ">="):
            if margin:
                edge = c.threshold + margin
            else:
                edge = math.nextafter(c.threshold, math.inf) if rel == ">" else c.threshold
            lo = max(lo, edge)
        else:
            if margin:
                edge = c.threshold - margin
            else:
                edge = math.nextafter(c.threshold, -math.inf) if rel == "<" else c.threshold
            hi = min(hi, edge)
        box[c.feature] = (lo, hi)
    if any(lo > hi for lo, hi in box.values()):
        return None
    return box


# -- parsing --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<skip>[ \t\r\f\v]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<number>[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<cmp><=|>=|<|>)
  | (?P<semi>;)
  | (?P<bad>[\s\S])
    """,
    re.VERBOSE,
)
_ESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t"}


class Token(NamedTuple):
    kind: str  # keyword, ident, number, string, cmp, semi, eof
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    append = tokens.append
    line, line_start = 1, 0
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "skip":
            continue
        if kind == "nl":
            line += 1
            line_start = m.end()
            continue
        word = m.group()
        col = m.start() - line_start + 1
        if kind == "bad":
            if word == '"':
                raise RuleSyntaxError("unterminated string", line, col)
            raise RuleSyntaxError(f"unexpected character {word!r}", line, col)
        if kind == "ident" and word in KEYWORDS:
            kind = "keyword"
        append(Token(kind, word, line, col))
    tokens.append(Token("eof", "", line, len(text) - line_start + 1))
    return tokens


def _unquote(tok: Token) -> str:
    body = tok.text[1:-1]
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            esc = body[i + 1]
            if esc not in _ESCAPES:
                raise RuleSyntaxError(f"unknown escape \\{esc}", tok.line, tok.column + i + 1)
            out.append(_ESCAPES[esc])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _describe(tok: Token) -> str:
    return "end of input" if tok.kind == "eof" else repr(tok.text)


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0
        self.declared: dict[str, FeatureDef] = {}

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def fail(self, expected: str) -> RuleSyntaxError:
        tok = self.tok
        return RuleSyntaxError(f"expected {expected}, found {_describe(tok)}", tok.line, tok.column)

    def keyword(self, word: str) -> Token:
        if self.tok.kind != "keyword" or self.tok.text != word:
            raise self.fail(repr(word))
        return self.advance()

    def expect(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            raise self.fail(what)
        return self.advance()

    def advance(self) -> Token:
        tok = self.tok
        self.i += 1
        return tok

    def rule_file(self) -> RuleTree:
        self.keyword("rule")
        name = _unquote(self.expect("string", "quoted rule name"))
        self.expect("semi", "';'")
        while self.tok.kind == "keyword" and self.tok.text == "feature":
            self.feature_decl()
        tree_tok = self.keyword("tree")
        root = self.node(1)
        if self.tok.kind != "eof":
            raise self.fail("end of input")
        try:
            return RuleTree(name, tuple(self.declared.values()), root)
        except DegenerateRule as exc:
            raise DegenerateRule(exc.message, tree_tok.line, tree_tok.column) from None

    def feature_decl(self) -> None:
        self.keyword("feature")
        name_tok = self.expect("ident", "feature name")
        self.keyword("unit")
        unit_tok = self.expect("string", "quoted unit")
        unit = _unquote(unit_tok)
        if not unit:
            raise RuleSyntaxError("unit must not be empty", unit_tok.line, unit_tok.column)
        sensitive = False
        if self.tok.kind == "keyword" and self.tok.text == "assay_sensitive":
            self.advance()
            sensitive = True
        self.expect("semi", "';'")
        if name_tok.text in self.declared:
            raise DuplicateFeature(
                f"feature {name_tok.text!r} declared twice", name_tok.line, name_tok.column
            )
        self.declared[name_tok.text] = FeatureDef(name_tok.text, unit, sensitive)

    def node(self, depth: int) -> Node:
        # depth is the number of splits on the path if this node is a split
        tok = self.tok
        if tok.kind == "keyword" and tok.text == "leaf":
            self.advance()
            out = self.tok
            if out.kind != "keyword" or out.text not in ("Survival", "Death"):
                raise self.fail("'Survival' or 'Death'")
            self.advance()
            return Leaf(Outcome(out.text))
        if tok.kind == "keyword" and tok.text == "if":
            if depth > MAX_DEPTH:
                raise RuleSyntaxError(f"tree nested deeper than {MAX_DEPTH} splits", tok.line, tok.column)
            self.advance()
            feat = self.expect("ident", "feature name")
            if feat.text not in self.declared:
                raise UnknownFeature(f"undeclared feature {feat.text!r}", feat.line, feat.column)
            cmp = self.expect("cmp", "comparator")
            num = self.expect("number", "threshold number")
            threshold = float(num.text)
            if not math.isfinite(threshold):
                raise RuleSyntaxError(f"threshold {num.text} out of range", num.line, num.column)
            self.keyword("then")
            if_true = self.node(depth + 1)
            self.keyword("else")
            if_false = self.node(depth + 1)
            return Split(feat.text, cmp.text, threshold, if_true, if_false)
        raise self.fail("'leaf' or 'if'")


def parse_rule(text: str | bytes) -> RuleTree:
    """Parse rule-DSL source into a validated tree.

    Raises a :class:`~ruleval.errors.RuleError` subclass carrying line and
    column on any bad input; no other exception escapes.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            head = bytes(text)[: exc.start]
            line = head.count(b"\n") + 1
            column = exc.start - (head.rfind(b"\n") + 1) + 1
            raise RuleSyntaxError("invalid UTF-8", line, column) from None
    if text.startswith("\ufeff"):
        text = text[1:]
    return _Parser(tokenize(text)).rule_file()


# -- printing -------------------------------------------------------------------------


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t") + '"'


def print_rule(tree: RuleTree) -> str:
    """Canonical source for ``tree``; structurally equal trees print identically."""
    lines = [f"rule {_quote(tree.name)};"]
    for f in tree.features:
        flag = " assay_sensitive" if f.assay_sensitive else ""
        lines.append(f"feature {f.name} unit {_quote(f.unit)}{flag};")
    lines.append("tree")
    _emit(tree.root, 1, lines)
    return "\n".join(lines) + "\n"


def _emit(node: Node, indent: int, lines: list[str]) -> None:
    pad = "  " * indent
    if isinstance(node, Leaf):
        lines.append(f"{pad}leaf {node.outcome.value}")
        return
    lines.append(f"{pad}if {node.feature} {node.cmp} {format_number(node.threshold)} then")
    _emit(node.if_true, indent + 1, lines)
    lines.append(f"{pad}else")
    _emit(node.if_false, indent + 1, lines)


# -- prediction -----------------------------------------------------------------------


class PathStep(NamedTuple):
    feature: str
    value: float
    cmp: str
    threshold: float
    taken: bool  # True: the "then" branch


@dataclass(frozen=True)
class PredictionTrace:
    outcome: Outcome
    path: tuple[PathStep, ...]


def predict(tree: RuleTree, labs: Mapping[str, float]) -> PredictionTrace:
    """Walk ``tree`` with harmonized lab values.

    Only features on the taken path need to be present.
    """
    node = tree.root
    path = []
    while isinstance(node, Split):
        value = labs.get(node.feature)
        if value is None:
            raise MissingFeature(node.feature)
        if not math.isfinite(value):
            raise NonFiniteValue(node.feature, value)
        taken = node.test(value)
        path.append(PathStep(node.feature, value, node.cmp, node.threshold, taken))
        node = node.if_true if taken else node.if_false
    return PredictionTrace(node.outcome, tuple(path))


def replay(tree: RuleTree, trace: PredictionTrace) -> Outcome:
    """Follow a recorded path through ``tree``; raises ValueError if it does not fit."""
    node = tree.root
    for step in trace.path:
        if not isinstance(node, Split):
            raise ValueError("trace is longer than the tree path")
        if (step.feature, step.cmp, step.threshold) != (node.feature, node.cmp, node.threshold):
            raise ValueError(f"trace step {step} does not match node on {node.feature!r}")
        if node.test(step.value) != step.taken:
            raise ValueError(f"recorded branch for {step.feature!r} contradicts the comparator")
        node = node.if_true if step.taken else node.if_false
    if not isinstance(node, Leaf):
        raise ValueError("trace ends before reaching a leaf")
    return node.outcome

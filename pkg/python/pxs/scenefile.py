"""
Synthetic scene description parser.

Parses ``.scene`` files into a small intermediate representation that
``pxs.synth`` turns into a renderable scene.

Grammar:
    scene       = annotation* (shape | path)*
    annotation  = '@' IDENT '=' VALUE
    shape       = 'shape' KIND IDENT '{' property* '}'
    path        = 'path' PATH_KIND '{' property* '}'
    property    = IDENT '=' VALUE+ ';'
    KIND        = 'plane' | 'cylinder' | 'sphere'
    PATH_KIND   = 'static' | 'orbit' | 'dolly'
    VALUE       = NUMBER | FLOAT | STRING | IDENT

Example:
    @name = "corner"
    @frames = 60

    shape plane floor {
        origin = 0 0 0;
        normal = 0 0 1;
        u = 0 4;
        v = 0 4;
        texture = checker 200 200 200 60 60 60 0.5;
    }

    path static { eye = 3 1 1.5; target = 1 3 0.5; }
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pxs.types import PxsConfigError, PxsIOError

SHAPE_KINDS = {"plane", "cylinder", "sphere"}
PATH_KINDS = {"static", "orbit", "dolly"}

# Properties that may appear more than once in a block
REPEATABLE = {"hole"}


@dataclass
class Block:
    """A ``shape`` or ``path`` block."""
    keyword: str
    kind: str
    name: str
    properties: Dict[str, List[Any]] = field(default_factory=dict)
    repeated: Dict[str, List[List[Any]]] = field(default_factory=dict)
    line: int = 0

    def get(self, key: str, default: Optional[List[Any]] = None) -> Optional[List[Any]]:
        return self.properties.get(key, default)


@dataclass
class SceneDescription:
    """Parsed scene file."""
    annotations: Dict[str, Any] = field(default_factory=dict)
    shapes: List[Block] = field(default_factory=list)
    path: Optional[Block] = None


class SceneParseError(PxsConfigError):
    """Scene file error with its position."""

    def __init__(self, message: str, line: int, col: int = 0):
        self.line = line
        self.col = col
        super().__init__(f"line {line}:{col}: {message}")


Token = Tuple[str, str, int, int]


class Tokenizer:
    """Tokenizer for scene files."""

    TOKEN_PATTERNS = [
        ("COMMENT", r"(//|#)[^\n]*"),
        ("WHITESPACE", r"\s+"),
        ("ANNOTATION", r"@[a-zA-Z_][a-zA-Z0-9_]*"),
        ("FLOAT", r"[-+]?(\d+\.\d*|\.\d+)([eE][-+]?\d+)?|[-+]?\d+[eE][-+]?\d+"),
        ("NUMBER", r"[-+]?\d+"),
        ("STRING", r'"[^"\n]*"'),
        ("IDENT", r"[a-zA-Z_][a-zA-Z0-9_]*"),
        ("LBRACE", r"\{"),
        ("RBRACE", r"\}"),
        ("EQUALS", r"="),
        ("SEMICOLON", r";"),
        ("MISMATCH", r"."),
    ]

    KEYWORDS = {"shape", "path"}

    def __init__(self, text: str):
        self.text = text
        self.tokens: List[Token] = []
        self._tokenize()

    def _tokenize(self) -> None:
        combined = "|".join(f"(?P<{name}>{pattern})" for name, pattern in self.TOKEN_PATTERNS)
        regex = re.compile(combined)
        line_end = 0

        for match in regex.finditer(self.text):
            kind = match.lastgroup
            value = match.group()
            start = match.start()

            line = self.text.count("\n", 0, start) + 1
            line_start = self.text.rfind("\n", 0, start) + 1
            col = start - line_start + 1

            if kind in ("COMMENT", "WHITESPACE"):
                continue
            if kind == "MISMATCH":
                raise SceneParseError(f"unexpected character '{value}'", line, col)
            if kind == "IDENT" and value in self.KEYWORDS:
                kind = "KEYWORD"
            self.tokens.append((kind, value, line, col))
            line_end = line

        self.tokens.append(("EOF", "", line_end, 0))

    def __iter__(self):
        return iter(self.tokens)


class Parser:
    """Recursive descent parser for scene files."""

    VALUE_KINDS = {"FLOAT", "NUMBER", "STRING", "IDENT"}

    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0

    def current(self) -> Token:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else ("EOF", "", 0, 0)

    def advance(self) -> Token:
        token = self.current()
        self.pos += 1
        return token

    def expect(self, kind: str, value: Optional[str] = None) -> Token:
        token = self.current()
        if token[0] != kind:
            raise SceneParseError(f"expected {kind}, got {token[0]} '{token[1]}'", token[2], token[3])
        if value is not None and token[1] != value:
            raise SceneParseError(f"expected '{value}', got '{token[1]}'", token[2], token[3])
        return self.advance()

    def parse(self) -> SceneDescription:
        scene = SceneDescription()

        while self.current()[0] == "ANNOTATION":
            name, value = self._parse_annotation()
            scene.annotations[name] = value

        while self.current()[0] != "EOF":
            token = self.current()
            if token[0] == "KEYWORD" and token[1] == "shape":
                scene.shapes.append(self._parse_block("shape", SHAPE_KINDS, named=True))
            elif token[0] == "KEYWORD" and token[1] == "path":
                if scene.path is not None:
                    raise SceneParseError("only one camera path is allowed", token[2], token[3])
                scene.path = self._parse_block("path", PATH_KINDS, named=False)
            else:
                raise SceneParseError(f"expected 'shape' or 'path', got '{token[1]}'", token[2], token[3])

        names = [b.name for b in scene.shapes]
        for block in scene.shapes:
            if names.count(block.name) > 1:
                raise SceneParseError(f"duplicate shape name '{block.name}'", block.line)
        return scene

    def _parse_annotation(self) -> Tuple[str, Any]:
        """Parse @name = value"""
        token = self.expect("ANNOTATION")
        self.expect("EQUALS")
        return token[1][1:], self._parse_value()

    def _parse_value(self) -> Any:
        token = self.current()
        if token[0] == "FLOAT":
            self.advance()
            return float(token[1])
        if token[0] == "NUMBER":
            self.advance()
            return int(token[1])
        if token[0] == "STRING":
            self.advance()
            return token[1][1:-1]
        if token[0] == "IDENT":
            self.advance()
            return token[1]
        raise SceneParseError(f"expected value, got {token[0]} '{token[1]}'", token[2], token[3])

    def _parse_block(self, keyword: str, kinds: set, named: bool) -> Block:
        """Parse: keyword KIND NAME? { key = values; ... }"""
        start = self.expect("KEYWORD", keyword)
        kind_token = self.expect("IDENT")
        if kind_token[1] not in kinds:
            raise SceneParseError(
                f"unknown {keyword} kind '{kind_token[1]}' (expected one of {', '.join(sorted(kinds))})",
                kind_token[2],
                kind_token[3],
            )
        name = self.expect("IDENT")[1] if named else kind_token[1]
        block = Block(keyword, kind_token[1], name, line=start[2])

        self.expect("LBRACE")
        while self.current()[0] != "RBRACE":
            key_token = self.expect("IDENT")
            self.expect("EQUALS")
            values = []
            while self.current()[0] in self.VALUE_KINDS:
                values.append(self._parse_value())
            if not values:
                token = self.current()
                raise SceneParseError(f"property '{key_token[1]}' has no value", token[2], token[3])
            self.expect("SEMICOLON")
            key = key_token[1]
            if key in REPEATABLE:
                block.repeated.setdefault(key, []).append(values)
            elif key in block.properties:
                raise SceneParseError(f"duplicate property '{key}'", key_token[2], key_token[3])
            else:
                block.properties[key] = values
        self.expect("RBRACE")
        return block


def parse_scene(text: str) -> SceneDescription:
    """Parse scene file text."""
    tokenizer = Tokenizer(text)
    parser = Parser(list(tokenizer))
    return parser.parse()


def parse_file(path: Union[str, Path]) -> SceneDescription:
    """Parse a scene file from disk."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise PxsIOError(f"cannot read scene file {path}: {e}") from None
    return parse_scene(text)

"""Lexer and recursive-descent parser for MiniC, a restricted C subset.

One function per source file. The parser produces a pre-order numbered AST
whose nodes carry the source tokens they own: leaves own their single token,
interior nodes own the structural tokens (keywords, braces, operators) that
no descendant claims. Together the owned token lists partition the token
stream, which downstream graph construction and vectorization rely on.
"""

from dataclasses import dataclass, field

from .errors import (
    IllegalCharacter,
    ParseError,
    UnsupportedConstruct,
    UnterminatedString,
)

KEYWORDS = {"int", "char", "void", "if", "else", "while", "for", "return"}

# Recognized so we can reject them with a clear error instead of a confusing
# parse failure on what would otherwise lex as an identifier.
UNSUPPORTED_KEYWORDS = {
    "switch", "case", "default", "goto", "struct", "union", "enum", "typedef",
    "do", "break", "continue", "sizeof", "static", "const", "unsigned",
    "signed", "long", "short", "float", "double", "extern", "volatile",
}

TYPE_KEYWORDS = {"int", "char", "void"}

# Maximal-munch order: two-char operators before their one-char prefixes.
TWO_CHAR_OPS = ("<=", ">=", "==", "!=", "&&", "||")
ONE_CHAR_OPS = "=<>+-*/%!&"
PUNCTUATION = "(){}[];,"


@dataclass(frozen=True)
class Token:
    kind: str  # keyword | identifier | int-literal | string-literal | operator | punctuation
    text: str
    line: int  # 1-based
    col: int   # 1-based


def tokenize(source: str) -> list[Token]:
    """Lex MiniC source into tokens; comments and whitespace are dropped."""
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(source)

    def advance(k: int) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = source[i]
        if c in " \t\r\n":
            advance(1)
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                advance(1)
            continue
        if source.startswith("/*", i):
            start_line, start_col = line, col
            advance(2)
            while i < n and not source.startswith("*/", i):
                advance(1)
            if i >= n:
                raise IllegalCharacter("unterminated block comment", start_line, start_col)
            advance(2)
            continue
        if c.isalpha() or c == "_":
            start_line, start_col = line, col
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            kind = "keyword" if text in KEYWORDS or text in UNSUPPORTED_KEYWORDS else "identifier"
            tokens.append(Token(kind, text, start_line, start_col))
            advance(j - i)
            continue
        if c.isdigit():
            start_line, start_col = line, col
            j = i
            while j < n and source[j].isdigit():
                j += 1
            tokens.append(Token("int-literal", source[i:j], start_line, start_col))
            advance(j - i)
            continue
        if c == '"':
            start_line, start_col = line, col
            j = i + 1
            while j < n and source[j] != '"':
                if source[j] == "\n":
                    raise UnterminatedString("unterminated string literal", start_line, start_col)
                if source[j] == "\\" and j + 1 < n:
                    j += 1
                j += 1
            if j >= n:
                raise UnterminatedString("unterminated string literal", start_line, start_col)
            tokens.append(Token("string-literal", source[i:j + 1], start_line, start_col))
            advance(j + 1 - i)
            continue
        two = source[i:i + 2]
        if two in TWO_CHAR_OPS:
            tokens.append(Token("operator", two, line, col))
            advance(2)
            continue
        if c in ONE_CHAR_OPS:
            tokens.append(Token("operator", c, line, col))
            advance(1)
            continue
        if c in PUNCTUATION:
            tokens.append(Token("punctuation", c, line, col))
            advance(1)
            continue
        raise IllegalCharacter(f"illegal character {c!r}", line, col)
    return tokens


# AST node kinds, fixed set.
NODE_KINDS = frozenset({
    "Function", "ParamList", "Block", "Decl", "Assign", "If", "While", "For",
    "Return", "Call", "BinaryOp", "UnaryOp", "Index", "Identifier", "Literal",
})

STATEMENT_KINDS = frozenset({"Decl", "Assign", "If", "While", "For", "Return"})


@dataclass
class AstNode:
    kind: str
    line: int
    tokens: list[str] = field(default_factory=list)
    children: list["AstNode"] = field(default_factory=list)
    id: int = -1
    meta: dict = field(default_factory=dict)  # renderer hints, not serialized

    @property
    def child_ids(self) -> list[int]:
        return [c.id for c in self.children]

    def walk(self):
        """Pre-order traversal."""
        yield self
        for c in self.children:
            yield from c.walk()


def _number_preorder(root: AstNode) -> None:
    for i, node in enumerate(root.walk()):
        node.id = i


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token helpers --

    def peek(self, offset: int = 0) -> Token | None:
        idx = self.pos + offset
        return self.tokens[idx] if idx < len(self.tokens) else None

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def _error_loc(self) -> tuple[int, int]:
        if self.at_end():
            if self.tokens:
                t = self.tokens[-1]
                return t.line, t.col + len(t.text)
            return 1, 1
        t = self.tokens[self.pos]
        return t.line, t.col

    def fail(self, message: str, expected=()) -> None:
        line, col = self._error_loc()
        raise ParseError(message, line, col, expected)

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t is None or t.text != text:
            got = t.text if t else "end of input"
            self.fail(f"unexpected {got!r}", expected={text})
        self.pos += 1
        return t

    def accept(self, text: str) -> Token | None:
        t = self.peek()
        if t is not None and t.text == text:
            self.pos += 1
            return t
        return None

    def expect_identifier(self) -> Token:
        t = self.peek()
        if t is None or t.kind != "identifier":
            got = t.text if t else "end of input"
            if t is not None and t.text in UNSUPPORTED_KEYWORDS:
                raise UnsupportedConstruct(
                    f"unsupported construct {t.text!r}", t.line, t.col)
            self.fail(f"unexpected {got!r}, expected identifier", expected={"<identifier>"})
        self.pos += 1
        return t

    def check_unsupported(self) -> None:
        t = self.peek()
        if t is not None and t.text in UNSUPPORTED_KEYWORDS:
            raise UnsupportedConstruct(f"unsupported construct {t.text!r}", t.line, t.col)

    # -- grammar --

    def parse_program(self) -> AstNode:
        if self.at_end():
            self.fail("empty input", expected=TYPE_KEYWORDS)
        func = self.parse_function()
        if not self.at_end():
            t = self.peek()
            raise UnsupportedConstruct(
                "multi-function files are not supported", t.line, t.col)
        _number_preorder(func)
        return func

    def parse_type(self, owner: AstNode) -> list[str]:
        self.check_unsupported()
        t = self.peek()
        if t is None or t.text not in TYPE_KEYWORDS:
            self.fail("expected type specifier", expected=TYPE_KEYWORDS)
        self.pos += 1
        toks = [t.text]
        owner.tokens.append(t.text)
        while (star := self.accept("*")) is not None:
            toks.append(star.text)
            owner.tokens.append(star.text)
        return toks

    def parse_function(self) -> AstNode:
        start = self.peek()
        node = AstNode("Function", start.line)
        ret_type = self.parse_type(node)
        name = self.expect_identifier()
        node.tokens.append(name.text)
        node.meta["ret_type"] = ret_type
        node.meta["name"] = name.text
        node.children.append(self.parse_param_list())
        node.children.append(self.parse_block())
        return node

    def parse_param_list(self) -> AstNode:
        start = self.peek()
        if start is None:
            self.fail("expected '('", expected={"("})
        node = AstNode("ParamList", start.line)
        node.tokens.append(self.expect("(").text)
        specs = []
        if self.peek() is not None and self.peek().text != ")":
            while True:
                ptype = self.parse_type(node)
                pname = self.expect_identifier()
                ident = AstNode("Identifier", pname.line, tokens=[pname.text])
                is_array = False
                if self.accept("[") is not None:
                    node.tokens.append("[")
                    node.tokens.append(self.expect("]").text)
                    is_array = True
                node.children.append(ident)
                specs.append((tuple(ptype), pname.text, is_array))
                comma = self.accept(",")
                if comma is None:
                    break
                node.tokens.append(comma.text)
        node.tokens.append(self.expect(")").text)
        node.meta["params"] = specs
        return node

    def parse_block(self) -> AstNode:
        start = self.peek()
        if start is None:
            self.fail("expected '{'", expected={"{"})
        node = AstNode("Block", start.line)
        node.tokens.append(self.expect("{").text)
        while self.peek() is not None and self.peek().text != "}":
            node.children.append(self.parse_statement())
        node.tokens.append(self.expect("}").text)
        return node

    def parse_statement(self) -> AstNode:
        self.check_unsupported()
        t = self.peek()
        if t is None:
            self.fail("expected statement", expected={"<statement>"})
        if t.text == "{":
            return self.parse_block()
        if t.text in TYPE_KEYWORDS:
            return self.parse_decl()
        if t.text == "if":
            return self.parse_if()
        if t.text == "while":
            return self.parse_while()
        if t.text == "for":
            return self.parse_for()
        if t.text == "return":
            return self.parse_return()
        return self.parse_assign_or_call(statement=True)

    def parse_decl(self) -> AstNode:
        start = self.peek()
        node = AstNode("Decl", start.line)
        dtype = self.parse_type(node)
        name = self.expect_identifier()
        node.children.append(AstNode("Identifier", name.line, tokens=[name.text]))
        node.meta["decl_type"] = dtype
        is_array = False
        has_init = False
        if self.accept("[") is not None:
            node.tokens.append("[")
            size = self.peek()
            if size is None or size.kind != "int-literal":
                self.fail("array size must be an integer literal", expected={"<int-literal>"})
            self.pos += 1
            node.children.append(AstNode("Literal", size.line, tokens=[size.text]))
            node.tokens.append(self.expect("]").text)
            is_array = True
        elif self.accept("=") is not None:
            node.tokens.append("=")
            node.children.append(self.parse_expr())
            has_init = True
        node.tokens.append(self.expect(";").text)
        node.meta["is_array"] = is_array
        node.meta["has_init"] = has_init
        return node

    def parse_if(self) -> AstNode:
        start = self.expect("if")
        node = AstNode("If", start.line, tokens=["if"])
        node.tokens.append(self.expect("(").text)
        node.children.append(self.parse_expr())
        node.tokens.append(self.expect(")").text)
        node.children.append(self.parse_statement())
        if self.accept("else") is not None:
            node.tokens.append("else")
            node.children.append(self.parse_statement())
            node.meta["has_else"] = True
        else:
            node.meta["has_else"] = False
        return node

    def parse_while(self) -> AstNode:
        start = self.expect("while")
        node = AstNode("While", start.line, tokens=["while"])
        node.tokens.append(self.expect("(").text)
        node.children.append(self.parse_expr())
        node.tokens.append(self.expect(")").text)
        node.children.append(self.parse_statement())
        return node

    def parse_for(self) -> AstNode:
        start = self.expect("for")
        node = AstNode("For", start.line, tokens=["for"])
        node.tokens.append(self.expect("(").text)
        node.children.append(self.parse_assign_or_call(statement=False))
        node.tokens.append(self.expect(";").text)
        node.children.append(self.parse_expr())
        node.tokens.append(self.expect(";").text)
        node.children.append(self.parse_assign_or_call(statement=False))
        node.tokens.append(self.expect(")").text)
        node.children.append(self.parse_statement())
        return node

    def parse_return(self) -> AstNode:
        start = self.expect("return")
        node = AstNode("Return", start.line, tokens=["return"])
        if self.peek() is not None and self.peek().text != ";":
            node.children.append(self.parse_expr())
            node.meta["has_expr"] = True
        else:
            node.meta["has_expr"] = False
        node.tokens.append(self.expect(";").text)
        return node

    def parse_assign_or_call(self, statement: bool) -> AstNode:
        start = self.peek()
        if start is None:
            self.fail("expected statement", expected={"<identifier>", "*"})
        lhs = self.parse_unary()
        if self.peek() is not None and self.peek().text == "=":
            is_deref = lhs.kind == "UnaryOp" and lhs.meta.get("op") == "*"
            if lhs.kind not in ("Identifier", "Index") and not is_deref:
                self.fail("invalid assignment target", expected={"<lvalue>"})
            node = AstNode("Assign", start.line)
            node.children.append(lhs)
            node.tokens.append(self.expect("=").text)
            node.children.append(self.parse_expr())
            if statement:
                node.tokens.append(self.expect(";").text)
            node.meta["has_semi"] = statement
            return node
        if lhs.kind == "Call":
            if statement:
                lhs.tokens.append(self.expect(";").text)
                lhs.meta["is_stmt"] = True
            return lhs
        self.fail("expected '=' or call", expected={"=", "("})

    # expression precedence climbing

    def parse_expr(self) -> AstNode:
        return self.parse_binary(0)

    _LEVELS = (
        ("||",),
        ("&&",),
        ("==", "!="),
        ("<", ">", "<=", ">="),
        ("+", "-"),
        ("*", "/", "%"),
    )

    def parse_binary(self, level: int) -> AstNode:
        if level >= len(self._LEVELS):
            return self.parse_unary()
        node = self.parse_binary(level + 1)
        while True:
            t = self.peek()
            if t is None or t.text not in self._LEVELS[level]:
                return node
            self.pos += 1
            parent = AstNode("BinaryOp", node.line, tokens=[t.text])
            parent.meta["op"] = t.text
            parent.children.append(node)
            parent.children.append(self.parse_binary(level + 1))
            node = parent

    def parse_unary(self) -> AstNode:
        t = self.peek()
        if t is not None and t.text in ("-", "!", "*", "&") and t.kind == "operator":
            self.pos += 1
            node = AstNode("UnaryOp", t.line, tokens=[t.text])
            node.meta["op"] = t.text
            node.children.append(self.parse_unary())
            return node
        return self.parse_postfix()

    def parse_postfix(self) -> AstNode:
        node = self.parse_primary()
        while True:
            t = self.peek()
            if t is None:
                return node
            if t.text == "[":
                parent = AstNode("Index", node.line)
                parent.children.append(node)
                parent.tokens.append(self.expect("[").text)
                parent.children.append(self.parse_expr())
                parent.tokens.append(self.expect("]").text)
                node = parent
            elif t.text == "(":
                parent = AstNode("Call", node.line)
                if node.kind != "Identifier":
                    self.fail("call target must be a function name", expected={"<identifier>"})
                parent.children.append(node)
                parent.tokens.append(self.expect("(").text)
                if self.peek() is not None and self.peek().text != ")":
                    while True:
                        parent.children.append(self.parse_expr())
                        comma = self.accept(",")
                        if comma is None:
                            break
                        parent.tokens.append(comma.text)
                parent.tokens.append(self.expect(")").text)
                parent.meta["is_stmt"] = False
                node = parent
            else:
                return node

    def parse_primary(self) -> AstNode:
        self.check_unsupported()
        t = self.peek()
        if t is None:
            self.fail("expected expression", expected={"<expression>"})
        if t.text == "(":
            self.pos += 1
            node = self.parse_expr()
            self.expect(")")
            node.tokens.insert(0, "(")
            node.tokens.append(")")
            node.meta["parens"] = node.meta.get("parens", 0) + 1
            return node
        if t.kind == "identifier":
            self.pos += 1
            return AstNode("Identifier", t.line, tokens=[t.text])
        if t.kind in ("int-literal", "string-literal"):
            self.pos += 1
            return AstNode("Literal", t.line, tokens=[t.text])
        self.fail(f"unexpected {t.text!r} in expression",
                  expected={"<identifier>", "<literal>", "("})


def parse(tokens: list[Token]) -> AstNode:
    """Parse a token sequence into a single-function AST, pre-order numbered."""
    return _Parser(tokens).parse_program()


def parse_source(source: str) -> AstNode:
    return parse(tokenize(source))


# -- rendering --

def _render_expr(node: AstNode) -> str:
    parens = node.meta.get("parens", 0)
    if node.kind == "Identifier" or node.kind == "Literal":
        inner = node.tokens[parens] if parens else node.tokens[0]
    elif node.kind == "BinaryOp":
        inner = f"{_render_expr(node.children[0])} {node.meta['op']} {_render_expr(node.children[1])}"
    elif node.kind == "UnaryOp":
        inner = f"{node.meta['op']}{_render_expr(node.children[0])}"
    elif node.kind == "Index":
        inner = f"{_render_expr(node.children[0])}[{_render_expr(node.children[1])}]"
    elif node.kind == "Call":
        args = ", ".join(_render_expr(c) for c in node.children[1:])
        inner = f"{_render_expr(node.children[0])}({args})"
    else:
        raise ValueError(f"not an expression node: {node.kind}")
    return "(" * parens + inner + ")" * parens


def _render_stmt(node: AstNode, indent: int, out: list[str]) -> None:
    pad = "    " * indent
    if node.kind == "Block":
        out.append(pad + "{")
        for c in node.children:
            _render_stmt(c, indent + 1, out)
        out.append(pad + "}")
    elif node.kind == "Decl":
        dtype = _render_type(node.meta["decl_type"])
        name = _render_expr(node.children[0])
        if node.meta["is_array"]:
            out.append(f"{pad}{dtype}{name}[{node.children[1].tokens[0]}];")
        elif node.meta["has_init"]:
            out.append(f"{pad}{dtype}{name} = {_render_expr(node.children[1])};")
        else:
            out.append(f"{pad}{dtype}{name};")
    elif node.kind == "Assign":
        out.append(f"{pad}{_render_expr(node.children[0])} = {_render_expr(node.children[1])};")
    elif node.kind == "Call":
        out.append(pad + _render_expr_call_stmt(node) + ";")
    elif node.kind == "If":
        out.append(f"{pad}if ({_render_expr(node.children[0])})")
        _render_stmt(node.children[1], indent, out)
        if node.meta.get("has_else"):
            out.append(pad + "else")
            _render_stmt(node.children[2], indent, out)
    elif node.kind == "While":
        out.append(f"{pad}while ({_render_expr(node.children[0])})")
        _render_stmt(node.children[1], indent, out)
    elif node.kind == "For":
        init = _render_assign_nosemi(node.children[0])
        cond = _render_expr(node.children[1])
        post = _render_assign_nosemi(node.children[2])
        out.append(f"{pad}for ({init}; {cond}; {post})")
        _render_stmt(node.children[3], indent, out)
    elif node.kind == "Return":
        if node.meta.get("has_expr"):
            out.append(f"{pad}return {_render_expr(node.children[0])};")
        else:
            out.append(pad + "return;")
    else:
        raise ValueError(f"not a statement node: {node.kind}")


def _render_type(type_tokens) -> str:
    base, stars = type_tokens[0], "".join(type_tokens[1:])
    return f"{base} {stars}"


def _render_expr_call_stmt(node: AstNode) -> str:
    args = ", ".join(_render_expr(c) for c in node.children[1:])
    return f"{_render_expr(node.children[0])}({args})"


def _render_assign_nosemi(node: AstNode) -> str:
    return f"{_render_expr(node.children[0])} = {_render_expr(node.children[1])}"


def pretty_print(root: AstNode) -> str:
    """Render an AST back to compilable MiniC source (canonical layout)."""
    if root.kind != "Function":
        raise ValueError("pretty_print expects a Function root")
    rtype = _render_type(root.meta["ret_type"])
    params = ", ".join(
        _render_type(ptype) + name + ("[]" if arr else "")
        for (ptype, name, arr) in root.children[0].meta["params"]
    )
    out = [f"{rtype}{root.meta['name']}({params})"]
    _render_stmt(root.children[1], 0, out)
    return "\n".join(out) + "\n"


def dump_ast(root: AstNode) -> str:
    """Indented debug dump: one node per line with id, kind, line, tokens."""
    lines = []

    def rec(node: AstNode, depth: int) -> None:
        toks = " ".join(node.tokens)
        lines.append(f"{'  ' * depth}#{node.id} {node.kind} @{node.line} [{toks}]")
        for c in node.children:
            rec(c, depth + 1)

    rec(root, 0)
    return "\n".join(lines) + "\n"

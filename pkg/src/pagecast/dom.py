"""Forgiving HTML parsing into a navigable tree.

Built on the tokenizer in ``html.parser``; the tree conventions are our own
and intentionally small:

- unclosed tags are auto-closed (``<p>a<p>b`` gives two sibling ``p``);
- void elements never take children;
- comments are kept as nodes, script/style bodies as single text children;
- a stray end tag with no matching open tag is ignored.

Trees are immutable after parse as far as the rest of the library is
concerned; the normalizer mutates its own working copy and re-indexes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Iterator, Optional

ROOT_TAG = "root"

VOID_ELEMENTS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
})

BLOCK_TAGS = frozenset({
    "address", "article", "aside", "blockquote", "dd", "div", "dl", "dt",
    "fieldset", "figure", "footer", "h1", "h2", "h3", "h4", "h5", "h6",
    "header", "hr", "li", "ol", "p", "pre", "section", "table", "ul",
})

# Opening <key> while <value ...> is still open implicitly closes it.
_CLOSED_BY = {
    "p": BLOCK_TAGS,
    "li": frozenset({"li"}),
    "dt": frozenset({"dt", "dd"}),
    "dd": frozenset({"dt", "dd"}),
    "td": frozenset({"td", "th", "tr"}),
    "th": frozenset({"td", "th", "tr"}),
    "tr": frozenset({"tr"}),
    "option": frozenset({"option", "optgroup"}),
    "thead": frozenset({"tbody", "tfoot"}),
    "tbody": frozenset({"tbody", "tfoot"}),
}

_WS_RUN = re.compile(r"\s+")


@dataclass
class DomNode:
    kind: str  # "element" | "text" | "comment"
    tag: str = ""
    attrs: dict[str, str] = field(default_factory=dict)
    text: str = ""
    children: list["DomNode"] = field(default_factory=list)
    node_id: int = -1
    parent_id: Optional[int] = None

    def class_tokens(self) -> list[str]:
        return self.attrs.get("class", "").lower().split()


@dataclass
class DomTree:
    root: DomNode
    node_count: int


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.root = DomNode(kind="element", tag=ROOT_TAG)
        self.stack = [self.root]

    def _append(self, node: DomNode) -> None:
        self.stack[-1].children.append(node)

    def _append_text(self, data: str) -> None:
        siblings = self.stack[-1].children
        if siblings and siblings[-1].kind == "text":
            siblings[-1].text += data
        else:
            siblings.append(DomNode(kind="text", text=data))

    def handle_starttag(self, tag, attrs):
        while len(self.stack) > 1 and tag in _CLOSED_BY.get(self.stack[-1].tag, ()):
            self.stack.pop()
        attr_map: dict[str, str] = {}
        for name, value in attrs:
            attr_map.setdefault(name, value if value is not None else "")
        node = DomNode(kind="element", tag=tag, attrs=attr_map)
        self._append(node)
        if tag not in VOID_ELEMENTS:
            self.stack.append(node)

    def handle_startendtag(self, tag, attrs):
        attr_map: dict[str, str] = {}
        for name, value in attrs:
            attr_map.setdefault(name, value if value is not None else "")
        self._append(DomNode(kind="element", tag=tag, attrs=attr_map))

    def handle_endtag(self, tag):
        if tag in VOID_ELEMENTS:
            return
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return
        # no matching open tag: ignore

    def handle_data(self, data):
        if data:
            self._append_text(data)

    def handle_comment(self, data):
        self._append(DomNode(kind="comment", text=data))


def parse_html(html: str) -> DomTree:
    """Parse HTML text; total on any input, including malformed markup."""
    builder = _TreeBuilder()
    builder.feed(html)
    builder.close()
    return reindex(builder.root)


def reindex(root: DomNode) -> DomTree:
    """Assign contiguous preorder node ids starting at 0 for the root."""
    count = 0
    stack: list[tuple[DomNode, Optional[int]]] = [(root, None)]
    while stack:
        node, parent_id = stack.pop()
        node.node_id = count
        node.parent_id = parent_id
        count += 1
        for child in reversed(node.children):
            stack.append((child, node.node_id))
    return DomTree(root=root, node_count=count)


def iter_nodes(node: DomNode) -> Iterator[DomNode]:
    """Preorder traversal including the given node."""
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        for child in reversed(cur.children):
            stack.append(child)


def iter_elements(tree: DomTree) -> Iterator[DomNode]:
    """Preorder over element nodes, excluding the synthetic root."""
    for node in iter_nodes(tree.root):
        if node.kind == "element" and node is not tree.root:
            yield node


def dom_path_tokens(tree: DomTree) -> list[str]:
    """Structure tokens for featurization.

    For every element, in preorder: its tag ("t:p"), a parent/child bigram
    ("b:div/p", parent of top-level elements is "root"), and one
    "c:<tag>.<class>" token per class attribute value.
    """
    tokens: list[str] = []
    stack: list[tuple[DomNode, str]] = [(tree.root, "")]
    while stack:
        node, parent_tag = stack.pop()
        if node is not tree.root:
            tokens.append(f"t:{node.tag}")
            tokens.append(f"b:{parent_tag}/{node.tag}")
            for cls in node.class_tokens():
                tokens.append(f"c:{node.tag}.{cls}")
        child_parent = ROOT_TAG if node is tree.root else node.tag
        for child in reversed(node.children):
            if child.kind == "element":
                stack.append((child, child_parent))
    return tokens


def text_content(node: DomNode) -> str:
    """Concatenated descendant text with whitespace runs collapsed.

    Script and style bodies and comment nodes are excluded.
    """
    parts: list[str] = []
    stack = [node]
    while stack:
        cur = stack.pop()
        if cur.kind == "text":
            parts.append(cur.text)
            continue
        if cur.kind == "comment":
            continue
        if cur.kind == "element" and cur.tag in ("script", "style"):
            continue
        for child in reversed(cur.children):
            stack.append(child)
    return _WS_RUN.sub(" ", "".join(parts)).strip()


def _escape_text(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _escape_attr(value: str) -> str:
    return value.replace("&", "&amp;").replace("<", "&lt;").replace('"', "&quot;")


def serialize_html(tree: DomTree) -> str:
    """Render a tree back to HTML text.

    Re-parsing the output reproduces the same structure and features; used
    for debugging dumps of normalized trees and for round-trip tests.
    """
    out: list[str] = []

    def emit(node: DomNode) -> None:
        if node.kind == "text":
            out.append(_escape_text(node.text))
            return
        if node.kind == "comment":
            out.append(f"<!--{node.text}-->")
            return
        attrs = "".join(f' {k}="{_escape_attr(v)}"' for k, v in node.attrs.items())
        if node.tag in VOID_ELEMENTS:
            out.append(f"<{node.tag}{attrs}/>")
            return
        out.append(f"<{node.tag}{attrs}>")
        if node.tag in ("script", "style"):
            for child in node.children:
                out.append(child.text)  # raw, so it re-parses as CDATA
        else:
            for child in node.children:
                emit(child)
        out.append(f"</{node.tag}>")

    for child in tree.root.children:
        emit(child)
    return "".join(out)

"""Rule-based removal of non-narration content.

A rule set is data, not code: ordered rules, each with an action and one or
more match alternatives.  Rules are applied over fresh traversals until a
full pass removes nothing (fixpoint, at most 10 passes).  Normalization
only deletes: kept text is always a subsequence of the original text, and
removed + kept character counts reconcile with the original total.

Rule file format ("<name>.rules", UTF-8, line oriented)::

    ruleset std-v1
    rule pagenum
      action remove_subtree
      match class=pagenum,pageno,page
      match tag=span text~^\\[?p?p?\\.? ?\\d+\\]?$

- ``ruleset <id>`` must be the first directive.
- ``rule <name>`` opens a rule; names are unique; order is meaningful.
- ``action`` is one of remove_subtree, remove_before_inclusive,
  remove_after_inclusive, unwrap, remove_with_next_list (the last also
  deletes an immediately following ul/ol/table sibling).
- Each ``match`` line is one alternative; a rule fires when any alternative
  matches.  Conditions on a line are ANDed: ``tag=a,b``, ``class=a,b``,
  ``attr:<name>~<regex>``, ``text~<regex>``, ``comment~<regex>``.  A regex
  condition consumes the rest of the line, so it must come last.  Inline
  flags such as ``(?i)`` select case-insensitive matching.

``text~`` tests the collapsed text of element nodes (deepest match: an
element only fires when no descendant element also fires, so anchored
patterns cannot climb to ancestors) and the collapsed text of bare text
nodes.  ``comment~`` tests comment nodes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import dom
from .errors import RulePassLimitExceeded, RuleSetParseError

ACTIONS = (
    "remove_subtree",
    "remove_before_inclusive",
    "remove_after_inclusive",
    "unwrap",
    "remove_with_next_list",
)

LIST_OR_TABLE = frozenset({"ul", "ol", "table"})

START_MARKER = re.compile(r"\*\*\* ?START OF (THE|THIS) PROJECT GUTENBERG EBOOK.*", re.I)
END_MARKER = re.compile(r"\*\*\* ?END OF (THE|THIS) PROJECT GUTENBERG EBOOK.*", re.I)

_WS = re.compile(r"\s+")


@dataclass
class RuleMatch:
    tags: Optional[frozenset[str]] = None
    classes: Optional[frozenset[str]] = None
    attr_name: Optional[str] = None
    attr_pattern: Optional[re.Pattern] = None
    text_pattern: Optional[re.Pattern] = None
    comment_pattern: Optional[re.Pattern] = None


@dataclass
class Rule:
    name: str
    action: str
    alternatives: list[RuleMatch]


@dataclass
class RuleSet:
    ruleset_id: str
    rules: list[Rule]


@dataclass
class RemovalReport:
    book_id: str
    rule_counts: dict[str, int] = field(default_factory=dict)
    characters_removed: int = 0
    characters_kept: int = 0
    markers_found: bool = False


@dataclass
class NormalizedBook:
    book_id: str
    tree: dom.DomTree
    report: RemovalReport
    ruleset_id: str


# --- ruleset parsing -------------------------------------------------------

def parse_ruleset(text: str) -> RuleSet:
    ruleset_id: Optional[str] = None
    rules: list[Rule] = []
    current: Optional[Rule] = None
    seen_names: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        directive, _, rest = line.partition(" ")
        rest = rest.strip()
        if directive == "ruleset":
            if ruleset_id is not None:
                raise RuleSetParseError("duplicate ruleset directive", lineno)
            if not rest:
                raise RuleSetParseError("ruleset needs an id", lineno)
            ruleset_id = rest
        elif directive == "rule":
            if ruleset_id is None:
                raise RuleSetParseError("rule before ruleset directive", lineno)
            if not rest:
                raise RuleSetParseError("rule needs a name", lineno)
            if rest in seen_names:
                raise RuleSetParseError(f"duplicate rule name {rest!r}", lineno)
            seen_names.add(rest)
            current = Rule(name=rest, action="", alternatives=[])
            rules.append(current)
        elif directive == "action":
            if current is None:
                raise RuleSetParseError("action outside a rule", lineno)
            if rest not in ACTIONS:
                raise RuleSetParseError(f"unknown action {rest!r}", lineno)
            if current.action:
                raise RuleSetParseError("duplicate action", lineno)
            current.action = rest
        elif directive == "match":
            if current is None:
                raise RuleSetParseError("match outside a rule", lineno)
            current.alternatives.append(_parse_match(rest, lineno))
        else:
            raise RuleSetParseError(f"unknown directive {directive!r}", lineno)
    if ruleset_id is None:
        raise RuleSetParseError("missing ruleset directive", 1)
    for rule in rules:
        if not rule.action:
            raise RuleSetParseError(f"rule {rule.name!r} has no action", 1)
        if not rule.alternatives:
            raise RuleSetParseError(f"rule {rule.name!r} has no match lines", 1)
    return RuleSet(ruleset_id=ruleset_id, rules=rules)


def _parse_match(spec: str, lineno: int) -> RuleMatch:
    if not spec:
        raise RuleSetParseError("empty match line", lineno)
    match = RuleMatch()
    rest = spec
    while rest:
        rest = rest.strip()
        if not rest:
            break
        if rest.startswith("tag="):
            head, _, rest = rest.partition(" ")
            match.tags = frozenset(t.lower() for t in head[4:].split(",") if t)
        elif rest.startswith("class="):
            head, _, rest = rest.partition(" ")
            match.classes = frozenset(c.lower() for c in head[6:].split(",") if c)
        elif rest.startswith("attr:"):
            name_part, sep, pattern = rest[5:].partition("~")
            if not sep or not name_part:
                raise RuleSetParseError("attr condition needs attr:<name>~<regex>", lineno)
            match.attr_name = name_part.lower()
            match.attr_pattern = _compile(pattern, lineno)
            rest = ""
        elif rest.startswith("text~"):
            match.text_pattern = _compile(rest[5:], lineno)
            rest = ""
        elif rest.startswith("comment~"):
            match.comment_pattern = _compile(rest[8:], lineno)
            rest = ""
        else:
            raise RuleSetParseError(f"unknown condition near {rest[:20]!r}", lineno)
    return match


def _compile(pattern: str, lineno: int) -> re.Pattern:
    if not pattern:
        raise RuleSetParseError("empty regex", lineno)
    try:
        return re.compile(pattern)
    except re.error as exc:
        raise RuleSetParseError(f"bad regex: {exc}", lineno)


def load_ruleset(path: Path | str) -> RuleSet:
    return parse_ruleset(Path(path).read_text(encoding="utf-8"))


def default_ruleset() -> RuleSet:
    from importlib.resources import files

    text = files("pagecast").joinpath("data/rulesets/std-v1.rules").read_text("utf-8")
    return parse_ruleset(text)


# --- matching --------------------------------------------------------------

def _alt_matches_element(alt: RuleMatch, node: dom.DomNode) -> bool:
    if alt.comment_pattern is not None:
        return False
    if alt.tags is not None and node.tag not in alt.tags:
        return False
    if alt.classes is not None and not (alt.classes & set(node.class_tokens())):
        return False
    if alt.attr_pattern is not None:
        value = node.attrs.get(alt.attr_name or "")
        if value is None or not alt.attr_pattern.search(value):
            return False
    if alt.text_pattern is not None:
        if not alt.text_pattern.search(dom.text_content(node)):
            return False
    return True


def _alt_matches_text(alt: RuleMatch, node: dom.DomNode) -> bool:
    if alt.text_pattern is None or alt.tags or alt.classes or alt.attr_pattern:
        return False
    collapsed = _WS.sub(" ", node.text).strip()
    return bool(alt.text_pattern.search(collapsed))


def _alt_matches_comment(alt: RuleMatch, node: dom.DomNode) -> bool:
    return alt.comment_pattern is not None and bool(alt.comment_pattern.search(node.text))


def _has_matching_descendant(node: dom.DomNode, alt: RuleMatch) -> bool:
    for child in node.children:
        for inner in dom.iter_nodes(child):
            if inner.kind == "element" and _alt_matches_element(alt, inner):
                return True
    return False


def _match_rule(rule: Rule, root: dom.DomNode) -> list[dom.DomNode]:
    """Nodes the rule fires on, in document order, topmost only.

    Text-pattern alternatives use deepest-element semantics: an element
    fires only when no descendant element also matches, so anchored
    patterns remove the innermost matching element instead of an ancestor
    whose collapsed text happens to match too.  A bare text node fires only
    when its parent element does not match the same alternative (the
    element match subsumes it).
    """

    def fires(node: dom.DomNode, parent: Optional[dom.DomNode]) -> bool:
        for alt in rule.alternatives:
            if node.kind == "element" and _alt_matches_element(alt, node):
                if alt.text_pattern is not None and _has_matching_descendant(node, alt):
                    continue
                return True
            if node.kind == "text" and _alt_matches_text(alt, node):
                if parent is not None and parent.kind == "element" and _alt_matches_element(alt, parent):
                    continue
                return True
            if node.kind == "comment" and _alt_matches_comment(alt, node):
                return True
        return False

    kept: list[dom.DomNode] = []

    def walk(node: dom.DomNode, parent: Optional[dom.DomNode], under_match: bool) -> None:
        fired = node is not root and fires(node, parent)
        if fired and not under_match:
            kept.append(node)
        for child in node.children:
            walk(child, node, under_match or fired)

    walk(root, None, False)
    return kept


# --- tree surgery ----------------------------------------------------------

def _parent_map(root: dom.DomNode) -> dict[int, dom.DomNode]:
    parents: dict[int, dom.DomNode] = {}
    for node in dom.iter_nodes(root):
        for child in node.children:
            parents[id(child)] = node
    return parents


def _attached(node: dom.DomNode, root: dom.DomNode) -> bool:
    return any(n is node for n in dom.iter_nodes(root))


def _subtree_size(node: dom.DomNode) -> int:
    return sum(1 for _ in dom.iter_nodes(node))


def _remove_node(node: dom.DomNode, parents: dict[int, dom.DomNode]) -> int:
    parent = parents.get(id(node))
    if parent is None:
        return 0
    parent.children.remove(node)
    return _subtree_size(node)


def _next_element_sibling(node: dom.DomNode, parents: dict[int, dom.DomNode]) -> Optional[dom.DomNode]:
    parent = parents.get(id(node))
    if parent is None:
        return None
    idx = parent.children.index(node)
    for sibling in parent.children[idx + 1:]:
        if sibling.kind == "element":
            return sibling
        if sibling.kind == "text" and sibling.text.strip():
            return None
    return None


def _cut_before(node: dom.DomNode, parents: dict[int, dom.DomNode]) -> int:
    """Remove everything preceding node in document order, then node itself.

    Ancestors of the node survive (they contain content that follows).
    """
    removed = 0
    cur = node
    while True:
        parent = parents.get(id(cur))
        if parent is None:
            break
        idx = parent.children.index(cur)
        for earlier in parent.children[:idx]:
            removed += _subtree_size(earlier)
        del parent.children[:idx]
        cur = parent
    removed += _remove_node(node, parents)
    return removed


def _cut_after(node: dom.DomNode, parents: dict[int, dom.DomNode]) -> int:
    removed = 0
    cur = node
    while True:
        parent = parents.get(id(cur))
        if parent is None:
            break
        idx = parent.children.index(cur)
        for later in parent.children[idx + 1:]:
            removed += _subtree_size(later)
        del parent.children[idx + 1:]
        cur = parent
    removed += _remove_node(node, parents)
    return removed


def _apply_action(
    rule: Rule, node: dom.DomNode, root: dom.DomNode, parents: dict[int, dom.DomNode]
) -> int:
    """Apply the rule's action to one matched node; returns matched-node count."""
    if rule.action == "remove_subtree":
        _remove_node(node, parents)
        return 1
    if rule.action == "unwrap":
        parent = parents.get(id(node))
        if parent is None:
            return 0
        idx = parent.children.index(node)
        parent.children[idx:idx + 1] = node.children
        return 1
    if rule.action == "remove_with_next_list":
        count = 0
        sibling = _next_element_sibling(node, parents)
        _remove_node(node, parents)
        count += 1
        if sibling is not None and sibling.tag in LIST_OR_TABLE:
            _remove_node(sibling, parents)
            count += 1
        return count
    if rule.action == "remove_before_inclusive":
        _cut_before(node, parents)
        return 1
    if rule.action == "remove_after_inclusive":
        _cut_after(node, parents)
        return 1
    raise ValueError(f"unknown action {rule.action!r}")


# --- boilerplate markers ----------------------------------------------------

def _find_marker(root: dom.DomNode, pattern: re.Pattern, after: Optional[dom.DomNode]) -> Optional[dom.DomNode]:
    seen_after = after is None
    for node in dom.iter_nodes(root):
        if node is after:
            seen_after = True
            continue
        if not seen_after:
            continue
        if node.kind == "text" and pattern.search(node.text):
            return node
    return None


def _ancestor_chain(node: dom.DomNode, parents: dict[int, dom.DomNode]) -> list[dom.DomNode]:
    chain = [node]
    cur = node
    while True:
        parent = parents.get(id(cur))
        if parent is None:
            break
        chain.append(parent)
        cur = parent
    return chain  # node ... root


def _contains(ancestor: dom.DomNode, node: dom.DomNode) -> bool:
    for inner in dom.iter_nodes(ancestor):
        if inner is node:
            return True
    return False


def _cut_node_for(
    marker: dom.DomNode,
    other_marker: Optional[dom.DomNode],
    root: dom.DomNode,
    parents: dict[int, dom.DomNode],
) -> dom.DomNode:
    """Top-level ancestor of the marker: highest one below root/html/body
    that does not also contain the other marker."""
    structural = {"html", "body", dom.ROOT_TAG}
    best = marker
    for candidate in _ancestor_chain(marker, parents)[1:]:
        if candidate is root or (candidate.kind == "element" and candidate.tag in structural):
            break
        if other_marker is not None and _contains(candidate, other_marker):
            break
        best = candidate
    return best


def strip_boilerplate(tree: dom.DomTree) -> tuple[dom.DomTree, int, bool]:
    """Drop license chrome outside the START/END markers, in place.

    Returns (tree, nodes_removed, markers_found).  Without markers the tree
    is returned unchanged.  Cut points are resolved before any mutation so
    one cut cannot widen the other.
    """
    parents = _parent_map(tree.root)
    start = _find_marker(tree.root, START_MARKER, None)
    end = _find_marker(tree.root, END_MARKER, start)
    if start is None and end is None:
        return tree, 0, False
    start_cut = _cut_node_for(start, end, tree.root, parents) if start is not None else None
    end_cut = _cut_node_for(end, start, tree.root, parents) if end is not None else None
    removed = 0
    if end_cut is not None:
        removed += _cut_after(end_cut, parents)
    if start_cut is not None:
        removed += _cut_before(start_cut, parents)
    return tree, removed, True


# --- driver ------------------------------------------------------------------

def classify_ruleset(cluster_id: int, keep_list: dict[int, str]) -> Optional[str]:
    """Map a cluster to its ruleset id; None means the book is excluded."""
    return keep_list.get(cluster_id)


def apply_rules(tree: dom.DomTree, ruleset: RuleSet, book_id: str = "") -> NormalizedBook:
    """Strip boilerplate, then run the rule list to fixpoint (≤ 10 passes)."""
    original_chars = len(dom.text_content(tree.root))
    report = RemovalReport(book_id=book_id)
    report.rule_counts["boilerplate"] = 0
    for rule in ruleset.rules:
        report.rule_counts[rule.name] = 0

    tree, boiler_nodes, markers = strip_boilerplate(tree)
    report.rule_counts["boilerplate"] = boiler_nodes
    report.markers_found = markers

    fixpoint = False
    for _ in range(10):
        removed_this_pass = 0
        for rule in ruleset.rules:
            matches = _match_rule(rule, tree.root)
            for node in matches:
                # an earlier action in this pass may have detached this node
                if not _attached(node, tree.root):
                    continue
                parents = _parent_map(tree.root)
                n = _apply_action(rule, node, tree.root, parents)
                report.rule_counts[rule.name] += n
                removed_this_pass += n
        if removed_this_pass == 0:
            fixpoint = True
            break
    if not fixpoint:
        raise RulePassLimitExceeded(f"{book_id}: no fixpoint within 10 passes")

    kept = len(dom.text_content(tree.root))
    report.characters_kept = kept
    report.characters_removed = original_chars - kept
    tree = dom.reindex(tree.root)
    return NormalizedBook(book_id=book_id, tree=tree, report=report, ruleset_id=ruleset.ruleset_id)


# --- report file -------------------------------------------------------------

def write_report(report: RemovalReport, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("report v1\n")
        fh.write(f"book\t{report.book_id}\n")
        fh.write(f"characters_kept\t{report.characters_kept}\n")
        fh.write(f"characters_removed\t{report.characters_removed}\n")
        fh.write(f"markers_found\t{'1' if report.markers_found else '0'}\n")
        for name, count in report.rule_counts.items():
            fh.write(f"rule\t{name}\t{count}\n")


def read_report(path: Path | str) -> RemovalReport:
    report = RemovalReport(book_id="")
    for line in Path(path).read_text(encoding="utf-8").splitlines()[1:]:
        fields = line.split("\t")
        if fields[0] == "book":
            report.book_id = fields[1]
        elif fields[0] == "characters_kept":
            report.characters_kept = int(fields[1])
        elif fields[0] == "characters_removed":
            report.characters_removed = int(fields[1])
        elif fields[0] == "markers_found":
            report.markers_found = fields[1] == "1"
        elif fields[0] == "rule":
            report.rule_counts[fields[1]] = int(fields[2])
    return report

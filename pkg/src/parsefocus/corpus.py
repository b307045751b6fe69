"""Bracketed trees, span sets, vocabularies and treebank preprocessing."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .grammar import UNK, SymbolInventory

# PTB tags dropped as punctuation; -NONE- covers traces and empty elements.
PTB_PUNCT_TAGS = frozenset({"''", "``", ",", ".", ":", "-LRB-", "-RRB-", "#", "$", "-NONE-"})

Span = tuple[int, int]


class TreeFormatError(ValueError):
    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.offset = offset
        self.line = line


class AlignmentError(ValueError):
    """Two line-aligned files disagree in record count or sentence length."""


@dataclass(eq=True)
class Tree:
    """Constituency tree.  Children are ``Tree`` nodes or token strings.

    ``label`` is ``None`` for unlabeled nodes (written as ``X``).
    """

    label: str | None
    children: list = field(default_factory=list)

    def leaves(self) -> list[str]:
        out = []
        stack = [self]
        while stack:
            node = stack.pop()
            if isinstance(node, str):
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return out

    def __len__(self):
        return len(self.leaves())

    def is_preterminal(self) -> bool:
        return len(self.children) == 1 and isinstance(self.children[0], str)

    def __str__(self):
        return to_bracketed(self)


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def parse_bracketed(text: str) -> Tree:
    """Read one PTB-style S-expression.

    ``( (S ...) )`` with an empty root label is accepted and yields label ``""``.
    A bare-token child list like ``(X a b)`` gives leaves directly under ``X``.
    """
    tokens = [(m.group(), m.start()) for m in _TOKEN.finditer(text)]
    if not tokens:
        raise TreeFormatError("empty input", 0)
    stack: list[Tree] = []
    root = None
    i = 0
    while i < len(tokens):
        tok, off = tokens[i]
        if tok == "(":
            if root is not None:
                raise TreeFormatError("trailing material after tree", off)
            label = ""
            if i + 1 < len(tokens) and tokens[i + 1][0] not in "()":
                label = tokens[i + 1][0]
                i += 1
            node = Tree(label, [])
            if stack:
                stack[-1].children.append(node)
            stack.append(node)
        elif tok == ")":
            if not stack:
                raise TreeFormatError("unbalanced ')'", off)
            node = stack.pop()
            if not node.children:
                raise TreeFormatError("constituent without children", off)
            if not stack:
                root = node
        else:
            if not stack:
                raise TreeFormatError(f"token {tok!r} outside brackets", off)
            stack[-1].children.append(tok)
        i += 1
    if stack:
        raise TreeFormatError("unbalanced '(': missing ')'", len(text))
    # strip PTB's empty outer wrapper "( (S ...) )"
    if root.label == "" and len(root.children) == 1 and isinstance(root.children[0], Tree):
        root = root.children[0]
    return root


def to_bracketed(tree: Tree) -> str:
    parts = []

    def walk(node):
        if isinstance(node, str):
            parts.append(node)
            return
        parts.append("(" + (node.label if node.label is not None else "X"))
        for c in node.children:
            parts.append(" ")
            walk(c)
        parts.append(")")

    walk(tree)
    return "".join(parts)


def tree_to_spans(tree: Tree, include_width_one: bool = False, include_whole: bool = True) -> set[Span]:
    """Half-open word spans of the internal nodes; unary chains collapse."""
    spans: set[Span] = set()

    def walk(node, start):
        if isinstance(node, str):
            return start + 1
        end = start
        for c in node.children:
            end = walk(c, end)
        spans.add((start, end))
        return end

    n = walk(tree, 0)
    return {
        (p, q) for p, q in spans
        if (include_width_one or q - p >= 2) and (include_whole or (p, q) != (0, n))
    }


def left_branching(tokens: Sequence[str]) -> Tree:
    node = tokens[0]
    for tok in tokens[1:]:
        node = Tree(None, [node, tok])
    return node if isinstance(node, Tree) else Tree(None, [node])


def right_branching(tokens: Sequence[str]) -> Tree:
    node = tokens[-1]
    for tok in reversed(tokens[:-1]):
        node = Tree(None, [tok, node])
    return node if isinstance(node, Tree) else Tree(None, [node])


def tree_from_spans(tokens: Sequence[str], spans: Iterable[Span]) -> Tree:
    """Build an unlabeled tree from a nested (binary or not) span set."""
    n = len(tokens)
    spans = sorted({s for s in spans if s[1] - s[0] >= 2} | {(0, n)}, key=lambda s: (s[0], -s[1]))

    def build(p, q, inner):
        kids: list = []
        pos = p
        k = 0
        while pos < q:
            if k < len(inner) and inner[k][0] == pos:
                sp = inner[k]
                sub = [s for s in inner[k + 1:] if s[0] >= sp[0] and s[1] <= sp[1]]
                kids.append(build(sp[0], sp[1], sub))
                k += 1 + len(sub)
                pos = sp[1]
            else:
                kids.append(tokens[pos])
                pos += 1
        return Tree(None, kids)

    return build(0, n, [s for s in spans if s != (0, n)])


# -- vocabulary & preprocessing -------------------------------------------

def build_vocab(sentences: Iterable[Sequence[str]], max_size: int, unk: str = UNK) -> list[str]:
    """Most frequent ``max_size`` tokens (ties lexicographic) followed by ``unk``."""
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    freq = Counter(tok for sent in sentences for tok in sent)
    if not freq:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    vocab = [w for w, _ in ranked[:max_size]]
    if unk not in vocab:
        vocab.append(unk)
    return vocab


@dataclass
class PreprocessOptions:
    punct_tags: frozenset = PTB_PUNCT_TAGS
    lowercase: bool = False


@dataclass
class CorpusRecord:
    id: str
    words: tuple[str, ...]
    tokens: tuple[int, ...] = ()
    gold_tree: Tree | None = None
    skipped: bool = False

    def __len__(self):
        return len(self.words)


def strip_punctuation(tree: Tree, punct_tags=PTB_PUNCT_TAGS) -> Tree | None:
    """Drop preterminals whose tag is punctuation and any constituent left empty."""

    def walk(node):
        if isinstance(node, str):
            return node
        if node.is_preterminal() and node.label in punct_tags:
            return None
        kids = [k for k in (walk(c) for c in node.children) if k is not None]
        return Tree(node.label, kids) if kids else None

    return walk(tree)


def _lowercase(tree: Tree) -> Tree:
    return Tree(tree.label, [c.lower() if isinstance(c, str) else _lowercase(c) for c in tree.children])


def preprocess(tree: Tree | None, inventory: SymbolInventory | None = None,
               options: PreprocessOptions | None = None, id: str = "",
               words: Sequence[str] | None = None) -> CorpusRecord:
    """Filter punctuation, map unknown words, and wrap as a record.

    Either a gold ``tree`` or raw ``words`` must be given.  Spans of the
    filtered gold tree are recomputed over the kept tokens.
    """
    options = options or PreprocessOptions()
    gold = None
    if tree is not None:
        gold = strip_punctuation(tree, options.punct_tags)
        if gold is not None and options.lowercase:
            gold = _lowercase(gold)
        words = gold.leaves() if gold is not None else []
    else:
        words = [w.lower() for w in words] if options.lowercase else list(words)
    rec = CorpusRecord(id=id, words=tuple(words), gold_tree=gold, skipped=not words)
    if inventory is not None and words:
        rec.tokens = inventory.encode(words)
    return rec


def apply_vocab(record: CorpusRecord, inventory: SymbolInventory) -> CorpusRecord:
    return CorpusRecord(record.id, record.words, inventory.encode(record.words) if record.words else (),
                        record.gold_tree, record.skipped)


# -- files -----------------------------------------------------------------

def _content_lines(lines: Iterable[str]) -> Iterator[tuple[int, str]]:
    for k, line in enumerate(lines, 1):
        s = line.strip()
        if s.startswith("#"):
            continue
        yield k, s


def read_trees(path) -> list[Tree]:
    out = []
    with open(path, encoding="utf-8") as f:
        for k, line in _content_lines(f):
            if not line:
                continue
            try:
                out.append(parse_bracketed(line))
            except TreeFormatError as e:
                raise TreeFormatError(str(e), line=k) from None
    return out


def write_trees(path, trees: Iterable[Tree], header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        if header:
            f.write(header.rstrip("\n") + "\n")
        for t in trees:
            f.write(to_bracketed(t) + "\n")


def read_corpus(path, options: PreprocessOptions | None = None) -> list[CorpusRecord]:
    """Load gold (bracketed) or raw (whitespace tokenized) lines.

    Mode is decided per line: lines starting with ``(`` are trees.  Records
    emptied by punctuation removal are kept with ``skipped=True`` so that
    line alignment with bias files holds.
    """
    records = []
    with open(path, encoding="utf-8") as f:
        for k, line in _content_lines(f):
            if not line:
                continue
            rid = str(len(records))
            if line.startswith("("):
                try:
                    tree = parse_bracketed(line)
                except TreeFormatError as e:
                    raise TreeFormatError(str(e), line=k) from None
                records.append(preprocess(tree, None, options, id=rid))
            else:
                records.append(preprocess(None, None, options, id=rid, words=line.split()))
    return records


def write_vocab(path, vocab: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for w in vocab:
            f.write(w + "\n")


def read_vocab(path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f if line.strip()]

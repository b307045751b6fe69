"""Tabular PCFG with a distinguished root, nonterminals and preterminals.

Symbol ids are dense: nonterminals occupy ``0 .. n_nt - 1`` and preterminals
``n_nt .. n_nt + n_pt - 1``.  Binary rules are stored densely over
``N x (N u P) x (N u P)``; lexical rules over ``P x vocab``.  Everything is in
natural-log space, with ``-inf`` for zero probability.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

UNK = "<unk>"


class GrammarFormatError(ValueError):
    """Raised when a grammar file cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class SymbolInventory:
    n_nt: int
    n_pt: int
    vocab: tuple[str, ...]
    unk: str = UNK

    def __post_init__(self):
        if self.n_nt < 1 or self.n_pt < 1:
            raise ValueError("need at least one nonterminal and one preterminal")
        object.__setattr__(self, "vocab", tuple(self.vocab))
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("duplicate terminal in vocabulary")
        if self.unk not in self.vocab:
            raise ValueError(f"vocabulary lacks the unknown token {self.unk!r}")

    @property
    def n_symbols(self) -> int:
        return self.n_nt + self.n_pt

    @property
    def n_vocab(self) -> int:
        return len(self.vocab)

    @property
    def unk_id(self) -> int:
        return self.vocab.index(self.unk)

    def index(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.vocab)}

    def encode(self, tokens: Sequence[str]) -> tuple[int, ...]:
        idx = self.index()
        unk = idx[self.unk]
        return tuple(idx.get(t, unk) for t in tokens)

    def symbol_name(self, sym: int) -> str:
        if sym < self.n_nt:
            return f"NT-{sym}"
        return f"T-{sym - self.n_nt}"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grammar:
    inventory: SymbolInventory
    root: np.ndarray  # (n_nt,)
    binary: np.ndarray  # (n_nt, n_sym, n_sym)
    lexical: np.ndarray  # (n_pt, n_vocab)

    def __post_init__(self):
        inv = self.inventory
        object.__setattr__(self, "root", _frozen(self.root))
        object.__setattr__(self, "binary", _frozen(self.binary))
        object.__setattr__(self, "lexical", _frozen(self.lexical))
        S = inv.n_symbols
        if self.root.shape != (inv.n_nt,):
            raise ValueError(f"root table has shape {self.root.shape}")
        if self.binary.shape != (inv.n_nt, S, S):
            raise ValueError(f"binary table has shape {self.binary.shape}")
        if self.lexical.shape != (inv.n_pt, inv.n_vocab):
            raise ValueError(f"lexical table has shape {self.lexical.shape}")

    def __eq__(self, other):
        if not isinstance(other, Grammar):
            return NotImplemented
        return (
            self.inventory == other.inventory
            and np.array_equal(self.root, other.root)
            and np.array_equal(self.binary, other.binary)
            and np.array_equal(self.lexical, other.lexical)
        )

    __hash__ = None

    @property
    def n_nt(self) -> int:
        return self.inventory.n_nt

    @property
    def n_pt(self) -> int:
        return self.inventory.n_pt


@dataclass
class RuleCounts:
    """Linear-domain counts with the same layout as :class:`Grammar` tables."""

    root: np.ndarray
    binary: np.ndarray
    lexical: np.ndarray

    @classmethod
    def zeros(cls, inventory: SymbolInventory) -> "RuleCounts":
        S = inventory.n_symbols
        return cls(
            np.zeros(inventory.n_nt),
            np.zeros((inventory.n_nt, S, S)),
            np.zeros((inventory.n_pt, inventory.n_vocab)),
        )

    def __add__(self, other):
        if isinstance(other, RuleCounts):
            return RuleCounts(self.root + other.root, self.binary + other.binary,
                              self.lexical + other.lexical)
        return RuleCounts(self.root + other, self.binary + other, self.lexical + other)

    def __iadd__(self, other):
        self.root += other.root
        self.binary += other.binary
        self.lexical += other.lexical
        return self

    def totals(self) -> tuple[float, float, float]:
        return float(self.root.sum()), float(self.binary.sum()), float(self.lexical.sum())


@dataclass
class Violation:
    table: str
    lhs: str
    mass: float

    def __str__(self):
        return f"{self.table}: mass {self.mass:.10g} for {self.lhs}"


def validate(grammar: Grammar, tol: float = 1e-9) -> list[Violation]:
    """Return every distribution whose mass is off by more than ``tol`` (or holds NaN)."""
    inv = grammar.inventory
    out = []

    def check(table, lhs, logp):
        if np.isnan(logp).any() or np.isposinf(logp).any():
            out.append(Violation(table, lhs, float("nan")))
            return
        mass = float(np.exp(logp).sum())
        if abs(mass - 1.0) > tol:
            out.append(Violation(table, lhs, mass))

    check("root", "S", grammar.root)
    for a in range(inv.n_nt):
        check("binary", inv.symbol_name(a), grammar.binary[a])
    for b in range(inv.n_pt):
        check("lexical", inv.symbol_name(inv.n_nt + b), grammar.lexical[b])
    return out


def _log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def random_init(inventory: SymbolInventory, seed: int, concentration: float = 1.0) -> Grammar:
    """Draw every rule distribution from a symmetric Dirichlet."""
    if not concentration > 0:
        raise ValueError(f"concentration must be positive, got {concentration}")
    rng = np.random.default_rng(seed)
    S = inventory.n_symbols
    root = rng.dirichlet(np.full(inventory.n_nt, concentration))
    binary = rng.dirichlet(np.full(S * S, concentration), size=inventory.n_nt)
    lexical = rng.dirichlet(np.full(inventory.n_vocab, concentration), size=inventory.n_pt)
    return Grammar(inventory, _log(root), _log(binary).reshape(inventory.n_nt, S, S), _log(lexical))


def uniform(inventory: SymbolInventory) -> Grammar:
    S = inventory.n_symbols
    return Grammar(
        inventory,
        np.full(inventory.n_nt, -math.log(inventory.n_nt)),
        np.full((inventory.n_nt, S, S), -math.log(S * S)),
        np.full((inventory.n_pt, inventory.n_vocab), -math.log(inventory.n_vocab)),
    )


def _normalize_rows(counts: np.ndarray, name: str, fallbacks: list[str]) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    flat = counts.reshape(counts.shape[0], -1) if counts.ndim > 1 else counts[None, :]
    if (flat < 0).any() or not np.isfinite(flat).all():
        raise ValueError(f"{name} counts must be finite and non-negative")
    totals = flat.sum(axis=1, keepdims=True)
    dead = totals[:, 0] <= 0
    probs = np.divide(flat, totals, out=np.zeros_like(flat), where=totals > 0)
    if dead.any():
        probs[dead] = 1.0 / flat.shape[1]
        fallbacks.extend(f"{name}[{i}]" for i in np.flatnonzero(dead))
    return _log(probs).reshape(counts.shape)


def normalize(counts: RuleCounts, inventory: SymbolInventory) -> tuple[Grammar, list[str]]:
    """Relative-frequency M-step.

    Returns the grammar and a list naming the distributions whose counts were
    all zero; those fall back to uniform and trigger a ``RuntimeWarning``.
    """
    fallbacks: list[str] = []
    root = _normalize_rows(counts.root, "root", fallbacks)
    binary = _normalize_rows(counts.binary, "binary", fallbacks)
    lexical = _normalize_rows(counts.lexical, "lexical", fallbacks)
    if fallbacks:
        warnings.warn(f"uniform fallback for zero-count distributions: {', '.join(fallbacks)}",
                      RuntimeWarning, stacklevel=2)
    return Grammar(inventory, root, binary, lexical), fallbacks


# -- serialization ---------------------------------------------------------

def _fmt(x: float) -> str:
    return "%.17g" % x


def serialize(grammar: Grammar) -> str:
    inv = grammar.inventory
    buf = io.StringIO()
    buf.write(f"pcfg v1 {inv.n_nt} {inv.n_pt} {inv.n_vocab}\n")
    for w in inv.vocab:
        buf.write(w + "\n")
    for a in range(inv.n_nt):
        if grammar.root[a] != -np.inf:
            buf.write(f"root {a} {_fmt(grammar.root[a])}\n")
    for a, b, c in zip(*np.nonzero(np.isfinite(grammar.binary))):
        buf.write(f"bin {a} {b} {c} {_fmt(grammar.binary[a, b, c])}\n")
    for b, w in zip(*np.nonzero(np.isfinite(grammar.lexical))):
        buf.write(f"lex {b} {w} {_fmt(grammar.lexical[b, w])}\n")
    return buf.getvalue()


def deserialize(text: str, unk: str = UNK) -> Grammar:
    """Parse the text grammar format.  Lines starting with ``#`` before the
    header and among rule lines are comments.  Rules not listed get ``-inf``."""
    lines = text.splitlines()
    pos = 0
    while pos < len(lines) and (not lines[pos].strip() or lines[pos].startswith("#")):
        pos += 1
    if pos == len(lines):
        raise GrammarFormatError("missing header", pos + 1)
    head = lines[pos].split()
    if len(head) != 5 or head[:2] != ["pcfg", "v1"]:
        raise GrammarFormatError(f"bad header {lines[pos]!r}", pos + 1)
    try:
        n_nt, n_pt, n_voc = (int(x) for x in head[2:])
    except ValueError:
        raise GrammarFormatError(f"bad header {lines[pos]!r}", pos + 1) from None
    pos += 1
    if pos + n_voc > len(lines):
        raise GrammarFormatError("truncated terminal list", len(lines))
    vocab = [lines[pos + k].strip() for k in range(n_voc)]
    pos += n_voc
    try:
        inv = SymbolInventory(n_nt, n_pt, vocab, unk)
    except ValueError as e:
        raise GrammarFormatError(str(e), pos) from None
    S = inv.n_symbols
    root = np.full(n_nt, -np.inf)
    binary = np.full((n_nt, S, S), -np.inf)
    lexical = np.full((n_pt, n_voc), -np.inf)
    arity = {"root": 1, "bin": 3, "lex": 2}
    for k in range(pos, len(lines)):
        line = lines[k].strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind = parts[0]
        if kind not in arity or len(parts) != arity[kind] + 2:
            raise GrammarFormatError(f"malformed rule {line!r}", k + 1)
        try:
            idx = tuple(int(x) for x in parts[1:-1])
            val = float(parts[-1])
            if kind == "root":
                root[idx] = val
            elif kind == "bin":
                binary[idx] = val
            else:
                lexical[idx] = val
        except (ValueError, IndexError):
            raise GrammarFormatError(f"malformed rule {line!r}", k + 1) from None
        if math.isnan(val):
            raise GrammarFormatError("NaN log probability", k + 1)
    return Grammar(inv, root, binary, lexical)


def save(grammar: Grammar, path, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        if header:
            f.write(header.rstrip("\n") + "\n")
        f.write(serialize(grammar))


def load(path) -> Grammar:
    with open(path, encoding="utf-8") as f:
        return deserialize(f.read())

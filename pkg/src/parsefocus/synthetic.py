"""Sampling corpora from a known PCFG, for controlled induction experiments."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .corpus import Tree
from .grammar import Grammar, SymbolInventory


def grammar_from_rules(nonterminals: Sequence[str], preterminals: Sequence[str],
                       root: Mapping[str, float], binary: Mapping[tuple[str, str, str], float],
                       lexical: Mapping[str, Mapping[str, float]], unk: str = "<unk>") -> tuple[Grammar, dict]:
    """Build a grammar from named rules; probabilities are renormalized per left-hand side.

    Returns the grammar and a map from symbol name to symbol id.
    """
    vocab = sorted({w for dist in lexical.values() for w in dist})
    if unk not in vocab:
        vocab.append(unk)
    inv = SymbolInventory(len(nonterminals), len(preterminals), vocab, unk)
    sym = {s: k for k, s in enumerate(list(nonterminals) + list(preterminals))}
    NT, S = inv.n_nt, inv.n_symbols
    r = np.zeros(NT)
    for a, p in root.items():
        r[sym[a]] = p
    b = np.zeros((NT, S, S))
    for (a, l, rr), p in binary.items():
        b[sym[a], sym[l], sym[rr]] = p
    lex = np.zeros((inv.n_pt, inv.n_vocab))
    widx = inv.index()
    for t, dist in lexical.items():
        for w, p in dist.items():
            lex[sym[t] - NT, widx[w]] = p
    with np.errstate(divide="ignore", invalid="ignore"):
        r = r / r.sum()
        b = b / b.sum(axis=(1, 2), keepdims=True)
        lex = lex / lex.sum(axis=1, keepdims=True)
        # the unk row entry stays zero; rows left empty stay uniform
        lex = np.where(np.isnan(lex), 1.0 / inv.n_vocab, lex)
        b = np.where(np.isnan(b), 1.0 / (S * S), b)
        g = Grammar(inv, np.log(r), np.log(b), np.log(lex))
    return g, sym


def benchmark_grammar() -> Grammar:
    """Small English-like generator with mixed left/right attachment."""
    words = {
        "Det": ["the", "a", "this", "every"],
        "Adj": ["big", "old", "red", "quiet"],
        "N": ["dog", "cat", "house", "park", "man", "book", "tree", "river"],
        "V": ["saw", "liked", "found", "took", "sees"],
        "P": ["in", "on", "near", "with"],
        "Adv": ["quickly", "often", "today"],
    }
    nts = ["S", "NP", "VP", "PP", "NB"]
    pts = list(words)
    binary = {
        ("S", "NP", "VP"): 0.8,
        ("S", "S", "Adv"): 0.2,
        ("NP", "Det", "N"): 0.5,
        ("NP", "Det", "NB"): 0.25,
        ("NP", "NP", "PP"): 0.25,
        ("NB", "Adj", "N"): 0.7,
        ("NB", "Adj", "NB"): 0.3,
        ("VP", "V", "NP"): 0.6,
        ("VP", "VP", "PP"): 0.25,
        ("VP", "V", "Adv"): 0.15,
        ("PP", "P", "NP"): 1.0,
    }
    lexical = {t: {w: 1.0 for w in ws} for t, ws in words.items()}
    g, _ = grammar_from_rules(nts, pts, {"S": 1.0}, binary, lexical)
    return g


def mixed_branching_grammar() -> Grammar:
    """Two-nonterminal generator: clauses grow leftward, noun phrases rightward."""
    words = {
        "Det": ["the", "a", "some"],
        "Adj": ["big", "old", "red", "small"],
        "N": ["dog", "cat", "park", "man", "book", "tree"],
        "V": ["saw", "liked", "found", "took"],
    }
    binary = {
        ("S", "NP", "V"): 0.4,
        ("S", "S", "NP"): 0.6,
        ("NP", "Det", "N"): 0.6,
        ("NP", "Adj", "NP"): 0.4,
    }
    lexical = {t: {w: 1.0 for w in ws} for t, ws in words.items()}
    g, _ = grammar_from_rules(["S", "NP"], list(words), {"S": 1.0}, binary, lexical)
    return g


def sample_tree(grammar: Grammar, rng: np.random.Generator, max_len: int = 40) -> Tree | None:
    """One derivation as a labeled tree, or ``None`` if it grows past ``max_len`` leaves."""
    inv = grammar.inventory
    NT, S = inv.n_nt, inv.n_symbols
    root_p = np.exp(grammar.root)
    bin_p = np.exp(grammar.binary).reshape(NT, -1)
    lex_p = np.exp(grammar.lexical)
    leaves = 0

    def expand(sym):
        nonlocal leaves
        if sym >= NT:
            leaves += 1
            if leaves > max_len:
                raise OverflowError
            w = int(rng.choice(inv.n_vocab, p=lex_p[sym - NT]))
            return Tree(inv.symbol_name(sym), [inv.vocab[w]])
        k = int(rng.choice(S * S, p=bin_p[sym]))
        left, right = divmod(k, S)
        return Tree(inv.symbol_name(sym), [expand(left), expand(right)])

    try:
        return expand(int(rng.choice(NT, p=root_p)))
    except (OverflowError, RecursionError):
        return None


def sample_corpus(grammar: Grammar, n: int, seed: int, min_len: int = 2, max_len: int = 40) -> list[Tree]:
    """``n`` trees with ``min_len <= length <= max_len`` by rejection sampling."""
    rng = np.random.default_rng(seed)
    out: list[Tree] = []
    while len(out) < n:
        t = sample_tree(grammar, rng, max_len)
        if t is not None and len(t.leaves()) >= min_len:
            out.append(t)
    return out

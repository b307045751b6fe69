"""CYK (Viterbi) and minimum-Bayes-risk decoding."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import chart as ch
from .chart import SpanWeightMatrix, ZeroMeasureError
from .corpus import Tree, tree_from_spans
from .grammar import Grammar

NEG_INF = -np.inf


def _words(sentence, grammar: Grammar, words):
    if words is not None:
        if len(words) != len(sentence):
            raise ValueError("words and token ids differ in length")
        return list(words)
    vocab = grammar.inventory.vocab
    return [vocab[t] for t in sentence]


def viterbi(sentence: Sequence[int], grammar: Grammar,
            words: Sequence[str] | None = None) -> tuple[Tree, float]:
    """Best derivation under max-product.

    Ties go to the smallest split point, then smallest left symbol, then
    smallest right symbol (and the smallest root nonterminal).
    """
    toks = np.asarray(sentence, dtype=np.int64)
    n = len(toks)
    if n < 1:
        raise ch.ChartInputError("empty sentence")
    ch._check_tokens(toks, grammar)
    NT, S = grammar.n_nt, grammar.inventory.n_symbols
    best = np.full((n + 1, n + 1, S), NEG_INF)
    back = np.zeros((n + 1, n + 1, NT), dtype=np.int64)
    pos = np.arange(n)
    best[pos, pos + 1, NT:] = grammar.lexical[:, toks].T
    for w in range(2, n + 1):
        starts, mids = ch._split_index(n, w)
        left = best[starts[:, None], mids]  # (P, K, S)
        right = best[mids, (starts + w)[:, None]]
        pair = left[:, :, :, None] + right[:, :, None, :]  # (P, K, S, S)
        cand = grammar.binary[None, :, None, :, :] + pair[:, None]  # (P, A, K, S, S)
        flat = cand.reshape(len(starts), NT, -1)
        arg = flat.argmax(-1)
        best[starts, starts + w, :NT] = np.take_along_axis(flat, arg[..., None], -1)[..., 0]
        back[starts, starts + w] = arg
    top = grammar.root + best[0, n, :NT]
    a = int(top.argmax())
    logp = float(top[a])
    if logp == NEG_INF:
        raise ZeroMeasureError("sentence has zero probability")
    surface = _words(toks, grammar, words)
    inv = grammar.inventory

    def build(p, q, sym):
        if q - p == 1:
            return Tree(inv.symbol_name(sym), [surface[p]])
        k, l, r = np.unravel_index(back[p, q, sym], (q - p - 1, S, S))
        m = p + 1 + int(k)
        return Tree(inv.symbol_name(sym), [build(p, m, int(l)), build(m, q, int(r))])

    return build(0, n, a), logp


def mbr_from_marginals(mu: np.ndarray, n: int) -> tuple[set[tuple[int, int]], float]:
    """Binary bracketing maximizing the summed span marginals; ties to the smallest split."""
    best = np.zeros((n + 1, n + 1))
    split = np.zeros((n + 1, n + 1), dtype=np.int64)
    for w in range(2, n + 1):
        for p in range(n - w + 1):
            q = p + w
            vals = best[p, p + 1:q] + best[p + 1:q, q]
            k = int(vals.argmax())
            split[p, q] = p + 1 + k
            best[p, q] = mu[p, q] + vals[k]
    spans = set()
    stack = [(0, n)]
    while stack:
        p, q = stack.pop()
        if q - p < 2:
            continue
        spans.add((p, q))
        m = int(split[p, q])
        stack += [(p, m), (m, q)]
    return spans, float(best[0, n])


def mbr_decode(sentence: Sequence[int], grammar: Grammar, weights: SpanWeightMatrix | None = None,
               words: Sequence[str] | None = None) -> Tree:
    """Unlabeled binary tree maximizing expected span overlap with the posterior."""
    n = len(sentence)
    surface = _words(sentence, grammar, words)
    if n == 1:
        return Tree(None, [surface[0]])
    mu = ch.span_marginals(sentence, grammar, weights)
    spans, _ = mbr_from_marginals(mu, n)
    return tree_from_spans(surface, spans)


def expected_span_score(spans, mu: np.ndarray) -> float:
    return float(sum(mu[p, q] for p, q in spans if q - p >= 2))


def decode_corpus(grammar: Grammar, sentences: Sequence[Sequence[int]], decoder: str = "mbr",
                  words: Sequence[Sequence[str]] | None = None,
                  weights: Sequence[SpanWeightMatrix | None] | None = None,
                  threads: int = 1) -> list[Tree | None]:
    """Decode every sentence; ``None`` marks a zero-measure sentence."""
    if decoder not in ("mbr", "cyk"):
        raise ValueError(f"unknown decoder {decoder!r}")
    out: list[Tree | None] = [None] * len(sentences)
    surf = [_words(s, grammar, words[i] if words is not None else None) for i, s in enumerate(sentences)]
    if decoder == "cyk":
        def one(i):
            try:
                return viterbi(sentences[i], grammar, surf[i])[0]
            except ZeroMeasureError:
                return None
        return ch._map(one, list(range(len(sentences))), threads)

    def work(idx):
        n = len(sentences[idx[0]])
        if n == 1:
            return [(i, Tree(None, [surf[i][0]])) for i in idx]
        toks = np.array([sentences[i] for i in idx], dtype=np.int64)
        lw = ch._stack_weights(idx, weights, n)
        beta, z = ch.inside_batch(grammar, toks, lw)
        ok = np.isfinite(z)
        res = []
        if ok.any():
            sub = [i for i, good in zip(idx, ok) if good]
            alpha = ch.outside_batch(grammar, beta[ok], lw[ok] if lw is not None else None)
            mu = ch.span_marginals_batch(grammar, beta[ok], alpha, z[ok])
            for k, i in enumerate(sub):
                spans, _ = mbr_from_marginals(mu[k], n)
                res.append((i, tree_from_spans(surf[i], spans)))
        return res

    for res in ch._map(work, ch._chunks(sentences), threads):
        for i, t in res:
            out[i] = t
    return out

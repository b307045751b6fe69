"""Inside/outside charts with optional per-span weights.

A weighted chart multiplies every completed width>=2 cell by the weight of
its span, so the sentence score is ``sum_t p(t) * prod_{spans of t} w(span)``.
With all weights equal to one this is the ordinary sentence probability.

Charts are computed for a batch of equal-length sentences at once.  Every
log-sum-exp is done by shifting with a per-term maximum and summing in the
linear domain, which keeps float64 exact enough for length-40 sentences.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .grammar import Grammar, RuleCounts

log = logging.getLogger(__name__)

CHUNK = 64
NEG_INF = -np.inf


class ZeroMeasureError(ArithmeticError):
    """The sentence has zero (weighted) probability under the grammar."""


class ChartInputError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpanWeightMatrix:
    """Log span weights for one sentence, indexed ``log_w[p, q]``.

    ``mode`` is ``"off"`` (all weights one), ``"soft"`` (softmax weights that
    sum to one over width>=2 spans) or ``"explicit"`` (arbitrary user weights,
    used for hard 0/1 masks).
    """

    n: int
    log_w: np.ndarray
    mode: str = "soft"

    @classmethod
    def off(cls, n: int) -> "SpanWeightMatrix":
        return cls(n, np.zeros((n + 1, n + 1)), "off")

    @classmethod
    def from_weights(cls, n: int, weights: Mapping[tuple[int, int], float],
                     mode: str = "explicit") -> "SpanWeightMatrix":
        log_w = np.zeros((n + 1, n + 1))
        for w in range(2, n + 1):
            for p in range(n - w + 1):
                if (p, p + w) not in weights:
                    raise ChartInputError(f"missing weight for span {(p, p + w)}")
                with np.errstate(divide="ignore"):
                    log_w[p, p + w] = np.log(weights[(p, p + w)])
        return cls(n, log_w, mode)

    def weight(self, p: int, q: int) -> float:
        return float(np.exp(self.log_w[p, q]))

    def spans(self):
        for w in range(2, self.n + 1):
            for p in range(self.n - w + 1):
                yield p, p + w


@dataclass(frozen=True, eq=False)
class InsideChart:
    n: int
    log_inside: np.ndarray  # (n+1, n+1, n_sym)
    log_score: float

    def cell(self, p: int, q: int) -> np.ndarray:
        return self.log_inside[p, q]


@dataclass(frozen=True, eq=False)
class OutsideChart:
    n: int
    log_outside: np.ndarray  # (n+1, n+1, n_sym)


# -- batched kernels -------------------------------------------------------

def _shift(x: np.ndarray, axis=-1):
    """Return (exp(x - m), m) with m the max along ``axis``; all -inf rows use m=0."""
    m = x.max(axis=axis)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.exp(x - np.expand_dims(m, axis)), m


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _split_index(n: int, w: int):
    """Start positions (P,) and split offsets (P, K) for spans of width ``w``."""
    starts = np.arange(n - w + 1)
    mids = starts[:, None] + np.arange(1, w)[None, :]
    return starts, mids


def _check_tokens(tokens: np.ndarray, grammar: Grammar):
    if tokens.size and (tokens.min() < 0 or tokens.max() >= grammar.inventory.n_vocab):
        raise ChartInputError("token id outside the grammar vocabulary")


def inside_batch(grammar: Grammar, tokens: np.ndarray, log_w: np.ndarray | None = None):
    """Log inside chart for ``tokens`` of shape (B, n).

    Returns ``beta`` of shape (B, n+1, n+1, S) and the per-sentence log score.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    B, n = tokens.shape
    if n < 1:
        raise ChartInputError("empty sentence")
    _check_tokens(tokens, grammar)
    NT, S = grammar.n_nt, grammar.inventory.n_symbols
    beta = np.full((B, n + 1, n + 1, S), NEG_INF)
    pos = np.arange(n)
    beta[:, pos, pos + 1, NT:] = grammar.lexical[:, tokens].transpose(1, 2, 0)
    rules = np.exp(grammar.binary)
    for w in range(2, n + 1):
        starts, mids = _split_index(n, w)
        left = beta[:, starts[:, None], mids]  # (B, P, K, S)
        right = beta[:, mids, (starts + w)[:, None]]
        el, ml = _shift(left)
        er, mr = _shift(right)
        valid = np.isfinite(left.max(-1)) & np.isfinite(right.max(-1))
        t = np.where(valid, ml + mr, NEG_INF)
        coef, g = _shift(t)
        pair = np.einsum("bpk,bpkl,bpkr->bplr", coef, el, er)
        val = np.einsum("alr,bplr->bpa", rules, pair)
        cell = _log(val) + g[..., None]
        if log_w is not None:
            cell = cell + log_w[:, starts, starts + w][..., None]
        beta[:, starts, starts + w, :NT] = cell
    top = grammar.root[None, :] + beta[:, 0, n, :NT]
    ex, m = _shift(top)
    log_score = _log(ex.sum(-1)) + m
    return beta, log_score


def outside_batch(grammar: Grammar, beta: np.ndarray, log_w: np.ndarray | None = None) -> np.ndarray:
    """Log outside chart matching ``beta`` (computed with the same weights)."""
    B, n1, _, S = beta.shape
    n = n1 - 1
    NT = grammar.n_nt
    rules = np.exp(grammar.binary)
    alpha = np.full_like(beta, NEG_INF)
    alpha[:, 0, n, :NT] = grammar.root
    # outside of a parent, including the parent's own span weight
    parent = np.full((B, n + 1, n + 1, NT), NEG_INF)

    def set_parent(w):
        starts = np.arange(n - w + 1)
        val = alpha[:, starts, starts + w, :NT]
        if log_w is not None:
            val = val + log_w[:, starts, starts + w][..., None]
        parent[:, starts, starts + w] = val

    set_parent(n)
    for w in range(n - 1, 0, -1):
        starts = np.arange(n - w + 1)
        ks = np.arange(1, n - w + 1)
        # child (p, p+w) as left child of (p, p+w+k), sibling (p+w, p+w+k)
        q_par = starts[:, None] + w + ks[None, :]
        ok_l = q_par <= n
        qc = np.minimum(q_par, n)
        par_l = np.where(ok_l[None, :, :, None], parent[:, starts[:, None], qc], NEG_INF)
        sib_l = np.where(ok_l[None, :, :, None], beta[:, (starts + w)[:, None], qc], NEG_INF)
        # child (p, p+w) as right child of (p-k, p+w), sibling (p-k, p)
        p_par = starts[:, None] - ks[None, :]
        ok_r = p_par >= 0
        pc = np.maximum(p_par, 0)
        par_r = np.where(ok_r[None, :, :, None], parent[:, pc, (starts + w)[:, None]], NEG_INF)
        sib_r = np.where(ok_r[None, :, :, None], beta[:, pc, starts[:, None]], NEG_INF)

        def accumulate(par, sib, spec):
            ep, mp = _shift(par)
            es, ms = _shift(sib)
            valid = np.isfinite(par.max(-1)) & np.isfinite(sib.max(-1))
            t = np.where(valid, mp + ms, NEG_INF)
            coef, g = _shift(t)
            ctx = np.einsum("bpk,bpka,bpks->bpas", coef, ep, es)
            val = np.einsum(spec, rules, ctx)
            return _log(val) + g[..., None]

        from_left = accumulate(par_l, sib_l, "alr,bpar->bpl")
        from_right = accumulate(par_r, sib_r, "alr,bpal->bpr")
        alpha[:, starts, starts + w] = np.logaddexp(from_left, from_right)
        if w >= 2:
            set_parent(w)
    return alpha


def counts_batch(grammar: Grammar, tokens: np.ndarray, beta, alpha, log_score,
                 log_w: np.ndarray | None = None) -> RuleCounts:
    """Posterior-expected rule counts summed over a batch with finite scores."""
    B, n = tokens.shape
    NT = grammar.n_nt
    counts = RuleCounts.zeros(grammar.inventory)
    z = log_score[:, None]
    counts.root += np.exp(grammar.root[None, :] + beta[:, 0, n, :NT] - z).sum(0)
    pos = np.arange(n)
    lex_post = np.exp(alpha[:, pos, pos + 1, NT:] + beta[:, pos, pos + 1, NT:] - z[..., None])
    for b in range(B):
        np.add.at(counts.lexical.T, tokens[b], lex_post[b])
    rules = np.exp(grammar.binary)
    for w in range(2, n + 1):
        starts, mids = _split_index(n, w)
        out = alpha[:, starts, starts + w, :NT] - z[..., None]
        if log_w is not None:
            out = out + log_w[:, starts, starts + w][..., None]
        left = beta[:, starts[:, None], mids]
        right = beta[:, mids, (starts + w)[:, None]]
        eo, mo = _shift(out)
        el, ml = _shift(left)
        er, mr = _shift(right)
        valid = (np.isfinite(out.max(-1))[..., None] & np.isfinite(left.max(-1))
                 & np.isfinite(right.max(-1)))
        coef = np.where(valid, np.exp(np.where(valid, mo[..., None] + ml + mr, 0.0)), 0.0)
        outer = np.einsum("bpk,bpa,bpkl,bpkr->alr", coef, eo, el, er, optimize=True)
        counts.binary += rules * outer
    return counts


def span_marginals_batch(grammar: Grammar, beta, alpha, log_score) -> np.ndarray:
    """Posterior probability that each width>=2 span is a constituent, (B, n+1, n+1)."""
    NT = grammar.n_nt
    post = np.exp(alpha[..., :NT] + beta[..., :NT] - log_score[:, None, None, None]).sum(-1)
    n = beta.shape[1] - 1
    idx = np.arange(n + 1)
    post[:, idx[:, None] >= idx[None, :] - 1] = 0.0
    return post


# -- single-sentence API ---------------------------------------------------

def _one(sentence) -> np.ndarray:
    toks = np.asarray(sentence, dtype=np.int64).reshape(1, -1)
    if toks.shape[1] < 1:
        raise ChartInputError("empty sentence")
    return toks


def _lw(weights: SpanWeightMatrix | None, n: int):
    if weights is None or weights.mode == "off":
        return None
    if weights.n != n:
        raise ChartInputError(f"weights for length {weights.n}, sentence has length {n}")
    return weights.log_w[None]


def inside(sentence: Sequence[int], grammar: Grammar) -> InsideChart:
    toks = _one(sentence)
    beta, z = inside_batch(grammar, toks)
    return InsideChart(toks.shape[1], beta[0], float(z[0]))


def weighted_inside(sentence: Sequence[int], grammar: Grammar,
                    weights: SpanWeightMatrix | None) -> InsideChart:
    toks = _one(sentence)
    beta, z = inside_batch(grammar, toks, _lw(weights, toks.shape[1]))
    return InsideChart(toks.shape[1], beta[0], float(z[0]))


def outside(sentence: Sequence[int], grammar: Grammar, weights: SpanWeightMatrix | None,
            chart: InsideChart) -> OutsideChart:
    if chart.log_score == NEG_INF:
        raise ZeroMeasureError("sentence has zero measure")
    lw = _lw(weights, chart.n)
    alpha = outside_batch(grammar, chart.log_inside[None], lw)
    return OutsideChart(chart.n, alpha[0])


def span_marginals(sentence: Sequence[int], grammar: Grammar,
                   weights: SpanWeightMatrix | None = None) -> np.ndarray:
    """``mu[p, q]`` for width>=2 spans (zero elsewhere)."""
    chart = weighted_inside(sentence, grammar, weights)
    out = outside(sentence, grammar, weights, chart)
    return span_marginals_batch(grammar, chart.log_inside[None], out.log_outside[None],
                                np.array([chart.log_score]))[0]


def expected_counts(sentence: Sequence[int], grammar: Grammar,
                    weights: SpanWeightMatrix | None = None) -> RuleCounts:
    toks = _one(sentence)
    lw = _lw(weights, toks.shape[1])
    beta, z = inside_batch(grammar, toks, lw)
    if z[0] == NEG_INF:
        raise ZeroMeasureError("sentence has zero measure")
    alpha = outside_batch(grammar, beta, lw)
    return counts_batch(grammar, toks, beta, alpha, z, lw)


# -- corpus-level ----------------------------------------------------------

def _chunks(sentences: Sequence[Sequence[int]]):
    """Index groups of equal length, at most CHUNK each, in a fixed order."""
    by_len: dict[int, list[int]] = {}
    for i, s in enumerate(sentences):
        by_len.setdefault(len(s), []).append(i)
    out = []
    for n in sorted(by_len):
        idx = by_len[n]
        out.extend(idx[k:k + CHUNK] for k in range(0, len(idx), CHUNK))
    return out


def _stack_weights(idx, weights, n):
    if weights is None:
        return None
    ws = [weights[i] for i in idx]
    if all(w is None or w.mode == "off" for w in ws):
        return None
    lw = np.zeros((len(idx), n + 1, n + 1))
    for k, w in enumerate(ws):
        if w is not None and w.mode != "off":
            if w.n != n:
                raise ChartInputError(f"weights for sentence {idx[k]} have length {w.n}, expected {n}")
            lw[k] = w.log_w
    return lw


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass
class CorpusStats:
    counts: RuleCounts
    log_scores: np.ndarray  # per sentence, -inf for zero measure


def corpus_expected_counts(grammar: Grammar, sentences: Sequence[Sequence[int]],
                           weights: Sequence[SpanWeightMatrix | None] | None = None,
                           threads: int = 1) -> CorpusStats:
    """E-step over a corpus.

    Chunks are fixed by sentence length and merged in chunk order, so the
    result does not depend on ``threads``.  Zero-measure sentences contribute
    no counts and show up as ``-inf`` in ``log_scores``.
    """
    chunks = _chunks(sentences)

    def work(idx):
        toks = np.array([sentences[i] for i in idx], dtype=np.int64)
        lw = _stack_weights(idx, weights, toks.shape[1])
        beta, z = inside_batch(grammar, toks, lw)
        ok = np.isfinite(z)
        if not ok.any():
            return idx, z, None
        if not ok.all():
            beta, toks = beta[ok], toks[ok]
            lw = lw[ok] if lw is not None else None
        alpha = outside_batch(grammar, beta, lw)
        return idx, z, counts_batch(grammar, toks, beta, alpha, z[ok], lw)

    total = RuleCounts.zeros(grammar.inventory)
    scores = np.full(len(sentences), NEG_INF)
    for idx, z, c in _map(work, chunks, threads):
        scores[idx] = z
        if c is not None:
            total += c
    return CorpusStats(total, scores)


def corpus_log_scores(grammar: Grammar, sentences: Sequence[Sequence[int]],
                      weights: Sequence[SpanWeightMatrix | None] | None = None,
                      threads: int = 1) -> np.ndarray:
    chunks = _chunks(sentences)

    def work(idx):
        toks = np.array([sentences[i] for i in idx], dtype=np.int64)
        _, z = inside_batch(grammar, toks, _stack_weights(idx, weights, toks.shape[1]))
        return idx, z

    scores = np.full(len(sentences), NEG_INF)
    for idx, z in _map(work, chunks, threads):
        scores[idx] = z
    return scores


@dataclass
class NLLResult:
    per_sentence: np.ndarray  # +inf where the sentence has zero measure
    mean: float
    per_token: float
    zero_measure: list[int]


def nll(sentences: Sequence[Sequence[int]], grammar: Grammar,
        weights: Sequence[SpanWeightMatrix | None] | None = None, threads: int = 1) -> NLLResult:
    """Negative log (weighted) score per sentence and averaged.

    Zero-measure sentences are excluded from the means with a warning.
    """
    scores = corpus_log_scores(grammar, sentences, weights, threads)
    return nll_from_scores(scores, [len(s) for s in sentences])


def nll_from_scores(scores: np.ndarray, lengths: Sequence[int]) -> NLLResult:
    per = -np.asarray(scores, dtype=np.float64)
    finite = np.isfinite(per)
    zero = [int(i) for i in np.flatnonzero(~finite)]
    if zero:
        warnings.warn(f"{len(zero)} sentence(s) have zero measure and are excluded", RuntimeWarning,
                      stacklevel=3)
    if not finite.any():
        return NLLResult(per, math.inf, math.inf, zero)
    lengths = np.asarray(lengths)
    return NLLResult(per, float(per[finite].mean()), float(per[finite].sum() / lengths[finite].sum()), zero)

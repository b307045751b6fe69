"""Evaluation metrics and the structural diagnostics.

Covers sentence-level unlabeled F1, rule diversity and rule-frequency
profiles of decoded trees, the likelihood/F1 correlation, and the
single-preterminal flipped-rule laboratory.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import chart as ch
from .corpus import AlignmentError, Span, Tree, tree_to_spans
from .decode import viterbi
from .grammar import Grammar, SymbolInventory, random_init, validate


def _nontrivial(spans: Iterable[Span], n: int) -> set[Span]:
    return {(p, q) for p, q in spans if q - p >= 2 and (p, q) != (0, n)}


def precision_recall_f1(pred: Iterable[Span], gold: Iterable[Span], n: int) -> tuple[float, float, float]:
    """Unlabeled bracket P, R, F1 (percent) after dropping width-1 and whole-sentence spans."""
    for p, q in list(pred) + list(gold):
        if not (0 <= p < q <= n):
            raise AlignmentError(f"span {(p, q)} outside a length-{n} sentence")
    ps, gs = _nontrivial(pred, n), _nontrivial(gold, n)
    if not ps and not gs:
        return 100.0, 100.0, 100.0
    hit = len(ps & gs)
    prec = 100.0 * hit / len(ps) if ps else 0.0
    rec = 100.0 * hit / len(gs) if gs else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return prec, rec, f1


def sentence_f1(pred: Iterable[Span], gold: Iterable[Span], n: int) -> float:
    return precision_recall_f1(pred, gold, n)[2]


@dataclass
class EvalReport:
    f1: list[float]
    mean: float
    std: float
    skipped: int = 0
    config: dict = field(default_factory=dict)

    @classmethod
    def from_scores(cls, f1: Sequence[float], skipped: int = 0, config: dict | None = None):
        arr = np.asarray(f1, dtype=np.float64)
        mean = float(arr.mean()) if arr.size else float("nan")
        std = float(arr.std()) if arr.size else float("nan")
        return cls(list(map(float, f1)), mean, std, skipped, config or {})


def corpus_s_f1(pred: Sequence[Tree | None], gold: Sequence[Tree | None]) -> EvalReport:
    """Macro-averaged sentence F1.  Pairs with a missing tree on either side are skipped."""
    if len(pred) != len(gold):
        raise AlignmentError(f"{len(pred)} predicted trees vs {len(gold)} gold trees")
    scores, skipped = [], 0
    for i, (p, g) in enumerate(zip(pred, gold)):
        if p is None or g is None:
            skipped += 1
            continue
        n = len(g.leaves())
        if len(p.leaves()) != n:
            raise AlignmentError(f"sentence {i + 1}: predicted length {len(p.leaves())}, gold length {n}")
        scores.append(sentence_f1(tree_to_spans(p), tree_to_spans(g), n))
    return EvalReport.from_scores(scores, skipped, {"metric": "unlabeled sentence F1",
                                                    "excluded": "width-1 and whole-sentence spans"})


def across_runs(reports: Sequence[EvalReport]) -> tuple[float, float]:
    """Mean and (population) standard deviation of the per-run S-F1 means."""
    means = np.array([r.mean for r in reports])
    return float(means.mean()), float(means.std())


# -- rule statistics ----------------------------------------------------------

class UnlabeledTreeError(ValueError):
    pass


def _label(node) -> str:
    if isinstance(node, str):
        return node
    if node.label is None or node.label == "X":
        raise UnlabeledTreeError("tree has unlabeled nodes; decode with CYK (Viterbi) to get rule labels")
    return node.label


def tree_rules(tree: Tree, include_lexical: bool = False) -> list[tuple]:
    """Productions of a labeled tree: (parent, child labels...) for internal nodes."""
    out = []

    def walk(node):
        if isinstance(node, str):
            return
        if node.is_preterminal():
            _label(node)
            if include_lexical:
                out.append((node.label, node.children[0]))
            return
        out.append((_label(node),) + tuple(_label(c) for c in node.children))
        for c in node.children:
            walk(c)

    walk(tree)
    return out


def rule_diversity(trees: Sequence[Tree], include_lexical: bool = False) -> dict[int, float]:
    """Mean number of distinct rules per tree, grouped by sentence length."""
    by_len: dict[int, list[int]] = defaultdict(list)
    for t in trees:
        by_len[len(t.leaves())].append(len(set(tree_rules(t, include_lexical))))
    return {n: float(np.mean(v)) for n, v in sorted(by_len.items())}


@dataclass
class RuleProfile:
    ranked: list[tuple[tuple, int]]
    total: int

    def top_share(self, k: int = 3) -> float:
        if not self.total:
            return 0.0
        return sum(c for _, c in self.ranked[:k]) / self.total


def rule_frequency_profile(trees: Sequence[Tree]) -> RuleProfile:
    """Occurrences of every binary rule over decoded trees, most frequent first."""
    counts: Counter = Counter()
    for t in trees:
        counts.update(r for r in tree_rules(t) if len(r) == 3)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return RuleProfile(ranked, sum(counts.values()))


# -- correlation ----------------------------------------------------------------

class UndefinedCorrelationError(ValueError):
    pass


def correlate_nll_f1(nll: Sequence[float], f1: Sequence[float]) -> tuple[float, float]:
    """Pearson r and two-sided p-value from the t distribution with n-2 dof."""
    x = np.asarray(nll, dtype=np.float64)
    y = np.asarray(f1, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("nll and f1 differ in length")
    n = x.size
    if n < 3:
        raise ValueError("need at least three runs")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("zero variance in one of the variables")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1 - r * r))
    return r, float(2 * stats.t.sf(abs(t), n - 2))


# -- structural optimization ambiguity lab --------------------------------------

@dataclass
class SoaPair:
    base: Grammar
    flipped: Grammar
    i: int
    j: int
    a: float
    b: float

    def check(self):
        inv = self.base.inventory
        if inv.n_pt != 1:
            raise ValueError("flipped pair needs exactly one preterminal")
        T = inv.n_nt
        mask = np.ones(self.base.binary.shape, dtype=bool)
        mask[self.i, self.j, T] = mask[self.i, T, self.j] = False
        if not (np.array_equal(self.base.binary[mask], self.flipped.binary[mask])
                and np.array_equal(self.base.root, self.flipped.root)
                and np.array_equal(self.base.lexical, self.flipped.lexical)):
            raise ValueError("grammars differ outside the flipped pair")
        s1 = math.exp(self.base.binary[self.i, self.j, T]) + math.exp(self.base.binary[self.i, T, self.j])
        s2 = math.exp(self.flipped.binary[self.i, self.j, T]) + math.exp(self.flipped.binary[self.i, T, self.j])
        if abs(s1 - s2) > 1e-12:
            raise ValueError("flipped pair sums differ")


def build_soa_pair(seed: int, n_nt: int, vocab: Sequence[str], a: float, b: float,
                   pair: tuple[int, int] = (0, 0), concentration: float = 1.0) -> SoaPair:
    """Two single-preterminal grammars differing only in N_i -> N_j T vs N_i -> T N_j.

    The base grammar is Dirichlet-random; the rest of row ``i`` is rescaled to
    mass ``1 - a - b`` and shared bit-for-bit by both grammars.
    """
    i, j = pair
    if not (0 <= i < n_nt and 0 <= j < n_nt):
        raise ValueError(f"pair {pair} outside {n_nt} nonterminals")
    if a < 0 or b < 0 or a + b > 1 + 1e-12:
        raise ValueError(f"cannot place probabilities a={a}, b={b} in one distribution")
    inv = SymbolInventory(n_nt, 1, list(vocab) if "<unk>" in vocab else list(vocab) + ["<unk>"])
    g = random_init(inv, seed, concentration)
    T = n_nt
    row = np.exp(g.binary[i])
    row[j, T] = row[T, j] = 0.0
    rest = 1.0 - a - b
    if rest > 0 and row.sum() == 0:
        raise ValueError("no other rules to carry the remaining mass")
    row = row * (rest / row.sum()) if row.sum() > 0 else row
    with np.errstate(divide="ignore"):
        shared = np.log(row)
    bin1 = np.array(g.binary)
    bin1[i] = shared
    bin2 = bin1.copy()
    with np.errstate(divide="ignore"):
        bin1[i, j, T], bin1[i, T, j] = math.log(a) if a else -np.inf, math.log(b) if b else -np.inf
        bin2[i, j, T], bin2[i, T, j] = bin1[i, T, j], bin1[i, j, T]
    base = Grammar(inv, g.root, bin1, g.lexical)
    flipped = Grammar(inv, g.root, bin2, g.lexical)
    for gr in (base, flipped):
        bad = validate(gr)
        if bad:
            raise ValueError(f"flipped grammar is not normalized: {bad[0]}")
    pair_ = SoaPair(base, flipped, i, j, a, b)
    pair_.check()
    return pair_


@dataclass
class SoaReport:
    max_abs_delta: float
    parses_differ: bool
    n_differ: int
    alphas: list[float]
    log_probs: list[tuple[float, float]]

    @property
    def max_alpha_error(self) -> float:
        return max((abs(a - 1.0) for a in self.alphas), default=0.0)


def soa_alphas(sentence: Sequence[int], grammar: Grammar, j: int) -> list[float]:
    """``p(T->w_first) I_j(rest) / (I_j(all but last) p(T->w_last))`` for every span of width >= 3."""
    c = ch.inside(sentence, grammar)
    T = grammar.n_nt
    lex = grammar.lexical[0]
    n = len(sentence)
    out = []
    for w in range(3, n + 1):
        for p in range(n - w + 1):
            q = p + w
            num = lex[sentence[p]] + c.log_inside[p + 1, q, j]
            den = c.log_inside[p, q - 1, j] + lex[sentence[q - 1]]
            if np.isfinite(num) and np.isfinite(den):
                out.append(math.exp(num - den))
    return out


def verify_soa(pair: SoaPair, sentences: Sequence[Sequence[int]]) -> SoaReport:
    pair.check()
    deltas, lps, alphas = [], [], []
    differ = 0
    for s in sentences:
        lp1 = ch.inside(s, pair.base).log_score
        lp2 = ch.inside(s, pair.flipped).log_score
        lps.append((lp1, lp2))
        if lp1 == lp2:
            deltas.append(0.0)
        else:
            deltas.append(abs(lp1 - lp2))
        if np.isfinite(lp1) and np.isfinite(lp2):
            t1, _ = viterbi(s, pair.base)
            t2, _ = viterbi(s, pair.flipped)
            if tree_to_spans(t1) != tree_to_spans(t2):
                differ += 1
        alphas.extend(soa_alphas(s, pair.base, pair.j))
    return SoaReport(max(deltas, default=0.0), differ > 0, differ, alphas, lps)

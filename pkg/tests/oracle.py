"""Brute-force enumeration over every derivation of a short sentence.

Independent of the chart code: derivations are listed explicitly as
(bracketing, nonterminal labels, preterminal labels) and scored by summing
rule log-probabilities node by node.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def bracketings(p: int, q: int) -> tuple:
    """All binary trees over [p, q) as tuples of (p, m, q) internal nodes, pre-order."""
    if q - p == 1:
        return ((),)
    out = []
    for m in range(p + 1, q):
        for left in bracketings(p, m):
            for right in bracketings(m, q):
                out.append(((p, m, q),) + left + right)
    return tuple(out)


def _product(k: int, repeat: int) -> np.ndarray:
    rows = list(itertools.product(range(k), repeat=repeat))
    return np.array(rows, dtype=np.int64).reshape(len(rows), repeat)


class Enumerator:
    """All derivations of length-``n`` sentences for one grammar."""

    def __init__(self, grammar, n: int):
        self.g = grammar
        self.n = n
        NT, PT = grammar.n_nt, grammar.n_pt
        self.trees = bracketings(0, n)
        n_int = n - 1
        nt_assign = _product(NT, n_int)
        pt_assign = _product(PT, n)
        self.nt_assign, self.pt_assign = nt_assign, pt_assign
        # struct[t, i, j]: root + binary log prob of tree t, nonterminal labels i, preterminal labels j
        self.struct = []
        for nodes in self.trees:
            index = {(p, q): k for k, (p, m, q) in enumerate(nodes)}
            total = np.zeros((len(nt_assign), len(pt_assign)))
            if nodes:
                total += grammar.root[nt_assign[:, 0]][:, None]
            for k, (p, m, q) in enumerate(nodes):
                parent = nt_assign[:, k][:, None]
                lsym = self._child(index, p, m, nt_assign, pt_assign, NT)
                rsym = self._child(index, m, q, nt_assign, pt_assign, NT)
                total = total + grammar.binary[parent, lsym, rsym]
            self.struct.append(total)
        self.struct = np.stack(self.struct)  # (T, I, J)

    @staticmethod
    def _child(index, p, q, nt_assign, pt_assign, NT):
        if q - p == 1:
            return (NT + pt_assign[:, p])[None, :]
        return nt_assign[:, index[(p, q)]][:, None]

    def logp(self, sentence) -> np.ndarray:
        """Log probability of every derivation, shape (T, I, J)."""
        lex = np.zeros(len(self.pt_assign))
        for i, w in enumerate(sentence):
            lex = lex + self.g.lexical[self.pt_assign[:, i], w]
        if self.n == 1:
            return lex[None, None, :] + np.full((1, 1, 1), -np.inf)
        return self.struct + lex[None, None, :]

    def tree_log_weight(self, weights) -> np.ndarray:
        """Sum of log span weights per bracketing (zeros if ``weights`` is None)."""
        out = np.zeros(len(self.trees))
        if weights is None:
            return out
        for t, nodes in enumerate(self.trees):
            out[t] = sum(weights.log_w[p, q] for p, m, q in nodes)
        return out

    def weighted(self, sentence, weights=None) -> np.ndarray:
        lp = self.logp(sentence)
        return lp + self.tree_log_weight(weights)[:, None, None]

    def log_scores(self, sentences) -> np.ndarray:
        """Unweighted log probability of many sentences at once.

        Same enumeration as ``log_score``, with the sum over bracketings and
        nonterminal labels done once per preterminal assignment.
        """
        sents = np.asarray(sentences, dtype=np.int64).reshape(-1, self.n)
        lex = np.zeros((len(sents), len(self.pt_assign)))
        for i in range(self.n):
            lex += self.g.lexical[self.pt_assign[:, i][None, :], sents[:, i][:, None]]
        if self.n == 1:
            return np.full(len(sents), -np.inf)
        flat = self.struct.reshape(-1, self.struct.shape[-1])
        m = flat.max(axis=0)
        with np.errstate(invalid="ignore"):
            per_j = m + np.log(np.exp(flat - m).sum(axis=0))  # (J,)
        per_j = np.where(np.isfinite(m), per_j, -np.inf)
        tot = lex + per_j[None, :]
        mx = tot.max(axis=1)
        with np.errstate(invalid="ignore"):
            out = mx + np.log(np.exp(tot - mx[:, None]).sum(axis=1))
        return np.where(np.isfinite(mx), out, -np.inf)

    # -- quantities --------------------------------------------------------

    def log_score(self, sentence, weights=None) -> float:
        lp = self.weighted(sentence, weights)
        m = lp.max()
        if m == -np.inf:
            return -np.inf
        return float(m + np.log(np.exp(lp - m).sum()))

    def span_posteriors(self, sentence, weights=None) -> dict:
        lp = self.weighted(sentence, weights)
        z = self.log_score(sentence, weights)
        per_tree = np.exp(lp - z).sum(axis=(1, 2))
        post: dict = {}
        for t, nodes in enumerate(self.trees):
            for p, m, q in nodes:
                post[(p, q)] = post.get((p, q), 0.0) + per_tree[t]
        return post

    def expected_counts(self, sentence, weights=None):
        g = self.g
        NT, PT, S = g.n_nt, g.n_pt, g.inventory.n_symbols
        lp = self.weighted(sentence, weights)
        z = self.log_score(sentence, weights)
        prob = np.exp(lp - z)  # (T, I, J)
        root = np.zeros(NT)
        binary = np.zeros((NT, S, S))
        lexical = np.zeros((PT, g.inventory.n_vocab))
        pw = prob.sum(axis=0)
        for t, nodes in enumerate(self.trees):
            index = {(p, q): k for k, (p, m, q) in enumerate(nodes)}
            pt_ = prob[t]
            np.add.at(root, self.nt_assign[:, 0], pt_.sum(1))
            for k, (p, m, q) in enumerate(nodes):
                parent = np.broadcast_to(self.nt_assign[:, k][:, None], pt_.shape)
                lsym = np.broadcast_to(self._child(index, p, m, self.nt_assign, self.pt_assign, NT), pt_.shape)
                rsym = np.broadcast_to(self._child(index, m, q, self.nt_assign, self.pt_assign, NT), pt_.shape)
                np.add.at(binary, (parent.ravel(), lsym.ravel(), rsym.ravel()), pt_.ravel())
        pj = pw.sum(0)
        for i, w in enumerate(sentence):
            np.add.at(lexical[:, w], self.pt_assign[:, i], pj)
        return root, binary, lexical

    def best(self, sentence):
        """(log prob, bracketing, nt labels, pt labels) of the best derivation."""
        lp = self.logp(sentence)
        t, i, j = np.unravel_index(lp.argmax(), lp.shape)
        return float(lp[t, i, j]), self.trees[t], self.nt_assign[i], self.pt_assign[j]

    def labeled_tree(self, nodes, nts, pts):
        """Nested (label, children) tuples of a derivation."""
        g = self.g
        index = {(p, q): k for k, (p, m, q) in enumerate(nodes)}
        splits = {(p, q): m for p, m, q in nodes}

        def build(p, q):
            if q - p == 1:
                return (f"T-{pts[p]}", p)
            m = splits[(p, q)]
            return (f"NT-{nts[index[(p, q)]]}", build(p, m), build(m, q))

        return build(0, self.n)

    def mbr(self, sentence, weights=None):
        """Expected span overlap of every bracketing; returns (scores, spans list)."""
        post = self.span_posteriors(sentence, weights)
        spans = [{(p, q) for p, m, q in nodes} for nodes in self.trees]
        scores = np.array([sum(post[s] for s in sp) for sp in spans])
        return scores, spans

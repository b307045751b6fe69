"""Parse-focusing bias: span counts over parser trees and their softmax weights."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .chart import SpanWeightMatrix
from .corpus import AlignmentError, Span, Tree, left_branching, right_branching, tree_from_spans, tree_to_spans


@dataclass
class FocusingBias:
    """Per-sentence span counts (width >= 2) pooled over ``n_sources`` trees each."""

    lengths: list[int]
    counts: list[dict[Span, int]]
    n_sources: int
    sources: list[dict] = field(default_factory=list)

    def __len__(self):
        return len(self.lengths)

    def weights(self) -> list[SpanWeightMatrix]:
        return [soft_weights(c, n) for c, n in zip(self.counts, self.lengths)]

    def __add__(self, other: "FocusingBias") -> "FocusingBias":
        if self.lengths != other.lengths:
            raise AlignmentError("biases cover different sentence lengths")
        merged = []
        for a, b in zip(self.counts, other.counts):
            c = dict(a)
            for k, v in b.items():
                c[k] = c.get(k, 0) + v
            merged.append(c)
        return FocusingBias(list(self.lengths), merged, self.n_sources + other.n_sources,
                            self.sources + other.sources)


def count_spans(sources: Sequence[Sequence[Tree]], lengths: Sequence[int] | None = None,
                names: Sequence[str] | None = None) -> FocusingBias:
    """Count, per sentence and span, how many source trees contain the span.

    ``sources[k][i]`` is parser ``k``'s tree for sentence ``i``.
    """
    if not sources:
        raise ValueError("need at least one source")
    n_sent = len(sources[0]) if lengths is None else len(lengths)
    for k, trees in enumerate(sources):
        if len(trees) != n_sent:
            raise AlignmentError(f"source {k} has {len(trees)} trees, expected {n_sent}")
    out_len: list[int] = []
    out: list[dict[Span, int]] = []
    for i in range(n_sent):
        counts: dict[Span, int] = {}
        n_i = None if lengths is None else lengths[i]
        for k, trees in enumerate(sources):
            m = len(trees[i].leaves())
            if n_i is None:
                n_i = m
            if m != n_i:
                raise AlignmentError(f"line {i + 1}: source {k} tree has {m} tokens, expected {n_i}")
            for sp in tree_to_spans(trees[i]):
                counts[sp] = counts.get(sp, 0) + 1
        out_len.append(n_i)
        out.append(counts)
    srcs = [{"name": nm} for nm in names] if names else [{"name": f"source-{k}"} for k in range(len(sources))]
    return FocusingBias(out_len, out, len(sources), srcs)


def soft_weights(counts: Mapping[Span, float], n: int) -> SpanWeightMatrix:
    """Softmax of span counts over every width>=2 span of a length-``n`` sentence."""
    if n < 2:
        return SpanWeightMatrix.off(n)
    spans = [(p, p + w) for w in range(2, n + 1) for p in range(n - w + 1)]
    f = np.array([counts.get(sp, 0) for sp in spans], dtype=np.float64)
    shifted = f - f.max()
    logz = math.log(np.exp(shifted).sum())
    log_w = np.zeros((n + 1, n + 1))
    for (p, q), v in zip(spans, shifted - logz):
        log_w[p, q] = v
    return SpanWeightMatrix(n, log_w, "soft")


def random_binary(tokens: Sequence[str], rng: np.random.Generator) -> Tree:
    """Binary tree drawn uniformly from all Catalan(n-1) bracketings."""
    n = len(tokens)
    cat = [1] * max(n, 1)
    for k in range(1, n):
        cat[k] = cat[k - 1] * 2 * (2 * k - 1) // (k + 1)

    spans: list[Span] = []

    def draw(p, q):
        w = q - p
        if w < 2:
            return
        spans.append((p, q))
        # split after j leaves with probability C(j-1) C(w-j-1) / C(w-1)
        weights = np.array([cat[j - 1] * cat[w - j - 1] for j in range(1, w)], dtype=np.float64)
        j = 1 + int(rng.choice(w - 1, p=weights / weights.sum()))
        draw(p, p + j)
        draw(p + j, q)

    draw(0, n)
    return tree_from_spans(tokens, spans)


def synthetic_trees(lengths: Sequence[int], kind: str, seed: int = 0) -> list[Tree]:
    rng = np.random.default_rng(seed)
    out = []
    for n in lengths:
        toks = [str(k) for k in range(n)]
        if kind == "left":
            out.append(left_branching(toks))
        elif kind == "right":
            out.append(right_branching(toks))
        elif kind == "random":
            out.append(random_binary(toks, rng))
        else:
            raise ValueError(f"unknown bias kind {kind!r}")
    return out


def synthetic_bias(lengths: Sequence[int], kind: str, seed: int = 0) -> FocusingBias:
    bias = count_spans([synthetic_trees(lengths, kind, seed)], lengths)
    bias.sources = [{"name": kind if kind != "random" else f"random(seed={seed})"}]
    return bias


# -- comparisons -------------------------------------------------------------

def _wide(spans: Iterable[Span]) -> set[Span]:
    return {s for s in spans if s[1] - s[0] >= 2}


def iou(*corpora: Sequence[set[Span]]) -> float:
    """Pooled |intersection| / |union| of (sentence, span) pairs across corpora.

    Width>=2 spans count, including the whole-sentence span.
    """
    if len(corpora) < 2:
        raise ValueError("iou needs at least two span corpora")
    n = len(corpora[0])
    for c in corpora[1:]:
        if len(c) != n:
            raise AlignmentError(f"corpora have {n} and {len(c)} sentences")
    inter = union = 0
    for i in range(n):
        sets = [_wide(c[i]) for c in corpora]
        inter += len(set.intersection(*sets))
        union += len(set.union(*sets))
    return inter / union if union else 1.0


@dataclass
class CommonSpanReport:
    by_subset: dict[tuple[str, ...], int]
    by_size: dict[int, float]  # mean over subsets of that size
    spans_by_subset: dict[tuple[str, ...], int]


def common_span_gold_frequency(parsers: Mapping[str, Sequence[set[Span]]],
                               gold: Sequence[set[Span]]) -> CommonSpanReport:
    """For every parser subset, count spans shared by all its members that are also gold spans."""
    names = list(parsers)
    n = len(gold)
    for nm in names:
        if len(parsers[nm]) != n:
            raise AlignmentError(f"parser {nm!r} has {len(parsers[nm])} sentences, gold has {n}")
    by_subset: dict[tuple[str, ...], int] = {}
    spans_by_subset: dict[tuple[str, ...], int] = {}
    for k in range(1, len(names) + 1):
        for combo in itertools.combinations(names, k):
            hit = total = 0
            for i in range(n):
                common = set.intersection(*(_wide(parsers[nm][i]) for nm in combo))
                total += len(common)
                hit += len(common & _wide(gold[i]))
            by_subset[combo] = hit
            spans_by_subset[combo] = total
    by_size = {
        k: float(np.mean([v for c, v in by_subset.items() if len(c) == k]))
        for k in range(1, len(names) + 1)
    }
    return CommonSpanReport(by_subset, by_size, spans_by_subset)


# -- bias files ---------------------------------------------------------------

def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def format_bias_line(n: int, k: int, counts: Mapping[Span, int]) -> str:
    items = sorted(counts.items(), key=lambda kv: (kv[0][1] - kv[0][0], kv[0][0]))
    return " ".join([str(n), str(k)] + [f"{p},{q}:{c}" for (p, q), c in items])


def write_bias(path, bias: FocusingBias, header: str | None = None) -> None:
    """Write the line-aligned bias file plus a ``<path>.meta.json`` sidecar."""
    with open(path, "w", encoding="utf-8") as f:
        if header:
            f.write(header.rstrip("\n") + "\n")
        for n, c in zip(bias.lengths, bias.counts):
            f.write(format_bias_line(n, bias.n_sources, c) + "\n")
    meta = {"n_sources": bias.n_sources, "sources": bias.sources}
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


class BiasFormatError(ValueError):
    pass


def read_bias(path) -> FocusingBias:
    lengths: list[int] = []
    counts: list[dict[Span, int]] = []
    n_sources = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                n, k = int(parts[0]), int(parts[1])
                c: dict[Span, int] = {}
                for item in parts[2:]:
                    sp, v = item.split(":")
                    p, q = (int(x) for x in sp.split(","))
                    if not (0 <= p < q <= n) or q - p < 2:
                        raise BiasFormatError(f"line {lineno}: span {sp} invalid for length {n}")
                    c[(p, q)] = int(v)
            except (ValueError, IndexError) as e:
                if isinstance(e, BiasFormatError):
                    raise
                raise BiasFormatError(f"line {lineno}: malformed bias record {line!r}") from None
            n_sources = max(n_sources, k)
            lengths.append(n)
            counts.append(c)
    sources: list[dict] = []
    meta = str(path) + ".meta.json"
    if os.path.exists(meta):
        with open(meta, encoding="utf-8") as f:
            sources = json.load(f).get("sources", [])
    return FocusingBias(lengths, counts, n_sources, sources)

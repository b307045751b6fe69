"""Figures for the analysis reports.

Every function takes plain data, renders one figure to ``path`` and closes
it.  The Agg backend is forced so nothing needs a display.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    # fixed metadata keeps repeated renders byte-stable for PNG
    "svg.hashsalt": "parsefocus",
}


def _figure(width=4.0, height=3.0):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(width, height))
    return fig, ax


def _save(fig, path):
    with plt.rc_context(RC):
        fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else None)
    plt.close(fig)


def nll_f1_scatter(groups: Mapping[str, tuple[Sequence[float], Sequence[float]]], path,
                   r: float | None = None, p: float | None = None) -> None:
    """Per-run NLL against S-F1, one marker set per group (e.g. grammar size)."""
    fig, ax = _figure()
    markers = "osD^v<>"
    for k, (name, (x, y)) in enumerate(groups.items()):
        ax.scatter(x, y, s=14, marker=markers[k % len(markers)], label=name, alpha=0.8)
    ax.set_xlabel("negative log likelihood")
    ax.set_ylabel("S-F1")
    if r is not None:
        ax.set_title(f"Pearson r = {r:.3f}" + (f", p = {p:.3g}" if p is not None else ""))
    if len(groups) > 1:
        ax.legend(frameon=False)
    _save(fig, path)


def rule_diversity_lines(series: Mapping[str, Mapping[int, float]], path) -> None:
    fig, ax = _figure()
    for name, by_len in series.items():
        xs = sorted(by_len)
        ax.plot(xs, [by_len[x] for x in xs], marker=".", label=name)
    ax.set_xlabel("sentence length")
    ax.set_ylabel("unique rules per parse")
    ax.legend(frameon=False)
    _save(fig, path)


def rule_frequency_bars(series: Mapping[str, Sequence[int]], path, top: int | None = None) -> None:
    """Descending rule frequencies (as shares of all rule occurrences)."""
    fig, ax = _figure(5.0, 3.0)
    width = 0.8 / max(len(series), 1)
    for k, (name, counts) in enumerate(series.items()):
        total = sum(counts) or 1
        shares = [c / total for c in counts][:top]
        ax.bar([i + k * width for i in range(len(shares))], shares, width=width, label=name)
    ax.set_xlabel("rule rank")
    ax.set_ylabel("share of rule occurrences")
    ax.legend(frameon=False)
    _save(fig, path)


def common_span_bars(by_size: Mapping[int, float], path) -> None:
    fig, ax = _figure()
    ks = sorted(by_size)
    ax.bar([str(k) for k in ks], [by_size[k] for k in ks], color="0.4")
    ax.set_xlabel("number of combined parsers")
    ax.set_ylabel("common spans found in gold")
    _save(fig, path)

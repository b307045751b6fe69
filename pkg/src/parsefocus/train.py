"""EM training on the (optionally span-weighted) inside objective."""

from __future__ import annotations

import hashlib
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import chart as ch
from .chart import SpanWeightMatrix
from .grammar import Grammar, SymbolInventory, normalize, random_init, validate

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    n_nt: int = 5
    n_pt: int = 10
    max_epochs: int = 10
    seeds: list[int] = field(default_factory=lambda: [0])
    patience: int = 2
    concentration: float = 1.0
    smoothing: float = 1e-8
    weight_mode: str = "off"
    threads: int = 1

    def __post_init__(self):
        if self.n_nt < 1 or self.n_pt < 1:
            raise ValueError("need at least one nonterminal and one preterminal")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        if self.weight_mode not in ("off", "soft"):
            raise ValueError(f"weight_mode must be 'off' or 'soft', got {self.weight_mode!r}")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


def parse_seeds(text: str) -> list[int]:
    """``"0..3"`` -> [0, 1, 2, 3]; ``"1,5,9"`` -> [1, 5, 9]."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError(f"no seeds in {text!r}")
    return out


def load_config(path) -> dict:
    """Read ``key = value`` lines (``#`` comments) into typed TrainConfig fields.

    Recognized keys: nt, pt, max_epochs, seeds, patience, concentration,
    smoothing, weight_mode, threads.
    """
    aliases = {"nt": "n_nt", "pt": "n_pt", "epochs": "max_epochs"}
    types = {f.name: f.type for f in fields(TrainConfig)}
    out: dict = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (x.strip() for x in line.split("=", 1))
            key = aliases.get(key, key)
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            if key == "seeds":
                out[key] = parse_seeds(val)
            elif key in ("concentration", "smoothing"):
                out[key] = float(val)
            elif key == "weight_mode":
                out[key] = val
            else:
                out[key] = int(val)
    return out


@dataclass
class EpochResult:
    grammar: Grammar
    objective: float  # per-token mean negative log weighted score before the update
    fallbacks: list[str]


def em_epoch(grammar: Grammar, sentences: Sequence[Sequence[int]],
             weights: Sequence[SpanWeightMatrix | None] | None = None,
             smoothing: float = 1e-8, threads: int = 1) -> EpochResult:
    stats = ch.corpus_expected_counts(grammar, sentences, weights, threads)
    ok = np.isfinite(stats.log_scores)
    if not ok.any():
        raise TrainingError("every training sentence has zero measure")
    n_tok = sum(len(s) for s, good in zip(sentences, ok) if good)
    objective = float(-stats.log_scores[ok].sum() / n_tok)
    counts = stats.counts + smoothing if smoothing else stats.counts
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        new, fallbacks = normalize(counts, grammar.inventory)
    return EpochResult(new, objective, fallbacks)


@dataclass
class RunRecord:
    seed: int
    weight_mode: str
    train_objective: list[float]
    valid_nll: list[float]
    best_epoch: int
    grammar: Grammar
    wall_time: float = 0.0

    def summary(self) -> dict:
        """JSON-ready record (the grammar and wall time are left out)."""
        return {
            "seed": self.seed,
            "weight_mode": self.weight_mode,
            "epochs": len(self.train_objective),
            "best_epoch": self.best_epoch,
            "train_objective": self.train_objective,
            "valid_nll": self.valid_nll,
            "best_valid_nll": self.valid_nll[self.best_epoch] if self.valid_nll else None,
        }


def _digest(sentences) -> set[str]:
    return {hashlib.sha1(" ".join(map(str, s)).encode()).hexdigest() for s in sentences}


def train_seed(config: TrainConfig, inventory: SymbolInventory, seed: int,
               sentences: Sequence[Sequence[int]], valid: Sequence[Sequence[int]] | None,
               weights: Sequence[SpanWeightMatrix | None] | None) -> RunRecord:
    """One seed: Dirichlet init, then EM with early stopping on unweighted validation NLL.

    Epoch ``k`` in the record refers to the grammar after ``k + 1`` updates.
    Without a validation set the last grammar is kept.
    """
    t0 = time.perf_counter()
    g = random_init(inventory, seed, config.concentration)
    use_w = weights if config.weight_mode == "soft" else None
    objectives: list[float] = []
    vals: list[float] = []
    best_g, best_epoch, best_val, stale = g, -1, math.inf, 0
    for epoch in range(config.max_epochs):
        res = em_epoch(g, sentences, use_w, config.smoothing, config.threads)
        g = res.grammar
        objectives.append(res.objective)
        if valid:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                v = ch.nll(valid, g, None, config.threads).mean
            vals.append(v)
            log.info("seed %d epoch %d objective %.6f valid %.6f", seed, epoch, res.objective, v)
            if v < best_val:
                best_g, best_epoch, best_val, stale = g, epoch, v, 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
        else:
            log.info("seed %d epoch %d objective %.6f", seed, epoch, res.objective)
            best_g, best_epoch = g, epoch
    if validate(best_g):
        raise TrainingError(f"seed {seed}: trained grammar failed validation")
    return RunRecord(seed, config.weight_mode, objectives, vals, best_epoch, best_g,
                     time.perf_counter() - t0)


def train(config: TrainConfig, inventory: SymbolInventory, sentences: Sequence[Sequence[int]],
          valid: Sequence[Sequence[int]] | None = None,
          weights: Sequence[SpanWeightMatrix | None] | None = None) -> list[RunRecord]:
    if config.weight_mode == "soft" and weights is None:
        raise ValueError("soft weight mode needs per-sentence weights")
    if weights is not None and len(weights) != len(sentences):
        raise ValueError(f"{len(weights)} weight matrices for {len(sentences)} sentences")
    if valid and _digest(valid) & _digest(sentences):
        warnings.warn("validation sentences overlap the training corpus", UserWarning, stacklevel=2)
    return [train_seed(config, inventory, s, sentences, valid, weights) for s in config.seeds]

"""Command-line entry point: ``parsefocus <subcommand> ...``.

Exit codes: 0 success, 2 usage, 3 data or alignment problem, 4 numerical
failure (zero-measure corpus, training breakdown).
"""

from __future__ import annotations

import argparse
from importlib import resources
import json
import logging
import os
import shlex
import sys
import warnings

import numpy as np

from . import __version__
from . import analysis, chart, decode, focusing, grammar as gm, plotting, synthetic, train
from .corpus import (
    AlignmentError,
    PreprocessOptions,
    TreeFormatError,
    apply_vocab,
    build_vocab,
    read_corpus,
    read_trees,
    read_vocab,
    strip_punctuation,
    to_bracketed,
    tree_to_spans,
    write_trees,
    write_vocab,
)

log = logging.getLogger("parsefocus")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


def bundled(name: str = "synthetic-train.trees") -> str:
    """Path of a corpus shipped with the package."""
    return str(resources.files("parsefocus") / "data" / name)


def provenance(argv) -> str:
    return f"# parsefocus {__version__} | parsefocus {' '.join(shlex.quote(a) for a in argv)}"


def _options(args) -> PreprocessOptions:
    opts = PreprocessOptions(lowercase=getattr(args, "lowercase", False))
    if getattr(args, "keep_punct", False):
        opts.punct_tags = frozenset()
    return opts


def _load_records(path, args):
    records = [r for r in read_corpus(path, _options(args)) if not r.skipped]
    if not records:
        raise AlignmentError(f"{path}: no usable sentences")
    return records


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def _check_bias(bias: focusing.FocusingBias, records, path):
    if len(bias) != len(records):
        raise AlignmentError(f"{path}: {len(bias)} bias records for {len(records)} sentences")
    for k, (n, r) in enumerate(zip(bias.lengths, records)):
        if n != len(r.words):
            raise AlignmentError(f"{path}: record {k + 1} is for length {n}, sentence has {len(r.words)}")


# -- induce ------------------------------------------------------------------

def cmd_induce(args, argv):
    settings = train.load_config(args.config) if args.config else {}
    for key, val in (("n_nt", args.nt), ("n_pt", args.pt), ("max_epochs", args.epochs),
                     ("patience", args.patience), ("concentration", args.concentration),
                     ("smoothing", args.smoothing), ("threads", args.threads)):
        if val is not None:
            settings[key] = val
    if args.seeds is not None:
        settings["seeds"] = train.parse_seeds(args.seeds)
    settings["weight_mode"] = "soft" if args.bias else "off"
    try:
        config = train.TrainConfig(**settings)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from None

    if args.corpus is None:
        args.corpus = bundled()
    records = _load_records(args.corpus, args)
    weights = None
    if args.bias:
        bias = focusing.read_bias(args.bias)
        _check_bias(bias, records, args.bias)
        weights = bias.weights()
    vocab = read_vocab(args.vocab) if args.vocab else build_vocab((r.words for r in records), args.vocab_size)
    inv = gm.SymbolInventory(config.n_nt, config.n_pt, vocab)
    keep = [k for k, r in enumerate(records) if len(r.words) >= 2]
    if len(keep) < len(records):
        log.warning("dropping %d single-word sentences (no binary derivation)", len(records) - len(keep))
    sents = [apply_vocab(records[k], inv).tokens for k in keep]
    if weights is not None:
        weights = [weights[k] for k in keep]
    valid = None
    if args.valid:
        valid = [apply_vocab(r, inv).tokens for r in _load_records(args.valid, args) if len(r.words) >= 2]

    os.makedirs(args.out, exist_ok=True)
    header = provenance(argv)
    write_vocab(os.path.join(args.out, "vocab.txt"), vocab)
    runs = train.train(config, inv, sents, valid, weights)
    with open(os.path.join(args.out, "runs.jsonl"), "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for rec in runs:
            gpath = os.path.join(args.out, f"grammar-seed{rec.seed}.pcfg")
            gm.save(rec.grammar, gpath, header)
            row = rec.summary()
            row["grammar"] = os.path.basename(gpath)
            row["bias"] = os.path.basename(args.bias) if args.bias else None
            f.write(json.dumps(row, sort_keys=True) + "\n")
            log.info("seed %d done in %.1fs", rec.seed, rec.wall_time)
            print(f"seed {rec.seed}\tmode {rec.weight_mode}\tepochs {len(rec.train_objective)}\t"
                  f"objective {rec.train_objective[-1]:.6f}\tgrammar {gpath}")
    return 0


# -- bias --------------------------------------------------------------------

def cmd_bias(args, argv):
    records = _load_records(args.corpus, args)
    lengths = [len(r.words) for r in records]
    if args.kind and args.trees:
        raise UsageError("give parser tree files or --kind, not both")
    if args.kind:
        bias = focusing.synthetic_bias(lengths, args.kind, args.seed)
    elif args.trees:
        sources = []
        for path in args.trees:
            trees = read_trees(path)
            if len(trees) != len(records):
                raise AlignmentError(f"{path}: {len(trees)} trees for {len(records)} sentences")
            sources.append(trees)
        bias = focusing.count_spans(sources, lengths, [os.path.basename(p) for p in args.trees])
        for src, path in zip(bias.sources, args.trees):
            src["sha256"] = focusing.file_sha256(path)
    else:
        raise UsageError("need parser tree files or --kind")
    focusing.write_bias(args.output, bias, provenance(argv))
    print(f"wrote {len(bias)} records from {bias.n_sources} source(s) to {args.output}")
    return 0


# -- parse -------------------------------------------------------------------

def cmd_parse(args, argv):
    g = gm.load(args.grammar)
    records = _load_records(args.corpus, args)
    sents = [g.inventory.encode(r.words) for r in records]
    weights = None
    if args.bias:
        bias = focusing.read_bias(args.bias)
        _check_bias(bias, records, args.bias)
        weights = bias.weights()
    trees = decode.decode_corpus(g, sents, args.decoder, [r.words for r in records], weights, args.threads)
    failed = 0
    out, close = _open_out(args.output)
    try:
        if close:
            out.write(provenance(argv) + "\n")
        for r, t in zip(records, trees):
            if t is None:
                failed += 1
                out.write("(X " + " ".join(r.words) + ")\n")
            else:
                out.write(to_bracketed(t) + "\n")
    finally:
        if close:
            out.close()
    if failed:
        log.warning("%d sentence(s) had zero measure; wrote flat trees", failed)
    if failed == len(records):
        return EXIT_NUMERIC
    return 0


# -- eval --------------------------------------------------------------------

def _filtered(trees, args):
    opts = _options(args)
    out = []
    for t in trees:
        out.append(strip_punctuation(t, opts.punct_tags))
    return out


def cmd_eval(args, argv):
    gold = [t for t in _filtered(read_trees(args.gold), args) if t is not None]
    reports = []
    out, close = _open_out(args.output)
    try:
        if close:
            out.write(provenance(argv) + "\n")
        out.write("run\tsentences\tskipped\tS-F1\tstd\n")
        for path in args.pred:
            pred = _filtered(read_trees(path), args)
            rep = analysis.corpus_s_f1(pred, gold)
            reports.append(rep)
            out.write(f"{path}\t{len(rep.f1)}\t{rep.skipped}\t{rep.mean:.4f}\t{rep.std:.4f}\n")
            if args.per_sentence:
                for k, f in enumerate(rep.f1):
                    out.write(f"  {k}\t{f:.4f}\n")
        if len(reports) > 1:
            m, s = analysis.across_runs(reports)
            out.write(f"across-runs\t{len(reports)}\t-\t{m:.4f}\t{s:.4f}\n")
    finally:
        if close:
            out.close()
    if args.jsonl:
        with open(args.jsonl, "w", encoding="utf-8") as f:
            f.write(provenance(argv) + "\n")
            for path, rep in zip(args.pred, reports):
                f.write(json.dumps({"pred": path, "mean": rep.mean, "std": rep.std, "skipped": rep.skipped,
                                    "f1": rep.f1, "config": rep.config}, sort_keys=True) + "\n")
    return 0


# -- analyze -----------------------------------------------------------------

def _write_rows(path, header, rows, argv):
    with open(path, "w", encoding="utf-8") as f:
        f.write(provenance(argv) + "\n")
        f.write("\t".join(header) + "\n")
        for row in rows:
            f.write("\t".join(str(x) for x in row) + "\n")


def _fmt_rule(rule):
    return f"{rule[0]} -> {' '.join(rule[1:])}"


def cmd_analyze(args, argv):
    kind = args.what
    out = sys.stdout
    records: list[dict] = []
    if kind == "diversity":
        series = {}
        rows = []
        for path in args.inputs:
            div = analysis.rule_diversity(read_trees(path), args.include_lexical)
            series[os.path.basename(path)] = div
            for n, v in div.items():
                rows.append((path, n, f"{v:.4f}"))
                records.append({"file": path, "length": n, "mean_unique_rules": v})
        out.write("file\tlength\tmean_unique_rules\n")
        for row in rows:
            out.write("\t".join(map(str, row)) + "\n")
        if args.data:
            _write_rows(args.data, ["file", "length", "mean_unique_rules"], rows, argv)
        if args.plot:
            plotting.rule_diversity_lines(series, args.plot)
    elif kind == "freq":
        series = {}
        rows = []
        for path in args.inputs:
            prof = analysis.rule_frequency_profile(read_trees(path))
            series[os.path.basename(path)] = [c for _, c in prof.ranked]
            out.write(f"{path}\ttotal {prof.total}\ttop-{args.top} share {100 * prof.top_share(args.top):.2f}%\n")
            for rank, (rule, c) in enumerate(prof.ranked, 1):
                rows.append((path, rank, _fmt_rule(rule), c, f"{c / prof.total:.6f}"))
            records.append({"file": path, "total": prof.total, "top_k": args.top,
                            "top_share": prof.top_share(args.top),
                            "ranked": [[_fmt_rule(r), c] for r, c in prof.ranked]})
        for row in rows:
            out.write("\t".join(map(str, row)) + "\n")
        if args.data:
            _write_rows(args.data, ["file", "rank", "rule", "count", "share"], rows, argv)
        if args.plot:
            plotting.rule_frequency_bars(series, args.plot)
    elif kind == "corr":
        xs, ys = [], []
        for path in args.inputs:
            with open(path, encoding="utf-8") as f:
                for line in f:
                    parts = line.split()
                    if not parts or line.startswith("#"):
                        continue
                    try:
                        x, y = float(parts[0]), float(parts[1])
                    except (ValueError, IndexError):
                        continue  # header row
                    xs.append(x)
                    ys.append(y)
        r, p = analysis.correlate_nll_f1(xs, ys)
        out.write(f"runs\t{len(xs)}\npearson_r\t{r:.6f}\np_value\t{p:.6g}\n")
        records.append({"runs": len(xs), "pearson_r": r, "p_value": p})
        if args.data:
            _write_rows(args.data, ["nll", "f1"], zip(xs, ys), argv)
        if args.plot:
            plotting.nll_f1_scatter({"runs": (xs, ys)}, args.plot, r, p)
    elif kind == "iou":
        if len(args.inputs) < 2:
            raise UsageError("iou needs at least two tree files")
        spans = {path: [tree_to_spans(t) for t in read_trees(path)] for path in args.inputs}
        paths = list(spans)
        for a in range(len(paths)):
            for b in range(a + 1, len(paths)):
                v = focusing.iou(spans[paths[a]], spans[paths[b]])
                out.write(f"{paths[a]}\t{paths[b]}\t{v:.6f}\n")
                records.append({"files": [paths[a], paths[b]], "iou": v})
        if len(paths) > 2:
            v = focusing.iou(*spans.values())
            out.write(f"all({len(paths)})\t-\t{v:.6f}\n")
            records.append({"files": paths, "iou": v})
    elif kind == "common":
        if not args.gold:
            raise UsageError("common needs --gold")
        gold = [tree_to_spans(t) for t in _filtered(read_trees(args.gold), args) if t is not None]
        parsers = {os.path.basename(p): [tree_to_spans(t) for t in read_trees(p)] for p in args.inputs}
        rep = focusing.common_span_gold_frequency(parsers, gold)
        out.write("parsers\tk\tcommon_spans\tin_gold\n")
        for combo, hit in rep.by_subset.items():
            out.write(f"{'+'.join(combo)}\t{len(combo)}\t{rep.spans_by_subset[combo]}\t{hit}\n")
            records.append({"parsers": list(combo), "common": rep.spans_by_subset[combo], "in_gold": hit})
        for k, v in rep.by_size.items():
            out.write(f"mean(k={k})\t{k}\t-\t{v:.4f}\n")
        if args.data:
            _write_rows(args.data, ["k", "mean_in_gold"], sorted(rep.by_size.items()), argv)
        if args.plot:
            plotting.common_span_bars(rep.by_size, args.plot)
    if args.jsonl:
        with open(args.jsonl, "w", encoding="utf-8") as f:
            f.write(provenance(argv) + "\n")
            for rec in records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
    return 0


# -- soa ---------------------------------------------------------------------

def cmd_soa(args, argv):
    vocab = [f"w{k}" for k in range(args.vocab)]
    try:
        pair = analysis.build_soa_pair(args.seed, args.nt, vocab, args.a, args.b, tuple(args.pair))
    except ValueError as e:
        raise UsageError(str(e)) from None
    rng = np.random.default_rng(args.seed)
    V = pair.base.inventory.n_vocab
    sents = [tuple(int(x) for x in rng.integers(0, V, int(rng.integers(args.min_len, args.max_len + 1))))
             for _ in range(args.sentences)]
    rep = analysis.verify_soa(pair, sents)
    out = sys.stdout
    out.write(f"pair\tN{pair.i} -> N{pair.j} T = {args.a} <-> N{pair.i} -> T N{pair.j} = {args.b}\n")
    out.write(f"sentences\t{len(sents)}\n")
    out.write(f"max_abs_delta_logp\t{rep.max_abs_delta:.3e}\n")
    out.write(f"viterbi_bracketings_differ\t{rep.n_differ}\n")
    out.write(f"alpha_spans\t{len(rep.alphas)}\n")
    out.write(f"max_abs_alpha_minus_1\t{rep.max_alpha_error:.3e}\n")
    equal = rep.max_abs_delta <= 1e-9
    out.write(f"equal_sentence_probabilities\t{'yes' if equal else 'no'}\n")
    if args.jsonl:
        with open(args.jsonl, "w", encoding="utf-8") as f:
            f.write(provenance(argv) + "\n")
            f.write(json.dumps({"max_abs_delta": rep.max_abs_delta, "n_differ": rep.n_differ,
                                "n_alpha": len(rep.alphas), "max_alpha_error": rep.max_alpha_error,
                                "log_probs": rep.log_probs}, sort_keys=True) + "\n")
    return 0


# -- synth -------------------------------------------------------------------

def cmd_synth(args, argv):
    g = gm.load(args.grammar) if args.grammar else synthetic.benchmark_grammar()
    trees = synthetic.sample_corpus(g, args.n, args.seed, args.min_len, args.max_len)
    write_trees(args.output, trees, provenance(argv))
    if args.write_grammar:
        gm.save(g, args.write_grammar, provenance(argv))
    print(f"wrote {len(trees)} trees to {args.output}")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parsefocus", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"parsefocus {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def corpus_flags(p):
        p.add_argument("--keep-punct", action="store_true", help="do not drop punctuation preterminals")
        p.add_argument("--lowercase", action="store_true")

    p = sub.add_parser("induce", help="train grammars with EM, optionally parse-focused")
    p.add_argument("--corpus", help="training corpus, bracketed or raw lines (default: bundled synthetic corpus)")
    p.add_argument("--valid", help="validation corpus for early stopping")
    p.add_argument("--bias", help="bias file aligned with the corpus; enables soft span weights")
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--nt", type=int)
    p.add_argument("--pt", type=int)
    p.add_argument("--seeds", help="e.g. 0..3 or 1,4,9")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--concentration", type=float)
    p.add_argument("--smoothing", type=float)
    p.add_argument("--vocab-size", type=int, default=10000)
    p.add_argument("--vocab", help="use this vocabulary file instead of building one")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True, help="output directory")
    corpus_flags(p)
    p.set_defaults(func=cmd_induce)

    p = sub.add_parser("bias", help="build a focusing-bias file")
    p.add_argument("--corpus", required=True)
    p.add_argument("trees", nargs="*", help="parser output files, one tree per corpus line")
    p.add_argument("--kind", choices=["left", "right", "random"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    corpus_flags(p)
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("parse", help="decode a corpus with a grammar")
    p.add_argument("--grammar", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--decoder", choices=["mbr", "cyk"], default="mbr")
    p.add_argument("--bias", help="decode MBR under the span-weighted posterior")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-o", "--output")
    corpus_flags(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="unlabeled sentence-level F1")
    p.add_argument("pred", nargs="+", help="predicted tree files (one per run)")
    p.add_argument("--gold", required=True)
    p.add_argument("--per-sentence", action="store_true")
    p.add_argument("--jsonl")
    p.add_argument("-o", "--output")
    corpus_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="diversity | freq | corr | iou | common")
    p.add_argument("what", choices=["diversity", "freq", "corr", "iou", "common"])
    p.add_argument("inputs", nargs="+")
    p.add_argument("--gold")
    p.add_argument("--include-lexical", action="store_true")
    p.add_argument("--top", type=int, default=3)
    p.add_argument("--jsonl", help="machine-readable records")
    p.add_argument("--data", help="tab-separated plot data")
    p.add_argument("--plot", help="render a figure (png, pdf, svg)")
    corpus_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("soa", help="flipped-rule-pair ambiguity check")
    p.add_argument("--nt", type=int, default=3)
    p.add_argument("--vocab", type=int, default=4)
    p.add_argument("--a", type=float, default=0.3)
    p.add_argument("--b", type=float, default=0.7)
    p.add_argument("--pair", type=int, nargs=2, default=[0, 1])
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--sentences", type=int, default=100)
    p.add_argument("--min-len", type=int, default=3)
    p.add_argument("--max-len", type=int, default=8)
    p.add_argument("--jsonl")
    p.set_defaults(func=cmd_soa)

    p = sub.add_parser("synth", help="sample a bracketed corpus from a grammar")
    p.add_argument("--grammar", help="grammar file (default: built-in benchmark grammar)")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--min-len", type=int, default=3)
    p.add_argument("--max-len", type=int, default=15)
    p.add_argument("--write-grammar")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args, argv)
    except UsageError as e:
        parser.error(str(e))
    except (AlignmentError, TreeFormatError, gm.GrammarFormatError, focusing.BiasFormatError,
            FileNotFoundError, IsADirectoryError) as e:
        print(f"parsefocus: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (chart.ZeroMeasureError, train.TrainingError) as e:
        print(f"parsefocus: numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"parsefocus: error: {e}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())

import json
import os
import subprocess
import sys

import pytest

from parsefocus import cli
from parsefocus.corpus import read_trees, tree_to_spans
from parsefocus.focusing import read_bias
from parsefocus.grammar import load, save
from parsefocus.synthetic import benchmark_grammar, mixed_branching_grammar


def run(*argv):
    return cli.main([str(a) for a in argv])


def body(path):
    """File contents without provenance lines."""
    with open(path, encoding="utf-8") as f:
        return [line for line in f if not line.startswith("# parsefocus")]


@pytest.fixture
def small(tmp_path):
    gold = tmp_path / "gold.trees"
    assert run("synth", "--n", 30, "--seed", 3, "--max-len", 9, "-o", gold) == 0
    return tmp_path, gold


def test_provenance_header(small):
    tmp, gold = small
    first = open(gold).readline()
    assert first.startswith("# parsefocus ") and "synth --n 30" in first


def test_synth_is_deterministic(small):
    tmp, gold = small
    run("synth", "--n", 30, "--seed", 3, "--max-len", 9, "-o", tmp / "again.trees")
    assert body(gold) == body(tmp / "again.trees")


def test_bundled_corpus_matches_synth(tmp_path):
    out = tmp_path / "b.trees"
    run("synth", "--n", 500, "--seed", 1, "-o", out)
    assert body(out) == body(cli.bundled())


def test_induce_on_bundled_corpus(tmp_path, capsys):
    out = tmp_path / "run"
    assert run("induce", "--nt", 5, "--pt", 10, "--seeds", "0..3", "--epochs", 1, "--out", out) == 0
    names = sorted(os.listdir(out))
    assert names == ["grammar-seed0.pcfg", "grammar-seed1.pcfg", "grammar-seed2.pcfg", "grammar-seed3.pcfg",
                     "runs.jsonl", "vocab.txt"]
    g = load(out / "grammar-seed0.pcfg")
    assert (g.n_nt, g.n_pt) == (5, 10)
    rows = [json.loads(x) for x in body(out / "runs.jsonl")]
    assert [r["seed"] for r in rows] == [0, 1, 2, 3]
    assert all(r["weight_mode"] == "off" for r in rows)


def test_induce_with_bias_config_and_determinism(small):
    tmp, gold = small
    assert run("bias", "--corpus", gold, "--kind", "right", "-o", tmp / "right.bias") == 0
    cfg = tmp / "train.cfg"
    cfg.write_text("nt = 2\npt = 4\nepochs = 3\nseeds = 0,1\n")
    outs = []
    for k, threads in enumerate((1, 4, 1)):
        out = tmp / f"run{k}"
        assert run("induce", "--config", cfg, "--corpus", gold, "--bias", tmp / "right.bias",
                   "--threads", threads, "--out", out) == 0
        outs.append(out)
    rows = [json.loads(x) for x in body(outs[0] / "runs.jsonl")]
    assert all(r["weight_mode"] == "soft" for r in rows)
    assert rows[0]["epochs"] == 3
    for name in ("runs.jsonl", "grammar-seed0.pcfg", "grammar-seed1.pcfg", "vocab.txt"):
        assert body(outs[0] / name) == body(outs[1] / name) == body(outs[2] / name)
    # flags override the config file
    run("induce", "--config", cfg, "--corpus", gold, "--epochs", 1, "--out", tmp / "ov")
    assert json.loads(body(tmp / "ov" / "runs.jsonl")[0])["epochs"] == 1


def test_bias_merge_and_random(small):
    tmp, gold = small
    run("bias", "--corpus", gold, "--kind", "random", "--seed", 5, "-o", tmp / "r1.bias")
    run("bias", "--corpus", gold, "--kind", "random", "--seed", 5, "-o", tmp / "r2.bias")
    assert body(tmp / "r1.bias") == body(tmp / "r2.bias")
    # parser files: gold twice and a decoded parse
    run("parse", "--grammar", write_grammar(tmp), "--corpus", gold, "-o", tmp / "p1.trees")
    files = [gold, tmp / "p1.trees", gold]
    assert run("bias", "--corpus", gold, *files, "-o", tmp / "m.bias") == 0
    merged = read_bias(tmp / "m.bias")
    assert merged.n_sources == 3
    assert max(max(c.values()) for c in merged.counts) <= 3
    singles = []
    for k, f in enumerate(files):
        run("bias", "--corpus", gold, f, "-o", tmp / f"s{k}.bias")
        singles.append(read_bias(tmp / f"s{k}.bias"))
    total = singles[0] + singles[1] + singles[2]
    assert total.counts == merged.counts
    meta = json.load(open(str(tmp / "m.bias") + ".meta.json"))
    assert len(meta["sources"]) == 3 and all(len(s["sha256"]) == 64 for s in meta["sources"])


def write_grammar(tmp):
    path = tmp / "gen.pcfg"
    save(benchmark_grammar(), path)
    return path


def test_parse_deterministic_grammar_and_threads(tmp_path):
    tmp = tmp_path
    g = tmp / "mixed.pcfg"
    save(mixed_branching_grammar(), g)
    gold = tmp / "gold.trees"
    run("synth", "--grammar", g, "--n", 30, "--seed", 2, "--max-len", 10, "-o", gold)
    for dec in ("mbr", "cyk"):
        assert run("parse", "--grammar", g, "--corpus", gold, "--decoder", dec, "-o", tmp / f"{dec}1.trees") == 0
        assert run("parse", "--grammar", g, "--corpus", gold, "--decoder", dec, "--threads", 4,
                   "-o", tmp / f"{dec}4.trees") == 0
        assert body(tmp / f"{dec}1.trees") == body(tmp / f"{dec}4.trees")
        assert len(body(tmp / f"{dec}1.trees")) == 30
    # every sentence of this generator has a single derivation, so both decoders recover it
    ref = [tree_to_spans(t) for t in read_trees(gold)]
    assert [tree_to_spans(t) for t in read_trees(tmp / "mbr1.trees")] == ref
    cyk = read_trees(tmp / "cyk1.trees")
    assert [str(t) for t in cyk] == [str(t) for t in read_trees(gold)]
    assert cyk[0].label.startswith("NT-")


def test_parse_zero_measure_writes_flat_tree(tmp_path):
    g = write_grammar(tmp_path)
    corpus = tmp_path / "raw.txt"
    corpus.write_text("the dog saw the cat\nthe the the\n")
    assert run("parse", "--grammar", g, "--corpus", corpus, "-o", tmp_path / "o.trees") == 0
    lines = body(tmp_path / "o.trees")
    assert lines[1].strip() == "(X the the the)"
    corpus.write_text("the the the\n")
    assert run("parse", "--grammar", g, "--corpus", corpus, "-o", tmp_path / "o.trees") == 4


def test_eval_gold_vs_gold(small, capsys):
    tmp, gold = small
    assert run("eval", gold, "--gold", gold, "--jsonl", tmp / "e.jsonl") == 0
    out = capsys.readouterr().out
    assert "100.0000\t0.0000" in out
    rec = json.loads(body(tmp / "e.jsonl")[0])
    assert rec["mean"] == 100.0


def test_analyze_reports_and_plots(small, capsys):
    tmp, gold = small
    g = write_grammar(tmp)
    run("parse", "--grammar", g, "--corpus", gold, "--decoder", "cyk", "-o", tmp / "cyk.trees")
    run("bias", "--corpus", gold, "--kind", "right", "-o", tmp / "r.bias")
    assert run("analyze", "diversity", tmp / "cyk.trees", "--plot", tmp / "d.png", "--data", tmp / "d.tsv",
               "--jsonl", tmp / "d.jsonl") == 0
    assert run("analyze", "freq", tmp / "cyk.trees", "--plot", tmp / "f.png", "--top", 3) == 0
    assert run("analyze", "common", gold, tmp / "cyk.trees", "--gold", gold, "--plot", tmp / "c.png") == 0
    for f in ("d.png", "f.png", "c.png"):
        assert (tmp / f).stat().st_size > 1000
    assert body(tmp / "d.tsv")[0].startswith("file\tlength")
    capsys.readouterr()
    assert run("analyze", "iou", gold, tmp / "cyk.trees") == 0
    got = float(capsys.readouterr().out.split()[-1])
    ref = [tree_to_spans(t) for t in read_trees(gold)]
    hyp = [tree_to_spans(t) for t in read_trees(tmp / "cyk.trees")]
    inter = sum(len(a & b) for a, b in zip(ref, hyp))
    union = sum(len(a | b) for a, b in zip(ref, hyp))
    assert got == pytest.approx(inter / union, abs=1e-6)
    # the diversity plot data is reproducible
    run("analyze", "diversity", tmp / "cyk.trees", "--data", tmp / "d2.tsv")
    assert body(tmp / "d.tsv") == body(tmp / "d2.tsv")


def test_analyze_corr(tmp_path, capsys):
    data = tmp_path / "runs.tsv"
    data.write_text("nll\tf1\n3.1\t40\n2.9\t45.5\n3.4\t38.2\n3.0\t52\n")
    assert run("analyze", "corr", data, "--plot", tmp_path / "s.png") == 0
    out = capsys.readouterr().out
    assert "pearson_r" in out and (tmp_path / "s.png").exists()
    data.write_text("1\t5\n1\t6\n1\t7\n")
    assert run("analyze", "corr", data) == 3


def test_diversity_on_unlabeled_trees_fails(small):
    tmp, gold = small
    run("parse", "--grammar", write_grammar(tmp), "--corpus", gold, "-o", tmp / "mbr.trees")
    assert run("analyze", "diversity", tmp / "mbr.trees") == 3


def test_soa_subcommand(capsys):
    assert run("soa", "--a", 0.3, "--b", 0.7) == 0
    out = capsys.readouterr().out
    assert "equal_sentence_probabilities\tyes" in out
    line = [x for x in out.splitlines() if x.startswith("viterbi_bracketings_differ")][0]
    assert int(line.split("\t")[1]) >= 1


def test_exit_codes(small, capsys):
    tmp, gold = small
    with pytest.raises(SystemExit) as e:
        run("induce")
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        run("induce", "--corpus", gold, "--nt", 0, "--out", tmp / "x")
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        run("induce", "--corpus", gold, "--epochs", 0, "--out", tmp / "x")
    assert e.value.code == 2
    # bias for a different corpus
    other = tmp / "other.trees"
    run("synth", "--n", 10, "--seed", 9, "-o", other)
    run("bias", "--corpus", other, "--kind", "left", "-o", tmp / "o.bias")
    assert run("induce", "--corpus", gold, "--bias", tmp / "o.bias", "--out", tmp / "x") == 3
    assert run("parse", "--grammar", tmp / "missing.pcfg", "--corpus", gold) == 3
    bad = tmp / "bad.pcfg"
    bad.write_text("pcfg v1 1 1\n")
    assert run("parse", "--grammar", bad, "--corpus", gold) == 3
    assert "error" in capsys.readouterr().err


def test_console_script_runs():
    out = subprocess.run([sys.executable, "-m", "parsefocus.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "parsefocus" in out.stdout

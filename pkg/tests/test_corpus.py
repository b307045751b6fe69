import pytest
from hypothesis import given, settings, strategies as st

from parsefocus import corpus as cp
from parsefocus.grammar import SymbolInventory
from conftest import fixture

SAMPLE1 = cp.read_trees(fixture("sample1.trees"))


def test_parse_simple():
    t = cp.parse_bracketed("(S (NP (PRP It)) (VP (VBZ is)))")
    assert t.label == "S"
    assert t.leaves() == ["It", "is"]
    assert cp.parse_bracketed("(X a)").leaves() == ["a"]


def test_sample1_gold():
    gold = SAMPLE1[0]
    assert gold.label == "ROOT"
    # It 's nothing dramatic just a routine sell-off
    assert len(gold.leaves()) == 8
    assert cp.tree_to_spans(gold) == {(0, 8), (1, 8), (2, 8), (2, 4), (4, 8)}


def test_ptb_outer_wrapper_stripped():
    t = cp.parse_bracketed("( (S (NP a) (VP b)) )")
    assert t.label == "S"


@pytest.mark.parametrize("text", ["", "(", "(S (NP a)", "(S a))", "()", "(S (NP a) b c"])
def test_parse_errors_have_offsets(text):
    with pytest.raises(cp.TreeFormatError) as e:
        cp.parse_bracketed(text)
    assert e.value.offset is not None


def test_roundtrip_sample():
    for t in SAMPLE1:
        assert cp.parse_bracketed(cp.to_bracketed(t)) == t


words = st.text(alphabet="abcxyz", min_size=1, max_size=3)


@st.composite
def trees(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return cp.Tree(draw(st.sampled_from(["NN", "VB"])), [draw(words)])
    kids = draw(st.lists(trees(depth=depth - 1), min_size=1, max_size=3))
    return cp.Tree(draw(st.sampled_from(["NP", "VP", "S"])), kids)


@settings(max_examples=60, deadline=None)
@given(trees())
def test_roundtrip_property(t):
    assert cp.parse_bracketed(cp.to_bracketed(t)) == t


@settings(max_examples=60, deadline=None)
@given(trees())
def test_unary_insertion_invariance(t):
    wrapped = cp.Tree("U", [cp.Tree("U2", [t])])
    assert cp.tree_to_spans(wrapped) == cp.tree_to_spans(t)


def test_branching_spans():
    toks = ["a", "b", "c"]
    assert cp.tree_to_spans(cp.left_branching(toks)) == {(0, 2), (0, 3)}
    assert cp.tree_to_spans(cp.right_branching(toks)) == {(1, 3), (0, 3)}
    assert cp.tree_to_spans(cp.left_branching(toks), include_whole=False) == {(0, 2)}
    # width-1 spans come from preterminal nodes; bare leaves carry none
    assert cp.tree_to_spans(cp.left_branching(toks), include_width_one=True) == {(0, 2), (0, 3)}
    w1 = cp.tree_to_spans(SAMPLE1[0], include_width_one=True)
    assert {(k, k + 1) for k in range(8)} <= w1


def test_tree_from_spans():
    t = cp.tree_from_spans(list("abcd"), {(0, 2), (2, 4), (0, 4)})
    assert cp.tree_to_spans(t) == {(0, 2), (2, 4), (0, 4)}
    assert t.leaves() == list("abcd")


def test_build_vocab():
    sents = [["a"] * 3 + ["b"] * 2 + ["c"]]
    assert cp.build_vocab(sents, 2) == ["a", "b", "<unk>"]
    assert cp.build_vocab(sents, 10) == ["a", "b", "c", "<unk>"]
    assert cp.build_vocab([["d", "c"]], 1) == ["c", "<unk>"]
    with pytest.raises(ValueError):
        cp.build_vocab([], 3)
    with pytest.raises(ValueError):
        cp.build_vocab([["a"]], 0)


def test_preprocess_punctuation_fixture():
    t = cp.read_trees(fixture("punct.tree"))[0]
    assert len(t.leaves()) == 12
    inv = SymbolInventory(1, 1, ["the", "company", "<unk>"])
    rec = cp.preprocess(t, inv)
    assert len(rec.words) == 10
    assert "," not in rec.words and "." not in rec.words
    assert rec.tokens[2:4] == (0, 1)
    assert rec.tokens[0] == inv.unk_id
    # spans after the comma shift left by one, the one after the period is unchanged
    assert cp.tree_to_spans(rec.gold_tree) == {(0, 2), (0, 10), (2, 4), (4, 10), (5, 10),
                                               (6, 10), (7, 10), (8, 10)}


def test_preprocess_commutes_with_index_remap():
    t = cp.read_trees(fixture("punct.tree"))[0]
    # punctuation sits at positions 2 and 11
    kept = [i for i in range(12) if i not in (2, 11)]
    remap = {old: new for new, old in enumerate(kept)}
    remap[12] = 10
    before = cp.tree_to_spans(t)
    mapped = set()
    for p, q in before:
        pp = min(remap[i] for i in range(p, q) if i in remap)
        qq = max(remap[i] for i in range(p, q) if i in remap) + 1
        if qq - pp >= 2:
            mapped.add((pp, qq))
    assert mapped == cp.tree_to_spans(cp.preprocess(t).gold_tree)


def test_only_punctuation_is_skipped():
    rec = cp.preprocess(cp.parse_bracketed("(S (. .) (, ,))"))
    assert rec.skipped and rec.words == ()


def test_lowercase_option():
    rec = cp.preprocess(None, words=["The", "Dog"], options=cp.PreprocessOptions(lowercase=True))
    assert rec.words == ("the", "dog")


def test_read_corpus_modes(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# header\n(S (NN a) (. .))\nraw words here\n(S (. .))\n")
    recs = cp.read_corpus(p)
    assert [r.words for r in recs] == [("a",), ("raw", "words", "here"), ()]
    assert recs[2].skipped
    assert recs[0].gold_tree is not None and recs[1].gold_tree is None


def test_read_trees_error_line(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("(S a)\n(S (b)\n")
    with pytest.raises(cp.TreeFormatError) as e:
        cp.read_trees(p)
    assert e.value.line == 2


def test_vocab_file_roundtrip(tmp_path):
    p = tmp_path / "v.txt"
    cp.write_vocab(p, ["a", "b", "<unk>"])
    assert cp.read_vocab(p) == ["a", "b", "<unk>"]

"""Exercise the Python bindings end to end on the hotel fixture."""

import math
import pathlib

import trie_lookahead_py as tl

FIXTURES = pathlib.Path(__file__).resolve().parents[2] / "cli" / "tests" / "fixtures"


def main():
    keywords = (FIXTURES / "hotel_keywords.txt").read_text().split("\n")
    keywords = [k for k in keywords if k.strip()]
    vocab = tl.Vocabulary.build(keywords, 100)
    trie = tl.Trie.build(vocab, keywords)
    assert len(trie) == 3
    assert tl.Trie.from_bytes(trie.to_bytes()).keywords() == trie.keywords()

    table = tl.Scorer.from_table((FIXTURES / "hotel_table.jsonl").read_text(), vocab)
    assert table.order() == 2

    greedy = tl.BeamConfig(beam_size=1, ngram_order=2, residual_weight=0.5)
    assert tl.extend(vocab, trie, table, "best hotel", greedy)[0][0] == "the best hotel in texas"
    greedy.residual_weight = 1.0
    assert tl.extend(vocab, trie, table, "best hotel", greedy)[0][0] == "the best hotel of tokyo"

    ahead = tl.extend(vocab, trie, table, "best hotel", tl.BeamConfig(beam_size=3, ngram_order=2))
    assert {k for k, _ in ahead} <= set(keywords)
    assert ahead[0][0] == "the best hotel of tokyo", ahead
    assert math.isclose(ahead[0][1], math.log(0.5), abs_tol=1e-6)

    prefix = vocab.tokenize("the best hotel")
    scores = dict(tl.lookahead_scores([], prefix, trie, table, 0.8, 2))
    assert set(scores) == set(trie.children(prefix))

    pairs = [tuple(line.split("\t")) for line in (FIXTURES / "hotel_pairs.tsv").read_text().splitlines() if line]
    model = tl.Scorer.train(vocab, pairs, markov_order=2, beta=0.5)
    lists = tl.beam_search(vocab.tokenize("tokyo hotel"), trie, model, tl.BeamConfig(beam_size=3))
    assert all(trie.contains(ids) for ids, _ in lists)
    assert len(model.predict([], [])) == 3

    bm25 = tl.Bm25(["cheap hotel toronto", "hotel deals", "toronto car rental"])
    top = bm25.query("cheap toronto hotel", 3)
    assert top[0][0] == "cheap hotel toronto"
    assert math.isclose(top[0][1], 1.8273904109435826, rel_tol=1e-12)

    ranked = [k for k, _ in ahead]
    assert tl.recall_at_k(ranked, ["The best hotel of Tokyo"], 1) == 1.0
    assert tl.average_precision_at_k(ranked, ["the best hotel of tokyo", "nowhere"], 2) == 0.5
    assert tl.merge([["a", "b"], ["b", "c"]], 10) == ["a", "b", "c"]

    try:
        tl.extend(vocab, trie, table, "best hotel", tl.BeamConfig(ngram_order=3))
    except ValueError:
        pass
    else:
        raise AssertionError("lookahead deeper than the scorer should fail")

    print("smoke test: ok")


if __name__ == "__main__":
    main()

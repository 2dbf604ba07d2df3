from __future__ import annotations

import math

import pytest

from factfilter import Corpus, MockBackend, ScoreTable, load_scores, score_corpus, write_scores
from factfilter.errors import ConfigurationError, DomainError, IntegrityError
from factfilter.scorers import (
    FactualityScore,
    ScoreFailure,
    score_arc_entailment,
    score_conditional_likelihood,
    score_corpus_to_file,
    score_greedy_precision,
)
from factfilter.errors import EmptySummaryError, NoArcsError

from conftest import make_corpus, make_pair


def oracle_greedy(document: str, summary: str, backend) -> float:
    """Pure-Python re-derivation of greedy precision from raw embeddings."""
    doc = backend.embed_tokens(document).vectors.tolist()
    summ = backend.embed_tokens(summary).vectors.tolist()
    best = []
    for u in summ:
        sims = []
        for v in doc:
            d2 = sum((ui - vi) ** 2 for ui, vi in zip(u, v))
            sims.append(1.0 - d2 / 2.0)
        best.append(max(sims))
    return sum(best) / len(best)


class TestGreedyPrecision:
    def test_copied_summary_scores_exactly_one(self, mock_backend):
        pair = make_pair("p", "the mayor opened the bridge on friday", "mayor opened the bridge")
        assert score_greedy_precision(pair, mock_backend).value == 1.0

    def test_mixed_case_matches_oracle(self, mock_backend):
        pair = make_pair("p", "alpha beta gamma", "alpha beta zzzz")
        score = score_greedy_precision(pair, mock_backend)
        assert score.value < 1.0
        expected = oracle_greedy(pair.document, pair.summary, mock_backend)
        assert score.value == pytest.approx(expected, abs=1e-12)

    def test_document_order_irrelevant(self, mock_backend):
        a = make_pair("p", "alpha beta gamma delta", "beta zzzz")
        b = make_pair("p", "delta gamma beta alpha", "beta zzzz")
        assert score_greedy_precision(a, mock_backend).value == \
            score_greedy_precision(b, mock_backend).value

    def test_superset_document_never_decreases(self, mock_backend):
        small = make_pair("p", "alpha beta", "alpha zzzz qqqq")
        large = make_pair("p", "alpha beta extra words here", "alpha zzzz qqqq")
        assert score_greedy_precision(large, mock_backend).value >= \
            score_greedy_precision(small, mock_backend).value

    def test_document_truncation_sets_flag(self):
        backend = MockBackend(max_tokens=3)
        pair = make_pair("p", "alpha beta gamma delta epsilon", "alpha beta")
        score = score_greedy_precision(pair, backend)
        assert score.truncated
        assert score.value == 1.0  # kept prefix still contains the summary tokens


class TestConditionalLikelihood:
    def test_all_present_is_log_point_nine(self, mock_backend):
        pair = make_pair("p", "storm hit the harbor town", "storm hit the harbor")
        score = score_conditional_likelihood(pair, mock_backend)
        assert score.value == pytest.approx(math.log(0.9), abs=1e-15)

    def test_half_present(self, mock_backend):
        pair = make_pair("p", "storm hit", "storm hit comet meteor")
        expected = (2 * math.log(0.9) + 2 * math.log(0.1)) / 4
        score = score_conditional_likelihood(pair, mock_backend)
        assert score.value == pytest.approx(expected, abs=1e-15)
        assert score.value == pytest.approx(-1.2040, abs=5e-5)

    def test_value_nonpositive_always(self, mock_backend):
        pair = make_pair("p", "a b c", "q w e r t y")
        assert score_conditional_likelihood(pair, mock_backend).value <= 0.0


class TestArcEntailment:
    def test_all_supported(self, mock_backend):
        pair = make_pair("p", "the mayor opened the bridge", "mayor opened bridge")
        assert score_arc_entailment(pair, mock_backend).value == 1.0

    def test_one_of_two_supported(self, mock_backend):
        # parse of "mayor opened comet": head "opened", children "mayor", "comet"
        pair = make_pair("p", "the mayor opened the bridge", "mayor opened comet")
        assert score_arc_entailment(pair, mock_backend).value == 0.5

    def test_mean_matches_explicit_enumeration(self, mock_backend):
        pair = make_pair("p", "alpha beta gamma", "alpha comet beta meteor gamma")
        arcs = mock_backend.parse_dependencies(pair.summary)
        probs = mock_backend.arc_entailment_probs(pair.document, arcs)
        expected = sum(probs) / len(probs)
        assert score_arc_entailment(pair, mock_backend).value == pytest.approx(expected)

    def test_single_token_summary_distinct_error(self, mock_backend):
        pair = make_pair("p", "the mayor opened the bridge", "mayor")
        with pytest.raises(NoArcsError):
            score_arc_entailment(pair, mock_backend)
        assert not issubclass(EmptySummaryError, NoArcsError)


class TestScoreCorpus:
    def _corpus(self) -> Corpus:
        return make_corpus(
            "c",
            make_pair("p1", "alpha beta gamma delta", "alpha beta"),
            make_pair("p2", "storm hit the harbor", "storm comet"),
            make_pair("p3", "one two three four", "two three four"),
        )

    def test_shape(self, mock_backend):
        cells = score_corpus(self._corpus(), ["greedy", "condll", "dae"], mock_backend)
        assert len(cells) == 9

    def test_permuted_corpus_same_content(self, mock_backend):
        corpus = self._corpus()
        reversed_corpus = Corpus(name="c", pairs=tuple(reversed(corpus.pairs)))
        forward = {(c.scorer, c.pair_id): c for c in
                   score_corpus(corpus, ["greedy", "condll"], mock_backend)}
        backward = {(c.scorer, c.pair_id): c for c in
                    score_corpus(reversed_corpus, ["greedy", "condll"], mock_backend)}
        assert forward == backward

    def test_parallel_equals_serial(self, mock_backend):
        corpus = self._corpus()
        serial = score_corpus(corpus, ["greedy", "condll", "dae"], mock_backend)
        parallel = score_corpus(corpus, ["greedy", "condll", "dae"], mock_backend,
                                parallelism=4)
        assert serial == parallel

    def test_non_thread_safe_backend_is_serialized(self, mock_backend):
        from dataclasses import replace

        class SingleThreaded(MockBackend):
            @property
            def descriptor(self):
                return replace(super().descriptor, thread_safe=False)

        corpus = self._corpus()
        cells = score_corpus(corpus, ["greedy", "condll", "dae"], SingleThreaded(),
                             parallelism=8)
        reference = score_corpus(corpus, ["greedy", "condll", "dae"], mock_backend)
        assert [(c.scorer, c.pair_id, c.value) for c in cells] == \
            [(c.scorer, c.pair_id, c.value) for c in reference]

    def test_single_token_summary_gets_sentinel_for_dae_only(self, mock_backend):
        corpus = make_corpus("c", make_pair("p1", "the mayor opened the bridge", "mayor"))
        cells = score_corpus(corpus, ["greedy", "condll", "dae"], mock_backend)
        by_scorer = {c.scorer: c for c in cells}
        assert isinstance(by_scorer["greedy"], FactualityScore)
        assert isinstance(by_scorer["condll"], FactualityScore)
        assert isinstance(by_scorer["dae"], ScoreFailure)
        assert "NoArcsError" in by_scorer["dae"].reason

    def test_unknown_scorer_rejected_before_scoring(self, mock_backend):
        with pytest.raises(ConfigurationError):
            score_corpus(self._corpus(), ["greedy", "nope"], mock_backend)

    def test_empty_corpus_rejected(self, mock_backend):
        with pytest.raises(DomainError):
            score_corpus(Corpus(name="c", pairs=()), ["greedy"], mock_backend)

    def test_concatenation_equals_union(self, mock_backend):
        c1 = make_corpus("c", make_pair("a1", "alpha beta gamma", "alpha beta"))
        c2 = make_corpus("c", make_pair("b1", "storm harbor town", "storm comet"))
        both = Corpus(name="c", pairs=c1.pairs + c2.pairs)
        separate = {(c.scorer, c.pair_id): c
                    for c in score_corpus(c1, ["greedy"], mock_backend)}
        separate.update({(c.scorer, c.pair_id): c
                         for c in score_corpus(c2, ["greedy"], mock_backend)})
        combined = {(c.scorer, c.pair_id): c
                    for c in score_corpus(both, ["greedy"], mock_backend)}
        assert combined == separate


class TestScoreTable:
    def _score(self, pair_id="p", scorer="greedy", backend_name="mock",
               backend_version="1", value=0.5) -> FactualityScore:
        return FactualityScore(pair_id=pair_id, scorer=scorer, backend_name=backend_name,
                               backend_version=backend_version, value=value, truncated=False)

    def test_rejects_mixed_backends_in_column(self):
        table = ScoreTable("c")
        table.add(self._score(pair_id="a"))
        with pytest.raises(IntegrityError):
            table.add(self._score(pair_id="b", backend_version="2"))

    def test_rejects_duplicate_cell(self):
        table = ScoreTable("c")
        table.add(self._score())
        with pytest.raises(IntegrityError):
            table.add(self._score())

    def test_values_excludes_sentinels(self):
        table = ScoreTable("c")
        table.add(self._score(pair_id="a"))
        table.add(ScoreFailure(pair_id="b", scorer="greedy", backend_name="mock",
                               backend_version="1", reason="boom"))
        assert set(table.values("greedy")) == {"a"}
        assert table.failures("greedy") == {"b": "boom"}

    def test_value_range_validated(self):
        with pytest.raises(DomainError):
            self._score(scorer="dae", value=1.5)
        with pytest.raises(DomainError):
            self._score(scorer="condll", value=0.25)


class TestScoresFile:
    def test_round_trip(self, tmp_path, mock_backend):
        corpus = make_corpus(
            "c",
            make_pair("p1", "alpha beta gamma", "alpha beta"),
            make_pair("p2", "storm harbor", "storm"),
        )
        cells = score_corpus(corpus, ["greedy", "dae"], mock_backend)
        path = tmp_path / "scores.jsonl"
        write_scores(cells, path)
        table = load_scores(path, "c")
        assert set(table.scorers) == {"greedy", "dae"}
        assert table.values("greedy")["p1"] == 1.0
        assert "p2" in table.failures("dae")

    def test_resume_skips_done_cells(self, tmp_path, mock_backend):
        corpus = make_corpus(
            "c",
            make_pair("p1", "alpha beta gamma", "alpha beta"),
            make_pair("p2", "storm harbor town", "storm harbor"),
        )
        path = tmp_path / "scores.jsonl"
        added_first = score_corpus_to_file(corpus, ["greedy"], mock_backend, path)
        assert added_first == 2
        before = path.read_bytes()
        added_again = score_corpus_to_file(corpus, ["greedy"], mock_backend, path)
        assert added_again == 0
        assert path.read_bytes() == before
        added_new_scorer = score_corpus_to_file(corpus, ["greedy", "condll"],
                                                mock_backend, path)
        assert added_new_scorer == 2
        table = load_scores(path, "c")
        assert set(table.scorers) == {"greedy", "condll"}

    def test_resume_with_different_backend_rejected(self, tmp_path, mock_backend):
        corpus = make_corpus(
            "c",
            make_pair("p1", "alpha beta gamma", "alpha beta"),
        )
        path = tmp_path / "scores.jsonl"
        score_corpus_to_file(corpus, ["greedy"], mock_backend, path)
        bigger = make_corpus("c", corpus.pairs[0],
                             make_pair("p2", "storm harbor", "storm harbor"))

        class OtherVersion(MockBackend):
            @property
            def descriptor(self):
                from dataclasses import replace
                return replace(super().descriptor, version="2")

        before = path.read_bytes()
        with pytest.raises(IntegrityError):
            score_corpus_to_file(bigger, ["greedy"], OtherVersion(), path)
        assert path.read_bytes() == before

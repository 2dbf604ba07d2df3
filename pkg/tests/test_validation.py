from __future__ import annotations

import json

import numpy as np
import pytest

from factfilter import (
    CATEGORIES,
    FactualityAnnotation,
    flip_analysis,
    flip_labels,
    load_annotations,
    validate_scorer,
)
from factfilter.errors import CoverageError, DomainError, IntegrityError, ParseError


def synth_annotations(seed: int, n: int, flag_rate: float = 0.3,
                      datasets=("cnndm", "xsum"), systems=("sysA", "sysB")):
    rng = np.random.default_rng(seed)
    annotations = []
    for i in range(n):
        flags = {c: bool(rng.random() < flag_rate) for c in CATEGORIES}
        factuality = 1.0 if not any(flags.values()) else float(rng.uniform(0.0, 0.8))
        annotations.append(FactualityAnnotation(
            summary_id=f"s{i:05d}",
            source_dataset=datasets[i % len(datasets)],
            system_id=systems[i % len(systems)],
            factuality=factuality,
            category_flags=flags,
        ))
    return annotations


def _record(summary_id="s1", dataset="cnndm", system="sysA", factuality=1.0,
            flags=(False, False, False)):
    return {
        "summary_id": summary_id,
        "dataset": dataset,
        "system": system,
        "factuality": factuality,
        "errors": dict(zip(CATEGORIES, flags)),
    }


class TestLoadAnnotations:
    def test_loads_valid_records(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        rows = [_record("s1"), _record("s2", factuality=0.3, flags=(True, False, False)),
                _record("s3", dataset="xsum")]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        annotations = load_annotations(path)
        assert len(annotations) == 3
        assert annotations[1].category_flags["semantic_frame"]

    def test_unflagged_nonfactual_record_rejected_with_id(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(_record("s9", factuality=0.4)) + "\n")
        with pytest.raises(IntegrityError, match="s9"):
            load_annotations(path)

    def test_schema_mismatch_is_parse_error(self, tmp_path):
        path = tmp_path / "schema.jsonl"
        path.write_text(json.dumps({"unrelated": 1}) + "\n")
        with pytest.raises(ParseError):
            load_annotations(path)

    def test_column_map_adapter(self, tmp_path):
        path = tmp_path / "external.jsonl"
        row = {"hash": "s1", "corpus": "xsum", "model_name": "bart",
               "score": 0.5, "error_flags": dict(zip(CATEGORIES, (False, True, False)))}
        path.write_text(json.dumps(row) + "\n")
        annotations = load_annotations(path, column_map={
            "summary_id": "hash", "dataset": "corpus", "system": "model_name",
            "factuality": "score", "errors": "error_flags"})
        assert annotations[0].summary_id == "s1"
        assert annotations[0].category_flags["discourse"]


class TestValidateScorer:
    def test_score_equal_to_factuality_gives_r_one(self):
        annotations = synth_annotations(0, 200)
        scores = {a.summary_id: a.factuality for a in annotations}
        result = validate_scorer(scores, annotations, dataset="cnndm")
        assert result.r == pytest.approx(1.0, abs=1e-9)

    def test_independent_noise_gives_near_zero(self):
        annotations = synth_annotations(1, 1000, datasets=("cnndm",))
        rng = np.random.default_rng(99)
        scores = {a.summary_id: float(rng.normal()) for a in annotations}
        result = validate_scorer(scores, annotations, dataset="cnndm")
        assert abs(result.r) < 0.1
        assert result.n == 1000

    def test_slice_restricts_population(self):
        annotations = synth_annotations(2, 100)
        scores = {a.summary_id: a.factuality for a in annotations}
        cnndm = validate_scorer(scores, annotations, dataset="cnndm")
        pooled = validate_scorer(scores, annotations, dataset=None)
        assert cnndm.n == 50
        assert pooled.n == 100

    def test_coverage_floor_enforced(self):
        annotations = synth_annotations(3, 100, datasets=("cnndm",))
        scores = {a.summary_id: a.factuality for a in annotations[:90]}  # 90% < 95%
        with pytest.raises(CoverageError) as excinfo:
            validate_scorer(scores, annotations, dataset="cnndm")
        assert len(excinfo.value.missing_ids) == 10

    def test_pairwise_exclusion_above_floor(self):
        annotations = synth_annotations(4, 100, datasets=("cnndm",))
        scores = {a.summary_id: a.factuality for a in annotations[:97]}
        result = validate_scorer(scores, annotations, dataset="cnndm")
        assert result.n == 97

    def test_positive_affine_transform_invariance(self):
        annotations = synth_annotations(5, 300)
        scores = {a.summary_id: a.factuality * 0.5 + 0.1 for a in annotations}
        rng = np.random.default_rng(0)
        noisy = {k: v + 0.05 * float(rng.normal()) for k, v in scores.items()}
        base = validate_scorer(noisy, annotations).r
        rescaled = validate_scorer({k: 7.0 * v + 3.0 for k, v in noisy.items()},
                                   annotations).r
        assert rescaled == pytest.approx(base, abs=1e-9)


class TestFlipLabels:
    def test_flip_unflagged_category_zeroes_factuality(self):
        annotations = [FactualityAnnotation(
            summary_id=f"s{i}", source_dataset="cnndm", system_id="sysA",
            factuality=1.0, category_flags=dict.fromkeys(CATEGORIES, False))
            for i in range(5)]
        flipped = flip_labels(annotations, "discourse")
        assert all(a.category_flags["discourse"] for a in flipped)
        assert all(a.factuality == 0.0 for a in flipped)

    def test_double_flip_is_identity_on_flags(self):
        annotations = synth_annotations(6, 50)
        for category in CATEGORIES:
            twice = flip_labels(flip_labels(annotations, category), category)
            assert [a.category_flags for a in twice] == \
                [a.category_flags for a in annotations]

    def test_other_categories_untouched(self):
        annotations = synth_annotations(7, 50)
        flipped = flip_labels(annotations, "semantic_frame")
        for before, after in zip(annotations, flipped):
            assert before.category_flags["discourse"] == after.category_flags["discourse"]
            assert before.category_flags["content_verifiability"] == \
                after.category_flags["content_verifiability"]

    def test_clearing_sole_flag_restores_factual(self):
        annotation = FactualityAnnotation(
            summary_id="s", source_dataset="cnndm", system_id="sysA",
            factuality=0.3,
            category_flags={"semantic_frame": True, "discourse": False,
                            "content_verifiability": False})
        (flipped,) = flip_labels([annotation], "semantic_frame")
        assert flipped.factuality == 1.0

    def test_surviving_original_flag_keeps_judgment(self):
        annotation = FactualityAnnotation(
            summary_id="s", source_dataset="cnndm", system_id="sysA",
            factuality=0.3,
            category_flags={"semantic_frame": True, "discourse": True,
                            "content_verifiability": False})
        (flipped,) = flip_labels([annotation], "semantic_frame")
        assert flipped.factuality == 0.3

    def test_unknown_category_rejected(self):
        with pytest.raises(DomainError):
            flip_labels([], "spelling")


class TestFlipAnalysis:
    def test_category_specific_scorer_has_maximal_delta(self):
        rng = np.random.default_rng(8)
        annotations = []
        for i in range(400):
            flags = {c: bool(rng.random() < 0.3) for c in CATEGORIES}
            factuality = 1.0 if not any(flags.values()) else 0.1
            annotations.append(FactualityAnnotation(
                summary_id=f"s{i}", source_dataset="cnndm",
                system_id=("sysA", "sysB")[i % 2], factuality=factuality,
                category_flags=flags))
        target = "content_verifiability"
        scores = {a.summary_id: 0.0 if a.category_flags[target] else 1.0
                  for a in annotations}
        report = flip_analysis({"probe": scores}, annotations)
        deltas = {c: report.delta("probe", "cnndm", c) for c in CATEGORIES}
        assert max(deltas, key=deltas.get) == target

    def test_noise_scorer_has_small_deltas(self):
        annotations = synth_annotations(9, 1000, datasets=("xsum",))
        rng = np.random.default_rng(10)
        scores = {a.summary_id: float(rng.normal()) for a in annotations}
        report = flip_analysis({"noise": scores}, annotations)
        for row in report.rows:
            assert abs(row.delta) < 0.1

    def test_csv_round_trippable_shape(self, tmp_path):
        annotations = synth_annotations(11, 60)
        scores = {a.summary_id: a.factuality for a in annotations}
        report = flip_analysis({"probe": scores}, annotations)
        path = tmp_path / "flips.csv"
        report.to_csv(path)
        lines = path.read_text().strip().splitlines()
        # header + (1 scorer x 2 datasets x 3 categories)
        assert len(lines) == 1 + 6
        assert lines[0] == "scorer,dataset,category,r_original,r_flipped,delta"

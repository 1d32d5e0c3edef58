import numpy as np
import pytest

from organrrg.corpus import words
from organrrg.instruct import (
    BuilderConfig, PROMPT_TEMPLATE,
    build_qa_pairs, build_stats, load_qa_pairs, save_qa_pairs, segment_report,
)
from organrrg.organs import Organ, ORGAN_ORDER
from organrrg.synth import synth_report_corpus


class TestSegmentReport:
    def test_basic_split(self):
        assert segment_report("heart is normal. lungs are clear.") == \
            ["heart is normal", "lungs are clear"]

    def test_empty(self):
        assert segment_report("") == []

    def test_decimal_survives(self):
        out = segment_report("effusion measures 1.5 cm. no pneumothorax.")
        assert out == ["effusion measures 1.5 cm", "no pneumothorax"]

    def test_normalizes_case_and_punctuation(self):
        assert segment_report("Heart, Normal. ") == ["heart normal"]


@pytest.fixture(scope="module")
def seeded_corpus():
    return synth_report_corpus(seed=13, n=200)


class TestBuildRules:
    def test_deterministic(self, seeded_corpus, default_graph):
        cfg = BuilderConfig()
        pairs1, _ = build_qa_pairs(seeded_corpus, default_graph, cfg, seed=7)
        pairs2, _ = build_qa_pairs(seeded_corpus, default_graph, cfg, seed=7)
        assert pairs1 == pairs2

    def test_prompt_template_bit_exact(self, seeded_corpus, default_graph):
        import json

        from organrrg.corpus import normalize_text

        pairs, _ = build_qa_pairs(seeded_corpus, default_graph, seed=0)
        for pair in pairs:
            assert pair.prompt == f"What have you found in {pair.organ.value}?"
            assert normalize_text(pair.prompt) == f"what have you found in {pair.organ.value}"
            serialized = json.loads(pair.to_json())
            assert serialized["prompt"] == f"What have you found in {pair.organ.value}?\n<image>"
        assert PROMPT_TEMPLATE.format(organ="lung") == "What have you found in lung?"

    def test_answers_under_20_tokens(self, seeded_corpus, default_graph):
        pairs, stats = build_qa_pairs(seeded_corpus, default_graph, seed=0)
        assert pairs
        for pair in pairs:
            assert len(pair.answer.split()) < 20
        assert stats.mean_answer_tokens < 20

    def test_balance_within_tolerance(self, seeded_corpus, default_graph):
        cfg = BuilderConfig(balance_tolerance=0.1)
        pairs, stats = build_qa_pairs(seeded_corpus, default_graph, cfg, seed=0)
        counts = [stats.per_organ_counts[o.value] for o in ORGAN_ORDER]
        mean = sum(counts) / len(counts)
        for c in counts:
            assert abs(c - mean) <= 0.1 * mean + 1e-9

    def test_duplicate_cap_of_one(self, seeded_corpus, default_graph):
        cfg = BuilderConfig(max_duplicate_answers=1)
        pairs, _ = build_qa_pairs(seeded_corpus, default_graph, cfg, seed=0)
        answers = [p.answer for p in pairs]
        assert len(answers) == len(set(answers))

    def test_positive_boost_raises_ratio(self, seeded_corpus, default_graph):
        boosted, stats = build_qa_pairs(
            seeded_corpus, default_graph, BuilderConfig(positive_boost=2.0), seed=0)
        assert stats.positive_ratio > 0.5

    def test_positive_answers_contain_keywords(self, seeded_corpus, default_graph):
        pairs, _ = build_qa_pairs(seeded_corpus, default_graph, seed=0)
        keywords = default_graph.all_keywords()
        flagged = 0
        for pair in pairs:
            joined = " ".join(words(pair.answer))
            if any(f" {kw} " in f" {joined} " for kw in keywords):
                flagged += 1
        assert flagged > 0

    def test_no_positive_corpus_warns_not_errors(self, default_graph):
        corpus = [(f"img-{i}", "the lungs are clear. the heart is normal in size.")
                  for i in range(8)]
        pairs, stats = build_qa_pairs(
            corpus, default_graph, BuilderConfig(positive_boost=2.0), seed=1)
        assert stats.warnings
        assert all(len(p.answer.split()) < 20 for p in pairs)


class TestStats:
    def test_even_counts(self, default_graph):
        corpus = [(f"i{i}", "the lungs are clear. the heart is normal in size. "
                            "the bones are intact. no pleural effusion is seen. "
                            "the mediastinum is unremarkable.") for i in range(2)]
        cfg = BuilderConfig(positive_boost=1.0, max_duplicate_answers=10)
        pairs, stats = build_qa_pairs(corpus, default_graph, cfg, seed=0)
        assert stats.n_pairs == 10
        assert set(stats.per_organ_counts.values()) == {2}

    def test_empty_rejected(self, default_graph):
        with pytest.raises(ValueError):
            build_stats([], default_graph)

    def test_jsonl_roundtrip(self, tmp_path, seeded_corpus, default_graph):
        pairs, _ = build_qa_pairs(seeded_corpus, default_graph, seed=0)
        path = tmp_path / "qa.jsonl"
        save_qa_pairs(pairs, path)
        assert load_qa_pairs(path) == pairs


class TestRuleThreeOrdering:
    def test_richer_images_processed_first(self, default_graph):
        # Both images yield the same lung answer; with a duplicate cap of 1
        # the pair must come from the image with more organ groups.
        rich = ("the lungs are clear. the heart is normal in size. "
                "the bones are intact. no pleural effusion is seen. "
                "the mediastinum is unremarkable.")
        poor = "the lungs are clear."
        corpus = [("z-poor", poor), ("a-rich", rich)]
        cfg = BuilderConfig(positive_boost=1.0, max_duplicate_answers=1,
                            balance_tolerance=1.0)
        pairs, _ = build_qa_pairs(corpus, default_graph, cfg, seed=0)
        lung_pairs = [p for p in pairs if p.organ is Organ.LUNG]
        assert len(lung_pairs) == 1
        assert lung_pairs[0].image_id == "a-rich"

    def test_ties_broken_by_id(self, default_graph):
        report = "the lungs are clear."
        corpus = [("img-b", report), ("img-a", report)]
        cfg = BuilderConfig(positive_boost=1.0, max_duplicate_answers=1,
                            balance_tolerance=1.0)
        pairs, _ = build_qa_pairs(corpus, default_graph, cfg, seed=0)
        assert [p.image_id for p in pairs] == ["img-a"]


class TestAnswerTruncation:
    def test_truncated_at_sentence_boundary(self, default_graph):
        # Three lung sentences of 7 tokens each: only two fit under 20.
        s7 = "the lungs are clear and fully expanded"
        report = f"{s7}. {s7}. {s7}."
        cfg = BuilderConfig(positive_boost=1.0, max_duplicate_answers=5,
                            balance_tolerance=1.0)
        pairs, _ = build_qa_pairs([("x", report)], default_graph, cfg, seed=0)
        lung = [p for p in pairs if p.organ is Organ.LUNG]
        assert len(lung) == 1
        assert len(lung[0].answer.split()) == 14
        assert lung[0].answer == f"{s7}. {s7}"

    def test_single_overlong_sentence_hard_truncated(self, default_graph):
        long_sentence = "the lungs are clear " * 6  # 24 tokens
        pairs, _ = build_qa_pairs(
            [("x", long_sentence + ".")], default_graph,
            BuilderConfig(positive_boost=1.0, balance_tolerance=1.0), seed=0)
        lung = [p for p in pairs if p.organ is Organ.LUNG]
        assert lung and len(lung[0].answer.split()) == 19


def test_stats_log_builder_thresholds(default_graph):
    corpus = synth_report_corpus(seed=3, n=20)
    cfg = BuilderConfig(positive_boost=3.0, max_duplicate_answers=2, balance_tolerance=0.2)
    _, stats = build_qa_pairs(corpus, default_graph, cfg, seed=0)
    assert stats.config["positive_boost"] == 3.0
    assert stats.config["max_duplicate_answers"] == 2
    assert stats.config["balance_tolerance"] == 0.2

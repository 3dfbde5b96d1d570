"""Image decisions and voting policies, including the exhaustive truth table."""

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from detfuse import Box, Detection, ImageDecision, VotePolicy, decide_image, vote
from detfuse.voting import parse_decisions, serialize_decisions


def det(score, model="m1"):
    return Detection(Box(0, 0, 10, 10), score, "fracture", model)


def decision(label, evidence=0.0, image="img"):
    return ImageDecision(image, label, evidence)


class TestDecideImage:
    def test_any_score_at_threshold_is_fracture(self):
        d = decide_image("img", [det(0.7), det(0.3)], 0.5)
        assert d.label == "fracture"
        assert d.evidence_score == 0.7

    def test_empty_is_non_fracture(self):
        d = decide_image("img", [], 0.5)
        assert d.label == "non-fracture"
        assert d.evidence_score == 0.0

    def test_boundary_score_counts(self):
        assert decide_image("img", [det(0.5)], 0.5).label == "fracture"

    def test_all_below_threshold(self):
        d = decide_image("img", [det(0.49), det(0.2)], 0.5)
        assert d.label == "non-fracture"
        assert d.evidence_score == 0.49

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            decide_image("img", [], 0.0)

    @given(st.lists(st.floats(0.0, 1.0, allow_nan=False), max_size=6),
           st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_threshold_monotonic(self, scores, t1, t2):
        """Raising the threshold never flips non-fracture to fracture."""
        lo, hi = sorted((t1, t2))
        dets = [det(s) for s in scores]
        if decide_image("img", dets, lo).label == "non-fracture":
            assert decide_image("img", dets, hi).label == "non-fracture"


class TestVote:
    def test_affirmative_or(self):
        ds = [decision("fracture", 0.7), decision("non-fracture"), decision("non-fracture")]
        assert vote(ds, VotePolicy("affirmative")).label == "fracture"

    def test_unanimous_and(self):
        ds = [decision("fracture", 0.9), decision("fracture", 0.8), decision("non-fracture")]
        assert vote(ds, VotePolicy("unanimous")).label == "non-fracture"

    def test_consensus_majority(self):
        ds = [decision("fracture", 0.9), decision("fracture", 0.8), decision("non-fracture")]
        assert vote(ds, VotePolicy("consensus")).label == "fracture"

    def test_consensus_tie_resolves_to_fracture(self):
        ds = [decision("fracture", 0.6), decision("non-fracture")]
        assert vote(ds, VotePolicy("consensus")).label == "fracture"

    def test_evidence_is_max_among_agreeing(self):
        ds = [decision("fracture", 0.6), decision("fracture", 0.9), decision("non-fracture", 0.4)]
        out = vote(ds, VotePolicy("affirmative"))
        assert out.evidence_score == 0.9

    def test_negative_result_has_zero_evidence(self):
        ds = [decision("non-fracture", 0.4), decision("non-fracture", 0.3)]
        assert vote(ds, VotePolicy("affirmative")).evidence_score == 0.0

    def test_empty_decisions_error(self):
        with pytest.raises(ValueError):
            vote([], VotePolicy("affirmative"))

    def test_mixed_image_ids_error(self):
        ds = [decision("fracture", 0.9, image="a"), decision("fracture", 0.9, image="b")]
        with pytest.raises(ValueError, match="multiple images"):
            vote(ds, VotePolicy("affirmative"))

    def test_exhaustive_truth_table_three_models(self):
        """All 2^3 label combinations against the OR / AND / majority definitions."""
        for labels in itertools.product([True, False], repeat=3):
            ds = [decision("fracture" if v else "non-fracture", 0.9 if v else 0.0)
                  for v in labels]
            n_pos = sum(labels)
            expect = {
                "affirmative": n_pos >= 1,
                "unanimous": n_pos == 3,
                "consensus": n_pos >= 2,
            }
            for kind, should_be_positive in expect.items():
                got = vote(ds, VotePolicy(kind)).label == "fracture"
                assert got == should_be_positive, (labels, kind)

    @given(st.lists(st.booleans(), min_size=1, max_size=7))
    def test_strictness_chain(self, labels):
        """unanimous => consensus => affirmative on the fracture label."""
        ds = [decision("fracture" if v else "non-fracture", 0.9 if v else 0.0)
              for v in labels]
        results = {k: vote(ds, VotePolicy(k)).label == "fracture"
                   for k in ("affirmative", "unanimous", "consensus")}
        if results["unanimous"]:
            assert results["consensus"]
        if results["consensus"]:
            assert results["affirmative"]

    @given(st.lists(st.booleans(), min_size=1, max_size=6), st.randoms(use_true_random=False))
    def test_permutation_invariance(self, labels, rnd):
        ds = [decision("fracture" if v else "non-fracture", 0.5 + 0.05 * i if v else 0.0)
              for i, v in enumerate(labels)]
        shuffled = list(ds)
        rnd.shuffle(shuffled)
        for kind in ("affirmative", "unanimous", "consensus"):
            assert vote(ds, VotePolicy(kind)) == vote(shuffled, VotePolicy(kind))

    def test_single_model_all_policies_coincide(self):
        for label in ("fracture", "non-fracture"):
            ds = [decision(label, 0.8 if label == "fracture" else 0.0)]
            outs = {vote(ds, VotePolicy(k)).label for k in ("affirmative", "unanimous", "consensus")}
            assert outs == {label}


class TestVotePolicy:
    def test_bad_kind(self):
        with pytest.raises(ValueError):
            VotePolicy("plurality")

    @pytest.mark.parametrize("thr", [0.0, 1.0, -0.3])
    def test_bad_threshold(self, thr):
        with pytest.raises(ValueError):
            VotePolicy("consensus", thr)


class TestDecisionFile:
    def test_round_trip(self):
        ds = [decision("fracture", 0.875, image="a"), decision("non-fracture", 0.0, image="b")]
        assert parse_decisions(serialize_decisions(ds)) == ds

    def test_duplicate_rejected(self):
        import json

        doc = json.loads(serialize_decisions([decision("fracture", 0.9)]))
        doc["decisions"].append(doc["decisions"][0])
        with pytest.raises(ValueError, match="duplicate"):
            parse_decisions(json.dumps(doc))

    def test_bad_label_rejected(self):
        import json

        doc = {"format_version": "1",
               "decisions": [{"image_id": "a", "label": "maybe", "evidence_score": 0.5}]}
        with pytest.raises(ValueError):
            parse_decisions(json.dumps(doc))

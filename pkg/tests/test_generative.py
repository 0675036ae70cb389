import math

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from pathrisk import fixtures
from pathrisk.generative import (DetectorError, FieldUnavailableError,
                                 GenerativeConfig, audit_generative,
                                 firing_threshold, score)
from pathrisk.records import KnowledgeBase, TraceRecord
from pathrisk.registry import (ALIAS_GROUPS, GENERATIVE_DETECTORS,
                               DISCRIMINATIVE_DETECTORS, alias_label,
                               distinct_pathology_count, pathology_ids)
from conftest import random_orthogonal

GEN_IDS = sorted(GENERATIVE_DETECTORS)


def run_fixture(pathology, positive, cfg=GenerativeConfig()):
    bundle = fixtures.generative_fixture(pathology, positive)
    result = audit_generative(bundle["records"], kb=bundle["kb"],
                              fixtures=bundle["causal_fixtures"], cfg=cfg)
    return [o for o in result.outcomes if o.pathology == pathology]


class TestRegistry:
    def test_counts(self):
        assert len(GENERATIVE_DETECTORS) == 21
        assert len(DISCRIMINATIVE_DETECTORS) == 14
        assert len(pathology_ids()) == 35
        assert distinct_pathology_count() == 34

    def test_alias_group(self):
        assert ALIAS_GROUPS == (("semantic_reheating", "semantic_warming"),)
        assert alias_label("semantic_reheating") == \
            alias_label("semantic_warming")
        assert alias_label("delusion") == "delusion"


class TestFixturePolarity:
    @pytest.mark.parametrize("pathology", GEN_IDS)
    def test_positive_fires(self, pathology):
        outcomes = run_fixture(pathology, True)
        assert outcomes, f"{pathology} produced no outcome"
        assert any(o.fired for o in outcomes)

    @pytest.mark.parametrize("pathology", GEN_IDS)
    def test_negative_silent(self, pathology):
        outcomes = run_fixture(pathology, False)
        assert outcomes, f"{pathology} produced no outcome"
        assert not any(o.fired for o in outcomes)

    @pytest.mark.parametrize("pathology", GEN_IDS)
    def test_threshold_semantics(self, pathology):
        for positive in (True, False):
            for o in run_fixture(pathology, positive):
                assert o.fired == (o.severity >= o.threshold)
                assert o.loss == o.severity
                assert 0.0 <= o.severity <= 1.0


class TestKnownSeverities:
    def test_delusion_log_ratio(self):
        [outcome] = run_fixture("delusion", True)
        # ln(0.9/0.01) / ln(100)
        assert outcome.severity == pytest.approx(
            math.log(90.0) / math.log(100.0), abs=1e-12)

    def test_delusion_requires_distinct_output(self):
        rec = TraceRecord(id="same", input_embedding=np.eye(4)[0],
                          output_embedding=np.eye(4)[0],
                          truth_embedding=np.eye(4)[0],
                          prob_output_given_input=0.9,
                          prob_truth_given_input=0.01)
        assert score("delusion", rec).severity == 0.0

    def test_exaggeration_equal_magnitudes_silent(self):
        [outcome] = run_fixture("exaggeration", False)
        assert outcome.severity == 0.0
        assert not outcome.fired

    def test_contextual_drift_distance_evidence(self):
        [outcome] = run_fixture("contextual_drift", True)
        assert outcome.severity == 1.0
        assert outcome.evidence["distance"] == "5"

    def test_causal_exact_match_severity_one(self):
        [outcome] = run_fixture("causal_inference_failure", True)
        assert outcome.severity == 1.0
        assert outcome.fired

    def test_hallucination_grounded_silent(self):
        [outcome] = run_fixture("hallucination", False)
        assert outcome.severity == 0.0


class TestAudit:
    def test_empty_corpus_all_skipped(self):
        result = audit_generative([])
        assert result.outcomes == ()
        assert set(result.skipped) == set(GENERATIVE_DETECTORS)

    def test_determinism(self):
        bundle = fixtures.generative_fixture("bluffing", True)
        kwargs = dict(kb=bundle["kb"], fixtures=bundle["causal_fixtures"])
        a = audit_generative(bundle["records"], **kwargs)
        b = audit_generative(bundle["records"], **kwargs)
        assert [o.to_json_dict() for o in a.outcomes] == \
            [o.to_json_dict() for o in b.outcomes]

    def test_outcomes_sorted(self):
        records = fixtures.demo_trace_corpus()
        result = audit_generative(records, kb=fixtures.standard_kb(),
                                  fixtures=[fixtures.demo_causal_fixture()])
        keys = [o.sort_key() for o in result.outcomes]
        assert keys == sorted(keys)

    def test_skip_reasons_reported(self):
        bundle = fixtures.generative_fixture("hallucination", True)
        result = audit_generative(bundle["records"])
        assert "no knowledge base supplied" in result.skipped["confabulation"]
        assert "no causal fixtures supplied" in \
            result.skipped["causal_inference_failure"]


class TestErrors:
    def test_corpus_detector_rejects_single_record(self):
        bundle = fixtures.generative_fixture("bluffing", True)
        with pytest.raises(DetectorError, match="single record"):
            score("bluffing", bundle["records"][0])

    def test_missing_field_names_field(self):
        rec = TraceRecord(id="bare", input_embedding=np.eye(4)[0],
                          output_embedding=np.eye(4)[1])
        with pytest.raises(FieldUnavailableError,
                           match="prob_output_given_input"):
            score("delusion", rec)

    def test_unknown_pathology(self):
        with pytest.raises(DetectorError, match="unknown"):
            score("zombie_mode", [])

    def test_kb_detector_without_kb(self):
        bundle = fixtures.generative_fixture("confabulation", True)
        with pytest.raises(DetectorError, match="knowledge base"):
            score("confabulation", bundle["records"][0])


class TestConfig:
    def test_override_changes_threshold(self):
        cfg = GenerativeConfig(overrides={"abductive_leap": {"delta": 0.99}})
        assert firing_threshold("abductive_leap", cfg) == 0.99
        assert firing_threshold("delusion", cfg) == 0.5
        outcomes = run_fixture("abductive_leap", True, cfg)
        assert not any(o.fired for o in outcomes)   # 0.95 < 0.99 now

    def test_margin_must_exceed_one(self):
        with pytest.raises(ValueError):
            GenerativeConfig(margin=1.0)

    def test_alpha_must_exceed_one(self):
        with pytest.raises(ValueError):
            GenerativeConfig(alpha=0.5)


def _rotate_record(rec, q):
    def rot(v):
        return None if v is None else q @ v

    return TraceRecord(
        id=rec.id, input_embedding=rot(rec.input_embedding),
        output_embedding=rot(rec.output_embedding),
        truth_embedding=rot(rec.truth_embedding),
        intent_embedding=rot(rec.intent_embedding),
        context_vectors=None if rec.context_vectors is None
        else tuple(rot(c) for c in rec.context_vectors),
        output_token_logprobs=rec.output_token_logprobs,
        prob_output_given_input=rec.prob_output_given_input,
        prob_truth_given_input=rec.prob_truth_given_input,
        in_real_manifold=rec.in_real_manifold,
        in_train_set=rec.in_train_set,
        referenced_entities=rec.referenced_entities,
        claim_embeddings=None if rec.claim_embeddings is None
        else tuple(rot(c) for c in rec.claim_embeddings),
        style_embedding=rot(rec.style_embedding),
        discomfort_score=rec.discomfort_score,
        output_magnitude=rec.output_magnitude,
        truth_magnitude=rec.truth_magnitude,
        latent_dim=rec.latent_dim, input_dim=rec.input_dim,
        has_inference_path=rec.has_inference_path,
        annotations=dict(rec.annotations))


def _rotate_kb(kb, q):
    if kb is None:
        return None
    return KnowledgeBase(entries=tuple((e, q @ v) for e, v in kb.entries),
                         source_tag=kb.source_tag)


class TestRotationInvariance:
    # bluffing is excluded: its gate is the random-projection MI estimate,
    # not a cosine, so it is not rotation invariant by construction
    COSINE_IDS = [p for p in GEN_IDS if p != "bluffing"]

    @pytest.mark.parametrize("pathology", COSINE_IDS)
    def test_severity_invariant_under_rotation(self, pathology, rng):
        q = random_orthogonal(fixtures.D_E, rng)
        for positive in (True, False):
            bundle = fixtures.generative_fixture(pathology, positive)
            base = audit_generative(bundle["records"], kb=bundle["kb"],
                                    fixtures=bundle["causal_fixtures"])
            rotated_records = [_rotate_record(r, q) for r in
                               bundle["records"]]
            rotated = audit_generative(rotated_records,
                                       kb=_rotate_kb(bundle["kb"], q),
                                       fixtures=bundle["causal_fixtures"])
            base_sev = {o.sort_key(): o.severity for o in base.outcomes
                        if o.pathology == pathology}
            rot_sev = {o.sort_key(): o.severity for o in rotated.outcomes
                       if o.pathology == pathology}
            assert base_sev.keys() == rot_sev.keys()
            for key, sev in base_sev.items():
                assert rot_sev[key] == pytest.approx(sev, abs=1e-9)


class TestSeverityMonotonicity:
    @given(st.floats(min_value=0.02, max_value=1.0),
           st.floats(min_value=0.0, max_value=0.98))
    def test_delusion_monotone_in_output_probability(self, p_hi, bump):
        p_lo = max(1e-6, p_hi - bump * p_hi)

        def severity(p_out):
            rec = TraceRecord(id="m", input_embedding=np.eye(4)[0],
                              output_embedding=np.eye(4)[0],
                              truth_embedding=np.eye(4)[1],
                              prob_output_given_input=p_out,
                              prob_truth_given_input=0.01)
            return score("delusion", rec).severity

        assert severity(p_hi) >= severity(p_lo) - 1e-12

    @given(st.floats(min_value=0.0, max_value=50.0),
           st.floats(min_value=0.0, max_value=50.0))
    def test_exaggeration_monotone_in_magnitude(self, a, b):
        lo, hi = sorted((a, b))

        def severity(mag):
            rec = TraceRecord(id="m", input_embedding=np.eye(4)[0],
                              output_embedding=np.eye(4)[1],
                              output_magnitude=mag, truth_magnitude=1.0)
            return score("exaggeration", rec).severity

        assert severity(hi) >= severity(lo) - 1e-12

    @given(st.floats(min_value=0.0, max_value=20.0),
           st.floats(min_value=0.0, max_value=20.0))
    def test_contextual_drift_monotone_in_distance(self, a, b):
        lo, hi = sorted((a, b))

        def severity(dist):
            ctx = (np.array([dist, 0.0, 0.0, 0.0]), np.eye(4)[0],
                   np.eye(4)[0], np.zeros(4))
            rec = TraceRecord(id="m", input_embedding=np.eye(4)[0],
                              output_embedding=np.eye(4)[1],
                              context_vectors=ctx)
            return score("contextual_drift", rec).severity

        assert severity(hi) >= severity(lo) - 1e-12

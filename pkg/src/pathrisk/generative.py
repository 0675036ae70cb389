"""The 21 generative pathology detectors over trace records.

Each detector turns its predicate into a severity in [0, 1] that is a
monotone transform of the predicate's slack, with a firing threshold such
that `fired == severity >= threshold` holds exactly. Conjunctions with a
boolean gate score 0 when the gate is off. Ratio predicates use a
log-ratio normalized so the firing point sits at severity 0.5.

Similarity thresholds (s_hi, s_lo, s_indep, gamma) live on the clamped
cosine scale (1+cos)/2.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import metrics
from .metrics import (MIEstimatorConfig, SimilarityConfig, clamp01, coherence,
                      fluency, sim)
from .records import CausalFixture, TraceRecord
from .registry import (EXISTENTIAL_EPS, Arity, DetectorOutcome,
                       GENERATIVE_DETECTORS, missing_fields)

_CLAMPED = SimilarityConfig(clamp=True)
_RAW = SimilarityConfig(clamp=False)


class DetectorError(ValueError):
    """Detector cannot run: wrong arity, missing fields, no eligible data."""


class FieldUnavailableError(DetectorError):
    def __init__(self, pathology, record_id, fields):
        super().__init__(f"{pathology}: record {record_id!r} lacks "
                         f"{', '.join(fields)}")
        self.fields = tuple(fields)


@dataclass(frozen=True)
class GenerativeConfig:
    """Crisp defaults for every asymptotic symbol in the detector formulas.

    All values can be overridden globally or per detector through
    `overrides` (a {detector: {field: value}} map).
    """

    s_hi: float = 0.9            # "approximately 1" similarity
    s_lo: float = 0.3            # "weakly related" similarity
    s_indep: float = 0.55        # independence proxy (orthogonal ~ 0.5)
    mi_lo: float = 0.05          # "approximately zero" MI, nats
    f_hi: float = 0.5            # "clearly fluent"
    d_hi: float = 0.5            # high discomfort
    tv_tol: float = 0.02         # "distributions indistinguishable"
    margin: float = 10.0         # delusion probability ratio, > 1
    alpha: float = 2.0           # exaggeration magnitude ratio, > 1
    gamma: float = 0.9           # hypersignification output similarity
    delta: float = 0.9           # abductive-leap output probability
    epsilon: float = 1.0         # contextual drift distance (per corpus)
    rho: float = 0.1             # compression ratio bound
    tau_c: float = 0.5           # minimum coherence
    window: int = 5              # sliding-window width for slopes
    drift_k: int = 3             # contextual drift lag
    entropy_ridge: float = 1e-6  # covariance ridge for entropy series
    expert_style_id: str = "expert_style_centroid"
    mi: MIEstimatorConfig = field(default_factory=MIEstimatorConfig)
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.margin <= 1.0:
            raise ValueError("margin must exceed 1")
        if self.alpha <= 1.0:
            raise ValueError("alpha must exceed 1")
        if not (0.0 < self.tau_c < 1.0):
            raise ValueError("tau_c must lie in (0,1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")

    def resolved(self, pathology):
        """Config with this detector's overrides applied."""
        patch = self.overrides.get(pathology)
        if not patch:
            return self
        clean = dict(patch)
        clean.pop("overrides", None)
        return replace(self, **clean)


def firing_threshold(pathology, cfg):
    """Severity at and above which the detector fires."""
    c = cfg.resolved(pathology)
    table = {
        "delusion": 0.5,
        "illusion": c.s_hi,
        "hallucination": 0.5,
        "confabulation": 1.0 - c.tau_c,
        "misattribution": c.s_hi,
        "semantic_drift": 1.0 - c.s_lo,
        "semantic_compression": 1.0 - c.rho,
        "exaggeration": 0.5,
        "causal_inference_failure": 1.0 - c.tv_tol,
        "uncanny_valley": c.s_hi,
        "bluffing": c.f_hi,
        "cognitive_stereotypy": c.s_hi,
        "pragmatic_misunderstanding": 1.0 - c.s_indep,
        "hypersignification": c.gamma,
        "semantic_reheating": 0.5,
        "semantic_warming": c.f_hi,
        "simulated_authority": 1.0 - c.tau_c,
        "abductive_leap": c.delta,
        "contextual_drift": 0.5,
        "referential_hallucination": EXISTENTIAL_EPS,
        "semiotic_frankenstein": EXISTENTIAL_EPS,
    }
    return table[pathology]


def _require(record, pathology):
    lacking = missing_fields(record, GENERATIVE_DETECTORS[pathology])
    if lacking:
        raise FieldUnavailableError(pathology, record.id, lacking)


def _fmt(x):
    return f"{x:.12g}"


def _outputs_distinct(record):
    # output != truth; when either embedding is absent the two candidates
    # are assumed distinct (they were scored separately)
    if record.truth_embedding is None:
        return True
    return sim(record.output_embedding, record.truth_embedding,
               _CLAMPED) < 1.0 - 1e-9


# --- record-level detectors -------------------------------------------------

def _score_delusion(record, cfg):
    p_out = record.prob_output_given_input
    p_truth = record.prob_truth_given_input
    if not _outputs_distinct(record):
        return 0.0, {"note": "output equals truth"}
    cap = 2.0 * math.log(cfg.margin)  # ratio == margin lands at 0.5
    if p_out == 0.0:
        severity = 0.0
        ratio = 0.0
    elif p_truth == 0.0:
        severity = 1.0
        ratio = math.inf
    else:
        ratio = p_out / p_truth
        severity = clamp01(math.log(ratio) / cap)
    return severity, {"probability_ratio": _fmt(ratio)}


def _score_illusion(record, cfg):
    if record.in_real_manifold:
        return 0.0, {"note": "output lies on the real manifold"}
    s = sim(record.output_embedding, record.truth_embedding, _CLAMPED)
    return s, {"truth_similarity": _fmt(s)}


def _score_hallucination(record, cfg):
    severity = 0.0 if record.in_real_manifold else 1.0
    return severity, {"in_real_manifold": str(record.in_real_manifold).lower()}


def _score_confabulation(record, cfg, kb):
    c = coherence(record.claim_embeddings, kb, _CLAMPED)
    return 1.0 - c, {"coherence": _fmt(c),
                     "argmax_probability": _fmt(record.prob_output_given_input)}


def _score_semantic_compression(record, cfg):
    ratio = record.latent_dim / record.input_dim
    return clamp01(1.0 - ratio), {"compression_ratio": _fmt(ratio)}


def _score_exaggeration(record, cfg):
    out_m, truth_m = record.output_magnitude, record.truth_magnitude
    cap = 2.0 * math.log(cfg.alpha)
    if out_m == 0.0:
        severity, ratio = 0.0, 0.0
    elif truth_m == 0.0:
        severity, ratio = 1.0, math.inf
    else:
        ratio = out_m / truth_m
        severity = clamp01(math.log(ratio) / cap)
    return severity, {"magnitude_ratio": _fmt(ratio)}


def _score_uncanny_valley(record, cfg):
    if record.discomfort_score < cfg.d_hi:
        return 0.0, {"note": "discomfort below d_hi"}
    s = sim(record.output_embedding, record.truth_embedding, _CLAMPED)
    return s, {"human_similarity": _fmt(s),
               "discomfort": _fmt(record.discomfort_score)}


def _score_pragmatic_misunderstanding(record, cfg):
    s = sim(record.output_embedding, record.intent_embedding, _CLAMPED)
    return 1.0 - s, {"intent_similarity": _fmt(s)}


def _score_semantic_reheating(record, cfg):
    # generated outputs are presented as novel unless annotated otherwise
    presented_novel = record.annotations.get(
        "presented_as_novel", "true").lower() != "false"
    severity = 1.0 if (record.in_train_set and presented_novel) else 0.0
    return severity, {"in_train_set": str(bool(record.in_train_set)).lower(),
                      "presented_as_novel": str(presented_novel).lower()}


def _score_simulated_authority(record, cfg, kb):
    centroid = kb.lookup(cfg.expert_style_id)
    if centroid is None:
        raise DetectorError(
            f"simulated_authority: knowledge base has no entry "
            f"{cfg.expert_style_id!r}")
    style_sim = sim(record.style_embedding, centroid, _CLAMPED)
    if style_sim < cfg.s_hi:
        return 0.0, {"style_similarity": _fmt(style_sim),
                     "note": "style not expert-like"}
    c = coherence(record.claim_embeddings, kb, _CLAMPED)
    return 1.0 - c, {"style_similarity": _fmt(style_sim),
                     "quality_proxy_coherence": _fmt(c)}


def _score_abductive_leap(record, cfg):
    if record.has_inference_path:
        return 0.0, {"note": "inference path exists"}
    p = record.prob_output_given_input
    return p, {"output_probability": _fmt(p)}


def _score_contextual_drift(record, cfg):
    ctx = record.context_vectors
    k = cfg.drift_k
    if len(ctx) < k + 1:
        raise DetectorError(
            f"contextual_drift: record {record.id!r} has {len(ctx)} context "
            f"vectors, needs >= k+1 = {k + 1}")
    dist = metrics.contextual_distance(ctx[-1], ctx[-1 - k])
    return clamp01(dist / (2.0 * cfg.epsilon)), {"distance": _fmt(dist),
                                                 "lag": str(k)}


def _score_referential_hallucination(record, cfg, kb):
    known = kb.entity_ids
    train = {e.strip() for e in
             record.annotations.get("train_entities", "").split(",")
             if e.strip()}
    entities = record.referenced_entities
    if len(entities) == 0:
        raise DetectorError(
            f"referential_hallucination: record {record.id!r} references "
            f"no entities")
    unknown = [e for e in entities if e not in known and e not in train]
    severity = len(unknown) / len(entities)
    return severity, {"unknown_entities": ",".join(sorted(unknown)),
                      "referenced": str(len(entities))}


def _score_semiotic_frankenstein(record, cfg, kb):
    matrix = kb.embedding_matrix()
    best = [max(sim(claim, entry, _CLAMPED) for entry in matrix)
            for claim in record.claim_embeddings]
    n = len(best)
    matched = sum(1 for b in best if b >= cfg.s_hi)
    unmatched = sum(1 for b in best if b <= cfg.s_lo)
    severity = clamp01(2.0 * min(matched, unmatched) / n)
    return severity, {"matched_claims": str(matched),
                      "unmatched_claims": str(unmatched),
                      "claims": str(n)}


# --- pair / sequence / corpus detectors -------------------------------------

def _score_misattribution(pair, cfg):
    a, b = pair
    if a.annotations.get("content_id") != b.annotations.get("content_id"):
        raise DetectorError("misattribution: pair does not share content_id")
    if a.annotations.get("source_id") == b.annotations.get("source_id"):
        raise DetectorError("misattribution: pair shares source_id")
    s = sim(a.output_embedding, b.output_embedding, _CLAMPED)
    return s, {"output_similarity": _fmt(s),
               "content_id": a.annotations["content_id"]}


def _intent_vector(records):
    for rec in records:
        if rec.intent_embedding is not None:
            return rec.intent_embedding
    raise DetectorError("semantic_drift: no record carries intent_embedding")


def _score_semantic_drift(records, cfg):
    if len(records) < 3:
        raise DetectorError("semantic_drift: needs >= 3 records in sequence")
    intent = _intent_vector(records)
    series = [sim(r.output_embedding, intent, _CLAMPED) for r in records]
    slope = metrics.windowed_slope(series, cfg.window)
    endpoint = series[-1]
    severity = (1.0 - endpoint) if slope < 0.0 else 0.0
    return severity, {"slope": _fmt(slope),
                      "endpoint_similarity": _fmt(endpoint)}


def _score_bluffing(records, cfg):
    xs = [r.input_embedding for r in records]
    ys = [r.output_embedding for r in records]
    mi = metrics.mutual_information(xs, ys, cfg.mi)
    mean_fluency = float(np.mean([fluency(r.output_token_logprobs)
                                  for r in records]))
    severity = mean_fluency if mi <= cfg.mi_lo else 0.0
    return severity, {"mutual_information": _fmt(mi),
                      "mean_fluency": _fmt(mean_fluency)}


def _distinct_inputs(a, b):
    return sim(a.input_embedding, b.input_embedding, _CLAMPED) < 1.0 - 1e-9


def _score_cognitive_stereotypy(records, cfg):
    worst = None
    pair = None
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            if not _distinct_inputs(records[i], records[j]):
                continue
            s = sim(records[i].output_embedding, records[j].output_embedding,
                    _CLAMPED)
            if worst is None or s < worst:
                worst, pair = s, (records[i].id, records[j].id)
    if worst is None:
        raise DetectorError("cognitive_stereotypy: no pair of records with "
                            "distinct inputs")
    return worst, {"min_output_similarity": _fmt(worst),
                   "witness_pair": ",".join(pair)}


def _score_hypersignification(records, cfg):
    best = None
    pair = None
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            in_sim = sim(records[i].input_embedding,
                         records[j].input_embedding, _CLAMPED)
            if in_sim >= cfg.s_lo:
                continue
            s = sim(records[i].output_embedding, records[j].output_embedding,
                    _CLAMPED)
            if best is None or s > best:
                best, pair = s, (records[i].id, records[j].id)
    if best is None:
        raise DetectorError("hypersignification: no weakly related input "
                            "pair in corpus")
    return best, {"max_output_similarity": _fmt(best),
                  "witness_pair": ",".join(pair)}


def _score_semantic_warming(records, cfg):
    if len(records) < 4:
        raise DetectorError("semantic_warming: needs >= 4 records in sequence")
    styles = [r.style_embedding for r in records]
    davg_series = [metrics.avg_pairwise_similarity(styles[:t])
                   for t in range(2, len(styles) + 1)]
    entropy_series = [metrics.semantic_entropy(styles[:t],
                                               ridge=cfg.entropy_ridge)
                      for t in range(2, len(styles) + 1)]
    slope_redundancy = metrics.windowed_slope(davg_series, cfg.window)
    slope_entropy = metrics.windowed_slope(entropy_series, cfg.window)
    mean_fluency = float(np.mean([fluency(r.output_token_logprobs)
                                  for r in records]))
    warming = slope_redundancy > 0.0 or slope_entropy < 0.0
    severity = mean_fluency if warming else 0.0
    return severity, {"redundancy_slope": _fmt(slope_redundancy),
                      "entropy_slope": _fmt(slope_entropy),
                      "mean_fluency": _fmt(mean_fluency)}


def _tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def _score_causal_failure(fixture, cfg):
    stats = {}
    candidates = []
    if fixture.edge_x_to_y:
        marginal = fixture.observational_marginal()
        tv_do = max(_tv(row, marginal) for row in fixture.interventional_table)
        stats["max_tv_do_vs_marginal"] = _fmt(tv_do)
        candidates.append(tv_do)
    if fixture.secondary_interventional is not None:
        tv_zx = _tv(fixture.interventional_table.mean(axis=0),
                    fixture.secondary_interventional.mean(axis=0))
        stats["tv_do_x_vs_do_z"] = _fmt(tv_zx)
        candidates.append(tv_zx)
    if not candidates:
        raise DetectorError("causal_inference_failure: fixture declares no "
                            "edge and has no secondary intervention")
    severity = clamp01(1.0 - min(candidates))
    return severity, stats


_RECORD_SCORERS = {
    "delusion": _score_delusion,
    "illusion": _score_illusion,
    "hallucination": _score_hallucination,
    "semantic_compression": _score_semantic_compression,
    "exaggeration": _score_exaggeration,
    "uncanny_valley": _score_uncanny_valley,
    "pragmatic_misunderstanding": _score_pragmatic_misunderstanding,
    "semantic_reheating": _score_semantic_reheating,
    "abductive_leap": _score_abductive_leap,
    "contextual_drift": _score_contextual_drift,
}

_RECORD_KB_SCORERS = {
    "confabulation": _score_confabulation,
    "simulated_authority": _score_simulated_authority,
    "referential_hallucination": _score_referential_hallucination,
    "semiotic_frankenstein": _score_semiotic_frankenstein,
}

_GROUP_SCORERS = {
    "semantic_drift": _score_semantic_drift,
    "bluffing": _score_bluffing,
    "cognitive_stereotypy": _score_cognitive_stereotypy,
    "hypersignification": _score_hypersignification,
    "semantic_warming": _score_semantic_warming,
}


def score(pathology, data, cfg=GenerativeConfig(), kb=None):
    """Score one generative detector on data matching its arity.

    data is a TraceRecord for record-level detectors, a pair of records for
    misattribution, a record sequence for the corpus/sequence detectors,
    and a CausalFixture for causal_inference_failure.
    """
    info = GENERATIVE_DETECTORS.get(pathology)
    if info is None:
        raise DetectorError(f"unknown generative pathology {pathology!r}")
    c = cfg.resolved(pathology)
    threshold = firing_threshold(pathology, cfg)

    if info.arity is Arity.FIXTURE:
        if not isinstance(data, CausalFixture):
            raise DetectorError(f"{pathology}: expected a CausalFixture")
        severity, evidence = _score_causal_failure(data, c)
        ids = (f"{data.x_name}->{data.y_name}",)
    elif info.arity is Arity.RECORD:
        if not isinstance(data, TraceRecord):
            raise DetectorError(f"{pathology}: expected a single TraceRecord")
        _require(data, pathology)
        if pathology in _RECORD_KB_SCORERS:
            if kb is None:
                raise DetectorError(f"{pathology}: needs a knowledge base")
            severity, evidence = _RECORD_KB_SCORERS[pathology](data, c, kb)
        else:
            severity, evidence = _RECORD_SCORERS[pathology](data, c)
        ids = (data.id,)
    elif info.arity is Arity.PAIR:
        pair = tuple(data)
        if len(pair) != 2 or not all(isinstance(r, TraceRecord)
                                     for r in pair):
            raise DetectorError(f"{pathology}: expected a pair of records")
        for rec in pair:
            _require(rec, pathology)
        severity, evidence = _score_misattribution(pair, c)
        ids = tuple(sorted(r.id for r in pair))
    else:
        if isinstance(data, TraceRecord):
            raise DetectorError(f"{pathology}: corpus detector needs a "
                                f"record sequence, got a single record")
        records = list(data)
        if len(records) < 2:
            raise DetectorError(f"{pathology}: needs >= 2 records")
        for rec in records:
            _require(rec, pathology)
        severity, evidence = _GROUP_SCORERS[pathology](records, c)
        if info.arity is Arity.SEQUENCE:
            cid = records[0].annotations.get("conversation_id", "")
            ids = (cid,) if cid else ()
        else:
            ids = ()
    return DetectorOutcome(pathology=pathology, record_ids=ids,
                           severity=severity, threshold=threshold,
                           evidence=evidence)


@dataclass(frozen=True)
class AuditResult:
    outcomes: tuple
    skipped: dict   # detector -> reason

    def by_pathology(self):
        grouped = {}
        for outcome in self.outcomes:
            grouped.setdefault(outcome.pathology, []).append(outcome)
        return grouped

    def to_json_dict(self):
        return {"outcomes": [o.to_json_dict() for o in self.outcomes],
                "skipped": dict(sorted(self.skipped.items()))}


def _conversations(records):
    groups = {}
    for rec in records:
        groups.setdefault(rec.annotations.get("conversation_id", ""),
                          []).append(rec)
    return [groups[k] for k in sorted(groups)]


def _misattribution_pairs(records):
    by_content = {}
    for rec in records:
        by_content.setdefault(rec.annotations["content_id"], []).append(rec)
    pairs = []
    for content_id in sorted(by_content):
        group = sorted(by_content[content_id], key=lambda r: r.id)
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                if (group[i].annotations["source_id"]
                        != group[j].annotations["source_id"]):
                    pairs.append((group[i], group[j]))
    return pairs


def audit_generative(corpus, kb=None, fixtures=(), cfg=GenerativeConfig()):
    """Run every generative detector that has the data it needs.

    Record-level detectors score each record carrying their fields; the
    sequence detectors score each conversation (annotation
    `conversation_id`, whole corpus when absent); misattribution scores
    every content-matched source-mismatched pair; the causal detector
    scores each fixture. Detectors with nothing to score are reported as
    skipped. Outcomes are sorted by (pathology, record ids).
    """
    outcomes = []
    skipped = {}
    for pathology, info in GENERATIVE_DETECTORS.items():
        needs_kb = info.needs_kb
        if needs_kb and kb is None:
            skipped[pathology] = "no knowledge base supplied"
            continue
        eligible = [r for r in corpus
                    if not missing_fields(r, info)]
        try:
            if info.arity is Arity.RECORD:
                if not eligible:
                    skipped[pathology] = "no record carries the required fields"
                    continue
                for rec in eligible:
                    outcomes.append(score(pathology, rec, cfg, kb=kb))
            elif info.arity is Arity.PAIR:
                pairs = _misattribution_pairs(eligible)
                if not pairs:
                    skipped[pathology] = "no content-matched pair with " \
                                         "distinct sources"
                    continue
                for pair in pairs:
                    outcomes.append(score(pathology, pair, cfg, kb=kb))
            elif info.arity is Arity.FIXTURE:
                if not fixtures:
                    skipped[pathology] = "no causal fixtures supplied"
                    continue
                for fixture in fixtures:
                    outcomes.append(score(pathology, fixture, cfg, kb=kb))
            elif info.arity is Arity.SEQUENCE:
                scored_any = False
                for conversation in _conversations(eligible):
                    try:
                        outcomes.append(score(pathology, conversation, cfg,
                                              kb=kb))
                        scored_any = True
                    except (DetectorError, metrics.MetricError):
                        continue
                if not scored_any:
                    skipped[pathology] = "no conversation long enough"
            else:
                if len(eligible) < 2:
                    skipped[pathology] = "fewer than 2 eligible records"
                    continue
                outcomes.append(score(pathology, eligible, cfg, kb=kb))
        except (DetectorError, metrics.MetricError) as exc:
            skipped[pathology] = str(exc)
    outcomes.sort(key=lambda o: o.sort_key())
    return AuditResult(outcomes=tuple(outcomes), skipped=skipped)

"""The 14 discriminative pathology detectors over classification corpora.

Every detector here folds a whole corpus into one outcome. Rate severities
are exactly (#events)/(#eligible), accuracy-gap severities are the clamped
gap, and group metrics are symmetric under relabeling. All detectors are
invariant to permutations of the corpus (drift orders records explicitly
by timestamp_index).
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .metrics import clamp01
from .registry import (DISCRIMINATIVE_DETECTORS, DetectorOutcome,
                       missing_fields)
from .generative import DetectorError, FieldUnavailableError


@dataclass(frozen=True)
class DriftWindow:
    """Index ranges (after ordering by timestamp_index) splitting a corpus
    into a reference slice and a current slice."""

    reference_slice: tuple
    current_slice: tuple

    def __post_init__(self):
        r0, r1 = self.reference_slice
        c0, c1 = self.current_slice
        if r0 >= r1 or c0 >= c1:
            raise ValueError("drift slices must be nonempty")
        if max(r0, c0) < min(r1, c1):
            raise ValueError("drift slices must not overlap")


@dataclass(frozen=True)
class DiscriminativeConfig:
    gap_hi: float = 0.2      # accuracy-gap firing level
    amp_hi: float = 0.2      # group rate / accuracy disparity
    eps_adv: float = 0.1     # max feature distance of a perturbation pair
    ece_hi: float = 0.1      # calibration firing level
    ece_bins: int = 10
    tv_hi: float = 0.1       # feature-shift level for concept drift
    tv_bins: int = 8
    c_hi: float = 0.9        # "high confidence"
    frac_hi: float = 0.3     # event-rate firing level
    flip_hi: float = 0.1     # pairwise flip-rate firing level
    tol_t: float = 2.0       # boundary offset tolerance
    margin_hi: float = 0.3   # ambiguity-collapse margin
    n_min: int = 20          # rate-estimate sample floor
    drift_window: Optional[DriftWindow] = None
    overrides: dict = field(default_factory=dict)

    def resolved(self, pathology):
        patch = self.overrides.get(pathology)
        if not patch:
            return self
        clean = dict(patch)
        clean.pop("overrides", None)
        clean.pop("drift_window", None)
        return replace(self, **clean)


def firing_threshold(pathology, cfg):
    c = cfg.resolved(pathology)
    table = {
        "overfitting": c.gap_hi,
        "bias_amplification": c.amp_hi,
        "spurious_correlation": c.gap_hi,
        "adversarial_vulnerability": c.flip_hi,
        "calibration_failure": c.ece_hi,
        "concept_drift_sensitivity": c.gap_hi,
        "misclassification_under_uncertainty": c.frac_hi,
        "prosodic_misclassification": c.frac_hi,
        "accent_bias": c.amp_hi,
        "turn_boundary_failure": 0.5,
        "semantic_boundary_confusion": c.gap_hi,
        "noise_overfitting": c.flip_hi,
        "latency_induced_decision_drift": c.flip_hi,
        "ambiguity_collapse": c.frac_hi,
    }
    return table[pathology]


def _fmt(x):
    return f"{x:.12g}"


def _accuracy(records):
    if not records:
        raise DetectorError("accuracy of an empty record set")
    return sum(1 for r in records if r.correct) / len(records)


def _pairs_by_id(records, key):
    groups = {}
    for rec in records:
        pid = getattr(rec, key)
        if pid is not None:
            groups.setdefault(pid, []).append(rec)
    pairs = []
    for pid in sorted(groups):
        members = sorted(groups[pid], key=lambda r: r.id)
        if len(members) == 2:
            pairs.append(tuple(members))
    return pairs


# --- detectors ---------------------------------------------------------------

def _score_overfitting(records, cfg):
    train = [r for r in records
             if r.annotations.get("in_train_set", "").lower() == "true"]
    held = [r for r in records
            if r.annotations.get("in_train_set", "").lower() == "false"]
    if not train or not held:
        raise DetectorError("overfitting: needs both train-flagged and "
                            "held-out records")
    gap = _accuracy(train) - _accuracy(held)
    return clamp01(gap), {"train_accuracy": _fmt(_accuracy(train)),
                          "holdout_accuracy": _fmt(_accuracy(held)),
                          "gap": _fmt(gap)}


def _prediction_rates(records, classes):
    preds = np.asarray([r.predicted_label for r in records])
    return np.asarray([np.mean(preds == c) for c in classes])


def _score_bias_amplification(records, cfg):
    groups = sorted({r.group for r in records if r.group is not None})
    if len(groups) < 1:
        raise DetectorError("bias_amplification: no subgroup tags")
    classes = sorted({r.predicted_label for r in records}
                     | {r.true_label for r in records})
    baseline = _prediction_rates(records, classes)
    worst = 0.0
    worst_group = ""
    for g in groups:
        members = [r for r in records if r.group == g]
        dev = float(np.max(np.abs(_prediction_rates(members, classes)
                                  - baseline)))
        if dev > worst:
            worst, worst_group = dev, g
    return clamp01(worst), {"max_rate_deviation": _fmt(worst),
                            "worst_group": worst_group,
                            "groups": str(len(groups))}


def _score_spurious_correlation(records, cfg):
    tagged = [r for r in records if "spurious_pair_id" in r.annotations]
    clean = [r for r in tagged
             if r.annotations.get("spurious_role") == "clean"]
    resampled = [r for r in tagged
                 if r.annotations.get("spurious_role") == "resampled"]
    if not clean or not resampled:
        raise DetectorError("spurious_correlation: needs clean and "
                            "resampled roles")
    drop = _accuracy(clean) - _accuracy(resampled)
    return clamp01(drop), {"clean_accuracy": _fmt(_accuracy(clean)),
                           "resampled_accuracy": _fmt(_accuracy(resampled)),
                           "drop": _fmt(drop)}


def _score_adversarial(records, cfg):
    pairs = _pairs_by_id(records, "perturbation_pair_id")
    eligible = [(a, b) for a, b in pairs
                if float(np.linalg.norm(a.features - b.features))
                <= cfg.eps_adv]
    if not eligible:
        raise DetectorError("adversarial_vulnerability: no perturbation "
                            "pair within eps_adv")
    flips = sum(1 for a, b in eligible
                if a.predicted_label != b.predicted_label)
    rate = flips / len(eligible)
    return rate, {"flips": str(flips), "eligible_pairs": str(len(eligible))}


def expected_calibration_error(records, bins=10):
    """ECE with equal-width confidence bins over [0, 1]."""
    conf = np.asarray([r.confidence for r in records])
    correct = np.asarray([r.correct for r in records], dtype=float)
    idx = np.minimum((conf * bins).astype(int), bins - 1)
    n = len(records)
    ece = 0.0
    for b in range(bins):
        mask = idx == b
        if not mask.any():
            continue
        ece += (mask.sum() / n) * abs(correct[mask].mean()
                                      - conf[mask].mean())
    return float(ece)


def _score_calibration(records, cfg):
    ece = expected_calibration_error(records, cfg.ece_bins)
    return clamp01(ece), {"ece": _fmt(ece), "bins": str(cfg.ece_bins)}


def _feature_tv(ref, cur, bins):
    ref_f = np.asarray([r.features for r in ref])
    cur_f = np.asarray([r.features for r in cur])
    tvs = []
    for j in range(ref_f.shape[1]):
        lo = min(ref_f[:, j].min(), cur_f[:, j].min())
        hi = max(ref_f[:, j].max(), cur_f[:, j].max())
        if hi <= lo:
            tvs.append(0.0)
            continue
        edges = np.linspace(lo, hi, bins + 1)
        p = np.histogram(ref_f[:, j], bins=edges)[0] / len(ref)
        q = np.histogram(cur_f[:, j], bins=edges)[0] / len(cur)
        tvs.append(0.5 * float(np.abs(p - q).sum()))
    return float(np.mean(tvs))


def _score_concept_drift(records, cfg):
    stamped = [r for r in records if r.timestamp_index is not None]
    if len(stamped) < 4:
        raise DetectorError("concept_drift_sensitivity: needs >= 4 "
                            "timestamped records")
    ordered = sorted(stamped, key=lambda r: (r.timestamp_index, r.id))
    if cfg.drift_window is not None:
        r0, r1 = cfg.drift_window.reference_slice
        c0, c1 = cfg.drift_window.current_slice
        ref, cur = ordered[r0:r1], ordered[c0:c1]
    else:
        half = len(ordered) // 2
        ref, cur = ordered[:half], ordered[half:]
    if not ref or not cur:
        raise DetectorError("concept_drift_sensitivity: empty drift slice")
    tv = _feature_tv(ref, cur, cfg.tv_bins)
    gap = _accuracy(ref) - _accuracy(cur)
    severity = clamp01(gap) if tv >= cfg.tv_hi else 0.0
    return severity, {"reference_accuracy": _fmt(_accuracy(ref)),
                      "current_accuracy": _fmt(_accuracy(cur)),
                      "feature_tv": _fmt(tv)}


def _score_misclassification_uncertainty(records, cfg):
    ood = [r for r in records if r.is_ood]
    if not ood:
        raise DetectorError("misclassification_under_uncertainty: no OOD "
                            "records")
    events = sum(1 for r in ood
                 if r.confidence >= cfg.c_hi and not r.correct)
    rate = events / len(ood)
    return rate, {"confident_wrong": str(events), "ood_records": str(len(ood))}


def _content_pairs(records):
    groups = {}
    for rec in records:
        cid = rec.annotations.get("content_id")
        if cid is not None:
            groups.setdefault(cid, []).append(rec)
    out = []
    for cid in sorted(groups):
        members = sorted(groups[cid], key=lambda r: r.id)
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                out.append((members[i], members[j]))
    return out


def _score_prosodic(records, cfg):
    pairs = [(a, b) for a, b in _content_pairs(records)
             if a.annotations.get("prosody") != b.annotations.get("prosody")]
    if not pairs:
        raise DetectorError("prosodic_misclassification: no content-matched "
                            "pair with differing prosody")
    events = sum(1 for a, b in pairs
                 if a.predicted_label != b.predicted_label
                 and (not a.correct or not b.correct))
    rate = events / len(pairs)
    return rate, {"events": str(events), "eligible_pairs": str(len(pairs))}


def _score_accent_bias(records, cfg):
    paired_contents = {}
    for rec in records:
        cid = rec.annotations.get("content_id")
        if cid is not None and rec.group is not None:
            paired_contents.setdefault(cid, set()).add(rec.group)
    multi = {cid for cid, groups in paired_contents.items()
             if len(groups) >= 2}
    eligible = [r for r in records
                if r.annotations.get("content_id") in multi
                and r.group is not None]
    groups = sorted({r.group for r in eligible})
    if len(groups) < 2:
        raise DetectorError("accent_bias: needs content matched across >= 2 "
                            "groups")
    acc = {g: _accuracy([r for r in eligible if r.group == g])
           for g in groups}
    worst = 0.0
    witness = ("", "")
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            gap = abs(acc[groups[i]] - acc[groups[j]])
            if gap > worst:
                worst, witness = gap, (groups[i], groups[j])
    return clamp01(worst), {"max_accuracy_gap": _fmt(worst),
                            "witness_groups": ",".join(witness)}


def _score_turn_boundary(records, cfg):
    eligible = [r for r in records
                if r.segment_bounds is not None
                and r.ref_segment_bounds is not None]
    if not eligible:
        raise DetectorError("turn_boundary_failure: no record carries both "
                            "predicted and reference bounds")
    offsets = []
    for r in eligible:
        (a0, a1), (b0, b1) = r.segment_bounds, r.ref_segment_bounds
        offsets.append(max(abs(a0 - b0), abs(a1 - b1)))
    # offset == tol_t lands at severity 0.5, the firing point
    severity = float(np.mean([clamp01(o / (2.0 * cfg.tol_t))
                              for o in offsets]))
    return severity, {"mean_offset": _fmt(float(np.mean(offsets))),
                      "records": str(len(eligible))}


def _score_semantic_boundary(records, cfg):
    groups = {}
    for rec in records:
        pid = rec.annotations.get("span_pair_id")
        if pid is not None:
            groups.setdefault(pid, {})[rec.annotations.get("span_role")] = rec
    diffs = []
    for pid in sorted(groups):
        wide = groups[pid].get("wide")
        narrow = groups[pid].get("narrow")
        if wide is None or narrow is None:
            continue
        (w0, w1), (n0, n1) = wide.segment_bounds, narrow.segment_bounds
        if not (w0 <= n0 and n1 <= w1):
            continue  # wide span must contain the narrow one
        score_wide = float(wide.class_probabilities[wide.true_label])
        score_narrow = float(narrow.class_probabilities[narrow.true_label])
        diffs.append(score_narrow - score_wide)
    if not diffs:
        raise DetectorError("semantic_boundary_confusion: no nested "
                            "wide/narrow span pair")
    severity = clamp01(float(np.mean(diffs)))
    return severity, {"mean_score_difference": _fmt(float(np.mean(diffs))),
                      "pairs": str(len(diffs))}


def _score_noise_overfitting(records, cfg):
    groups = {}
    for rec in records:
        if rec.noise_pair_id is not None:
            groups.setdefault(rec.noise_pair_id, {})[
                rec.annotations.get("noise_role")] = rec
    pairs = [(g["clean"], g["noisy"]) for _, g in sorted(groups.items())
             if "clean" in g and "noisy" in g]
    if not pairs:
        raise DetectorError("noise_overfitting: no clean/noisy pair")
    events = sum(1 for clean, noisy in pairs
                 if clean.correct and not noisy.correct)
    rate = events / len(pairs)
    return rate, {"events": str(events), "eligible_pairs": str(len(pairs))}


def _score_latency_drift(records, cfg):
    pairs = _pairs_by_id(records, "latency_pair_id")
    if not pairs:
        raise DetectorError("latency_induced_decision_drift: no latency pair")
    events = sum(1 for a, b in pairs
                 if a.predicted_label != b.predicted_label)
    rate = events / len(pairs)
    return rate, {"disagreements": str(events),
                  "eligible_pairs": str(len(pairs))}


def _score_ambiguity_collapse(records, cfg):
    eligible = [r for r in records
                if r.plausible_labels is not None
                and len(r.plausible_labels) >= 2]
    if not eligible:
        raise DetectorError("ambiguity_collapse: no record with >= 2 "
                            "plausible labels")
    events = 0
    for r in eligible:
        if r.confidence < cfg.c_hi or r.correct:
            continue
        alternatives = [r.class_probabilities[y] for y in r.plausible_labels
                        if y != r.predicted_label
                        and 0 <= y < r.class_probabilities.size]
        if not alternatives:
            continue
        margin = r.confidence - float(max(alternatives))
        if margin >= cfg.margin_hi:
            events += 1
    rate = events / len(eligible)
    return rate, {"collapses": str(events),
                  "eligible_records": str(len(eligible))}


_SCORERS = {
    "overfitting": _score_overfitting,
    "bias_amplification": _score_bias_amplification,
    "spurious_correlation": _score_spurious_correlation,
    "adversarial_vulnerability": _score_adversarial,
    "calibration_failure": _score_calibration,
    "concept_drift_sensitivity": _score_concept_drift,
    "misclassification_under_uncertainty":
        _score_misclassification_uncertainty,
    "prosodic_misclassification": _score_prosodic,
    "accent_bias": _score_accent_bias,
    "turn_boundary_failure": _score_turn_boundary,
    "semantic_boundary_confusion": _score_semantic_boundary,
    "noise_overfitting": _score_noise_overfitting,
    "latency_induced_decision_drift": _score_latency_drift,
    "ambiguity_collapse": _score_ambiguity_collapse,
}


def score_discriminative(pathology, corpus, cfg=DiscriminativeConfig()):
    """Fold a classification corpus into one outcome for `pathology`."""
    info = DISCRIMINATIVE_DETECTORS.get(pathology)
    if info is None:
        raise DetectorError(f"unknown discriminative pathology {pathology!r}")
    records = list(corpus)
    if len(records) < cfg.n_min:
        raise DetectorError(f"{pathology}: needs >= n_min = {cfg.n_min} "
                            f"records, got {len(records)}")
    eligible = [r for r in records if not missing_fields(r, info)]
    if not eligible:
        first = records[0]
        raise FieldUnavailableError(pathology, first.id,
                                    missing_fields(first, info))
    c = cfg.resolved(pathology)
    severity, evidence = _SCORERS[pathology](eligible, c)
    return DetectorOutcome(pathology=pathology, record_ids=(),
                           severity=severity,
                           threshold=firing_threshold(pathology, cfg),
                           evidence=evidence)


def audit_discriminative(corpus, cfg=DiscriminativeConfig()):
    """Run all 14 detectors, collecting outcomes and skip reasons."""
    from .generative import AuditResult
    outcomes = []
    skipped = {}
    for pathology in DISCRIMINATIVE_DETECTORS:
        try:
            outcomes.append(score_discriminative(pathology, corpus, cfg))
        except DetectorError as exc:
            skipped[pathology] = str(exc)
    outcomes.sort(key=lambda o: o.sort_key())
    return AuditResult(outcomes=tuple(outcomes), skipped=skipped)

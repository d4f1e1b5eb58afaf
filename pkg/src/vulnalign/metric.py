"""Detection Alignment: fuzzy-Jaccard overlap of line relevance and ground truth.

The line-relevance vector is treated as a fuzzy set over line indices
(membership = rescaled relevance) and the ground truth as a crisp indicator
set; their Jaccard index (sum of pointwise min over sum of pointwise max)
is the per-sample DA. Vulnerable samples predicted benign score 0.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

EXCLUDE_EMPTY_GT = "empty ground truth"
EXCLUDE_EMPTY_FUNCTION = "empty function"


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class DAResult:
    function_id: str
    da: float
    intersection_mass: float
    union_mass: float
    predicted_label: int
    method: str
    excluded: bool = False
    exclude_reason: str = ""


@dataclass(frozen=True)
class EvalSummary:
    mean_da: dict         # method -> mean DA over evaluated vulnerable samples
    f1: float
    n_evaluated: dict     # method -> count entering the mean
    n_excluded: dict
    n_false_negative: dict


def fuzzify_ground_truth(gt):
    """Indicator membership vector of length L."""
    values = np.zeros(gt.line_count, dtype=np.float64)
    for line in gt.vulnerable_lines:
        values[line] = 1.0
    return values


def jaccard(membership_a, membership_b):
    """Fuzzy Jaccard masses: (sum of min, sum of max)."""
    a = np.asarray(membership_a, dtype=np.float64)
    b = np.asarray(membership_b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError("membership vectors differ in length")
    return float(np.minimum(a, b).sum()), float(np.maximum(a, b).sum())


def detection_alignment(rel, gt_fuzzy, predicted_label):
    """Per-sample DA with the benign-prediction and empty-set rules applied."""
    gt_fuzzy = np.asarray(gt_fuzzy, dtype=np.float64)
    if len(rel.values) != len(gt_fuzzy):
        raise MetricError(
            f"{rel.function_id}: relevance has {len(rel.values)} lines, "
            f"ground truth has {len(gt_fuzzy)}"
        )
    if len(gt_fuzzy) == 0:
        return DAResult(rel.function_id, 0.0, 0.0, 0.0, predicted_label, rel.method,
                        excluded=True, exclude_reason=EXCLUDE_EMPTY_FUNCTION)
    if not gt_fuzzy.any():
        return DAResult(rel.function_id, 0.0, 0.0, 0.0, predicted_label, rel.method,
                        excluded=True, exclude_reason=EXCLUDE_EMPTY_GT)
    if predicted_label == 0:
        return DAResult(rel.function_id, 0.0, 0.0, 0.0, predicted_label, rel.method)
    inter, union = jaccard(rel.values, gt_fuzzy)
    assert union > 0, "union mass cannot vanish with a non-empty ground truth"
    return DAResult(rel.function_id, inter / union, inter, union,
                    predicted_label, rel.method)


def aggregate(results):
    """Dataset-level mean DA per method; excluded samples are counted, not scored."""
    mean_da, n_eval, n_excl, n_fn = {}, {}, {}, {}
    sums = {}
    for res in results:
        m = res.method
        n_eval.setdefault(m, 0)
        n_excl.setdefault(m, 0)
        n_fn.setdefault(m, 0)
        sums.setdefault(m, 0.0)
        if res.excluded:
            n_excl[m] += 1
            continue
        n_eval[m] += 1
        sums[m] += res.da
        if res.predicted_label == 0:
            n_fn[m] += 1
    for m in sums:
        mean_da[m] = sums[m] / n_eval[m] if n_eval[m] else math.nan
    return EvalSummary(mean_da=mean_da, f1=math.nan,
                       n_evaluated=n_eval, n_excluded=n_excl, n_false_negative=n_fn)


def f1_score(predictions, labels):
    """F1 for class 1; 0 when precision + recall vanish."""
    if len(predictions) != len(labels):
        raise MetricError("predictions and labels differ in length")
    tp = sum(1 for p, y in zip(predictions, labels) if p == 1 and y == 1)
    fp = sum(1 for p, y in zip(predictions, labels) if p == 1 and y == 0)
    fn = sum(1 for p, y in zip(predictions, labels) if p == 0 and y == 1)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Results serialization
# ---------------------------------------------------------------------------

def result_to_obj(res):
    return {
        "id": res.function_id,
        "method": res.method,
        "da": res.da,
        "intersection": res.intersection_mass,
        "union": res.union_mass,
        "predicted_label": res.predicted_label,
        "excluded": res.excluded,
        "exclude_reason": res.exclude_reason,
    }


def result_from_obj(obj):
    return DAResult(
        function_id=obj["id"],
        da=obj["da"],
        intersection_mass=obj["intersection"],
        union_mass=obj["union"],
        predicted_label=obj["predicted_label"],
        method=obj["method"],
        excluded=obj["excluded"],
        exclude_reason=obj["exclude_reason"],
    )


def write_results(results, path):
    with open(path, "w") as fh:
        for res in results:
            fh.write(json.dumps(result_to_obj(res)) + "\n")


def read_results(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(result_from_obj(json.loads(line)))
    return out


def summary_to_obj(summary):
    per_method = {
        m: {
            "mean_da": summary.mean_da[m],
            "n_evaluated": summary.n_evaluated[m],
            "n_excluded": summary.n_excluded[m],
            "n_false_negative": summary.n_false_negative[m],
        }
        for m in summary.mean_da
    }
    per_method["f1"] = summary.f1
    return per_method


def write_summary(summary, path):
    with open(path, "w") as fh:
        json.dump(summary_to_obj(summary), fh, indent=2)
        fh.write("\n")

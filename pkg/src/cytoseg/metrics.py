"""Cell-level Dice and pixel-level TPR/FPR with one-to-one greedy matching."""

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import as_mask
from .errors import InvalidInputError

MATCH_FLOOR = 0.5


def _pair(a, b):
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a, b


def dice(a, b):
    """``2|a & b| / (|a| + |b|)``; two empty masks score 1."""
    a, b = _pair(a, b)
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / denom


def pixel_rates(pred, gt):
    """Return ``(tpr, fpr)`` of ``pred`` against ``gt``."""
    pred, gt = _pair(pred, gt)
    n_gt = int(gt.sum())
    n_neg = gt.size - n_gt
    tp = int(np.logical_and(pred, gt).sum())
    fp = int(np.logical_and(pred, ~gt).sum())
    if n_gt == 0:
        tpr = 1.0 if not pred.any() else 0.0
    else:
        tpr = tp / n_gt
    fpr = fp / n_neg if n_neg else 0.0
    return tpr, fpr


@dataclass
class MatchedPair:
    pred: int
    gt: int
    dice: float
    tpr: float
    fpr: float


@dataclass
class EvalReport:
    pairs: list = field(default_factory=list)
    dc_mean: float | None = None
    dc_std: float | None = None
    tpr_mean: float | None = None
    tpr_std: float | None = None
    fpr_mean: float | None = None
    fpr_std: float | None = None
    unmatched_pred: int = 0
    unmatched_gt: int = 0
    matching: str = (
        "greedy one-to-one by descending Dice, ties to lowest (pred, gt) index; "
        f"pairs with Dice < {MATCH_FLOOR} left unmatched"
    )
    statistics: str = "mean and population standard deviation over matched cells; FPR per matched cell"

    @property
    def n_matched(self):
        return len(self.pairs)

    def to_dict(self):
        d = asdict(self)
        d["n_matched"] = self.n_matched
        return d

    def table_lines(self):
        def fmt(m, s):
            return "n/a" if m is None else f"{m:.4f} ± {s:.4f}"
        return [
            f"DC  {fmt(self.dc_mean, self.dc_std)}",
            f"TPR {fmt(self.tpr_mean, self.tpr_std)}",
            f"FPR {fmt(self.fpr_mean, self.fpr_std)}",
        ]


def dice_matrix(pred_cells, gt_cells):
    m = np.zeros((len(pred_cells), len(gt_cells)))
    for i, p in enumerate(pred_cells):
        for j, g in enumerate(gt_cells):
            m[i, j] = dice(p, g)
    return m


def greedy_match(scores, floor=MATCH_FLOOR):
    """One-to-one pairs by descending score; stable order breaks ties by index."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        return []
    order = np.argsort(-scores, axis=None, kind="stable")
    used_r, used_c, pairs = set(), set(), []
    for flat in order:
        i, j = divmod(int(flat), scores.shape[1])
        if scores[i, j] < floor:
            break
        if i in used_r or j in used_c:
            continue
        used_r.add(i)
        used_c.add(j)
        pairs.append((i, j))
    return pairs


def _stats(values):
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def match_and_score(pred_cells, gt_cells):
    pred_cells = [as_mask(p) for p in pred_cells]
    gt_cells = [as_mask(g) for g in gt_cells]
    scores = dice_matrix(pred_cells, gt_cells)
    pairs = []
    for i, j in greedy_match(scores):
        tpr, fpr = pixel_rates(pred_cells[i], gt_cells[j])
        pairs.append(MatchedPair(i, j, float(scores[i, j]), tpr, fpr))
    report = EvalReport(pairs=pairs)
    report.dc_mean, report.dc_std = _stats([p.dice for p in pairs])
    report.tpr_mean, report.tpr_std = _stats([p.tpr for p in pairs])
    report.fpr_mean, report.fpr_std = _stats([p.fpr for p in pairs])
    report.unmatched_pred = len(pred_cells) - len(pairs)
    report.unmatched_gt = len(gt_cells) - len(pairs)
    return report


def pool_reports(reports):
    """Combine per-specimen reports into corpus statistics over all matched cells."""
    pairs = [p for r in reports for p in r.pairs]
    out = EvalReport(pairs=pairs)
    out.dc_mean, out.dc_std = _stats([p.dice for p in pairs])
    out.tpr_mean, out.tpr_std = _stats([p.tpr for p in pairs])
    out.fpr_mean, out.fpr_std = _stats([p.fpr for p in pairs])
    out.unmatched_pred = sum(r.unmatched_pred for r in reports)
    out.unmatched_gt = sum(r.unmatched_gt for r in reports)
    return out

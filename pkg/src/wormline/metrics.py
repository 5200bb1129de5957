"""Detection metrics: pixel-level skeleton overlap via maximum bipartite
matching, mask overlap via the Dice/F1 set score, optimal one-to-one worm
assignment, and precision/recall sweeps over F-score thresholds.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import InputContractError
from .raster import BinaryMask

__all__ = [
    "max_bipartite_matching",
    "skeleton_fscore",
    "mask_fscore",
    "EvalReport",
    "evaluate",
    "evaluate_scores",
    "combine_reports",
    "report_table",
    "DEFAULT_THRESHOLDS",
]

Pixel = tuple[int, int]
DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)

_INF = -1


def max_bipartite_matching(adjacency: Sequence[Sequence[int]], n_right: int) -> int:
    """Maximum-cardinality matching of a bipartite graph (Hopcroft-Karp).

    ``adjacency[i]`` lists the right-side vertices reachable from left vertex
    i. Only the cardinality is returned.
    """
    n_left = len(adjacency)
    pair_left = [_INF] * n_left
    pair_right = [_INF] * n_right
    dist = [0] * n_left

    def bfs() -> bool:
        queue: deque[int] = deque()
        found = False
        for u in range(n_left):
            if pair_left[u] == _INF:
                dist[u] = 0
                queue.append(u)
            else:
                dist[u] = _INF
        while queue:
            u = queue.popleft()
            for v in adjacency[u]:
                w = pair_right[v]
                if w == _INF:
                    found = True
                elif dist[w] == _INF:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return found

    def dfs(u: int) -> bool:
        for v in adjacency[u]:
            w = pair_right[v]
            if w == _INF or (dist[w] == dist[u] + 1 and dfs(w)):
                pair_left[u] = v
                pair_right[v] = u
                return True
        dist[u] = _INF
        return False

    matched = 0
    while bfs():
        for u in range(n_left):
            if pair_left[u] == _INF and dfs(u):
                matched += 1
    return matched


def _range_adjacency(
    pred: np.ndarray, gt: np.ndarray, range_: float, metric: str
) -> list[list[int]]:
    if metric == "euclidean":
        p = 2.0
    elif metric == "chebyshev":
        p = np.inf
    else:
        raise InputContractError(f"unknown range metric {metric!r}")
    tree = cKDTree(gt)
    hits = tree.query_ball_point(pred, r=range_, p=p)
    return [sorted(h) for h in hits]


def skeleton_fscore(
    pred: Sequence[Pixel],
    gt: Sequence[Pixel],
    range_: float = 3.0,
    metric: str = "euclidean",
) -> float:
    """Skeleton overlap as the F-score of a maximum pixel matching.

    Every predicted pixel may match one ground-truth pixel within ``range_``;
    precision is matched/|pred| and recall matched/|gt|.
    """
    if len(pred) == 0 or len(gt) == 0:
        raise InputContractError("skeleton F-score needs non-empty pixel paths")
    if range_ < 0:
        raise InputContractError("matching range must be >= 0")
    pred_arr = np.asarray(sorted(set(map(tuple, pred))), dtype=float)
    gt_arr = np.asarray(sorted(set(map(tuple, gt))), dtype=float)
    adjacency = _range_adjacency(pred_arr, gt_arr, range_, metric)
    matched = max_bipartite_matching(adjacency, len(gt_arr))
    precision = matched / len(pred_arr)
    recall = matched / len(gt_arr)
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def mask_fscore(pred: BinaryMask, gt: BinaryMask) -> float:
    """Dice/F1 overlap of two masks; 1 when both are empty."""
    if pred.shape != gt.shape:
        raise InputContractError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    np_, ng = pred.count(), gt.count()
    if np_ == 0 and ng == 0:
        return 1.0
    if np_ == 0 or ng == 0:
        return 0.0
    inter = int(np.logical_and(pred.data, gt.data).sum())
    return 2.0 * inter / (np_ + ng)


@dataclass(frozen=True)
class EvalReport:
    """Precision/recall over F-score thresholds plus the per-worm assignment."""

    mode: str
    thresholds: tuple[float, ...]
    tp: tuple[int, ...]
    fp: tuple[int, ...]
    fn: tuple[int, ...]
    n_pred: int
    n_gt: int
    assignments: tuple[tuple[int, int, float], ...] = ()

    def precision(self, i: int) -> float:
        denom = self.tp[i] + self.fp[i]
        return self.tp[i] / denom if denom else 1.0

    def recall(self, i: int) -> float:
        denom = self.tp[i] + self.fn[i]
        return self.tp[i] / denom if denom else 1.0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_pred": self.n_pred,
            "n_gt": self.n_gt,
            "thresholds": list(self.thresholds),
            "tp": list(self.tp),
            "fp": list(self.fp),
            "fn": list(self.fn),
            "precision": [self.precision(i) for i in range(len(self.thresholds))],
            "recall": [self.recall(i) for i in range(len(self.thresholds))],
            "assignments": [list(a) for a in self.assignments],
        }


def _assign(fmatrix: np.ndarray) -> list[tuple[int, int, float]]:
    """One-to-one assignment maximizing total F, ties toward low indices."""
    if fmatrix.size == 0:
        return []
    n, m = fmatrix.shape
    jitter = np.arange(n * m, dtype=float).reshape(n, m) * 1e-12
    rows, cols = linear_sum_assignment(-(fmatrix - jitter))
    return [(int(r), int(c), float(fmatrix[r, c])) for r, c in zip(rows, cols)]


def evaluate_scores(
    fmatrix: np.ndarray,
    mode: str,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> EvalReport:
    """Build a report from a precomputed pairwise (pred x gt) F matrix."""
    fmatrix = np.asarray(fmatrix, dtype=float)
    if fmatrix.ndim != 2:
        raise InputContractError("score matrix must be 2-D")
    n_pred, n_gt = fmatrix.shape
    assignments = _assign(fmatrix)
    ths = tuple(sorted(thresholds))
    tp, fp, fn = [], [], []
    for t in ths:
        hits = sum(1 for _, _, f in assignments if f >= t)
        tp.append(hits)
        fp.append(n_pred - hits)
        fn.append(n_gt - hits)
    return EvalReport(
        mode=mode,
        thresholds=ths,
        tp=tuple(tp),
        fp=tuple(fp),
        fn=tuple(fn),
        n_pred=n_pred,
        n_gt=n_gt,
        assignments=tuple(assignments),
    )


def evaluate(
    preds: Sequence,
    gts: Sequence,
    mode: str = "skeleton",
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    range_: float = 3.0,
    metric: str = "euclidean",
) -> EvalReport:
    """Score predicted worms against ground truth at several F thresholds.

    ``preds`` and ``gts`` hold pixel paths in skeleton mode and BinaryMasks
    in mask mode. Worms are paired one-to-one by maximizing the total F; a
    prediction counts as a true positive at threshold t when its assigned F
    is at least t, unassigned predictions are false positives, and unassigned
    ground-truth worms are false negatives.
    """
    if mode not in ("skeleton", "mask"):
        raise InputContractError(f"unknown mode {mode!r}")
    fmatrix = np.zeros((len(preds), len(gts)))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            if mode == "skeleton":
                fmatrix[i, j] = skeleton_fscore(p, g, range_, metric)
            else:
                fmatrix[i, j] = mask_fscore(p, g)
    return evaluate_scores(fmatrix, mode, thresholds)


def combine_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Fold per-image reports into one corpus-level report."""
    if not reports:
        raise InputContractError("no reports to combine")
    ths = reports[0].thresholds
    mode = reports[0].mode
    for r in reports:
        if r.thresholds != ths or r.mode != mode:
            raise InputContractError("reports disagree on thresholds or mode")
    return EvalReport(
        mode=mode,
        thresholds=ths,
        tp=tuple(sum(r.tp[i] for r in reports) for i in range(len(ths))),
        fp=tuple(sum(r.fp[i] for r in reports) for i in range(len(ths))),
        fn=tuple(sum(r.fn[i] for r in reports) for i in range(len(ths))),
        n_pred=sum(r.n_pred for r in reports),
        n_gt=sum(r.n_gt for r in reports),
    )


def report_table(report: EvalReport) -> str:
    """Aligned text table: one column per threshold, cells 'prec / recall' in %."""
    label = "Pre./Rec. (%) | F-score"
    header = label + "".join(f"{t:>17.2f}" for t in report.thresholds)
    cells = "".join(
        f"  {report.precision(i) * 100:6.2f} / {report.recall(i) * 100:6.2f}"
        for i in range(len(report.thresholds))
    )
    row = report.mode.ljust(len(label)) + cells
    return header + "\n" + row + "\n"

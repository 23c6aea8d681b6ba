"""Set-matching cost construction, optimal assignment, and loss kernels.

Predicted and ground-truth grasps are aligned by minimum-cost bipartite
matching on the L1 distance between their bounded 7-vector encodings. The
loss kernels (L1 pose regression, focal confidence loss, masked token
cross-entropy) are reference scalar implementations with hand-derived
gradients so they can be validated against finite differences; none of this
is meant to backpropagate through a network.

The assignment solver delegates the core search to scipy's
linear_sum_assignment and then canonicalizes ties: among equal-cost optima
it returns the lexicographically smallest pair sequence ordered by
(pred_index, gt_index). Tie detection compares float totals exactly, which
is exact whenever tied costs are exactly representable (the only way real
ties arise); generic random matrices have unique optima and skip the
canonicalization solves entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError, EmptyAssignmentError
from .geometry import GraspSet, poses_to_array

__all__ = [
    "CostMatrix",
    "Assignment",
    "LossReport",
    "build_cost_matrix",
    "hungarian",
    "l1_regression_loss",
    "l1_regression_grad",
    "focal_loss",
    "focal_loss_grad",
    "masked_token_ce",
    "total_loss",
]


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """n_pred x n_gt matrix of nonnegative, finite matching costs."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError(f"cost matrix must be 2D and nonempty, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("cost matrix contains non-finite entries")
        if np.any(v < 0):
            raise ValueError("cost matrix contains negative entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class Assignment:
    """Matched (pred_index, gt_index) pairs plus the unmatched prediction set.

    pairs is sorted by pred_index and has min(n_pred, n_gt) entries.
    """

    pairs: Tuple[Tuple[int, int], ...]
    unmatched_preds: Tuple[int, ...]

    def total_cost(self, cost: CostMatrix) -> float:
        return float(sum(cost.values[i, j] for i, j in self.pairs))


@dataclass(frozen=True)
class LossReport:
    """The three loss terms and their sum."""

    l_qa: float
    l_reg: float
    l_cls: float
    total: float

    def to_json(self) -> Dict[str, float]:
        return {"l_qa": self.l_qa, "l_reg": self.l_reg,
                "l_cls": self.l_cls, "total": self.total}


def build_cost_matrix(preds: GraspSet, gts: GraspSet) -> CostMatrix:
    """Pairwise L1 distance over all 7 encoded components (width included)."""
    if len(preds) == 0 or len(gts) == 0:
        raise ValueError("both pose sets must be nonempty")
    a = poses_to_array(preds)
    b = poses_to_array(gts)
    return CostMatrix(np.abs(a[:, None, :] - b[None, :, :]).sum(axis=-1))


# ---------------------------------------------------------------------------
# Hungarian matching with lexicographic tie canonicalization
# ---------------------------------------------------------------------------

def _feasible_col_duals(sq: np.ndarray, match: np.ndarray) -> np.ndarray:
    """Column potentials v with v[j] - v[match[i]] <= sq[i, j] - sq[i, match[i]].

    Bellman-Ford over the difference-constraint graph induced by an optimal
    matching; optimality guarantees there is no negative cycle, so at most
    `size` sweeps converge.
    """
    size = sq.shape[0]
    w = sq - sq[np.arange(size), match][:, None]
    v = np.zeros(size)
    for _ in range(size):
        cand = (w + v[match][:, None]).min(axis=0)
        new_v = np.minimum(v, cand)
        if np.array_equal(new_v, v):
            break
        v = new_v
    return v


def hungarian(cost: CostMatrix) -> Assignment:
    """Minimum-cost assignment; lexicographically smallest among ties.

    Preference order at each prediction row: smaller gt index first, leaving
    the prediction unmatched last. A candidate gt is only explored when its
    reduced cost under optimal dual potentials is (near-)zero — edges with
    positive reduced cost cannot appear in any optimal assignment — and is
    accepted only when fixing it provably preserves the optimal total.
    """
    c = cost.values
    n, m = c.shape
    size = max(n, m)
    sq = np.zeros((size, size), dtype=np.float64)
    sq[:n, :m] = c

    rows, cols = linear_sum_assignment(sq)
    match = np.empty(size, dtype=np.int64)
    match[rows] = cols
    total = float(sq[rows, cols].sum())

    # Two independent feasible dual pairs. An edge of any optimal assignment
    # is tight under every optimal dual, so intersecting the tight sets
    # discards the spurious shortest-path-tree ties each single solution
    # carries, leaving (almost) only genuinely interchangeable edges.
    idx = np.arange(size)
    v = _feasible_col_duals(sq, match)
    u = sq[idx, match] - v[match]
    match_inv = np.empty(size, dtype=np.int64)
    match_inv[match] = idx
    u2 = _feasible_col_duals(sq.T, match_inv)
    v2 = sq[match_inv, idx] - u2[match_inv]
    tight_tol = 1e-9 * (1.0 + float(np.abs(c).max()))
    tight = (sq - u[:, None] - v[None, :] <= tight_tol) \
        & (sq - u2[:, None] - v2[None, :] <= tight_tol)

    col_of = {int(r): int(match[r]) for r in range(size)}
    avail = np.ones(size, dtype=bool)
    budget = total
    fixed: Dict[int, int] = {}

    for i in range(n):
        incumbent = col_of[i]
        cand_cols = np.where(tight[i] & avail)[0]
        real_cands = [int(j) for j in cand_cols if j < m]
        dummy_cands = [int(j) for j in cand_cols if j >= m]
        cands = real_cands + dummy_cands[:1]
        if incumbent not in cands:
            cands.append(incumbent)
        chosen = None
        for j in cands:
            if j == incumbent:
                chosen = j
                break
            rest_rows = list(range(i + 1, size))
            rest_cols = [int(r) for r in np.where(avail)[0] if r != j]
            sub = sq[np.ix_(rest_rows, rest_cols)]
            rr, cc = linear_sum_assignment(sub)
            sub_total = float(sub[rr, cc].sum())
            if sq[i, j] + sub_total == budget:
                chosen = j
                # adopt the verified completion as the new incumbent
                for r_local, c_local in zip(rr, cc):
                    col_of[rest_rows[r_local]] = rest_cols[c_local]
                break
        if chosen is None:
            chosen = incumbent
        fixed[i] = chosen
        avail[chosen] = False
        budget -= float(sq[i, chosen])

    pairs = tuple((i, fixed[i]) for i in range(n) if fixed[i] < m)
    unmatched = tuple(i for i in range(n) if fixed[i] >= m)
    return Assignment(pairs=pairs, unmatched_preds=unmatched)


# ---------------------------------------------------------------------------
# Loss kernels
# ---------------------------------------------------------------------------

def _check_assignment(preds: GraspSet, gts: GraspSet, assignment: Assignment) -> None:
    seen_i, seen_j = set(), set()
    for i, j in assignment.pairs:
        if not (0 <= i < len(preds)) or not (0 <= j < len(gts)):
            raise ValueError(f"pair ({i}, {j}) out of range")
        if i in seen_i or j in seen_j:
            raise ValueError(f"pair ({i}, {j}) repeats an index")
        seen_i.add(i)
        seen_j.add(j)


def l1_regression_loss(preds: GraspSet, gts: GraspSet, assignment: Assignment) -> float:
    """Mean L1 encoded-vector distance over matched pairs.

    Unmatched predictions contribute nothing; they are handled by the
    confidence (focal) loss instead.
    """
    if not assignment.pairs:
        raise EmptyAssignmentError("assignment has no matched pairs")
    _check_assignment(preds, gts, assignment)
    a = poses_to_array(preds)
    b = poses_to_array(gts)
    terms = [float(np.abs(a[i] - b[j]).sum()) for i, j in assignment.pairs]
    return float(np.mean(terms))


def l1_regression_grad(preds: GraspSet, gts: GraspSet, assignment: Assignment) -> np.ndarray:
    """Subgradient of l1_regression_loss w.r.t. each prediction's 7-vector.

    sign(pred - gt) / n_pairs on matched rows, zero elsewhere; the
    subgradient at exact component equality is taken as 0.
    """
    if not assignment.pairs:
        raise EmptyAssignmentError("assignment has no matched pairs")
    _check_assignment(preds, gts, assignment)
    a = poses_to_array(preds)
    b = poses_to_array(gts)
    grad = np.zeros_like(a)
    for i, j in assignment.pairs:
        grad[i] = np.sign(a[i] - b[j]) / len(assignment.pairs)
    return grad


def _focal_terms(p: np.ndarray, labels: np.ndarray, alpha: float, gamma: float):
    p_t = np.where(labels == 1, p, 1.0 - p)
    a_t = np.where(labels == 1, alpha, 1.0 - alpha)
    return p_t, a_t


def focal_loss(
    confidences: Sequence[float],
    labels: Sequence[int],
    alpha: float = 0.25,
    gamma: float = 2.0,
) -> float:
    """Mean of -alpha_t * (1 - p_t)^gamma * log(p_t).

    p_t is the confidence for positive labels and its complement for
    negatives; alpha_t mirrors that split. gamma=0 with alpha=0.5 reduces
    to half the binary cross-entropy.
    """
    p = np.asarray(confidences, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 1 or p.size == 0:
        raise ValueError("confidences and labels must be equal-length 1D sequences")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("confidences must lie strictly inside (0, 1)")
    p_t, a_t = _focal_terms(p, y, alpha, gamma)
    return float(np.mean(-a_t * (1.0 - p_t) ** gamma * np.log(p_t)))


def focal_loss_grad(
    confidences: Sequence[float],
    labels: Sequence[int],
    alpha: float = 0.25,
    gamma: float = 2.0,
) -> np.ndarray:
    """Analytic d(focal_loss)/d(confidence), elementwise."""
    p = np.asarray(confidences, dtype=np.float64)
    y = np.asarray(labels)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("confidences must lie strictly inside (0, 1)")
    p_t, a_t = _focal_terms(p, y, alpha, gamma)
    # d/dp_t of -a_t (1-p_t)^g log p_t, then chain through dp_t/dp = +/-1
    if gamma == 0.0:
        d_pt = -a_t / p_t
    else:
        d_pt = a_t * gamma * (1.0 - p_t) ** (gamma - 1.0) * np.log(p_t) \
            - a_t * (1.0 - p_t) ** gamma / p_t
    sign = np.where(y == 1, 1.0, -1.0)
    return d_pt * sign / p.size


def masked_token_ce(
    predicted_distributions: Sequence[Sequence[float]],
    target_ids: Sequence[int],
    weights: Sequence[float],
) -> float:
    """Weighted mean of -log(prob of target), normalized by the weight sum.

    Zero-weight positions (reasoning tokens) are skipped entirely, so the
    probabilities there never enter the computation. Scaling every weight by
    the same positive factor leaves the result unchanged.
    """
    if not (len(predicted_distributions) == len(target_ids) == len(weights)):
        raise ValueError("distributions, targets, and weights must align")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    w_sum = float(w.sum())
    if w_sum == 0.0:
        raise DomainError("all supervision weights are zero")
    acc = 0.0
    for dist, tid, wi in zip(predicted_distributions, target_ids, w):
        if wi == 0.0:
            continue
        d = np.asarray(dist, dtype=np.float64)
        if abs(float(d.sum()) - 1.0) > 1e-9:
            raise ValueError("a predicted distribution does not sum to 1")
        prob = float(d[tid])
        if prob <= 0.0:
            raise DomainError("supervised target has zero probability")
        acc += wi * -math.log(prob)
    return acc / w_sum


def total_loss(
    l_qa: float,
    l_reg: float,
    l_cls: float,
    qa_weight: float = 1.0,
    reg_weight: float = 1.0,
    cls_weight: float = 1.0,
) -> LossReport:
    """Sum the three terms; coefficients default to 1 (plain unweighted sum)."""
    for name, v in (("l_qa", l_qa), ("l_reg", l_reg), ("l_cls", l_cls)):
        if not math.isfinite(v):
            raise ValueError(f"{name} is not finite")
    lq, lr, lc = qa_weight * l_qa, reg_weight * l_reg, cls_weight * l_cls
    # fsum: exactly-rounded, so the total is invariant to term order
    return LossReport(l_qa=lq, l_reg=lr, l_cls=lc, total=math.fsum((lq, lr, lc)))

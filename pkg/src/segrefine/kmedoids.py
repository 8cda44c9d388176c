"""k-medoids clustering of mask pixels and positive prompt selection.

Medoids are actual input points, which keeps selected prompts on real
foreground pixels. Inertia is the sum of Euclidean distances (not squared)
from each point to its nearest medoid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NoForegroundError
from .masks import BinaryMask
from .points import PromptPoint, PromptSet

logger = logging.getLogger(__name__)

# Foreground pixels beyond this cap are uniformly subsampled before clustering.
POSITIVE_SAMPLE_CAP = 4096

MAX_PAM_ITERATIONS = 300

# Independent k-medoids++ draws per call; the best final inertia wins.
# A single init leaves a few percent of small instances in local optima.
PAM_RESTARTS = 3

LITERAL_MIN = "literal_min"
ELBOW_1PCT = "elbow_1pct"
# Under the elbow rule a larger k must beat the incumbent inertia by at
# least this relative margin to be preferred.
ELBOW_REL_IMPROVEMENT = 0.01


@dataclass(frozen=True)
class ClusteringResult:
    medoids: np.ndarray  # (k, 2) rows of [x, y], each a member of the input
    inertia: float
    k: int
    iterations: int
    # Inertia after initialization and after each completed swap pass.
    inertia_trace: tuple = field(default_factory=tuple)


def _pairwise_to(points: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - medoids[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _first_improving_swap(dist: np.ndarray, medoid_idx: np.ndarray) -> bool:
    """Scan (medoid slot, candidate point) swaps against total inertia and
    apply the first improving one in slot order. Mutates ``medoid_idx`` and
    returns whether a swap happened.

    The alternation pass only moves a medoid within its own cluster, so it
    can stall with two medoids trapped in one group. This scan certifies the
    stopping rule (no swap at all improves inertia) and costs O(k n^2).
    """
    n = dist.shape[0]
    d_med = dist[:, medoid_idx]
    order = np.argsort(d_med, axis=1)
    rows = np.arange(n)
    d1 = d_med[rows, order[:, 0]]
    assigned = order[:, 0]
    d2 = d_med[rows, order[:, 1]] if len(medoid_idx) > 1 else np.full(n, np.inf)
    base = d1.sum()
    for c in range(len(medoid_idx)):
        fallback = np.where(assigned == c, d2, d1)
        cand_cost = np.minimum(dist, fallback[:, None]).sum(axis=0)
        cand_cost[medoid_idx] = np.inf
        best = int(cand_cost.argmin())
        if cand_cost[best] < base - 1e-12:
            medoid_idx[c] = best
            return True
    return False


def _plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeding in the k-means++ style: spread initial medoids apart.

    Guarantees k distinct medoids whenever the input holds >= k distinct
    points, because zero-distance duplicates get zero selection weight.
    """
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    nearest_sq = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = nearest_sq.sum()
        if total <= 0.0:
            # Only duplicates of already-chosen medoids remain.
            remaining = [i for i in range(n) if i not in set(chosen)]
            chosen.extend(remaining[: k - len(chosen)])
            break
        probs = nearest_sq / total
        idx = int(rng.choice(n, p=probs))
        chosen.append(idx)
        nearest_sq = np.minimum(nearest_sq, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(chosen[:k], dtype=int)


def kmedoids(points: np.ndarray, k: int, seed: int) -> ClusteringResult:
    """Cluster (n, 2) points into k medoids, deterministically for a seed.

    Alternates assignment with per-cluster medoid replacement (each medoid
    is swapped for the member minimizing that cluster's distance sum). When
    a pass changes nothing, a full swap scan looks for any improving
    (medoid, point) exchange; a run stops once no swap improves inertia or
    MAX_PAM_ITERATIONS passes elapse. PAM_RESTARTS independent inits are
    tried and the best final inertia wins; the reported trace and iteration
    count belong to the winning run, so inertia never increases along it.

    Memory is O(n^2); callers cluster at most POSITIVE_SAMPLE_CAP points.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise NoForegroundError("kmedoids needs at least one point")
    if k < 1:
        raise ValueError("k must be >= 1")
    n = pts.shape[0]
    if n <= k:
        return ClusteringResult(pts.copy(), 0.0, n, 0, (0.0,))

    rng = np.random.default_rng(seed)
    dist = _pairwise_to(pts, pts)
    winner = None
    for _ in range(PAM_RESTARTS):
        medoid_idx = _plusplus_init(pts, k, rng)
        trace = [float(dist[:, medoid_idx].min(axis=1).sum())]
        iterations = 0
        for _ in range(MAX_PAM_ITERATIONS):
            assign = dist[:, medoid_idx].argmin(axis=1)
            changed = False
            for c in range(k):
                members = np.where(assign == c)[0]
                if members.size == 0:
                    continue
                within = dist[np.ix_(members, members)].sum(axis=1)
                best = members[int(within.argmin())]
                if best != medoid_idx[c]:
                    medoid_idx[c] = best
                    changed = True
            if not changed:
                changed = _first_improving_swap(dist, medoid_idx)
            iterations += 1
            trace.append(float(dist[:, medoid_idx].min(axis=1).sum()))
            if not changed:
                break
        result = ClusteringResult(
            pts[medoid_idx].copy(), trace[-1], k, iterations, tuple(trace)
        )
        if winner is None or result.inertia < winner.inertia:
            winner = result
    return winner


def _choose_k(results: dict, k_rule: str) -> int:
    ks = sorted(results)
    if k_rule == LITERAL_MIN:
        best = ks[0]
        for k in ks[1:]:
            if results[k].inertia < results[best].inertia:
                best = k
        return best
    if k_rule == ELBOW_1PCT:
        best = ks[0]
        for k in ks[1:]:
            if results[k].inertia < results[best].inertia * (1.0 - ELBOW_REL_IMPROVEMENT):
                best = k
        return best
    raise ValueError(f"unknown k_rule {k_rule!r}")


def select_positive_points(
    mask: BinaryMask,
    k_min: int = 4,
    k_max: int = 6,
    seed: int = 0,
    k_rule: str = ELBOW_1PCT,
) -> PromptSet:
    """Pick representative foreground pixels as positive prompts.

    Runs kmedoids for each k in [k_min, k_max] and keeps the k with the
    best inertia. The default rule only moves to a larger k when it improves
    inertia by more than 1% relative, so near-ties resolve to fewer points;
    ``literal_min`` takes the strict minimum instead. Masks with at most
    k_min set pixels short-circuit to all of them.
    """
    if not (1 <= k_min <= k_max):
        raise ValueError("need 1 <= k_min <= k_max")
    ys, xs = np.nonzero(mask.bits)
    if xs.size == 0:
        raise NoForegroundError("mask has no foreground pixels")
    pts = np.column_stack([xs, ys]).astype(float)

    if pts.shape[0] > POSITIVE_SAMPLE_CAP:
        rng = np.random.default_rng(seed)
        keep = rng.choice(pts.shape[0], size=POSITIVE_SAMPLE_CAP, replace=False)
        pts = pts[np.sort(keep)]
        logger.warning(
            "subsampled %d foreground pixels to %d before clustering",
            xs.size,
            POSITIVE_SAMPLE_CAP,
        )

    if pts.shape[0] <= k_min:
        coords = pts
    else:
        results = {k: kmedoids(pts, k, seed) for k in range(k_min, k_max + 1)}
        coords = results[_choose_k(results, k_rule)].medoids

    return PromptSet(tuple(PromptPoint(float(x), float(y), True) for x, y in coords))

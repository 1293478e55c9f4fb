"""Community recovery and label-matching metrics.

Three spectral routes are offered for clustering a time window of a
network series:

* ``adjacency_sum`` - embed the leading eigenvectors of the summed
  adjacency matrices of the window,
* ``laplacian_of_sum`` - embed the symmetrically normalized version of
  that sum,
* ``sum_of_laplacians`` - embed the average of the per-snapshot
  normalized matrices D^{-1/2} A_t D^{-1/2}.

Row vectors of the embedding are then grouped with a restarted
K-means++ / Lloyd routine.  Misclassification is measured as the
permutation-minimized, block-size-weighted miss count, computed exactly
(exhaustively for small K, via an assignment-problem reduction
otherwise).
"""

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .netcore import AdjacencySeries, CommunityAssignment, make_rng

__all__ = [
    "Embedding",
    "MisclassReport",
    "DegenerateClustersError",
    "spectral_embed",
    "approx_kmeans",
    "cluster_segment",
    "misclassification",
    "degree_profile_classify",
]

VARIANTS = ("adjacency_sum", "laplacian_of_sum", "sum_of_laplacians")

_DEGREE_FLOOR = 1e-6  # regularizer added to degrees before D^{-1/2}


class DegenerateClustersError(ValueError):
    """Raised when fewer than K distinct points are available to cluster.

    ``achieved`` carries the number of distinct clusters that are
    actually attainable; callers may treat this as a diagnostic that
    the working community count is too large.
    """

    def __init__(self, requested: int, achieved: int):
        super().__init__(f"requested {requested} clusters but only {achieved} distinct points")
        self.requested = requested
        self.achieved = achieved


@dataclass(frozen=True)
class Embedding:
    """Leading eigenvector coordinates of a symmetric matrix.

    rows: m x K matrix whose i-th row is node i's coordinates.
    eigenvalues: the K retained eigenvalues, ordered by decreasing
    absolute value (ties broken by signed value descending).
    """

    rows: np.ndarray
    eigenvalues: np.ndarray


def spectral_embed(M: np.ndarray, K: int) -> Embedding:
    """Embed nodes via the K eigenvectors of largest absolute eigenvalue.

    The ordering is deterministic: |eigenvalue| descending, then signed
    value descending; each retained eigenvector is normalized so its
    first coordinate of magnitude above 1e-12 is positive.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    if not np.allclose(M, M.T, atol=1e-10):
        raise ValueError("M must be symmetric")
    m = M.shape[0]
    if not 1 <= K <= m:
        raise ValueError(f"K must lie in 1..{m}")
    vals, vecs = np.linalg.eigh(M)
    order = np.lexsort((-vals, -np.abs(vals)))[:K]
    vals = vals[order]
    vecs = vecs[:, order]
    for k in range(K):
        col = vecs[:, k]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            vecs[:, k] = -col
    return Embedding(rows=vecs, eigenvalues=vals)


def _kmeans_pp_init(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(X.shape[0])]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(X.shape[0])
        else:
            idx = rng.choice(X.shape[0], p=d2 / total)
        centers[k] = X[idx]
        d2 = np.minimum(d2, ((X - centers[k]) ** 2).sum(axis=1))
    return centers


def approx_kmeans(
    rows: np.ndarray,
    K: int,
    epsilon: float = 0.0,
    seed=0,
    restarts: int = 10,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> CommunityAssignment:
    """Cluster row vectors into K groups with restarted K-means++/Lloyd.

    The best objective over ``restarts`` independent initializations is
    kept, which serves as the practical stand-in for a (1+epsilon)
    approximation guarantee; ``epsilon`` is accepted for interface
    compatibility (any fixed-accuracy scheme is interchangeable here).

    Raises DegenerateClustersError when the rows contain fewer than K
    distinct points.  Lloyd updates that empty a cluster keep its old
    center; the returned assignment may then use fewer than K labels
    (inspect ``achieved_k``).
    """
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("rows must be 2-d")
    m = X.shape[0]
    if m < K:
        raise DegenerateClustersError(K, m)
    n_distinct = np.unique(X, axis=0).shape[0]
    if n_distinct < K:
        raise DegenerateClustersError(K, n_distinct)

    rng = make_rng(seed)
    best_obj, best_labels = np.inf, None
    for _ in range(restarts):
        centers = _kmeans_pp_init(X, K, rng)
        labels = None
        prev_obj = np.inf
        for _ in range(max_iter):
            d = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            labels = d.argmin(axis=1)
            obj = float(d[np.arange(m), labels].sum())
            # Lloyd never increases the objective
            assert obj <= prev_obj + 1e-9
            for k in range(K):
                mask = labels == k
                if mask.any():
                    centers[k] = X[mask].mean(axis=0)
            converged = np.isfinite(prev_obj) and (prev_obj - obj) <= tol * max(obj, 1.0)
            prev_obj = obj
            if converged or obj <= 0.0:
                break
        if prev_obj < best_obj:
            best_obj, best_labels = prev_obj, labels
        if best_obj <= 0.0:
            break
    return CommunityAssignment(best_labels.astype(np.int32) + 1, K)


def _normalized(B: np.ndarray) -> np.ndarray:
    deg = B.sum(axis=1) + _DEGREE_FLOOR
    if np.any(B.sum(axis=1) == 0):
        warnings.warn("zero-degree node encountered; degrees regularized", stacklevel=3)
    inv = 1.0 / np.sqrt(deg)
    return inv[:, None] * B * inv[None, :]


def cluster_segment(
    series: AdjacencySeries,
    t_lo: int,
    t_hi: int,
    K: int,
    variant: str = "adjacency_sum",
    seed=0,
    restarts: int = 10,
) -> CommunityAssignment:
    """Recover communities from the inclusive time window t_lo..t_hi.

    variant selects what gets eigendecomposed: the plain segment sum,
    its normalized form, or the average of per-snapshot normalized
    matrices.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if not 1 <= t_lo <= t_hi <= series.n:
        raise ValueError(f"invalid window [{t_lo}, {t_hi}]")
    B = series.segment_sum(t_lo, t_hi).astype(np.float64)
    if variant == "adjacency_sum":
        M = B
    elif variant == "laplacian_of_sum":
        M = _normalized(B)
    else:
        M = np.zeros_like(B)
        for t in range(t_lo, t_hi + 1):
            M += _normalized(series.matrix(t).astype(np.float64))
        M /= t_hi - t_lo + 1
    emb = spectral_embed(M, K)
    return approx_kmeans(emb.rows, K, seed=seed, restarts=restarts)


@dataclass(frozen=True)
class MisclassReport:
    """Permutation-minimized weighted misclassification.

    rate is the minimum over label permutations pi of
    sum_i 1{est(i) != pi(truth(i))} / size_of_block(pi(truth(i))),
    so each truth block contributes at most 1 and the total is at most K.
    best_permutation maps truth label u (1-based) to pi(u).
    """

    rate: float
    best_permutation: tuple

    def to_line(self) -> str:
        return " ".join([f"{self.rate:.10g}"] + [str(p) for p in self.best_permutation])


_BIG_COST = 1e18


def _misclass_costs(truth: CommunityAssignment, est: CommunityAssignment, K: int) -> np.ndarray:
    joint = np.zeros((K, K))
    np.add.at(joint, (truth.labels - 1, est.labels - 1), 1.0)
    sizes = np.bincount(truth.labels - 1, minlength=K).astype(np.float64)
    # cost[u, v]: truth block u mapped to label v misses (s_u - joint[u, v]) nodes,
    # each weighted by 1 / (size of truth block v)
    num = sizes[:, None] - joint
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = num / sizes[None, :]
    cost[np.broadcast_to(sizes[None, :] == 0, cost.shape)] = 0.0
    cost[(num > 0) & (sizes[None, :] == 0)] = _BIG_COST
    return cost


def misclassification(truth: CommunityAssignment, est: CommunityAssignment) -> MisclassReport:
    """Exact minimum of the weighted miss count over label permutations.

    Exhaustive search for K <= 8; otherwise the objective separates
    over (truth label, image) pairs, so the optimal permutation is an
    assignment problem solved exactly.
    """
    if truth.m != est.m:
        raise ValueError("assignments must cover the same number of nodes")
    K = max(truth.K, est.K)
    truth = truth.with_k(K)
    est = est.with_k(K)
    cost = _misclass_costs(truth, est, K)
    if K <= 8:
        best_rate, best_perm = np.inf, None
        for perm in itertools.permutations(range(K)):
            r = float(sum(cost[u, perm[u]] for u in range(K)))
            if r < best_rate - 1e-15:
                best_rate, best_perm = r, perm
        perm = best_perm
        rate = best_rate
    else:
        rows, cols = linear_sum_assignment(cost)
        perm = tuple(int(c) for c in cols[np.argsort(rows)])
        rate = float(cost[rows, cols].sum())
    return MisclassReport(rate=rate, best_permutation=tuple(p + 1 for p in perm))


def _upper_cluster_mean(values: np.ndarray) -> float:
    """Mean of the upper group under the best two-group split of 1-d values.

    The split minimizes total within-group sum of squares (exhaustive
    over the sorted order); constant inputs return their common mean.
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    if n == 1 or x[-1] - x[0] <= 1e-12:
        return float(x.mean())
    csum = np.cumsum(x)
    csum2 = np.cumsum(x**2)
    k = np.arange(1, n)  # lower group = x[:k]
    ss_lo = csum2[k - 1] - csum[k - 1] ** 2 / k
    ss_hi = (csum2[-1] - csum2[k - 1]) - (csum[-1] - csum[k - 1]) ** 2 / (n - k)
    k_best = int(k[np.argmin(ss_lo + ss_hi)])
    return float(x[k_best:].mean())


def degree_profile_classify(
    series: AdjacencySeries,
    t_break: int,
    B: float,
    B_star: float,
    delta_exp: float,
    gap: float | None = None,
    c_star: float | None = None,
) -> tuple[CommunityAssignment, CommunityAssignment]:
    """Two-community recovery from node-1 connection profiles.

    Designed for equal within/between-gap two-block models: for each
    node j the statistics gamma_j (pre-window) and delta_j
    (post-window) compare node j's average connection rate to node 1
    against a reference for node 1's own block (the upper-cluster mean
    of the observed rates, since within-block rates dominate when
    within > between).  Nodes land in one of the four cells of (shares
    node 1's block before, shares it after) by thresholding gamma_j and
    delta_j at B / sqrt(n^delta_exp), with the ambiguous both-large
    case resolved by the ratio gamma_j/delta_j against a band of
    half-width B_star / sqrt(n^delta_exp).

    When the within/between probability gap and the boundary fraction
    c_star are known, the threshold is validated against
    (c_star / (1 - c_star)) * gap.

    Returns the pre- and post-break two-block assignments (label 1 =
    node 1's block).
    """
    n, m = series.n, series.m
    if not 1 <= t_break <= n - 1:
        raise ValueError("t_break must lie in 1..n-1")
    thr = B / np.sqrt(n ** delta_exp)
    if gap is not None and c_star is not None:
        bound = (c_star / (1.0 - c_star)) * gap
        if thr > bound + 1e-12:
            raise ValueError(f"threshold {thr:.4g} exceeds admissible bound {bound:.4g}")
    band = B_star / np.sqrt(n ** delta_exp)

    p_hat = series.prefix[t_break][0].astype(np.float64) / t_break
    q_hat = (series.prefix[n][0] - series.prefix[t_break][0]).astype(np.float64) / (n - t_break)
    # node 1 against itself is structurally zero and is excluded
    gamma = _upper_cluster_mean(p_hat[1:]) - p_hat
    delta = _upper_cluster_mean(q_hat[1:]) - q_hat

    pre = np.empty(m, dtype=np.int32)
    post = np.empty(m, dtype=np.int32)
    pre[0] = post[0] = 1
    for j in range(1, m):
        g_small, d_small = gamma[j] <= thr, delta[j] <= thr
        if g_small and d_small:
            cell = (True, True)
        elif g_small:
            cell = (True, False)
        elif d_small:
            cell = (False, True)
        else:
            ratio = gamma[j] / delta[j]
            if ratio <= 1.0 - band:
                cell = (True, False)
            elif ratio > 1.0 + band:
                cell = (False, True)
            else:
                cell = (False, False)
        pre[j] = 1 if cell[0] else 2
        post[j] = 1 if cell[1] else 2
    return CommunityAssignment(pre, 2), CommunityAssignment(post, 2)

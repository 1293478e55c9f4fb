"""Least-squares change-point criteria and the four estimators.

Every estimator scans candidate break indices t (pre-segment = times
1..t, post-segment = t+1..n) and minimizes a segmented least-squares
criterion.  Two criteria exist:

* the per-edge ("random graph") criterion, which fits each edge's
  empirical frequency separately on both sides, and
* the block criterion, which fits one mean per community pair given
  pre/post assignments.

Because adjacency entries are 0/1, sum_t (A_t - mean)^2 over a segment
reduces algebraically to (edge count) - (segment length) * mean^2, so
both criteria evaluate in O(m^2) (resp. O(m^2 + K^2)) per candidate from
the series prefix cache.  Criterion values carry a 1/n normalization.

The estimators:

* ``estimate_known``      - oracle assignments supplied by the caller;
* ``estimate_every_time_point`` - re-cluster both sides at every
  candidate break (cubic in m per candidate);
* ``estimate_2step``      - per-edge scan first, cluster once at the
  located break;
* ``estimate_boundary_variant`` - cluster once on boundary stretches
  that are guaranteed to be change-free, then scan with those fixed
  assignments.

Ties in a scan always resolve to the smallest break index.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .cluster import DegenerateClustersError, cluster_segment, misclassification
from .netcore import AdjacencySeries, BlockMatrix, CommunityAssignment, edge_prob_matrix

__all__ = [
    "SearchGrid",
    "ChangePointFit",
    "UndefinedBlockMeanError",
    "block_means",
    "er_criterion_scan",
    "dsbm_criterion",
    "dsbm_criterion_scan",
    "fixed_matrix_criterion_scan",
    "estimate_known",
    "estimate_every_time_point",
    "estimate_2step",
    "estimate_boundary_variant",
    "write_trajectory_csv",
    "write_fit_summary_csv",
]


class UndefinedBlockMeanError(ValueError):
    """A used community has no within-pair (single node), so its mean is undefined."""

    def __init__(self, block: int):
        super().__init__(f"block {block} has a single node; its within-block mean is undefined")
        self.block = block


@dataclass(frozen=True)
class SearchGrid:
    """Candidate break indices; break after time t means pre = 1..t.

    When built from a boundary fraction c_star the candidate range is
    ceil(n*c_star) .. floor(n*(1-c_star)), clamped to the always-valid
    1..n-1.
    """

    indices: np.ndarray
    n: int
    c_star: float | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("empty search grid")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("grid indices must be strictly increasing")
        if idx[0] < 1 or idx[-1] > self.n - 1:
            raise ValueError(f"grid indices must lie in 1..{self.n - 1}")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, n: int) -> "SearchGrid":
        return cls(np.arange(1, n), n)

    @classmethod
    def with_c_star(cls, n: int, c_star: float) -> "SearchGrid":
        if not 0.0 < c_star < 0.5:
            raise ValueError("c_star must lie in (0, 0.5)")
        t_min = max(1, int(np.ceil(n * c_star)))
        t_max = min(n - 1, int(np.floor(n * (1.0 - c_star))))
        if t_min > t_max:
            raise ValueError(f"c_star={c_star} leaves no candidates for n={n}")
        return cls(np.arange(t_min, t_max + 1), n, c_star=c_star)

    @classmethod
    def from_bounds(cls, n: int, t_min: int, t_max: int) -> "SearchGrid":
        return cls(np.arange(t_min, t_max + 1), n)


@dataclass
class ChangePointFit:
    """Result of one change-point estimation run.

    trajectory is aligned with grid.indices; skipped (degenerate)
    candidates hold NaN.  tau_index is the smallest grid index
    attaining the minimum finite criterion value.
    """

    method: str
    tau_index: int
    n: int
    grid: SearchGrid
    trajectory: np.ndarray
    z_hat: CommunityAssignment | None = None
    w_hat: CommunityAssignment | None = None
    Lam_hat: BlockMatrix | None = None
    Delta_hat: BlockMatrix | None = None
    notes: list = field(default_factory=list)

    @property
    def tau_hat(self) -> float:
        return self.tau_index / self.n

    @property
    def K(self) -> int | None:
        return self.z_hat.K if self.z_hat is not None else None


def _argmin_on_grid(grid: SearchGrid, trajectory: np.ndarray) -> int:
    finite = np.isfinite(trajectory)
    if not finite.any():
        raise ValueError("criterion undefined at every grid point")
    pos = int(np.nanargmin(np.where(finite, trajectory, np.inf)))
    return int(grid.indices[pos])


def _block_pair_stats(C: np.ndarray, assign: CommunityAssignment):
    """Block-pair edge sums and ordered-pair counts for a prefix slice C.

    C has zero diagonal, so Z' C Z already sums over i != j only.  The
    pair count for (u, u) is s_u (s_u - 1): within-block means average
    ordered off-diagonal pairs, keeping single-draw means inside [0, 1].
    """
    Z = assign.onehot()
    S = Z.T @ C.astype(np.float64) @ Z
    sizes = assign.block_sizes().astype(np.float64)
    N = np.outer(sizes, sizes) - np.diag(sizes)
    return S, N, sizes


def block_means(
    series: AdjacencySeries,
    assign_pre: CommunityAssignment,
    assign_post: CommunityAssignment,
    t_break: int,
) -> tuple[BlockMatrix, BlockMatrix]:
    """Per-community-pair empirical edge frequencies on both sides of a break.

    Entry (u, v) of the pre matrix averages A over times 1..t_break and
    node pairs (i, j), i != j, with pre-labels (u, v); the post matrix
    averages times t_break+1..n under the post assignment.  Pairs with
    both labels unused are reported as 0.  A used single-node block has
    no within pairs and raises UndefinedBlockMeanError.
    """
    n = series.n
    if not 1 <= t_break <= n - 1:
        raise ValueError("t_break must lie in 1..n-1")
    out = []
    for assign, C, length in (
        (assign_pre, series.prefix[t_break], t_break),
        (assign_post, series.prefix[n] - series.prefix[t_break], n - t_break),
    ):
        S, N, sizes = _block_pair_stats(C, assign)
        for u in np.nonzero(sizes == 1)[0]:
            raise UndefinedBlockMeanError(int(u) + 1)
        M = np.zeros_like(S)
        ok = N > 0
        M[ok] = S[ok] / (length * N[ok])
        out.append(BlockMatrix(M))
    return out[0], out[1]


def er_criterion_scan(series: AdjacencySeries, grid: SearchGrid | None = None) -> np.ndarray:
    """Per-edge least-squares criterion at every grid point.

    For break t the value is
    (1/n) [ E - sum_ij( t * p_ij^2 + (n-t) * q_ij^2 ) ],
    where p/q are the per-edge segment frequencies and E the total edge
    indicator sum; this equals the residual sum of squares because the
    entries are 0/1.
    """
    grid = grid or SearchGrid.full(series.n)
    n = series.n
    C = series.prefix[grid.indices].astype(np.float64)
    D = series.prefix[n].astype(np.float64)[None, :, :] - C
    lens = grid.indices.astype(np.float64)
    expl = np.einsum("tij,tij->t", C, C) / lens + np.einsum("tij,tij->t", D, D) / (n - lens)
    return (series.total_edge_sum - expl) / n


def dsbm_criterion_scan(
    series: AdjacencySeries,
    z: CommunityAssignment,
    w: CommunityAssignment,
    grid: SearchGrid | None = None,
) -> np.ndarray:
    """Block least-squares criterion with fixed assignments at every grid point.

    Block means are re-fit to each candidate segmentation (plug-in
    estimates); community pairs with no node pairs contribute nothing.
    """
    grid = grid or SearchGrid.full(series.n)
    n = series.n
    Zp, Zq = z.onehot(), w.onehot()
    sp, sq = z.block_sizes().astype(np.float64), w.block_sizes().astype(np.float64)
    Np = np.outer(sp, sp) - np.diag(sp)
    Nq = np.outer(sq, sq) - np.diag(sq)
    Cfull = series.prefix[n].astype(np.float64)
    vals = np.empty(grid.indices.size)
    for k, t in enumerate(grid.indices):
        C = series.prefix[t].astype(np.float64)
        Sp = Zp.T @ C @ Zp
        Sq = Zq.T @ (Cfull - C) @ Zq
        expl = 0.0
        okp = Np > 0
        expl += float((Sp[okp] ** 2 / (t * Np[okp])).sum())
        okq = Nq > 0
        expl += float((Sq[okq] ** 2 / ((n - t) * Nq[okq])).sum())
        vals[k] = (series.total_edge_sum - expl) / n
    return vals


def dsbm_criterion(
    series: AdjacencySeries,
    t_break: int,
    z: CommunityAssignment,
    w: CommunityAssignment,
) -> float:
    """Block criterion at a single break index (see dsbm_criterion_scan)."""
    grid = SearchGrid(np.array([t_break]), series.n)
    return float(dsbm_criterion_scan(series, z, w, grid)[0])


def fixed_matrix_criterion_scan(
    series: AdjacencySeries,
    z: CommunityAssignment,
    w: CommunityAssignment,
    Lam: BlockMatrix,
    Delta: BlockMatrix,
    grid: SearchGrid | None = None,
) -> np.ndarray:
    """Block criterion with frozen block matrices (no per-candidate re-fit).

    Used by the resampling machinery, which holds fitted parameters
    fixed while relocating the break.
    """
    grid = grid or SearchGrid.full(series.n)
    n = series.n
    P = edge_prob_matrix(z.with_k(Lam.K), Lam).entries
    Q = edge_prob_matrix(w.with_k(Delta.K), Delta).entries
    C = series.prefix[grid.indices].astype(np.float64)
    D = series.prefix[n].astype(np.float64)[None, :, :] - C
    lens = grid.indices.astype(np.float64)
    sp2 = float((P ** 2).sum())
    sq2 = float((Q ** 2).sum())
    pre = C.sum(axis=(1, 2)) - 2.0 * np.tensordot(C, P, axes=([1, 2], [0, 1])) + lens * sp2
    post = D.sum(axis=(1, 2)) - 2.0 * np.tensordot(D, Q, axes=([1, 2], [0, 1])) + (n - lens) * sq2
    return (pre + post) / n


def estimate_known(
    series: AdjacencySeries,
    z: CommunityAssignment,
    w: CommunityAssignment,
    grid: SearchGrid | None = None,
) -> ChangePointFit:
    """Break estimator with oracle communities: argmin of the block criterion."""
    grid = grid or SearchGrid.full(series.n)
    traj = dsbm_criterion_scan(series, z, w, grid)
    t_hat = _argmin_on_grid(grid, traj)
    Lam_hat, Delta_hat = block_means(series, z, w, t_hat)
    return ChangePointFit(
        method="known",
        tau_index=t_hat,
        n=series.n,
        grid=grid,
        trajectory=traj,
        z_hat=z,
        w_hat=w,
        Lam_hat=Lam_hat,
        Delta_hat=Delta_hat,
    )


def estimate_every_time_point(
    series: AdjacencySeries,
    K: int,
    grid: SearchGrid | None = None,
    seed=0,
    variant: str = "adjacency_sum",
    restarts: int = 10,
) -> ChangePointFit:
    """Break estimator that re-clusters both segments at every candidate.

    Each grid point t gets assignments from clustering times 1..t and
    t+1..n separately (seeded per candidate, so parallel evaluation
    would reproduce the serial result), then the block criterion with
    those assignments.  Candidates where clustering degenerates are
    skipped with a note and excluded from the argmin.  Total cost is
    cubic in m per candidate.
    """
    grid = grid or SearchGrid.full(series.n)
    n = series.n
    traj = np.full(grid.indices.size, np.nan)
    notes = []

    def _cluster_pair(t):
        zc = cluster_segment(series, 1, t, K, variant=variant, seed=(_as_tuple(seed) + (t, 0)), restarts=restarts)
        wc = cluster_segment(series, t + 1, n, K, variant=variant, seed=(_as_tuple(seed) + (t, 1)), restarts=restarts)
        return zc, wc

    for k, t in enumerate(grid.indices):
        try:
            zc, wc = _cluster_pair(int(t))
            traj[k] = dsbm_criterion(series, int(t), zc, wc)
        except DegenerateClustersError as exc:
            notes.append(f"t={int(t)}: skipped ({exc})")
    t_hat = _argmin_on_grid(grid, traj)
    z_hat, w_hat = _cluster_pair(t_hat)
    Lam_hat, Delta_hat = block_means(series, z_hat, w_hat, t_hat)
    return ChangePointFit(
        method="every_point",
        tau_index=t_hat,
        n=n,
        grid=grid,
        trajectory=traj,
        z_hat=z_hat,
        w_hat=w_hat,
        Lam_hat=Lam_hat,
        Delta_hat=Delta_hat,
        notes=notes,
    )


def estimate_2step(
    series: AdjacencySeries,
    K: int,
    grid: SearchGrid | None = None,
    seed=0,
    variant: str = "adjacency_sum",
    restarts: int = 10,
) -> ChangePointFit:
    """Two-step estimator: per-edge scan for the break, then one clustering pass.

    Step 1 ignores community structure entirely (every node its own
    community) and minimizes the per-edge criterion.  Step 2 clusters
    the located pre and post segments once and estimates the block
    matrices there.  Linear in n and quadratic in m for step 1, cubic
    in m once for step 2.
    """
    grid = grid or SearchGrid.full(series.n)
    traj = er_criterion_scan(series, grid)
    t_hat = _argmin_on_grid(grid, traj)
    z_hat = cluster_segment(series, 1, t_hat, K, variant=variant, seed=(_as_tuple(seed) + (0,)), restarts=restarts)
    w_hat = cluster_segment(series, t_hat + 1, series.n, K, variant=variant, seed=(_as_tuple(seed) + (1,)), restarts=restarts)
    Lam_hat, Delta_hat = block_means(series, z_hat, w_hat, t_hat)
    return ChangePointFit(
        method="2step",
        tau_index=t_hat,
        n=series.n,
        grid=grid,
        trajectory=traj,
        z_hat=z_hat,
        w_hat=w_hat,
        Lam_hat=Lam_hat,
        Delta_hat=Delta_hat,
    )


def estimate_boundary_variant(
    series: AdjacencySeries,
    K: int,
    grid: SearchGrid | None = None,
    seed=0,
    variant: str = "adjacency_sum",
    restarts: int = 10,
) -> ChangePointFit:
    """Break estimator with assignments fixed from boundary stretches.

    The pre assignment is clustered from times 1..ceil(n*c_star) and the
    post assignment from floor(n*(1-c_star))+1..n, both change-free by
    assumption; without a boundary fraction on the grid only the first
    and last single time points are used.  The block criterion is then
    scanned with those assignments held fixed.
    """
    grid = grid or SearchGrid.full(series.n)
    n = series.n
    if grid.c_star is not None:
        pre_hi = max(1, int(np.ceil(n * grid.c_star)))
        post_lo = min(n, int(np.floor(n * (1.0 - grid.c_star))) + 1)
    else:
        pre_hi, post_lo = 1, n
    z_star = cluster_segment(series, 1, pre_hi, K, variant=variant, seed=(_as_tuple(seed) + (0,)), restarts=restarts)
    w_star = cluster_segment(series, post_lo, n, K, variant=variant, seed=(_as_tuple(seed) + (1,)), restarts=restarts)
    traj = dsbm_criterion_scan(series, z_star, w_star, grid)
    t_hat = _argmin_on_grid(grid, traj)
    Lam_hat, Delta_hat = block_means(series, z_star, w_star, t_hat)
    return ChangePointFit(
        method="boundary",
        tau_index=t_hat,
        n=n,
        grid=grid,
        trajectory=traj,
        z_hat=z_star,
        w_hat=w_star,
        Lam_hat=Lam_hat,
        Delta_hat=Delta_hat,
        notes=[f"pre window 1..{pre_hi}, post window {post_lo}..{n}"],
    )


def _as_tuple(seed) -> tuple:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(x) for x in seed)


def write_trajectory_csv(fit: ChangePointFit, path) -> None:
    """Columns: t_break, b, criterion."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_break", "b", "criterion"])
        for t, v in zip(fit.grid.indices, fit.trajectory):
            writer.writerow([int(t), t / fit.n, repr(float(v))])


def write_fit_summary_csv(
    fits,
    path,
    truth_pre: CommunityAssignment | None = None,
    truth_post: CommunityAssignment | None = None,
) -> None:
    """Columns: method, tau_index, tau_hat, K, misclass_pre, misclass_post.

    Misclassification columns stay empty unless true assignments are
    supplied.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "tau_index", "tau_hat", "K", "misclass_pre", "misclass_post"])
        for fit in fits:
            pre = post = ""
            if truth_pre is not None and fit.z_hat is not None:
                pre = f"{misclassification(truth_pre, fit.z_hat).rate:.10g}"
            if truth_post is not None and fit.w_hat is not None:
                post = f"{misclassification(truth_post, fit.w_hat).rate:.10g}"
            writer.writerow([fit.method, fit.tau_index, f"{fit.tau_hat:.10g}", fit.K or "", pre, post])

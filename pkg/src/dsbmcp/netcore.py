"""Domain types and samplers for (dynamic) stochastic block models.

A stochastic block model SBM(z, B) assigns each of m nodes a community
label via z and connects nodes i != j independently with probability
B[z(i), z(j)]; self-loops never occur.  A dynamic SBM is an independent
sequence of such draws whose parameters (z, Lam) switch to (w, Delta)
after a break at time floor(n * tau).

Everything here is immutable after construction and samplers are pure
functions of (parameters, seed), so objects can be shared freely across
threads and replicate-level parallelism.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CommunityAssignment",
    "BlockMatrix",
    "EdgeProbMatrix",
    "DsbmSpec",
    "AdjacencySeries",
    "make_rng",
    "edge_prob_matrix",
    "frobenius_gap",
    "sample_sbm",
    "sample_dsbm",
    "save_series_text",
    "load_series_text",
    "save_series_binary",
    "load_series_binary",
]

_MAGIC = b"DSBM1"


def make_rng(seed, *path) -> np.random.Generator:
    """Derive a deterministic generator from a seed and an integer path.

    Uses the counter-based Philox bit generator keyed by the full
    (seed, *path) tuple, so streams for distinct (replicate, t, ...)
    paths are independent and identical whether produced serially or in
    parallel.
    """
    if isinstance(seed, (int, np.integer)):
        entropy = (int(seed),)
    else:
        entropy = tuple(int(x) for x in seed)
    entropy = entropy + tuple(int(p) for p in path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class CommunityAssignment:
    """Map from node index to community label.

    labels holds one label per node, each in 1..K.  Labels may leave
    some communities empty (needed when two assignments are padded to a
    common K).
    """

    labels: np.ndarray
    K: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int32)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a non-empty 1-d array")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if labels.min() < 1 or labels.max() > self.K:
            raise ValueError(f"labels must lie in 1..{self.K}")

    @property
    def m(self) -> int:
        return int(self.labels.size)

    def block_size(self, u: int) -> int:
        """Number of nodes carrying label u."""
        return int(np.count_nonzero(self.labels == u))

    def block_sizes(self) -> np.ndarray:
        """Sizes of all K blocks as an array indexed by label-1."""
        return np.bincount(self.labels - 1, minlength=self.K).astype(np.int64)

    @property
    def achieved_k(self) -> int:
        """Number of non-empty communities."""
        return int(np.count_nonzero(self.block_sizes()))

    def onehot(self) -> np.ndarray:
        """m x K indicator matrix Z with Z[i, labels[i]-1] = 1."""
        Z = np.zeros((self.m, self.K))
        Z[np.arange(self.m), self.labels - 1] = 1.0
        return Z

    def with_k(self, K: int) -> "CommunityAssignment":
        """Same labels viewed against a (possibly larger) label set."""
        if K < self.K:
            raise ValueError("cannot shrink K below the declared label range")
        return CommunityAssignment(self.labels, K)

    def relabel(self, perm) -> "CommunityAssignment":
        """Apply a permutation of 1..K to every label (perm[u-1] = new label of u)."""
        perm = np.asarray(perm, dtype=np.int32)
        if sorted(perm.tolist()) != list(range(1, self.K + 1)):
            raise ValueError("perm must be a permutation of 1..K")
        return CommunityAssignment(perm[self.labels - 1], self.K)

    def to_line(self) -> str:
        return " ".join(str(int(x)) for x in self.labels)

    @classmethod
    def from_line(cls, line: str, K: int | None = None) -> "CommunityAssignment":
        labels = np.array([int(x) for x in line.split()], dtype=np.int32)
        return cls(labels, int(labels.max()) if K is None else K)


@dataclass(frozen=True)
class BlockMatrix:
    """Symmetric K x K matrix of community connection probabilities.

    Entries are validated to lie in [0, 1] unless ``allow_out_of_range``
    is set.  Some benchmark parameterizations produce nominal entries outside
    [0, 1]; those are kept raw here (signal arithmetic uses them as-is)
    while samplers clip into [0, 1] at draw time.
    """

    entries: np.ndarray
    allow_out_of_range: bool = False

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim == 0:
            entries = entries.reshape(1, 1)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("entries must be a square matrix")
        if not np.allclose(entries, entries.T, atol=1e-12):
            raise ValueError("block matrix must be symmetric")
        entries = (entries + entries.T) / 2.0
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        if not self.allow_out_of_range:
            if entries.min() < 0.0 or entries.max() > 1.0:
                raise ValueError("probabilities must lie in [0, 1]")

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    def padded(self, K: int) -> "BlockMatrix":
        """Zero-pad to a larger community count."""
        if K == self.K:
            return self
        if K < self.K:
            raise ValueError("cannot pad to a smaller K")
        out = np.zeros((K, K))
        out[: self.K, : self.K] = self.entries
        return BlockMatrix(out, allow_out_of_range=self.allow_out_of_range)


@dataclass(frozen=True)
class EdgeProbMatrix:
    """m x m edge probability matrix with zero diagonal.

    ``diag_probs`` optionally carries the within-community probability
    each node would see against a same-community twin; the model zeroes
    the actual diagonal (no self-loops) but signal norms that include
    the diagonal need these values.
    """

    entries: np.ndarray
    diag_probs: np.ndarray | None = None

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("entries must be square")
        if not np.allclose(entries, entries.T, atol=1e-12):
            raise ValueError("edge probability matrix must be symmetric")
        if np.any(np.diag(entries) != 0.0):
            raise ValueError("diagonal must be exactly zero")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        if self.diag_probs is not None:
            d = np.array(self.diag_probs, dtype=np.float64)
            if d.shape != (entries.shape[0],):
                raise ValueError("diag_probs must have one value per node")
            d.setflags(write=False)
            object.__setattr__(self, "diag_probs", d)

    @property
    def m(self) -> int:
        return self.entries.shape[0]


def edge_prob_matrix(assign: CommunityAssignment, B: BlockMatrix) -> EdgeProbMatrix:
    """Expand a block matrix to the node level: entry (i, j) is B[z(i), z(j)] for i != j, 0 on the diagonal."""
    if assign.K != B.K:
        raise ValueError(f"assignment has K={assign.K} but block matrix has K={B.K}")
    idx = assign.labels - 1
    P = B.entries[np.ix_(idx, idx)].copy()
    diag = np.diag(P).copy()
    np.fill_diagonal(P, 0.0)
    return EdgeProbMatrix(P, diag_probs=diag)


def frobenius_gap(P: EdgeProbMatrix, Q: EdgeProbMatrix, include_diagonal: bool = True) -> float:
    """Squared Frobenius norm of the difference between two edge probability matrices.

    With ``include_diagonal`` the diagonal terms use the generating
    within-community probabilities carried by each matrix (the actual
    diagonals are identically zero).  That convention reproduces
    published total-signal values; pass False for the strictly
    zero-diagonal model quantity.
    """
    if P.m != Q.m:
        raise ValueError("matrices must have the same dimension")
    total = float(np.sum((P.entries - Q.entries) ** 2))
    if include_diagonal:
        dp = P.diag_probs if P.diag_probs is not None else np.zeros(P.m)
        dq = Q.diag_probs if Q.diag_probs is not None else np.zeros(Q.m)
        total += float(np.sum((dp - dq) ** 2))
    return total


def _sample_edges(P: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one symmetric binary matrix with upper-triangle probabilities P (clipped into [0, 1])."""
    m = P.shape[0]
    iu = np.triu_indices(m, 1)
    probs = np.clip(P[iu], 0.0, 1.0)
    draws = (rng.random(probs.size) < probs).astype(np.uint8)
    A = np.zeros((m, m), dtype=np.uint8)
    A[iu] = draws
    return A + A.T


def sample_sbm(assign: CommunityAssignment, B: BlockMatrix, seed) -> np.ndarray:
    """Sample one adjacency matrix from SBM(assign, B).

    The upper triangle is drawn independently and mirrored; the
    diagonal stays zero.  Deterministic given ``seed``.
    """
    P = edge_prob_matrix(assign, B).entries
    return _sample_edges(P, make_rng(seed))


@dataclass(frozen=True)
class DsbmSpec:
    """Full generative model for a dynamic SBM with one change point.

    Before and including time floor(n*tau) snapshots follow
    SBM(z, Lam); afterwards SBM(w, Delta).  The two sides must describe
    the same node set; community counts are equalized by zero-padding
    the smaller side.
    """

    z: CommunityAssignment
    w: CommunityAssignment
    Lam: BlockMatrix
    Delta: BlockMatrix
    tau: float
    n: int
    notes: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.z.m != self.w.m:
            raise ValueError("pre and post assignments must cover the same node set")
        if self.z.K != self.Lam.K or self.w.K != self.Delta.K:
            raise ValueError("assignment and block matrix community counts disagree")
        if self.n < 2:
            raise ValueError("need at least two time points")
        K = max(self.z.K, self.w.K)
        object.__setattr__(self, "z", self.z.with_k(K))
        object.__setattr__(self, "w", self.w.with_k(K))
        object.__setattr__(self, "Lam", self.Lam.padded(K))
        object.__setattr__(self, "Delta", self.Delta.padded(K))
        if not 1 <= self.tau_index <= self.n - 1:
            raise ValueError("tau must place the break strictly inside 1..n-1")

    @property
    def m(self) -> int:
        return self.z.m

    @property
    def K(self) -> int:
        return self.z.K

    @property
    def tau_index(self) -> int:
        return int(np.floor(self.n * self.tau))

    def edge_prob_pre(self) -> EdgeProbMatrix:
        return edge_prob_matrix(self.z, self.Lam)

    def edge_prob_post(self) -> EdgeProbMatrix:
        return edge_prob_matrix(self.w, self.Delta)

    def to_dict(self) -> dict:
        return {
            "z": self.z.labels.tolist(),
            "w": self.w.labels.tolist(),
            "K": self.K,
            "Lam": self.Lam.entries.tolist(),
            "Delta": self.Delta.entries.tolist(),
            "tau": self.tau,
            "n": self.n,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DsbmSpec":
        K = int(d["K"])
        return cls(
            z=CommunityAssignment(np.array(d["z"]), K),
            w=CommunityAssignment(np.array(d["w"]), K),
            Lam=BlockMatrix(np.array(d["Lam"]), allow_out_of_range=True),
            Delta=BlockMatrix(np.array(d["Delta"]), allow_out_of_range=True),
            tau=float(d["tau"]),
            n=int(d["n"]),
            notes=tuple(d.get("notes", ())),
        )


class AdjacencySeries:
    """Length-n sequence of symmetric binary adjacency matrices.

    Time points are 1-based in the public API (t = 1..n); storage is a
    (n, m, m) uint8 array.  A cumulative-sum cache supports O(m^2)
    segment sums: ``segment_sum(a, b)`` returns sum of A_t over the
    inclusive window a..b.
    """

    def __init__(self, matrices: np.ndarray, tau_index: int | None = None, validate: bool = True):
        matrices = np.asarray(matrices, dtype=np.uint8)
        if matrices.ndim != 3 or matrices.shape[1] != matrices.shape[2]:
            raise ValueError("matrices must have shape (n, m, m)")
        if validate:
            if matrices.max(initial=0) > 1:
                raise ValueError("matrices must be binary")
            if np.any(matrices != np.transpose(matrices, (0, 2, 1))):
                raise ValueError("matrices must be symmetric")
            if np.any(matrices[:, np.arange(matrices.shape[1]), np.arange(matrices.shape[1])] != 0):
                raise ValueError("matrices must have zero diagonal")
        self.matrices = matrices
        self.matrices.setflags(write=False)
        self.tau_index = tau_index
        self._prefix = None

    @property
    def n(self) -> int:
        return self.matrices.shape[0]

    @property
    def m(self) -> int:
        return self.matrices.shape[1]

    @property
    def prefix(self) -> np.ndarray:
        """(n+1, m, m) int32 cumulative sums; prefix[t] = sum of A_1..A_t."""
        if self._prefix is None:
            prefix = np.zeros((self.n + 1, self.m, self.m), dtype=np.int32)
            np.cumsum(self.matrices, axis=0, out=prefix[1:])
            prefix.setflags(write=False)
            self._prefix = prefix
        return self._prefix

    def segment_sum(self, t_lo: int, t_hi: int) -> np.ndarray:
        """Sum of A_t over the inclusive 1-based window t_lo..t_hi."""
        if not 1 <= t_lo <= t_hi <= self.n:
            raise ValueError(f"invalid window [{t_lo}, {t_hi}] for n={self.n}")
        return self.prefix[t_hi] - self.prefix[t_lo - 1]

    @property
    def total_edge_sum(self) -> int:
        """Sum of all entries over all time points (each edge counted twice)."""
        return int(self.prefix[self.n].sum())

    def matrix(self, t: int) -> np.ndarray:
        """Adjacency matrix at 1-based time t."""
        if not 1 <= t <= self.n:
            raise ValueError(f"t={t} outside 1..{self.n}")
        return self.matrices[t - 1]


def sample_dsbm(spec: DsbmSpec, seed) -> AdjacencySeries:
    """Sample a full change-point series from a DSBM model.

    Snapshot t gets its own generator derived from (seed, t), so
    parallel and serial sampling agree bit-for-bit.
    """
    P_pre = spec.edge_prob_pre().entries
    P_post = spec.edge_prob_post().entries
    out = np.empty((spec.n, spec.m, spec.m), dtype=np.uint8)
    for t in range(1, spec.n + 1):
        P = P_pre if t <= spec.tau_index else P_post
        out[t - 1] = _sample_edges(P, make_rng(seed, t))
    return AdjacencySeries(out, tau_index=spec.tau_index, validate=False)


# ---------------------------------------------------------------------------
# Series serialization: a plain text format and a bit-packed binary container.


def save_series_text(series: AdjacencySeries, path) -> None:
    """Write ``m n tau_index`` then n blocks of m rows of 0/1 characters."""
    tau = series.tau_index if series.tau_index is not None else 0
    with open(path, "w") as fh:
        fh.write(f"{series.m} {series.n} {tau}\n")
        for t in range(series.n):
            for row in series.matrices[t]:
                fh.write("".join("1" if v else "0" for v in row))
                fh.write("\n")


def load_series_text(path) -> AdjacencySeries:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError("expected header 'm n tau_index'")
        m, n, tau = (int(x) for x in header)
        data = np.empty((n, m, m), dtype=np.uint8)
        for t in range(n):
            for i in range(m):
                line = fh.readline().strip()
                if len(line) != m:
                    raise ValueError(f"row {i} of block {t} has length {len(line)}, expected {m}")
                data[t, i] = np.frombuffer(line.encode(), dtype=np.uint8) - ord("0")
    return AdjacencySeries(data, tau_index=tau if tau > 0 else None)


def save_series_binary(series: AdjacencySeries, path) -> None:
    """Compact container: magic ``DSBM1``, little-endian u32 m/n/tau, bit-packed upper triangles."""
    tau = series.tau_index if series.tau_index is not None else 0
    iu = np.triu_indices(series.m, 1)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", series.m, series.n, tau))
        for t in range(series.n):
            fh.write(np.packbits(series.matrices[t][iu]).tobytes())


def load_series_binary(path) -> AdjacencySeries:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError("not a DSBM1 container")
        m, n, tau = struct.unpack("<III", fh.read(12))
        ntri = m * (m - 1) // 2
        nbytes = (ntri + 7) // 8
        iu = np.triu_indices(m, 1)
        data = np.zeros((n, m, m), dtype=np.uint8)
        for t in range(n):
            raw = fh.read(nbytes)
            if len(raw) != nbytes:
                raise ValueError("truncated container")
            bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:ntri]
            data[t][iu] = bits
            data[t] += data[t].T
    return AdjacencySeries(data, tau_index=tau if tau > 0 else None)

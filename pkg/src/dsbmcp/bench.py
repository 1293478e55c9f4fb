"""Scenario library, replicated experiment runner, and trajectory emitters.

Named scenarios expand to full generative models:

* ``I`` / ``reallocation``   - half-split communities become odd/even after
  the break, connection matrix unchanged; off-diagonal entry 0.6 - n^-delta.
* ``II`` / ``connectivity``  - communities fixed, every connection
  probability shifts by n^-1/4.
* ``III`` / ``merge``        - three communities, first and third merge
  after the break.
* ``split``                  - mirror image of ``merge``.
* ``IV`` / ``V``             - small-probability variants of I and II with
  entries on the n^-lambda scale.
* ``G``                      - two diagonal blocks (9:11 split) whose
  within probability rises by 1/sqrt(n); between probability zero.
* ``custom``                 - explicit assignments and matrices.

Experiments are paired: each replicate samples one series that every
requested method sees, with estimator seeds derived from (master seed,
replicate, method), so reports are reproducible and independent of the
parallelism degree or the method subset.
"""

import csv
import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cluster import misclassification
from .cpd import (
    SearchGrid,
    dsbm_criterion_scan,
    er_criterion_scan,
    estimate_2step,
    estimate_boundary_variant,
    estimate_every_time_point,
    estimate_known,
)
from .infer import SnrReport, snr_report
from .netcore import (
    AdjacencySeries,
    BlockMatrix,
    CommunityAssignment,
    DsbmSpec,
    sample_dsbm,
)

__all__ = [
    "ScenarioSpec",
    "ExperimentReport",
    "MethodSummary",
    "METHODS",
    "build_scenario",
    "run_experiment",
    "emit_trajectory",
]

METHODS = ("known", "2step", "every_point", "boundary")

# stable per-method seed component, independent of the requested subset
_METHOD_SEED = {"known": 11, "2step": 12, "every_point": 13, "boundary": 14}

_SCENARIO_ALIASES = {
    "reallocation": "I",
    "connectivity": "II",
    "merge": "III",
}


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameterized experiment setting that expands to a DsbmSpec."""

    name: str
    m: int
    n: int
    tau: float = 0.5
    K: int | None = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "m": self.m,
            "n": self.n,
            "tau": self.tau,
            "K": self.K,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        return cls(
            name=str(d["name"]),
            m=int(d["m"]),
            n=int(d["n"]),
            tau=float(d.get("tau", 0.5)),
            K=int(d["K"]) if d.get("K") is not None else None,
            params=dict(d.get("params", {})),
        )


def _halves(m: int) -> np.ndarray:
    labels = np.full(m, 2, dtype=np.int32)
    labels[: m // 2] = 1
    return labels


def _alternating(m: int) -> np.ndarray:
    labels = np.full(m, 2, dtype=np.int32)
    labels[0::2] = 1  # 1-based odd nodes
    return labels


def _bm(entries, notes: list) -> BlockMatrix:
    entries = np.asarray(entries, dtype=np.float64)
    out_of_range = bool(entries.min() < 0.0 or entries.max() > 1.0)
    if out_of_range:
        notes.append("block entries leave [0, 1]; kept raw for signal arithmetic, clipped at sampling")
    return BlockMatrix(entries, allow_out_of_range=out_of_range)


def build_scenario(scenario: ScenarioSpec) -> DsbmSpec:
    """Expand a named scenario (or a custom one) into a generative model."""
    name = _SCENARIO_ALIASES.get(scenario.name, scenario.name)
    m, n, tau = scenario.m, scenario.n, scenario.tau
    p = scenario.params
    notes: list = []

    if name == "I":
        delta = float(p["delta"])
        q = 0.6 - n ** (-delta)
        Lam = _bm([[0.6, q], [q, 0.6]], notes)
        z = CommunityAssignment(_halves(m), 2)
        w = CommunityAssignment(_alternating(m), 2)
        spec = DsbmSpec(z, w, Lam, Lam, tau, n, notes=tuple(notes))
    elif name == "II":
        Lam = _bm([[0.6, 0.3], [0.3, 0.6]], notes)
        Delta = _bm(Lam.entries + n ** (-0.25), notes)
        z = CommunityAssignment(_halves(m), 2)
        spec = DsbmSpec(z, z, Lam, Delta, tau, n, notes=tuple(notes))
    elif name in ("III", "split"):
        b1 = int(round(m / 3))
        b2 = int(round(2 * m / 3))
        if m != 60:
            notes.append("three-community block ranges scaled proportionally from the m=60 definition")
        labels3 = np.full(m, 3, dtype=np.int32)
        labels3[:b1] = 1
        labels3[b1:b2] = 2
        merged = np.where(labels3 == 2, 2, 1).astype(np.int32)
        q3 = 0.6 - n ** (-1.0 / 20.0)
        Lam3 = _bm([[0.6, 0.3, q3], [0.3, 0.6, 0.3], [q3, 0.3, 0.6]], notes)
        Delta3 = _bm([[0.6, 0.3, 0.0], [0.3, 0.6, 0.0], [0.0, 0.0, 0.0]], notes)
        z3 = CommunityAssignment(labels3, 3)
        w3 = CommunityAssignment(merged, 3)
        if name == "III":
            spec = DsbmSpec(z3, w3, Lam3, Delta3, tau, n, notes=tuple(notes))
        else:
            spec = DsbmSpec(w3, z3, Delta3, Lam3, tau, n, notes=tuple(notes))
    elif name == "IV":
        delta = float(p["delta"])
        lam = float(p["lam"])
        a = n ** (-lam)
        b = a - n ** (-delta)
        Lam = _bm([[a, b], [b, a]], notes)
        z = CommunityAssignment(_halves(m), 2)
        w = CommunityAssignment(_alternating(m), 2)
        spec = DsbmSpec(z, w, Lam, Lam, tau, n, notes=tuple(notes))
    elif name == "V":
        lam = float(p["lam"])
        a = n ** (-lam)
        Lam = _bm([[2 * a, a], [a, 2 * a]], notes)
        Delta = _bm(Lam.entries + n ** (-0.25), notes)
        z = CommunityAssignment(_halves(m), 2)
        spec = DsbmSpec(z, z, Lam, Delta, tau, n, notes=tuple(notes))
    elif name == "G":
        p1 = float(np.sqrt(p.get("p1_sq", 0.8)))
        p2 = p1 + 1.0 / np.sqrt(n)
        s1 = int(round(9 * m / 20))
        labels = np.full(m, 2, dtype=np.int32)
        labels[:s1] = 1
        Lam = _bm([[p1, 0.0], [0.0, p1]], notes)
        Delta = _bm([[p2, 0.0], [0.0, p2]], notes)
        z = CommunityAssignment(labels, 2)
        spec = DsbmSpec(z, z, Lam, Delta, tau, n, notes=tuple(notes))
    elif name == "custom":
        K = scenario.K or int(max(np.max(p["z"]), np.max(p["w"])))
        spec = DsbmSpec(
            z=CommunityAssignment(np.asarray(p["z"], dtype=np.int32), K),
            w=CommunityAssignment(np.asarray(p["w"], dtype=np.int32), K),
            Lam=_bm(p["Lam"], notes),
            Delta=_bm(p["Delta"], notes),
            tau=tau,
            n=n,
            notes=tuple(notes),
        )
    else:
        raise ValueError(f"unknown scenario {scenario.name!r}")

    if spec.m != m:
        raise ValueError("custom scenario node count disagrees with m")
    return spec


@dataclass
class MethodSummary:
    """Aggregated per-method results across replicates."""

    freq: dict = field(default_factory=dict)
    misclass_pre: list = field(default_factory=list)
    misclass_post: list = field(default_factory=list)
    errors: int = 0
    error_notes: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def mean_misclass_pre(self) -> float:
        return float(np.mean(self.misclass_pre)) if self.misclass_pre else float("nan")

    @property
    def mean_misclass_post(self) -> float:
        return float(np.mean(self.misclass_post)) if self.misclass_post else float("nan")

    def exact_count(self, t: int) -> int:
        return int(self.freq.get(int(t), 0))

    def mode(self) -> tuple:
        """(break index, count) of the most frequent estimate."""
        best = max(self.freq.items(), key=lambda kv: (kv[1], -kv[0]))
        return int(best[0]), int(best[1])

    def frequency_string(self) -> str:
        items = sorted(self.freq.items(), key=lambda kv: (-kv[1], kv[0]))
        return ", ".join(f"{t}({c})" for t, c in items)


@dataclass
class ExperimentReport:
    """Everything a benchmark table row needs, for one scenario."""

    scenario: ScenarioSpec
    spec: DsbmSpec
    snr: SnrReport
    replicates: int
    seed: int
    methods: dict
    digests: list

    def write_csv(self, path) -> None:
        """One row per method with signal columns mirrored across rows."""
        s = self.snr
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "scenario", "m", "n", "K", "tau_index", "replicates",
                    "F_n", "snr_er", "snr_dsbm", "a1_first", "a1_second",
                    "method", "frequencies", "exact_count", "mode_index", "mode_count",
                    "mean_misclass_pre", "mean_misclass_post", "errors", "seconds",
                ]
            )
            for name, summ in self.methods.items():
                mode_t, mode_c = summ.mode() if summ.freq else ("", "")
                writer.writerow(
                    [
                        self.scenario.name, s.m, s.n, s.K, self.spec.tau_index, self.replicates,
                        f"{s.gap:.6f}", f"{s.snr_er:.6f}", f"{s.snr_dsbm:.4f}",
                        f"{s.a1_first:.4f}", f"{s.a1_second:.4f}",
                        name, summ.frequency_string(), summ.exact_count(self.spec.tau_index),
                        mode_t, mode_c,
                        f"{summ.mean_misclass_pre:.6f}", f"{summ.mean_misclass_post:.6f}",
                        summ.errors, f"{summ.seconds:.3f}",
                    ]
                )


def _run_methods_on_series(series, spec, methods, K, grid, seed, r):
    out = {}
    for name in methods:
        mseed = (seed, r, _METHOD_SEED[name])
        t0 = time.perf_counter()
        try:
            if name == "known":
                fit = estimate_known(series, spec.z, spec.w, grid)
            elif name == "2step":
                fit = estimate_2step(series, K, grid, seed=mseed)
            elif name == "every_point":
                fit = estimate_every_time_point(series, K, grid, seed=mseed)
            elif name == "boundary":
                fit = estimate_boundary_variant(series, K, grid, seed=mseed)
            else:
                raise ValueError(f"unknown method {name!r}")
            elapsed = time.perf_counter() - t0
            mc_pre = misclassification(spec.z, fit.z_hat).rate if fit.z_hat is not None else None
            mc_post = misclassification(spec.w, fit.w_hat).rate if fit.w_hat is not None else None
            out[name] = ("ok", fit.tau_index, mc_pre, mc_post, elapsed)
        except Exception as exc:  # estimator failures are recorded, not fatal
            out[name] = ("error", repr(exc), None, None, time.perf_counter() - t0)
    return out


def run_experiment(
    scenario,
    methods,
    replicates: int,
    seed: int = 0,
    parallelism: int = 1,
    K: int | None = None,
    grid: SearchGrid | None = None,
) -> ExperimentReport:
    """Sample `replicates` series and run every requested method on each.

    ``scenario`` may be a ScenarioSpec or an already-expanded DsbmSpec.
    All methods see the same series within a replicate (paired design);
    the aggregate is deterministic given ``seed`` and independent of
    ``parallelism``.
    """
    if isinstance(scenario, DsbmSpec):
        spec = scenario
        scenario = ScenarioSpec(name="custom", m=spec.m, n=spec.n, tau=spec.tau)
    else:
        spec = build_scenario(scenario)
    methods = list(methods)
    for name in methods:
        if name not in METHODS:
            raise ValueError(f"unknown method {name!r}; choose from {METHODS}")
    if replicates < 1:
        raise ValueError("need at least one replicate")
    K = K if K is not None else spec.K

    def _one(r: int):
        series = sample_dsbm(spec, (seed, r))
        digest = hashlib.sha1(series.matrices.tobytes()).hexdigest()
        return digest, _run_methods_on_series(series, spec, methods, K, grid, seed, r)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_one, range(replicates)))
    else:
        results = [_one(r) for r in range(replicates)]

    summaries = {name: MethodSummary() for name in methods}
    digests = []
    for digest, per_method in results:
        digests.append(digest)
        for name, row in per_method.items():
            summ = summaries[name]
            status, payload, mc_pre, mc_post, elapsed = row
            summ.seconds += elapsed
            if status == "error":
                summ.errors += 1
                if len(summ.error_notes) < 5:
                    summ.error_notes.append(payload)
                continue
            summ.freq[int(payload)] = summ.freq.get(int(payload), 0) + 1
            if mc_pre is not None:
                summ.misclass_pre.append(mc_pre)
            if mc_post is not None:
                summ.misclass_post.append(mc_post)

    return ExperimentReport(
        scenario=scenario,
        spec=spec,
        snr=snr_report(spec),
        replicates=replicates,
        seed=seed,
        methods=summaries,
        digests=digests,
    )


def emit_trajectory(
    series: AdjacencySeries,
    methods,
    K: int | None = None,
    seed: int = 0,
    grid: SearchGrid | None = None,
    truth_pre: CommunityAssignment | None = None,
    truth_post: CommunityAssignment | None = None,
    csv_path=None,
    plot_path=None,
) -> dict:
    """Criterion trajectories per method, optionally written to CSV/plot.

    Returns {method: (break indices, criterion values)}.  ``known``
    requires true assignments; clustering methods require K.  The CSV
    carries columns method, t_break, b, criterion and is written (header
    included) even for an empty method list.
    """
    grid = grid or SearchGrid.full(series.n)
    out = {}
    for name in methods:
        if name == "known":
            if truth_pre is None or truth_post is None:
                raise ValueError("known-communities trajectory needs true assignments")
            traj = dsbm_criterion_scan(series, truth_pre, truth_post, grid)
        elif name == "2step":
            traj = er_criterion_scan(series, grid)
        elif name == "every_point":
            if K is None:
                raise ValueError("every_point trajectory needs K")
            traj = estimate_every_time_point(series, K, grid, seed=(seed, _METHOD_SEED[name])).trajectory
        elif name == "boundary":
            if K is None:
                raise ValueError("boundary trajectory needs K")
            traj = estimate_boundary_variant(series, K, grid, seed=(seed, _METHOD_SEED[name])).trajectory
        else:
            raise ValueError(f"unknown method {name!r}")
        out[name] = (grid.indices.copy(), traj)

    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "t_break", "b", "criterion"])
            for name, (idx, traj) in out.items():
                for t, v in zip(idx, traj):
                    writer.writerow([name, int(t), t / series.n, repr(float(v))])
    if plot_path is not None:
        _render_plot(out, series.n, plot_path)
    return out


def _render_plot(trajectories: dict, n: int, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, (idx, traj) in trajectories.items():
        ax.plot(idx / n, traj, marker=".", label=name)
    ax.set_xlabel("time fraction")
    ax.set_ylabel("criterion")
    if trajectories:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

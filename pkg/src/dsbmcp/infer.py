"""Identifiability diagnostics, limit-regime quantities, and resampling inference.

The detectability of a break is governed by the squared Frobenius gap
between the pre- and post-change edge probability matrices.  This
module computes the standard scalings of that gap (per community pair,
per edge pair, and the log-corrected variant used by the adaptive
resampler), the spectral quantities controlling clustering quality,
finite-sample surrogates for the limit-law parameters, a parametric
bootstrap that relocates the criterion optimum on refitted data, and a
direct Monte Carlo simulator of the limiting argmax laws.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .cpd import ChangePointFit, SearchGrid, fixed_matrix_criterion_scan
from .netcore import (
    BlockMatrix,
    CommunityAssignment,
    DsbmSpec,
    edge_prob_matrix,
    frobenius_gap,
    make_rng,
    sample_dsbm,
)

__all__ = [
    "SnrReport",
    "RegimeDiagnostics",
    "BootstrapResult",
    "NuUndefinedError",
    "GammaUndefinedError",
    "BoundaryWindowError",
    "snr_report",
    "proposition41_check",
    "regime_diagnostics",
    "adaptive_bootstrap",
    "simulate_limit_law",
    "write_bootstrap_samples_csv",
    "write_bootstrap_quantiles_csv",
]

_SV_RELATIVE_FLOOR = 1e-8


class NuUndefinedError(ValueError):
    """Both edge probability matrices are (numerically) zero."""


class GammaUndefinedError(ValueError):
    """The probability gap vanishes, so gap-weighted averages are undefined."""


class BoundaryWindowError(ValueError):
    """The resampling window around the fitted break is empty."""


def _model_pieces(model, z, w, Lam, Delta, n):
    if isinstance(model, DsbmSpec):
        return model.z, model.w, model.Lam, model.Delta, model.n
    if isinstance(model, ChangePointFit):
        if model.z_hat is None or model.Lam_hat is None:
            raise ValueError("fit carries no community/block estimates")
        return model.z_hat, model.w_hat, model.Lam_hat, model.Delta_hat, model.n
    if model is not None:
        raise TypeError("model must be a DsbmSpec or ChangePointFit")
    if any(x is None for x in (z, w, Lam, Delta, n)):
        raise ValueError("provide either a model object or all of z, w, Lam, Delta, n")
    return z, w, Lam, Delta, n


def _full_expansion(assign: CommunityAssignment, B: BlockMatrix) -> np.ndarray:
    """Node-level block expansion keeping the matched-community diagonal."""
    idx = assign.labels - 1
    return B.entries[np.ix_(idx, idx)]


def _smallest_nonzero_sv(theta: np.ndarray) -> float | None:
    sv = np.abs(np.linalg.eigvalsh(theta))
    top = sv.max()
    if top <= 0.0:
        return None
    keep = sv[sv > _SV_RELATIVE_FLOOR * top]
    return float(keep.min())


@dataclass(frozen=True)
class SnrReport:
    """Signal scalings and spectral ratios for one pre/post model pair.

    gap          squared Frobenius distance between edge matrices
    snr_dsbm     (n / K^2) * gap
    snr_er       (n / m^2) * gap
    nu_m         smallest nonzero singular value across both block expansions
    a1_first     K * m / nu_m^2     (vanishing required by the clustering-rate condition)
    a1_second    m * sqrt(n) / nu_m^2   (boundedness required by the same condition)
    a1_star      m / (sqrt(n) * nu_m^2) == a1_second / n
    snr_er_adap  sqrt(n) / (m^2 sqrt(log m)) * gap
    """

    gap: float
    snr_dsbm: float
    snr_er: float
    nu_m: float
    a1_first: float
    a1_second: float
    a1_star: float
    snr_er_adap: float
    m: int
    n: int
    K: int


def snr_report(
    model=None,
    *,
    z: CommunityAssignment | None = None,
    w: CommunityAssignment | None = None,
    Lam: BlockMatrix | None = None,
    Delta: BlockMatrix | None = None,
    n: int | None = None,
    include_diagonal: bool = True,
) -> SnrReport:
    """Compute all identifiability quantities for a generative model or a fit.

    nu_m comes from the eigenvalues of the block expansions with the
    matched-community diagonal kept (the rank-K structural matrices);
    eigenvalues below 1e-8 of the largest are treated as zero.
    """
    z, w, Lam, Delta, n = _model_pieces(model, z, w, Lam, Delta, n)
    m, K = z.m, max(z.K, w.K)
    if m < 2:
        raise ValueError("need at least two nodes")
    gap = frobenius_gap(
        edge_prob_matrix(z, Lam), edge_prob_matrix(w, Delta), include_diagonal=include_diagonal
    )
    nus = [_smallest_nonzero_sv(_full_expansion(z, Lam)), _smallest_nonzero_sv(_full_expansion(w, Delta))]
    nus = [v for v in nus if v is not None]
    if not nus:
        raise NuUndefinedError("both block expansions are zero matrices")
    nu = min(nus)
    return SnrReport(
        gap=gap,
        snr_dsbm=n / K**2 * gap,
        snr_er=n / m**2 * gap,
        nu_m=nu,
        a1_first=K * m / nu**2,
        a1_second=m * np.sqrt(n) / nu**2,
        a1_star=m / (np.sqrt(n) * nu**2),
        snr_er_adap=np.sqrt(n) / (m**2 * np.sqrt(np.log(m))) * gap,
        m=m,
        n=n,
        K=K,
    )


def proposition41_check(spec: DsbmSpec, epsilon: float, delta1: float, delta2: float) -> tuple[int, bool]:
    """Count node pairs whose connection probability moves by more than epsilon * n^(-delta1/2).

    Returns (count of ordered off-diagonal pairs, whether the count
    reaches m^2 * n^(-delta2)); clearing that threshold with
    0 <= delta1 + delta2 < 1 certifies that the per-edge signal scaling
    diverges.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0 <= delta1 + delta2 < 1:
        raise ValueError("need 0 <= delta1 + delta2 < 1")
    P = edge_prob_matrix(spec.z, spec.Lam).entries
    Q = edge_prob_matrix(spec.w, spec.Delta).entries
    thr = epsilon * spec.n ** (-delta1 / 2.0)
    diff = np.abs(P - Q)
    np.fill_diagonal(diff, 0.0)
    count = int(np.count_nonzero(diff > thr))
    holds = count >= spec.m**2 * spec.n ** (-delta2)
    return count, bool(holds)


@dataclass(frozen=True)
class RegimeDiagnostics:
    """Finite-sample surrogates for the limit-law parameters.

    regime           "I" (diverging gap), "II" (vanishing), or "III" (order-one),
                     decided by thresholds on the squared gap
    gamma2           gap-weighted average of pre-change Bernoulli variances
    k_set            boolean m x m mask of pairs whose gap falls below theta
    c1_sq            squared gap restricted to k_set
    gamma_tilde_sq   weighted variance sum restricted to k_set
    """

    regime: str
    gamma2: float
    k_set: np.ndarray
    c1_sq: float
    gamma_tilde_sq: float
    theta: float
    gap: float


def regime_diagnostics(
    model=None,
    theta: float | None = None,
    regime_bounds: tuple[float, float] = (0.1, 10.0),
    *,
    z=None,
    w=None,
    Lam=None,
    Delta=None,
    n=None,
) -> RegimeDiagnostics:
    """Classify the limit regime and evaluate its finite-sample constants.

    theta defaults to n^(-1/4): pairs with |probability change| below
    theta form the vanishing-gap set; the complement is the persistent
    set handled separately by the order-one limit law.  All sums run
    over ordered node pairs with the matched-community diagonal kept,
    matching the convention of the reported total signal.
    """
    z, w, Lam, Delta, n = _model_pieces(model, z, w, Lam, Delta, n)
    if theta is None:
        theta = n ** (-0.25)
    if theta <= 0:
        raise ValueError("theta must be positive")
    P = _full_expansion(z, Lam)
    Q = _full_expansion(w, Delta)
    wts = (P - Q) ** 2
    gap = float(wts.sum())
    if gap <= 0.0:
        raise GammaUndefinedError("probability gap is identically zero")
    gamma2 = float((wts * P * (1.0 - P)).sum() / gap)
    k_set = np.abs(P - Q) < theta
    c1_sq = float(wts[k_set].sum())
    gamma_tilde_sq = float((wts * P * (1.0 - P))[k_set].sum())
    lo, hi = regime_bounds
    regime = "II" if gap < lo else ("I" if gap > hi else "III")
    return RegimeDiagnostics(
        regime=regime,
        gamma2=gamma2,
        k_set=k_set,
        c1_sq=c1_sq,
        gamma_tilde_sq=gamma_tilde_sq,
        theta=float(theta),
        gap=gap,
    )


@dataclass(frozen=True)
class BootstrapResult:
    """Empirical law of the refitted-criterion break offset.

    h_samples holds one integer offset per replicate; quantiles map the
    requested probability points to offsets, and interval is the
    two-sided tau confidence interval at significance alpha, clamped to
    the search window.
    """

    h_samples: np.ndarray
    quantiles: dict
    interval: tuple
    alpha: float
    tau_index: int
    n: int
    window: tuple


_DEFAULT_LEVELS = (0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975)


def adaptive_bootstrap(
    fit: ChangePointFit,
    R: int,
    seed=0,
    levels: tuple = _DEFAULT_LEVELS,
    alpha: float = 0.05,
    c_star: float | None = None,
    clip: tuple = (1e-9, 1.0 - 1e-9),
) -> BootstrapResult:
    """Parametric bootstrap for the break location, agnostic to the limit regime.

    Each replicate draws a fresh series from the fitted model
    (sampling probabilities clipped inside (0, 1) to guard degenerate
    fitted entries), then relocates the criterion minimum over the
    allowed window while holding the fitted assignments and block
    matrices fixed - no re-estimation inside replicates.  The recorded
    offset is (relocated break - fitted break); ties prefer the offset
    closest to zero.

    Empirical quantiles of the offsets translate into the interval
    tau_hat + [q_{alpha/2}, q_{1-alpha/2}] / n.
    """
    if fit.z_hat is None or fit.Lam_hat is None:
        raise ValueError("fit must carry estimated assignments and block matrices")
    if R < 1:
        raise ValueError("need at least one replicate")
    n, t_hat = fit.n, fit.tau_index
    if c_star is None:
        c_star = fit.grid.c_star
    if c_star is not None:
        lo = max(1, int(np.ceil(n * c_star)))
        hi = min(n - 1, int(np.floor(n * (1.0 - c_star))))
    else:
        lo, hi = 1, n - 1
    if lo > hi or not lo <= t_hat <= hi:
        raise BoundaryWindowError(f"fitted break {t_hat} leaves no window inside [{lo}, {hi}]")
    window = SearchGrid.from_bounds(n, lo, hi)

    K = max(fit.z_hat.K, fit.w_hat.K)
    samp_spec = DsbmSpec(
        z=fit.z_hat.with_k(K),
        w=fit.w_hat.with_k(K),
        Lam=BlockMatrix(np.clip(fit.Lam_hat.padded(K).entries, clip[0], clip[1])),
        Delta=BlockMatrix(np.clip(fit.Delta_hat.padded(K).entries, clip[0], clip[1])),
        tau=(t_hat + 0.5) / n,
        n=n,
    )
    # evaluation order putting offsets closest to zero first, so the
    # first minimum hit is the tie-broken answer
    offs = window.indices - t_hat
    order = np.lexsort((offs, np.abs(offs)))

    hs = np.empty(R, dtype=np.int64)
    for r in range(R):
        series = sample_dsbm(samp_spec, _seed_tuple(seed) + (r,))
        traj = fixed_matrix_criterion_scan(
            series, fit.z_hat, fit.w_hat, fit.Lam_hat, fit.Delta_hat, window
        )
        hs[r] = offs[order[int(np.argmin(traj[order]))]]

    qs = {float(lv): float(np.quantile(hs, lv)) for lv in levels}
    q_lo = float(np.quantile(hs, alpha / 2.0))
    q_hi = float(np.quantile(hs, 1.0 - alpha / 2.0))
    interval = (
        max(lo / n, fit.tau_hat + q_lo / n),
        min(hi / n, fit.tau_hat + q_hi / n),
    )
    return BootstrapResult(
        h_samples=hs,
        quantiles=qs,
        interval=interval,
        alpha=alpha,
        tau_index=t_hat,
        n=n,
        window=(lo, hi),
    )


def _seed_tuple(seed) -> tuple:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(x) for x in seed)


def simulate_limit_law(regime, params: dict, R: int, seed=0) -> np.ndarray:
    """Monte Carlo sampler of the limiting break-offset distributions.

    regime II (vanishing gap): returns gamma_sq * argmax(-|h|/2 + B_h)
    over a discretized two-sided Brownian path; the grid spans
    [-half_width, half_width] in units of gamma_sq (default 50) with
    step gamma_sq / step_divisor (default 100).  Paths are built so the
    draw consumption does not depend on gamma_sq: scaling gamma_sq
    rescales every sample pathwise under a shared seed.

    regime III (order-one gap): integer-offset two-sided random walk
    whose outward steps combine a deterministic drift of -c1_sq/2, a
    Gaussian term gamma_tilde * N(0,1), and, for each persistent pair
    (a1, a2) in k0_pairs, the squared-residual swap of a Bernoulli draw
    from the segment the step walks into.  Returns the argmax offset
    over [-h_max, h_max] (default 200).  Ties prefer offsets closest to
    zero.
    """
    regime = str(regime).upper().replace("REGIME", "").strip()
    if R < 1:
        raise ValueError("need at least one sample")
    if regime in ("2", "II"):
        return _simulate_regime2(params, R, seed)
    if regime in ("3", "III"):
        return _simulate_regime3(params, R, seed)
    raise ValueError(f"unknown regime {regime!r} (expected II or III)")


def _simulate_regime2(params: dict, R: int, seed) -> np.ndarray:
    gamma_sq = float(params["gamma_sq"])
    if gamma_sq < 0:
        raise ValueError("gamma_sq must be nonnegative")
    half_width = float(params.get("half_width", 50.0))
    step_divisor = int(params.get("step_divisor", 100))
    steps = int(round(half_width * step_divisor))
    if gamma_sq == 0.0:
        return np.zeros(R)
    drift = -0.5 * np.arange(1, steps + 1) / step_divisor
    noise_scale = 1.0 / np.sqrt(step_divisor)
    # signed offset for each column of the [origin | right path | left path] layout
    ks = np.concatenate([[0], np.arange(1, steps + 1), -np.arange(1, steps + 1)])

    rng = make_rng(seed)
    out = np.empty(R)
    chunk = max(1, min(R, 4_000_000 // max(1, steps)))
    pos = 0
    while pos < R:
        rows = min(chunk, R - pos)
        # the path itself is free of gamma_sq, which only scales the
        # returned offset; draws are consumed identically for every
        # gamma_sq, making scaling exactly pathwise under a shared seed
        incr = rng.standard_normal((rows, 2, steps))
        V = np.empty((rows, 2 * steps + 1))
        V[:, 0] = 0.0
        np.cumsum(incr[:, 0], axis=1, out=V[:, 1 : steps + 1])
        np.cumsum(incr[:, 1], axis=1, out=V[:, steps + 1 :])
        V[:, 1:] *= noise_scale
        V[:, 1 : steps + 1] += drift
        V[:, steps + 1 :] += drift
        # ties are measure-zero; argmax prefers the origin, then the right path
        best = np.argmax(V, axis=1)
        out[pos : pos + rows] = ks[best] * (gamma_sq / step_divisor)
        pos += rows
    return out


def _simulate_regime3(params: dict, R: int, seed) -> np.ndarray:
    c1_sq = float(params["c1_sq"])
    gamma_tilde = float(params["gamma_tilde"])
    if c1_sq < 0 or gamma_tilde < 0:
        raise ValueError("c1_sq and gamma_tilde must be nonnegative")
    pairs = [(float(a1), float(a2)) for a1, a2 in params.get("k0_pairs", ())]
    h_max = int(params.get("h_max", 200))
    ks = np.concatenate([[0], np.arange(1, h_max + 1), -np.arange(1, h_max + 1)])

    rng = make_rng(seed)
    out = np.empty(R)
    chunk = max(1, min(R, 200_000 // max(1, h_max)))
    pos = 0
    while pos < R:
        rows = min(chunk, R - pos)
        incr_r = -0.5 * c1_sq + gamma_tilde * rng.standard_normal((rows, h_max))
        incr_l = -0.5 * c1_sq + gamma_tilde * rng.standard_normal((rows, h_max))
        for a1, a2 in pairs:
            # walking right enters the post segment: draws follow a2
            zr = rng.random((rows, h_max)) < a2
            incr_r += (a2 - a1) * (a2 + a1 - 2.0 * zr)
            zl = rng.random((rows, h_max)) < a1
            incr_l += (a1 - a2) * (a1 + a2 - 2.0 * zl)
        V = np.empty((rows, 2 * h_max + 1))
        V[:, 0] = 0.0
        np.cumsum(incr_r, axis=1, out=V[:, 1 : h_max + 1])
        np.cumsum(incr_l, axis=1, out=V[:, h_max + 1 :])
        # argmax prefers the origin on exact ties (degenerate parameters)
        best = np.argmax(V, axis=1)
        out[pos : pos + rows] = ks[best]
        pos += rows
    return out


def write_bootstrap_samples_csv(result: BootstrapResult, path) -> None:
    """Columns: replicate, h."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replicate", "h"])
        for r, h in enumerate(result.h_samples):
            writer.writerow([r, int(h)])


def write_bootstrap_quantiles_csv(result: BootstrapResult, path, levels=(0.1, 0.05, 0.01)) -> None:
    """Columns: level, h_quantile, tau_lo, tau_hi.

    Each row reads ``level`` as a two-sided significance level: the
    h_quantile column reports the upper 1-level/2 offset quantile and
    the tau columns the matching interval endpoints.
    """
    n, t_hat = result.n, result.tau_index
    lo, hi = result.window
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "h_quantile", "tau_lo", "tau_hi"])
        for lv in levels:
            q_hi = float(np.quantile(result.h_samples, 1.0 - lv / 2.0))
            q_lo = float(np.quantile(result.h_samples, lv / 2.0))
            writer.writerow(
                [
                    lv,
                    f"{q_hi:.10g}",
                    f"{max(lo / n, t_hat / n + q_lo / n):.10g}",
                    f"{min(hi / n, t_hat / n + q_hi / n):.10g}",
                ]
            )

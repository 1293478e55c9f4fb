import numpy as np
import pytest

from dsbmcp import (
    BlockMatrix,
    BoundaryWindowError,
    CommunityAssignment,
    DsbmSpec,
    GammaUndefinedError,
    NuUndefinedError,
    SearchGrid,
    adaptive_bootstrap,
    estimate_2step,
    proposition41_check,
    regime_diagnostics,
    sample_dsbm,
    simulate_limit_law,
    snr_report,
)
from dsbmcp.bench import ScenarioSpec, build_scenario
from dsbmcp.infer import write_bootstrap_quantiles_csv, write_bootstrap_samples_csv


class TestSnrReport:
    def test_model_ii_reference_values(self):
        spec = build_scenario(ScenarioSpec("II", 60, 60, 0.5))
        s = snr_report(spec)
        assert abs(s.gap - 464.758) < 1e-3
        assert abs(s.snr_er - 7.745967) < 1e-4
        assert abs(s.snr_dsbm - 6971.37) < 1e-2
        assert abs(s.a1_first - 1.48) < 0.05 * 1.48
        assert abs(s.a1_second - 5.738) < 0.05 * 5.738

    def test_model_i_small_exponent_signal(self):
        # closed form: 1800 flipped pairs, each off by n^(-1/20)
        spec = build_scenario(ScenarioSpec("I", 60, 60, 0.5, params={"delta": 1 / 20}))
        s = snr_report(spec)
        exact = 1800 * 60 ** (-0.1) * 60 / 3600
        assert s.snr_er == pytest.approx(exact, abs=1e-9)
        # published rounding of the same quantity is ~19.9208
        assert s.snr_er == pytest.approx(19.92077, rel=2e-4)

    def test_null_change_gives_zero_snr(self):
        spec = build_scenario(ScenarioSpec("II", 12, 10, 0.5))
        null = DsbmSpec(spec.z, spec.z, spec.Lam, spec.Lam, 0.5, 10)
        s = snr_report(null)
        assert s.gap == 0.0 and s.snr_er == 0.0 and s.snr_dsbm == 0.0
        assert s.nu_m > 0.0

    def test_zero_matrices_raise(self):
        z = CommunityAssignment(np.array([1, 1, 2, 2]), 2)
        zero = BlockMatrix(np.zeros((2, 2)))
        with pytest.raises(NuUndefinedError):
            snr_report(z=z, w=z, Lam=zero, Delta=zero, n=4)

    def test_identities(self):
        spec = build_scenario(ScenarioSpec("III", 60, 20, 0.5))
        s = snr_report(spec)
        assert s.snr_dsbm == pytest.approx(s.snr_er * s.m**2 / s.K**2, rel=1e-12)
        assert s.a1_star == pytest.approx(s.a1_second / s.n, rel=1e-12)

    def test_accepts_fitted_model(self):
        spec = build_scenario(ScenarioSpec("II", 20, 16, 0.5))
        series = sample_dsbm(spec, seed=5)
        fit = estimate_2step(series, 2, seed=1)
        s = snr_report(fit)
        assert s.m == 20 and s.n == 16
        assert s.gap >= 0.0


class TestProposition41:
    def test_model_i_quarter_exponent_count(self):
        spec = build_scenario(ScenarioSpec("I", 60, 60, 0.5, params={"delta": 0.25}))
        count, holds = proposition41_check(spec, epsilon=0.5, delta1=0.5, delta2=0.0)
        assert count == 1800
        assert not holds  # 1800 < 60^2

    def test_null_change_counts_zero(self):
        spec = build_scenario(ScenarioSpec("II", 10, 12, 0.5))
        null = DsbmSpec(spec.z, spec.z, spec.Lam, spec.Lam, 0.5, 12)
        count, holds = proposition41_check(null, epsilon=0.5, delta1=0.5, delta2=0.0)
        assert count == 0 and not holds

    def test_model_ii_all_offdiagonal_pairs_move(self):
        spec = build_scenario(ScenarioSpec("II", 60, 60, 0.5))
        count, holds = proposition41_check(spec, epsilon=0.5, delta1=0.5, delta2=0.4)
        assert count == 60**2 - 60
        assert holds

    def test_parameter_validation(self):
        spec = build_scenario(ScenarioSpec("II", 10, 12, 0.5))
        with pytest.raises(ValueError):
            proposition41_check(spec, epsilon=-1.0, delta1=0.5, delta2=0.0)
        with pytest.raises(ValueError):
            proposition41_check(spec, epsilon=0.5, delta1=0.7, delta2=0.5)


class TestRegimeDiagnostics:
    def test_uniform_gap_and_level_gives_bernoulli_variance(self):
        # all probabilities p, all gaps equal: weights cancel
        z = CommunityAssignment(np.array([1, 1, 2, 2]), 2)
        Lam = BlockMatrix(np.full((2, 2), 0.3))
        Delta = BlockMatrix(np.full((2, 2), 0.4))
        d = regime_diagnostics(z=z, w=z, Lam=Lam, Delta=Delta, n=16)
        assert d.gamma2 == pytest.approx(0.3 * 0.7, abs=1e-12)

    def test_theta_above_max_gap_captures_everything(self):
        spec = build_scenario(ScenarioSpec("II", 10, 16, 0.5))
        d = regime_diagnostics(spec, theta=1.0)
        assert d.k_set.all()
        assert d.c1_sq == pytest.approx(d.gap, rel=1e-12)

    def test_gamma2_matches_direct_loop(self):
        spec = build_scenario(ScenarioSpec("II", 12, 16, 0.5))
        d = regime_diagnostics(spec)
        z = spec.z.labels - 1
        num = den = 0.0
        for i in range(12):
            for j in range(12):
                lam = spec.Lam.entries[z[i], z[j]]
                dlt = spec.Delta.entries[z[i], z[j]]
                num += (lam - dlt) ** 2 * lam * (1 - lam)
                den += (lam - dlt) ** 2
        assert d.gamma2 == pytest.approx(num / den, abs=1e-12)

    def test_gamma2_bounds_and_regime_labels(self):
        spec = build_scenario(ScenarioSpec("II", 60, 60, 0.5))
        d = regime_diagnostics(spec)
        assert 0.0 <= d.gamma2 <= 0.25
        assert d.regime == "I"  # gap 464.8 > 10
        tiny = build_scenario(
            ScenarioSpec(
                "custom",
                4,
                16,
                0.5,
                K=1,
                params={"z": [1, 1, 1, 1], "w": [1, 1, 1, 1], "Lam": [[0.5]], "Delta": [[0.501]]},
            )
        )
        assert regime_diagnostics(tiny).regime == "II"

    def test_zero_gap_raises(self):
        spec = build_scenario(ScenarioSpec("II", 10, 16, 0.5))
        with pytest.raises(GammaUndefinedError):
            regime_diagnostics(z=spec.z, w=spec.z, Lam=spec.Lam, Delta=spec.Lam, n=16)

    def test_c1_never_exceeds_gap(self):
        spec = build_scenario(ScenarioSpec("III", 60, 20, 0.5))
        d = regime_diagnostics(spec, theta=0.5)
        assert d.c1_sq <= d.gap + 1e-12
        assert not d.k_set.all()


class TestAdaptiveBootstrap:
    def _fit(self, scenario, seed=3):
        spec = build_scenario(scenario)
        series = sample_dsbm(spec, seed=seed)
        return estimate_2step(series, spec.K, seed=(seed, 1))

    def test_single_replicate_deterministic(self):
        fit = self._fit(ScenarioSpec("II", 20, 12, 0.5))
        a = adaptive_bootstrap(fit, R=1, seed=5)
        b = adaptive_bootstrap(fit, R=1, seed=5)
        assert np.array_equal(a.h_samples, b.h_samples)
        assert len(a.h_samples) == 1

    def test_high_snr_offsets_degenerate_at_zero(self):
        fit = self._fit(ScenarioSpec("II", 30, 16, 0.5))
        res = adaptive_bootstrap(fit, R=60, seed=7)
        assert np.mean(res.h_samples == 0) >= 0.9

    def test_quantiles_monotone_and_interval_inside_window(self):
        fit = self._fit(ScenarioSpec("G", 20, 20, 0.5))
        res = adaptive_bootstrap(fit, R=80, seed=2)
        levels = sorted(res.quantiles)
        vals = [res.quantiles[lv] for lv in levels]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
        lo, hi = res.window
        assert lo / res.n <= res.interval[0] <= res.interval[1] <= hi / res.n

    def test_replicate_order_exchangeable(self):
        fit = self._fit(ScenarioSpec("G", 20, 20, 0.5))
        res = adaptive_bootstrap(fit, R=50, seed=11)
        shuffled = np.random.default_rng(0).permutation(res.h_samples)
        for lv in (0.1, 0.5, 0.9):
            assert np.quantile(shuffled, lv) == np.quantile(res.h_samples, lv)

    def test_boundary_window_error(self):
        fit = self._fit(ScenarioSpec("II", 20, 12, 0.5))
        fit.tau_index = 1
        with pytest.raises(BoundaryWindowError):
            adaptive_bootstrap(fit, R=5, seed=0, c_star=0.25)

    def test_csv_writers(self, tmp_path):
        fit = self._fit(ScenarioSpec("II", 20, 12, 0.5))
        res = adaptive_bootstrap(fit, R=10, seed=1)
        p1, p2 = tmp_path / "samples.csv", tmp_path / "quants.csv"
        write_bootstrap_samples_csv(res, p1)
        write_bootstrap_quantiles_csv(res, p2)
        assert p1.read_text().splitlines()[0] == "replicate,h"
        assert len(p1.read_text().strip().splitlines()) == 11
        assert p2.read_text().splitlines()[0] == "level,h_quantile,tau_lo,tau_hi"


class TestSimulateLimitLaw:
    def test_regime2_symmetric_small_run(self):
        s = simulate_limit_law("II", {"gamma_sq": 0.2}, R=4000, seed=3)
        se = s.std() / np.sqrt(len(s))
        assert abs(s.mean()) <= 3 * se

    def test_regime2_scaling_equivariance_pathwise(self):
        a = simulate_limit_law("II", {"gamma_sq": 0.15}, R=500, seed=9)
        b = simulate_limit_law("II", {"gamma_sq": 0.30}, R=500, seed=9)
        assert np.allclose(b, 2.0 * a, rtol=0, atol=1e-12)

    def test_regime2_seed_reproducibility(self):
        a = simulate_limit_law("II", {"gamma_sq": 0.5}, R=200, seed=4)
        b = simulate_limit_law("II", {"gamma_sq": 0.5}, R=200, seed=4)
        assert np.array_equal(a, b)

    def test_regime3_pure_gaussian_walk_median_zero(self):
        s = simulate_limit_law(
            "III", {"c1_sq": 0.0, "gamma_tilde": 1.0, "k0_pairs": []}, R=3000, seed=5
        )
        # driftless two-sided walk: symmetric argmax, median near 0
        assert abs(np.median(s)) <= 20

    def test_regime3_degenerate_all_zero(self):
        s = simulate_limit_law("III", {"c1_sq": 0.0, "gamma_tilde": 0.0, "k0_pairs": []}, R=50, seed=5)
        assert np.all(s == 0)

    def test_regime3_drift_concentrates_near_zero(self):
        s = simulate_limit_law(
            "III", {"c1_sq": 1.0, "gamma_tilde": 0.3, "k0_pairs": [(0.7, 0.2)]}, R=2000, seed=6
        )
        assert np.mean(np.abs(s) <= 3) > 0.95

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            simulate_limit_law("II", {"gamma_sq": -1.0}, R=10, seed=0)
        with pytest.raises(ValueError):
            simulate_limit_law("IV", {"gamma_sq": 1.0}, R=10, seed=0)

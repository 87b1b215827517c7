import numpy as np
import pytest

from fsqkd.distill import (
    BinStatistics,
    DecoyInputs,
    GllpInputs,
    RateReport,
    SiftedKey,
    bin_statistics,
    binary_entropy,
    decoy_secret_rate,
    estimate_qber,
    gllp_secret_rate,
    link_efficiency,
    optimize_threshold,
    save_bin_csv,
    sift,
    tagged_fraction,
    threshold_filter,
)
from fsqkd.errors import EmptyKey, TaggedDominates
from fsqkd.receiver import DetectionRecords
from fsqkd.source import build_pattern

REP_RATE = 1e8
PERIOD_PS = 10_000


def records_from_slots(slots, channels):
    order = np.argsort(slots, kind="stable")
    return DetectionRecords(
        (np.asarray(slots)[order] * PERIOD_PS).astype(np.uint64),
        np.asarray(channels, dtype=np.uint8)[order],
    )


def perfect_records(pattern, slots):
    codes = pattern.state_codes()[np.asarray(slots) % len(pattern)]
    return records_from_slots(slots, codes)


class TestBinaryEntropy:
    def test_values(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0
        assert binary_entropy(0.5) == pytest.approx(1.0)
        assert binary_entropy(0.11) == pytest.approx(binary_entropy(0.89), abs=1e-14)

    def test_array(self):
        out = binary_entropy(np.array([0.0, 0.5, 1.0]))
        assert out == pytest.approx([0.0, 1.0, 0.0])


class TestSift:
    def test_noiseless_link_all_match(self):
        pattern = build_pattern(0, 4096)
        slots = np.arange(0, 100_000, 7)
        key = sift(pattern, perfect_records(pattern, slots), REP_RATE)
        assert len(key) > 0
        assert np.array_equal(key.alice_bits, key.bob_bits)

    def test_sifted_fraction_half_for_random_channels(self):
        pattern = build_pattern(1, 4096)
        rng = np.random.default_rng(2)
        slots = np.arange(40_000)
        channels = rng.integers(0, 4, size=len(slots))
        key = sift(pattern, records_from_slots(slots, channels), REP_RATE)
        frac = len(key) / len(slots)
        sigma = 0.5 / np.sqrt(len(slots))
        assert abs(frac - 0.5) < 3 * sigma

    def test_double_click_slot_discarded(self):
        pattern = build_pattern(0, 64)
        slots = [5, 9, 9, 12]
        codes = pattern.state_codes()[np.array(slots) % 64]
        key = sift(pattern, records_from_slots(slots, codes), REP_RATE)
        assert 9 not in key.slots
        assert set(key.slots.tolist()) <= {5, 12}

    def test_bob_bit_from_channel_code(self):
        pattern = build_pattern(3, 128)
        slots = np.arange(128)
        key = sift(pattern, perfect_records(pattern, slots), REP_RATE)
        idx = key.slots % 128
        assert np.array_equal(key.alice_bits, pattern.bits[idx])


class TestEstimateQber:
    def make_key(self, n, flip_mask):
        alice = np.zeros(n, dtype=np.uint8)
        bob = flip_mask.astype(np.uint8)
        return SiftedKey(alice, bob, np.arange(n, dtype=np.uint64), REP_RATE)

    def test_perfect_key(self):
        est = estimate_qber(self.make_key(1000, np.zeros(1000, bool)))
        assert est.value == 0.0
        assert est.ci_low == 0.0

    def test_planted_errors(self):
        rng = np.random.default_rng(4)
        n = 20_000
        flips = rng.random(n) < 0.10
        est = estimate_qber(self.make_key(n, flips))
        sigma = np.sqrt(0.1 * 0.9 / n)
        assert abs(est.value - 0.10) < 3 * sigma

    def test_empty_raises(self):
        key = SiftedKey(np.empty(0, np.uint8), np.empty(0, np.uint8),
                        np.empty(0, np.uint64), REP_RATE)
        with pytest.raises(EmptyKey):
            estimate_qber(key)

    def test_ci_coverage(self):
        # exact binomial CI should cover the planted rate in >= 93/100 trials
        rng = np.random.default_rng(5)
        p, n, covered = 0.1, 1500, 0
        for _ in range(100):
            flips = rng.random(n) < p
            est = estimate_qber(self.make_key(n, flips))
            covered += est.ci_low <= p <= est.ci_high
        assert covered >= 93

    def test_sampled_mode(self):
        rng = np.random.default_rng(6)
        flips = rng.random(50_000) < 0.05
        est = estimate_qber(self.make_key(50_000, flips), sample_fraction=0.2,
                            rng=np.random.default_rng(0))
        assert est.bits == 10_000
        assert est.ci_low <= 0.05 <= est.ci_high


class TestBinStatistics:
    def test_static_run_xi_near_one(self):
        rng = np.random.default_rng(7)
        ref = 649_500.0
        n_bins = 40
        slots_per_bin = 1_000_000
        slot_list, chan_list = [], []
        pattern = build_pattern(0, 4096)
        for k in range(n_bins):
            n_k = rng.poisson(ref * 0.01)
            s = np.sort(rng.choice(slots_per_bin, size=n_k, replace=False)) + k * slots_per_bin
            slot_list.append(s)
            chan_list.append(pattern.state_codes()[s % len(pattern)])
        records = records_from_slots(np.concatenate(slot_list), np.concatenate(chan_list))
        key = sift(pattern, records, REP_RATE)
        bins = bin_statistics(key, records, 0.01, ref, n_bins=n_bins)
        assert np.all(np.abs(bins.xi_estimate - 1.0) <= 0.05)

    def test_empty_bin_zeroes(self):
        pattern = build_pattern(0, 64)
        records = perfect_records(pattern, np.arange(10))  # all in bin 0
        key = sift(pattern, records, REP_RATE)
        bins = bin_statistics(key, records, 0.01, 649_500.0, n_bins=3)
        assert bins.raw_count[1] == bins.sifted_count[1] == bins.error_count[1] == 0
        assert bins.xi_estimate[2] == 0.0

    def test_rate_scale_extrapolation(self):
        pattern = build_pattern(0, 64)
        records = perfect_records(pattern, np.arange(0, 1000, 10))
        key = sift(pattern, records, REP_RATE)
        bins = bin_statistics(key, records, 1e-5, 1e8, rate_scale=0.1, n_bins=1)
        assert bins.total_raw_rate_bps() == pytest.approx(100 / 1e-5 / 0.1)


class TestTaggedFraction:
    def test_reference_values_against_high_precision(self):
        import mpmath

        mpmath.mp.dps = 50

        def oracle(mu, T, eta):
            mu = mpmath.mpf(mu)
            return float(
                (1 - (1 + mu) * mpmath.e**-mu) / (T * eta * (1 - mpmath.e**-mu))
            )

        for mu, T, eta, target, tol in (
            (0.042, 0.409, 0.38, 0.135, 0.001),
            (0.042, 0.220, 0.38, 0.250, 0.002),
            (0.042, 0.409 * 0.538, 0.38, 0.250, 0.002),
        ):
            delta = tagged_fraction(mu, T, eta)
            assert delta == pytest.approx(oracle(mu, T, eta), abs=1e-12)
            assert delta == pytest.approx(target, abs=tol)

    def test_vanishes_with_mu(self):
        assert tagged_fraction(1e-6, 0.409, 0.38) < 1e-5

    def test_monotonicity(self):
        mus = np.linspace(0.01, 0.2, 8)
        ds = [tagged_fraction(m, 0.409, 0.38) for m in mus]
        assert all(np.diff(ds) > 0)
        ts = np.linspace(0.1, 0.9, 8)
        ds = [tagged_fraction(0.042, t, 0.38) for t in ts]
        assert all(np.diff(ds) < 0)
        etas = np.linspace(0.1, 0.9, 8)
        ds = [tagged_fraction(0.042, 0.409, e) for e in etas]
        assert all(np.diff(ds) < 0)

    def test_tagged_dominates(self):
        with pytest.raises(TaggedDominates):
            tagged_fraction(0.5, 0.02, 0.38)


class TestGllpSecretRate:
    def test_static_reference(self):
        res = gllp_secret_rate(
            GllpInputs(r_sift=324_750, e=0.021, mu=0.042, T=0.409, eta=0.38, q=0.75, f=1.22)
        )
        assert res.rate_bps == pytest.approx(103.2e3, rel=0.05)

    def test_best_handheld_trial(self):
        res = gllp_secret_rate(
            GllpInputs(r_sift=140.3e3 / 2, e=0.023, mu=0.042, T=0.538 * 0.409,
                       eta=0.38, q=0.75, f=1.22)
        )
        assert res.rate_bps == pytest.approx(15.3e3, rel=0.05)

    def test_clamped_at_zero(self):
        res = gllp_secret_rate(
            GllpInputs(r_sift=1e5, e=0.12, mu=0.042, T=0.409, eta=0.38, q=0.75, f=1.22)
        )
        assert res.rate_bps == 0.0
        assert not res.entropy_domain_exceeded

    def test_entropy_domain_flag(self):
        res = gllp_secret_rate(
            GllpInputs(r_sift=1e5, e=0.45, mu=0.042, T=0.06, eta=0.38, q=0.75, f=1.22)
        )
        assert res.rate_bps == 0.0
        assert res.entropy_domain_exceeded

    def test_monotone_in_qber(self):
        rates = [
            gllp_secret_rate(
                GllpInputs(r_sift=324_750, e=e, mu=0.042, T=0.409, eta=0.38, q=0.75, f=1.22)
            ).rate_bps
            for e in np.arange(0.005, 0.0605, 0.005)
        ]
        assert all(np.diff(rates) <= 0)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            GllpInputs(r_sift=1e5, e=0.6, mu=0.042, T=0.4, eta=0.38)


def replay_trial_bins(noisy=False, seed=0):
    """Bins mimicking the best hand-held trial: 30.5 s, 30 % of bins at
    xi = 0.72 and 70 % at 0.185, which reproduces its link efficiency of
    0.345 and its post-threshold raw rate of 140.3 kbps at xi_thr = 0.538."""
    rng = np.random.default_rng(seed)
    n_hi, n_lo = 915, 2135
    xi = np.concatenate([np.full(n_hi, 0.72), np.full(n_lo, 0.185)])
    rng.shuffle(xi)
    mean_raw = 649_500.0 * xi * 0.01
    raw = rng.poisson(mean_raw) if noisy else np.round(mean_raw).astype(int)
    sifted = raw // 2
    errors = np.round(sifted * 0.023).astype(int)
    return BinStatistics(
        bin_duration=0.01,
        raw_count=raw,
        sifted_count=sifted,
        error_count=errors,
        xi_estimate=np.minimum(raw / 6495.0, 1.0),
    )


class TestThresholdFilter:
    def test_zero_threshold_is_identity(self):
        bins = replay_trial_bins()
        out = threshold_filter(bins, 0.0)
        assert np.array_equal(out.raw_count, bins.raw_count)
        assert np.array_equal(out.xi_estimate, bins.xi_estimate)

    def test_above_unity_blanks_everything(self):
        out = threshold_filter(replay_trial_bins(), 1.01)
        assert out.raw_count.sum() == 0
        assert np.all(out.xi_estimate == 0.0)

    def test_replay_surviving_rate(self):
        bins = replay_trial_bins()
        out = threshold_filter(bins, 0.538)
        surviving = out.raw_count.sum() / bins.duration
        assert surviving == pytest.approx(140.3e3, rel=0.01)

    def test_filtered_counts_non_increasing(self):
        bins = replay_trial_bins(noisy=True)
        totals = [threshold_filter(bins, t).raw_count.sum() for t in np.linspace(0, 1, 21)]
        assert all(np.diff(totals) <= 0)


class TestOptimizeThreshold:
    def test_all_static_bins(self):
        n = 200
        bins = BinStatistics(
            bin_duration=0.01,
            raw_count=np.full(n, 6495),
            sifted_count=np.full(n, 3247),
            error_count=np.full(n, 68),
            xi_estimate=np.ones(n),
        )
        choice = optimize_threshold(bins, mu=0.042, t_bob=0.409, eta=0.38, q=0.75, f=1.22)
        assert choice.xi_thr == pytest.approx(0.99)
        kept = threshold_filter(bins, choice.xi_thr)
        assert kept.raw_count.sum() == bins.raw_count.sum()

    def test_bimodal_with_noisy_low_mode(self):
        rng = np.random.default_rng(3)
        xi = np.concatenate([np.full(1500, 0.1), np.full(1500, 0.8)])
        rng.shuffle(xi)
        raw = rng.poisson(649_500.0 * xi * 0.01)
        sifted = raw // 2
        qber = np.where(xi < 0.5, 0.08, 0.02)  # low mode carries heavy errors
        errors = rng.binomial(sifted, qber)
        bins = BinStatistics(0.01, raw, sifted, errors, np.minimum(raw / 6495.0, 1.0))
        choice = optimize_threshold(bins, mu=0.042, t_bob=0.409, eta=0.38, q=0.75, f=1.22)
        assert 0.1 < choice.xi_thr < 0.8
        # brute force over the same grid must agree
        best = max(
            (rate, -thr) for thr, rate in zip(choice.grid, choice.rates_bps)
        )
        assert choice.rate.rate_bps == pytest.approx(best[0])
        assert choice.xi_thr == pytest.approx(-best[1])

    def test_per_regime_qber_used(self):
        bins = replay_trial_bins(noisy=True, seed=9)
        choice = optimize_threshold(bins, mu=0.042, t_bob=0.409, eta=0.38, q=0.75, f=1.22)
        surviving = threshold_filter(bins, choice.xi_thr)
        assert choice.qber == pytest.approx(surviving.qber())


class TestLinkEfficiency:
    def test_all_ones(self):
        bins = BinStatistics(0.01, np.ones(50, int), np.zeros(50, int),
                             np.zeros(50, int), np.ones(50))
        assert link_efficiency(bins, 0) == 1.0

    def test_replay_trial_link_efficiency(self):
        bins = replay_trial_bins()
        assert link_efficiency(bins, 0) == pytest.approx(0.345, abs=0.01)

    def test_single_bin(self):
        bins = BinStatistics(0.01, np.array([5]), np.array([2]),
                             np.array([0]), np.array([0.37]))
        assert link_efficiency(bins, 0) == pytest.approx(0.37)

    def test_range_check(self):
        bins = replay_trial_bins()
        with pytest.raises(ValueError):
            link_efficiency(bins, bins.n_bins)


def simulate_gains(mu, nu, eta, y0, e_det, n, rng):
    """Click-level decoy toy with per-photon provenance for bound checks."""
    gains, qbers = {}, {}
    n1 = np.zeros(3, dtype=np.int64)  # emitted / clicked / erred with n == 1
    for intensity in (mu, nu, 0.0):
        photons = rng.poisson(intensity, n) if intensity else np.zeros(n, np.int64)
        detected = rng.binomial(photons, eta)
        noise = rng.random(n) < y0
        click = (detected > 0) | noise
        err_p = np.where(detected > 0, e_det, 0.5)
        errors = click & (rng.random(n) < err_p)
        gains[intensity] = click.mean()
        qbers[intensity] = errors.sum() / max(click.sum(), 1)
        single = photons == 1
        n1 += (single.sum(), (click & single).sum(), (errors & single).sum())
    y1_true = n1[1] / n1[0]
    e1_true = n1[2] / max(n1[1], 1)
    inputs = DecoyInputs(
        mu=mu, nu=nu,
        q_mu=float(gains[mu]), q_nu=float(gains[nu]),
        e_mu=float(qbers[mu]), e_nu=float(qbers[nu]),
        y0=float(gains[0.0]), signal_fraction=0.97,
    )
    return inputs, y1_true, e1_true


class TestDecoySecretRate:
    def test_truncated_source_bound_sound(self):
        # no-multiphoton toy: photon number capped at one
        rng = np.random.default_rng(12)
        mu, nu, eta, y0 = 0.4, 0.2, 0.15, 1e-4
        n = 2_000_000
        gains = {}
        y1_true = None
        for intensity in (mu, nu, 0.0):
            photons = np.minimum(rng.poisson(intensity, n), 1)
            detected = rng.binomial(photons, eta)
            click = (detected > 0) | (rng.random(n) < y0)
            gains[intensity] = click.mean()
            if intensity == mu:
                single = photons == 1
                y1_true = (click & single).sum() / single.sum()
        inputs = DecoyInputs(mu=mu, nu=nu, q_mu=float(gains[mu]), q_nu=float(gains[nu]),
                             e_mu=0.02, e_nu=0.02, y0=float(gains[0.0]))
        res = decoy_secret_rate(inputs, 1e8)
        assert not res.bound_violation
        assert res.y1_lower <= y1_true

    def test_poisson_source_bounds_sound(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            mu = rng.uniform(0.4, 0.7)
            inputs, y1_true, e1_true = simulate_gains(
                mu, mu * rng.uniform(0.45, 0.6), rng.uniform(0.08, 0.3),
                rng.uniform(1e-5, 1e-3), rng.uniform(0.005, 0.04), 1_000_000, rng
            )
            res = decoy_secret_rate(inputs, 1e8)
            assert res.y1_lower <= y1_true
            assert res.e1_upper >= e1_true

    def test_degenerate_intensities_flagged(self):
        mu = 0.153
        nu = mu * (1 - 1e-9)
        eta = 0.033
        q = lambda m: 1 - np.exp(-m * eta)
        inputs = DecoyInputs(mu=mu, nu=nu, q_mu=q(mu) * 1.001, q_nu=q(nu) * 0.999,
                             e_mu=0.016, e_nu=0.016, y0=1e-6)
        res = decoy_secret_rate(inputs, 1e8)
        assert res.bound_violation
        assert res.rate_bps == 0.0

    def test_nonpositive_yield_flagged(self):
        inputs = DecoyInputs(mu=0.5, nu=0.25, q_mu=0.05, q_nu=1e-4,
                             e_mu=0.02, e_nu=0.02, y0=1e-5)
        res = decoy_secret_rate(inputs, 1e8)
        assert res.bound_violation
        assert res.rate_bps == 0.0

    def test_quality_variant_is_smaller(self):
        rng = np.random.default_rng(14)
        inputs, _, _ = simulate_gains(0.5, 0.25, 0.2, 1e-4, 0.02, 500_000, rng)
        plain = decoy_secret_rate(inputs, 1e8)
        with_q = decoy_secret_rate(inputs, 1e8, preparation_quality=0.75)
        assert with_q.rate_bps < plain.rate_bps

    def test_input_validation(self):
        with pytest.raises(ValueError):
            DecoyInputs(mu=0.1, nu=0.2, q_mu=0.01, q_nu=0.01, e_mu=0.01, e_nu=0.01, y0=0)


class TestRateReport:
    def test_json_round_trip(self, tmp_path):
        report = RateReport(r_raw=650e3, r_sift=325e3, qber=0.021, delta=0.134,
                            xi_link=0.99, xi_thr=None, r_sec_gllp=103e3,
                            qber_ci=(0.020, 0.022))
        path = tmp_path / "report.json"
        report.save_json(path)
        import json

        data = json.loads(path.read_text())
        for key in ("r_raw", "r_sift", "qber", "delta", "xi_link", "xi_thr",
                    "r_sec_gllp", "r_sec_decoy"):
            assert key in data
        assert data["qber_ci_low"] == 0.020

    def test_bin_csv(self, tmp_path):
        bins = replay_trial_bins()
        path = tmp_path / "bins.csv"
        save_bin_csv(bins, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "bin_index,r_raw,xi,qber"
        assert len(lines) == bins.n_bins + 1

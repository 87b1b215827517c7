"""Classical post-processing: sifting, QBER, rate formulas, post-selection.

Covers the full distillation mathematics: basis reconciliation of time-tagged
clicks against the sender pattern, error estimation with exact binomial
confidence intervals, 10 ms binning, the tagged-pulse fraction of a weak
coherent source, the GLLP-with-preparation-quality secret rate, transmission
threshold post-selection with its optimizer, and the vacuum + weak decoy
projection.

Rates are asymptotic; error correction and privacy amplification enter only
through f(e) and binary-entropy terms.  The sifting factor is 1/2 throughout
(passive 50:50 basis choice with symmetric bases).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta as beta_dist

from .errors import EmptyKey, TaggedDominates
from .receiver import DetectionRecords, slot_period_ps
from .source import PatternBuffer

SIFT_FACTOR = 0.5
VACUUM_ERROR_RATE = 0.5  # dark counts land on a random detector


def binary_entropy(p) -> np.ndarray | float:
    """H2(p) in bits, 0 at the endpoints."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    inside = (p > 0.0) & (p < 1.0)
    q = p[inside]
    out[inside] = -q * np.log2(q) - (1.0 - q) * np.log2(1.0 - q)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SiftedKey:
    """Basis-matched single-click bit pairs with per-slot provenance."""

    alice_bits: np.ndarray
    bob_bits: np.ndarray
    slots: np.ndarray
    rep_rate: float

    def __post_init__(self):
        if not (len(self.alice_bits) == len(self.bob_bits) == len(self.slots)):
            raise ValueError("bit and slot arrays must have equal length")

    def __len__(self) -> int:
        return len(self.alice_bits)

    def errors(self) -> np.ndarray:
        return self.alice_bits != self.bob_bits

    def bin_indices(self, bin_duration: float) -> np.ndarray:
        slots_per_bin = bin_duration * self.rep_rate
        return (self.slots / slots_per_bin).astype(np.int64)


def sift(pattern: PatternBuffer, records: DetectionRecords, rep_rate: float) -> SiftedKey:
    """Basis reconciliation of a click stream against the sender pattern.

    Each record maps to its slot via the repetition period; slots with more
    than one click (double clicks) are discarded, as are slots where the
    detector basis differs from the pattern basis.  Bob's bit is the LSB of
    the channel code, Alice's comes from the pattern, replayed cyclically.
    """
    period = slot_period_ps(rep_rate)
    slots = (records.timestamps_ps // period).astype(np.int64)
    uniq, first_idx, counts = np.unique(slots, return_index=True, return_counts=True)
    single = counts == 1
    slot_ids = uniq[single]
    channels = records.channels[first_idx[single]]

    pattern_idx = slot_ids % len(pattern)
    alice_bits = pattern.bits[pattern_idx]
    alice_bases = pattern.bases[pattern_idx]
    bob_bases = (channels >> 1).astype(np.uint8)
    bob_bits = (channels & 1).astype(np.uint8)

    keep = alice_bases == bob_bases
    return SiftedKey(
        alice_bits=alice_bits[keep].astype(np.uint8),
        bob_bits=bob_bits[keep],
        slots=slot_ids[keep].astype(np.uint64),
        rep_rate=float(rep_rate),
    )


@dataclass(frozen=True)
class QberEstimate:
    """QBER point estimate with an exact (Clopper-Pearson) binomial CI."""

    value: float
    ci_low: float
    ci_high: float
    errors: int
    bits: int

    def __float__(self) -> float:
        return self.value


def estimate_qber(
    key: SiftedKey,
    sample_fraction: float | None = None,
    rng: np.random.Generator | None = None,
    confidence: float = 0.95,
) -> QberEstimate:
    """Mismatched-bit fraction of the sifted key.

    By default the full key is compared against the known pattern (the usual
    choice when analyzing a simulation); ``sample_fraction`` switches to
    estimating from a random subset, as a real system would sacrifice bits.
    """
    if len(key) == 0:
        raise EmptyKey("cannot estimate QBER of an empty key")
    errs = key.errors()
    if sample_fraction is not None:
        if not 0.0 < sample_fraction <= 1.0:
            raise ValueError("sample_fraction must lie in (0, 1]")
        rng = rng or np.random.default_rng()
        n_sample = max(1, int(round(len(key) * sample_fraction)))
        errs = errs[rng.choice(len(key), size=n_sample, replace=False)]
    n = len(errs)
    k = int(errs.sum())
    alpha = 1.0 - confidence
    lo = 0.0 if k == 0 else float(beta_dist.ppf(alpha / 2.0, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1.0 - alpha / 2.0, k + 1, n - k))
    return QberEstimate(value=k / n, ci_low=lo, ci_high=hi, errors=k, bits=n)


@dataclass(frozen=True)
class BinStatistics:
    """Per-bin counts and channel-efficiency estimates.

    ``rate_scale`` is the fraction of true slots actually simulated (the
    time-scaling knob); reported rates are always extrapolated back to the
    full repetition rate.
    """

    bin_duration: float
    raw_count: np.ndarray
    sifted_count: np.ndarray
    error_count: np.ndarray
    xi_estimate: np.ndarray
    rate_scale: float = 1.0

    def __post_init__(self):
        n = len(self.raw_count)
        if not (len(self.sifted_count) == len(self.error_count) == len(self.xi_estimate) == n):
            raise ValueError("per-bin arrays must have equal length")
        if np.any(self.error_count > self.sifted_count) or np.any(
            self.sifted_count > self.raw_count
        ):
            raise ValueError("need error_count <= sifted_count <= raw_count per bin")

    @property
    def n_bins(self) -> int:
        return len(self.raw_count)

    @property
    def duration(self) -> float:
        return self.n_bins * self.bin_duration

    def raw_rate_bps(self) -> np.ndarray:
        """Per-bin raw rate, extrapolated to the full repetition rate."""
        return self.raw_count / (self.bin_duration * self.rate_scale)

    def total_raw_rate_bps(self) -> float:
        return float(self.raw_count.sum() / (self.duration * self.rate_scale))

    def total_sifted_rate_bps(self) -> float:
        return float(self.sifted_count.sum() / (self.duration * self.rate_scale))

    def qber(self) -> float:
        sifted = self.sifted_count.sum()
        return float(self.error_count.sum() / sifted) if sifted else 0.0


def bin_statistics(
    key: SiftedKey,
    records: DetectionRecords,
    bin_duration: float,
    r_static_ref: float,
    rate_scale: float = 1.0,
    n_bins: int | None = None,
) -> BinStatistics:
    """Aggregate a click stream and its sifted key into time bins.

    xi_estimate(k) = raw_rate(k) / r_static_ref, capped at 1, where
    ``r_static_ref`` is the raw rate of the optimally aligned static link.
    """
    if r_static_ref <= 0:
        raise ValueError("r_static_ref must be positive")
    bin_ps = bin_duration * 1e12
    rec_bins = (records.timestamps_ps / bin_ps).astype(np.int64)
    if n_bins is None:
        n_bins = int(rec_bins.max()) + 1 if len(rec_bins) else 0
    raw = np.bincount(rec_bins, minlength=n_bins).astype(np.int64)

    key_bins = key.bin_indices(bin_duration)
    sifted = np.bincount(key_bins, minlength=n_bins).astype(np.int64)
    errors = np.bincount(
        key_bins, weights=key.errors().astype(float), minlength=n_bins
    ).astype(np.int64)

    xi = raw / (bin_duration * rate_scale * r_static_ref)
    return BinStatistics(
        bin_duration=bin_duration,
        raw_count=raw,
        sifted_count=sifted,
        error_count=errors,
        xi_estimate=np.minimum(xi, 1.0),
        rate_scale=rate_scale,
    )


def tagged_fraction(mu: float, T: float, eta: float) -> float:
    """Fraction of detected pulses attributable to multi-photon emissions.

    Delta = (1 - (1 + mu) e^-mu) / (T eta (1 - e^-mu)): every multi-photon
    pulse is conservatively assumed to reach the eavesdropper intact, so the
    numerator is the multi-photon emission probability and the denominator
    the detection probability.  Raises :class:`TaggedDominates` at >= 1.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if T * eta <= 0:
        raise ValueError("T and eta must be positive")
    multi = 1.0 - (1.0 + mu) * np.exp(-mu)
    detected = T * eta * (1.0 - np.exp(-mu))
    delta = float(multi / detected)
    if delta >= 1.0:
        raise TaggedDominates(f"tagged fraction {delta:.4f} >= 1; no key extractable")
    return delta


@dataclass(frozen=True)
class GllpInputs:
    """Inputs of the tagged-pulse secret-rate formula."""

    r_sift: float
    e: float
    mu: float
    T: float
    eta: float
    q: float = 1.0
    f: float = 1.22

    def __post_init__(self):
        if self.r_sift < 0:
            raise ValueError("r_sift must be non-negative")
        if not 0.0 <= self.e < 0.5:
            raise ValueError("QBER must lie in [0, 0.5)")
        if min(self.mu, self.T, self.eta, self.q, self.f) <= 0:
            raise ValueError("mu, T, eta, q, f must be positive")


@dataclass(frozen=True)
class GllpRate:
    """Secret rate with the quantities entering the privacy-amplification term."""

    rate_bps: float
    delta: float
    pa_error_argument: float
    entropy_domain_exceeded: bool = False

    def __float__(self) -> float:
        return self.rate_bps


def gllp_secret_rate(inputs: GllpInputs) -> GllpRate:
    """Asymptotic secret rate of a weak coherent BB84 link with tagged pulses.

    R_sec = R_sift [ (1 - Delta)(q - H2(e / (1 - Delta))) - f(e) H2(e) ],
    clamped at zero.  The untagged fraction pays privacy amplification at the
    inflated error rate e/(1-Delta) and is further reduced by the preparation
    quality q of the source; error correction acts on everything.  When
    e/(1-Delta) reaches 1/2 the entropy argument leaves its domain and the
    rate is reported as zero with a flag.
    """
    delta = tagged_fraction(inputs.mu, inputs.T, inputs.eta)
    pa_arg = inputs.e / (1.0 - delta)
    if pa_arg >= 0.5:
        return GllpRate(0.0, delta, pa_arg, entropy_domain_exceeded=True)
    bracket = (1.0 - delta) * (inputs.q - binary_entropy(pa_arg)) - inputs.f * binary_entropy(
        inputs.e
    )
    return GllpRate(max(0.0, float(inputs.r_sift * bracket)), delta, pa_arg)


def evaluate_gllp(
    r_sift: float, e: float, mu: float, T: float, eta: float, q: float = 1.0, f: float = 1.22
) -> GllpRate:
    """Rate evaluation tolerant of hopeless error rates.

    Measured QBERs of 0.5 or above (decorrelated data) yield a zero rate
    with the entropy-domain flag instead of a validation error.
    """
    delta = tagged_fraction(mu, T, eta)
    if e >= 0.5:
        return GllpRate(0.0, delta, e / (1.0 - delta), entropy_domain_exceeded=True)
    return gllp_secret_rate(GllpInputs(r_sift=r_sift, e=e, mu=mu, T=T, eta=eta, q=q, f=f))


def threshold_filter(bins: BinStatistics, xi_thr: float) -> BinStatistics:
    """Discard bins whose efficiency estimate falls below the threshold.

    Zeroed bins keep their place so bin indices stay aligned; survivors are
    untouched.  Downstream rate evaluation must conservatively assume
    T = xi_thr * T_Bob for the accepted events.
    """
    if xi_thr < 0:
        raise ValueError("xi_thr must be non-negative")
    keep = bins.xi_estimate >= xi_thr
    return BinStatistics(
        bin_duration=bins.bin_duration,
        raw_count=np.where(keep, bins.raw_count, 0),
        sifted_count=np.where(keep, bins.sifted_count, 0),
        error_count=np.where(keep, bins.error_count, 0),
        xi_estimate=np.where(keep, bins.xi_estimate, 0.0),
        rate_scale=bins.rate_scale,
    )


@dataclass(frozen=True)
class ThresholdChoice:
    """Optimizer output: chosen threshold plus the full scanned curve."""

    xi_thr: float
    rate: GllpRate
    grid: np.ndarray
    rates_bps: np.ndarray
    qber: float


def optimize_threshold(
    bins: BinStatistics,
    *,
    mu: float,
    t_bob: float,
    eta: float,
    q: float = 1.0,
    f: float = 1.22,
    grid_step: float = 0.01,
) -> ThresholdChoice:
    """Scan the efficiency threshold for the maximal total secret key.

    For each candidate on a 0.01-step grid the surviving bins are re-sifted
    into a rate and a per-regime QBER (low-efficiency data typically carries
    a higher error rate, so the blended QBER changes with the threshold) and
    the rate formula is evaluated at the conservative T = xi_thr * T_Bob.
    Ties resolve to the lowest threshold; the grid stops one step below 1
    because an empirical efficiency estimate never exceeds its reference.
    """
    if bins.n_bins == 0:
        raise ValueError("cannot optimize over empty bins")
    grid = np.arange(0.0, 1.0, grid_step)
    rates = np.zeros(len(grid))
    details: list[GllpRate | None] = [None] * len(grid)
    qbers = np.zeros(len(grid))
    duration = bins.duration * bins.rate_scale
    for i, thr in enumerate(grid):
        keep = bins.xi_estimate >= thr
        sifted = int(bins.sifted_count[keep].sum())
        errors = int(bins.error_count[keep].sum())
        if sifted == 0 or thr == 0.0:
            continue
        e = errors / sifted
        if e >= 0.5:
            continue
        r_sift = sifted / duration
        try:
            res = gllp_secret_rate(
                GllpInputs(r_sift=r_sift, e=e, mu=mu, T=thr * t_bob, eta=eta, q=q, f=f)
            )
        except TaggedDominates:
            continue
        rates[i] = res.rate_bps
        details[i] = res
        qbers[i] = e
    best = int(np.argmax(rates))
    chosen = details[best] or GllpRate(0.0, 0.0, 0.0)
    return ThresholdChoice(
        xi_thr=float(grid[best]),
        rate=chosen,
        grid=grid,
        rates_bps=rates,
        qber=float(qbers[best]),
    )


def link_efficiency(bins: BinStatistics, link_start_bin: int) -> float:
    """Mean efficiency estimate from the first successfully pointed bin on."""
    if not 0 <= link_start_bin < bins.n_bins:
        raise ValueError("link_start_bin outside the trace")
    return float(bins.xi_estimate[link_start_bin:].mean())


@dataclass(frozen=True)
class DecoyInputs:
    """Measured gains and error rates of a vacuum + weak decoy protocol.

    ``q_mu``/``q_nu`` are detections per pulse at the signal and decoy
    intensities, ``y0`` the vacuum yield, ``signal_fraction`` the fraction of
    pulses carrying the signal intensity.
    """

    mu: float
    nu: float
    q_mu: float
    q_nu: float
    e_mu: float
    e_nu: float
    y0: float
    signal_fraction: float = 1.0
    f: float = 1.22

    def __post_init__(self):
        if not 0.0 < self.nu < self.mu:
            raise ValueError("need 0 < nu < mu")
        if not (0.0 < self.q_mu < 1.0 and 0.0 < self.q_nu < 1.0):
            raise ValueError("gains must lie in (0, 1)")
        if not 0.0 < self.signal_fraction <= 1.0:
            raise ValueError("signal_fraction must lie in (0, 1]")
        if self.y0 < 0 or min(self.e_mu, self.e_nu) < 0:
            raise ValueError("y0 and error rates must be non-negative")


@dataclass(frozen=True)
class DecoyRate:
    """Decoy-projected secret rate and the single-photon bounds behind it."""

    rate_bps: float
    y1_lower: float
    e1_upper: float
    q1_lower: float
    bound_violation: bool = False

    def __float__(self) -> float:
        return self.rate_bps


def decoy_secret_rate(
    inputs: DecoyInputs,
    rep_rate: float,
    sift_factor: float = SIFT_FACTOR,
    preparation_quality: float | None = None,
) -> DecoyRate:
    """Secret rate achievable with vacuum + weak decoy state estimation.

    Single-photon yield and error bounds::

        Y1 >= mu/(mu nu - nu^2) (Q_nu e^nu - Q_mu e^mu nu^2/mu^2
                                 - (mu^2 - nu^2)/mu^2 Y0)
        e1 <= (E_nu Q_nu e^nu - Y0/2) / (nu Y1)

    then Q1 = Y1 mu e^-mu and

        R = rep_rate * sift_factor * signal_fraction
            * max(0, Q1 (1 - H2(e1)) - Q_mu f H2(E_mu)).

    A non-positive or unphysical (> 1) yield bound flags ``bound_violation``
    and reports zero rate.  Passing ``preparation_quality`` replaces the
    single-photon term 1 - H2(e1) by q - H2(e1) for sources with imperfectly
    conjugate bases.
    """
    mu, nu = inputs.mu, inputs.nu
    y1 = (
        mu
        / (mu * nu - nu**2)
        * (
            inputs.q_nu * np.exp(nu)
            - inputs.q_mu * np.exp(mu) * nu**2 / mu**2
            - (mu**2 - nu**2) / mu**2 * inputs.y0
        )
    )
    if y1 <= 0.0 or y1 > 1.0:
        return DecoyRate(0.0, float(y1), 1.0, 0.0, bound_violation=True)
    e1 = (inputs.e_nu * inputs.q_nu * np.exp(nu) - inputs.y0 * VACUUM_ERROR_RATE) / (nu * y1)
    e1 = float(max(e1, 0.0))
    q1 = float(y1 * mu * np.exp(-mu))
    single_term = (preparation_quality if preparation_quality is not None else 1.0)
    single_term -= binary_entropy(min(e1, 0.5))
    if e1 >= 0.5:
        single_term = 0.0
    per_pulse = q1 * single_term - inputs.q_mu * inputs.f * binary_entropy(inputs.e_mu)
    rate = rep_rate * sift_factor * inputs.signal_fraction * max(0.0, float(per_pulse))
    return DecoyRate(rate, float(y1), e1, q1)


@dataclass
class RateReport:
    """Headline figures of one distillation run (rates in bps)."""

    r_raw: float
    r_sift: float
    qber: float
    delta: float
    xi_link: float | None = None
    xi_thr: float | None = None
    r_sec_gllp: float = 0.0
    r_sec_decoy: float | None = None
    qber_ci: tuple[float, float] | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        data = {
            "r_raw": self.r_raw,
            "r_sift": self.r_sift,
            "qber": self.qber,
            "delta": self.delta,
            "xi_link": self.xi_link,
            "xi_thr": self.xi_thr,
            "r_sec_gllp": self.r_sec_gllp,
            "r_sec_decoy": self.r_sec_decoy,
        }
        if self.qber_ci is not None:
            data["qber_ci_low"], data["qber_ci_high"] = self.qber_ci
        data.update(self.extras)
        return data

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def save_bin_csv(bins: BinStatistics, path) -> None:
    """Per-bin CSV companion of a rate report."""
    rates = bins.raw_rate_bps()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_index,r_raw,xi,qber\n")
        for k in range(bins.n_bins):
            qber = bins.error_count[k] / bins.sifted_count[k] if bins.sifted_count[k] else 0.0
            fh.write(f"{k},{rates[k]:.17g},{bins.xi_estimate[k]:.17g},{qber:.17g}\n")

"""Scenario engine: vectorized end-to-end simulation and distillation driver.

A scenario couples one transmitter, one channel realization and one receiver
into a time-tagged click stream, reproducing the statistics of the per-slot
reference operations (:func:`fsqkd.source.emission_for_slot`,
:func:`fsqkd.receiver.detect_slot`) in chunked array form so that tens of
millions of slots simulate in seconds.

Long wall-clock scenarios use the slot-stride knob: only every m-th slot is
simulated and all reported rates are extrapolated back to the full
repetition rate (``rate_scale = 1/m``).  Outputs are deterministic for a
fixed seed and configuration, independent of chunking.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datasets
from .channel import (
    DEFAULT_BIN_DURATION,
    JitterModel,
    LinkTrace,
    SensorStream,
    load_link_trace,
    save_link_trace,
    sensor_stream_from_trace,
    simulate_link_trace,
)
from .distill import (
    BinStatistics,
    DecoyInputs,
    RateReport,
    ThresholdChoice,
    bin_statistics,
    decoy_secret_rate,
    estimate_qber,
    evaluate_gllp,
    link_efficiency,
    optimize_threshold,
    sift,
    threshold_filter,
)
from .errors import ConfigError
from .polarization import (
    PreparedStateSet,
    intrinsic_qber,
    load_state_set,
    optimize_compensation,
)
from .receiver import (
    DetectionRecords,
    ReceiverConfig,
    roll_rotation,
    save_records,
    save_records_csv,
    slot_period_ps,
)
from .source import (
    DEFAULT_PATTERN_LENGTH,
    PatternBuffer,
    SourceConfig,
    build_pattern,
    save_pattern,
)

CHUNK_SLOTS = 1 << 21

TRUTH_DTYPE = np.dtype(
    [
        ("slot", "<u8"),
        ("state", "u1"),
        ("signal_photons", "<u2"),
        ("background_photons", "<u2"),
    ]
)


@dataclass
class ScenarioConfig:
    """Fully resolved scenario: what to simulate and how to analyze it."""

    seed: int
    duration: float
    slot_stride: int = 1
    # source
    mu: float = 0.042
    rep_rate: float = 1e8
    background_rate: float = 0.0
    pattern_length: int = DEFAULT_PATTERN_LENGTH
    pattern_seed: int | None = None
    states: PreparedStateSet = field(
        default_factory=lambda: datasets.RECEIVER_TOMOGRAPHY_COMPENSATED
    )
    states_spec: str = "builtin:receiver-compensated"
    # channel
    channel_mode: str = "static"
    jitter: JitterModel = field(default_factory=JitterModel)
    trace_path: str | None = None
    pickup_time: float = 2.0
    bin_duration: float = DEFAULT_BIN_DURATION
    # receiver
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    compensation: str = "identity"
    # distillation defaults
    q: float = 1.0
    f: float = 1.22
    r_static_ref: float | None = None

    def __post_init__(self):
        if self.duration < 0:
            raise ConfigError("run.duration must be non-negative")
        if self.slot_stride < 1:
            raise ConfigError("run.slot_stride must be >= 1")
        if self.channel_mode not in ("static", "jitter", "trace"):
            raise ConfigError(f"channel.mode {self.channel_mode!r} not one of static/jitter/trace")
        if self.compensation not in ("identity", "auto"):
            raise ConfigError(f"receiver.compensation {self.compensation!r} not identity/auto")
        if self.mu <= 0:
            raise ConfigError("source.mu must be positive")
        if self.rep_rate <= 0:
            raise ConfigError("source.rep_rate must be positive")
        if self.background_rate < 0:
            raise ConfigError("source.background_rate must be non-negative")
        if self.pattern_length <= 0:
            raise ConfigError("source.pattern_length must be positive")
        if self.bin_duration <= 0:
            raise ConfigError("channel.bin_duration must be positive")
        if min(self.q, self.f) <= 0:
            raise ConfigError("distill.q and distill.f must be positive")
        if self.r_static_ref is not None and self.r_static_ref <= 0:
            raise ConfigError("distill.r_static_ref must be positive")

    @property
    def rate_scale(self) -> float:
        return 1.0 / self.slot_stride

    def source_config(self) -> SourceConfig:
        """The transmitter contract equivalent of this scenario."""
        return SourceConfig(
            mu=self.mu,
            rep_rate=self.rep_rate,
            states=self.states,
            background_rate=self.background_rate,
        )

    def static_reference_rate(self) -> float:
        """Raw click rate of the perfectly aligned link, for xi estimation."""
        if self.r_static_ref is not None:
            return self.r_static_ref
        line = self.receiver.t_bob * self.receiver.eta
        per_slot = (self.mu + self.background_rate * self.receiver.window) * line
        per_slot += 4.0 * self.receiver.noise_click_probability()
        return per_slot * self.rep_rate


def _get_section(parser: configparser.ConfigParser, name: str) -> dict:
    return dict(parser[name]) if parser.has_section(name) else {}


def _pop_typed(section: dict, prefix: str, key: str, conv, default):
    if key not in section:
        return default
    raw = section.pop(key)
    try:
        if conv is bool:
            low = raw.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"{prefix}.{key}: {exc}") from None


def _reject_unknown(section: dict, prefix: str):
    if section:
        key = sorted(section)[0]
        raise ConfigError(f"unknown key {prefix}.{key}")


def resolve_states(ref: str, dop_override: float | None, base_dir: Path | None = None) -> PreparedStateSet:
    """Resolve a state-set reference: ``builtin:<name>`` or a JSON file path."""
    if ref.startswith("builtin:"):
        return datasets.builtin_state_set(ref[len("builtin:"):], dop_override)
    path = Path(ref)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(f"source.states: file not found: {path}")
    states = load_state_set(path, label=path.stem)
    if dop_override is not None:
        mat = states.as_matrix()
        mat = mat / np.linalg.norm(mat, axis=1, keepdims=True) * dop_override
        states = PreparedStateSet.from_matrix(mat, label=f"{states.label}@dop={dop_override}")
    return states


def parse_scenario(path) -> ScenarioConfig:
    """Parse an INI scenario file; unknown sections or keys are hard errors."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None

    known_sections = {"run", "source", "channel", "receiver", "distill"}
    unknown = set(parser.sections()) - known_sections
    if unknown:
        raise ConfigError(f"unknown section [{sorted(unknown)[0]}]")

    run = _get_section(parser, "run")
    seed = _pop_typed(run, "run", "seed", int, 0)
    duration = _pop_typed(run, "run", "duration", float, None)
    if duration is None:
        raise ConfigError("run.duration is required")
    stride = _pop_typed(run, "run", "slot_stride", int, 1)
    _reject_unknown(run, "run")

    src = _get_section(parser, "source")
    mu = _pop_typed(src, "source", "mu", float, 0.042)
    rep_rate = _pop_typed(src, "source", "rep_rate", float, 1e8)
    background = _pop_typed(src, "source", "background_rate", float, 0.0)
    pattern_length = _pop_typed(src, "source", "pattern_length", int, DEFAULT_PATTERN_LENGTH)
    pattern_seed = _pop_typed(src, "source", "pattern_seed", int, None)
    states_spec = _pop_typed(src, "source", "states", str, "builtin:receiver-compensated")
    dop_override = _pop_typed(src, "source", "dop_override", float, None)
    _reject_unknown(src, "source")
    try:
        states = resolve_states(states_spec, dop_override, base_dir=path.parent)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"source.states: {exc}") from None

    ch = _get_section(parser, "channel")
    mode = _pop_typed(ch, "channel", "mode", str, "static")
    trace_path = _pop_typed(ch, "channel", "trace", str, None)
    pickup_time = _pop_typed(ch, "channel", "pickup_time", float, 2.0)
    bin_duration = _pop_typed(ch, "channel", "bin_duration", float, DEFAULT_BIN_DURATION)
    jitter_kwargs = {}
    for key in (
        "pointing_rms",
        "correlation_time",
        "tracking_range",
        "tracking_residual_rms",
        "aiming_delay_mean",
        "roll_step_deg",
    ):
        val = _pop_typed(ch, "channel", key, float, None)
        if val is not None:
            jitter_kwargs[key] = val
    _reject_unknown(ch, "channel")
    try:
        jitter = JitterModel(**jitter_kwargs)
    except ValueError as exc:
        raise ConfigError(f"channel: {exc}") from None
    if mode == "trace" and trace_path is None:
        raise ConfigError("channel.trace is required when channel.mode = trace")
    if trace_path is not None and not Path(trace_path).is_absolute():
        trace_path = str(path.parent / trace_path)

    rc = _get_section(parser, "receiver")
    recv_kwargs = {}
    for key, conv in (
        ("t_bob", float),
        ("eta", float),
        ("dark_rate_per_detector", float),
        ("window", float),
        ("beacon_leak_rate", float),
        ("hwp_lag", float),
    ):
        val = _pop_typed(rc, "receiver", key, conv, None)
        if val is not None:
            recv_kwargs[key] = val
    compensation = _pop_typed(rc, "receiver", "compensation", str, "identity")
    _reject_unknown(rc, "receiver")
    try:
        receiver = ReceiverConfig(**recv_kwargs)
    except ValueError as exc:
        raise ConfigError(f"receiver: {exc}") from None

    di = _get_section(parser, "distill")
    q = _pop_typed(di, "distill", "q", float, 1.0)
    f = _pop_typed(di, "distill", "f", float, 1.22)
    r_static_ref = _pop_typed(di, "distill", "r_static_ref", float, None)
    _reject_unknown(di, "distill")

    try:
        return ScenarioConfig(
            seed=seed,
            duration=duration,
            slot_stride=stride,
            mu=mu,
            rep_rate=rep_rate,
            background_rate=background,
            pattern_length=pattern_length,
            pattern_seed=pattern_seed,
            states=states,
            states_spec=states_spec,
            channel_mode=mode,
            jitter=jitter,
            trace_path=trace_path,
            pickup_time=pickup_time,
            bin_duration=bin_duration,
            receiver=receiver,
            compensation=compensation,
            q=q,
            f=f,
            r_static_ref=r_static_ref,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class SimulationResult:
    records: DetectionRecords
    trace: LinkTrace
    pattern: PatternBuffer
    truth: np.ndarray
    manifest: dict
    compensation_matrix: np.ndarray


def _make_trace(cfg: ScenarioConfig, n_bins: int) -> LinkTrace:
    if cfg.channel_mode == "trace":
        return load_link_trace(cfg.trace_path)
    if cfg.channel_mode == "static":
        # Permanently mounted and aligned: linked from t = 0.
        return LinkTrace(
            bin_duration=cfg.bin_duration,
            xi=np.ones(n_bins),
            theta_deg=np.zeros(n_bins),
            pickup_time=0.0,
        )
    return simulate_link_trace(
        cfg.jitter,
        cfg.duration,
        seed=cfg.seed,
        bin_duration=cfg.bin_duration,
        pickup_time=cfg.pickup_time,
    )


def _per_bin_projection(
    cfg: ScenarioConfig, trace: LinkTrace, stream: SensorStream, comp: np.ndarray
) -> np.ndarray:
    """Cumulative detector-choice probabilities per (bin, state, detector).

    Folds the sender roll, the sensor-driven frame correction (evaluated with
    the actuation lag) and the static compensation stack into one rotation
    per bin, then projects all four source states.
    """
    times = trace.times()
    reported = np.array([stream.reported_at(t, lag=cfg.receiver.hwp_lag) for t in times])
    states = cfg.states.as_matrix()
    probs = np.empty((trace.n_bins, 4, 4))
    for k in range(trace.n_bins):
        net = comp @ roll_rotation(trace.theta_deg[k] - reported[k])
        s = states @ net.T
        probs[k, :, 0] = (1.0 + s[:, 0]) / 4.0
        probs[k, :, 1] = (1.0 - s[:, 0]) / 4.0
        probs[k, :, 2] = (1.0 + s[:, 1]) / 4.0
        probs[k, :, 3] = (1.0 - s[:, 1]) / 4.0
    return np.cumsum(probs, axis=2)


def run_simulation(cfg: ScenarioConfig) -> SimulationResult:
    """Simulate a scenario into a click stream with ground-truth sidecar."""
    period_ps = slot_period_ps(cfg.rep_rate)
    if cfg.receiver.window > period_ps * 1e-12:
        raise ConfigError("receiver.window exceeds the slot period")
    slots_per_bin_f = cfg.bin_duration * cfg.rep_rate
    slots_per_bin = int(round(slots_per_bin_f))
    if abs(slots_per_bin_f - slots_per_bin) > 1e-6 or slots_per_bin <= 0:
        raise ConfigError("bin_duration must hold an integer number of slots")

    n_true = int(round(cfg.duration * cfg.rep_rate))
    n_bins = -(-n_true // slots_per_bin) if n_true else 0
    trace = _make_trace(cfg, n_bins)
    if cfg.channel_mode == "trace":
        n_true = min(n_true, trace.n_bins * slots_per_bin) if cfg.duration else trace.n_bins * slots_per_bin

    pattern = build_pattern(
        cfg.seed if cfg.pattern_seed is None else cfg.pattern_seed, cfg.pattern_length
    )
    stream = sensor_stream_from_trace(trace) if trace.n_bins else SensorStream(
        np.zeros(1), np.zeros(1)
    )

    if cfg.compensation == "auto":
        comp = optimize_compensation(cfg.states).matrix
    else:
        comp = np.eye(3)
    cum_probs = (
        _per_bin_projection(cfg, trace, stream, comp)
        if trace.n_bins
        else np.empty((0, 4, 4))
    )

    t_line = cfg.receiver.t_bob * cfg.receiver.eta
    p_noise = cfg.receiver.noise_click_probability()
    bg_window_mean = cfg.background_rate * cfg.receiver.window
    codes_full = pattern.state_codes()

    sim_slots_total = -(-n_true // cfg.slot_stride) if n_true else 0
    rec_parts: list[tuple[np.ndarray, np.ndarray]] = []
    truth_parts: list[np.ndarray] = []

    for chunk_index, start in enumerate(range(0, sim_slots_total, CHUNK_SLOTS)):
        stop = min(start + CHUNK_SLOTS, sim_slots_total)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2, chunk_index]))
        slots = np.arange(start, stop, dtype=np.int64) * cfg.slot_stride
        codes = codes_full[slots % len(pattern)]
        bins = np.minimum(slots // slots_per_bin, max(trace.n_bins - 1, 0))
        xi = trace.xi[bins] if trace.n_bins else np.zeros(len(slots))

        n_sig = rng.poisson(cfg.mu, size=len(slots))
        n_bg = (
            rng.poisson(bg_window_mean, size=len(slots))
            if bg_window_mean > 0
            else np.zeros(len(slots), dtype=np.int64)
        )

        click_slot_idx: list[np.ndarray] = []
        click_det: list[np.ndarray] = []

        nz = np.nonzero(n_sig)[0]
        if len(nz):
            survivors = rng.binomial(n_sig[nz], xi[nz] * t_line)
            hit = nz[survivors > 0]
            counts = survivors[survivors > 0]
            ph_slot = np.repeat(hit, counts)
            cum = cum_probs[bins[ph_slot], codes[ph_slot]]
            u = rng.random(len(ph_slot))
            det = (u[:, None] >= cum).sum(axis=1).astype(np.uint8)
            click_slot_idx.append(ph_slot)
            click_det.append(det)

        nzb = np.nonzero(n_bg)[0]
        if len(nzb):
            survivors = rng.binomial(n_bg[nzb], xi[nzb] * t_line)
            hitb = nzb[survivors > 0]
            countsb = survivors[survivors > 0]
            bg_slot = np.repeat(hitb, countsb)
            click_slot_idx.append(bg_slot)
            click_det.append(rng.integers(0, 4, size=len(bg_slot), dtype=np.uint8))

        if p_noise > 0:
            for det_code in range(4):
                k = rng.binomial(len(slots), p_noise)
                if k:
                    pos = rng.choice(len(slots), size=k, replace=False)
                    click_slot_idx.append(pos)
                    click_det.append(np.full(k, det_code, dtype=np.uint8))

        if click_slot_idx:
            slot_idx = np.concatenate(click_slot_idx)
            dets = np.concatenate(click_det)
            # one record per (slot, detector): a detector cannot resolve
            # multiple photons inside one coincidence window
            keys = np.unique(slot_idx.astype(np.int64) * 4 + dets)
            rec_slots = slots[keys // 4]
            rec_parts.append(
                ((rec_slots * period_ps).astype(np.uint64), (keys % 4).astype(np.uint8))
            )

        emitted = (n_sig > 0) | (n_bg > 0)
        if np.any(emitted):
            rows = np.empty(int(emitted.sum()), dtype=TRUTH_DTYPE)
            rows["slot"] = slots[emitted]
            rows["state"] = codes[emitted]
            rows["signal_photons"] = n_sig[emitted]
            rows["background_photons"] = n_bg[emitted]
            truth_parts.append(rows)

    if rec_parts:
        records = DetectionRecords(
            np.concatenate([p[0] for p in rec_parts]),
            np.concatenate([p[1] for p in rec_parts]),
        )
    else:
        records = DetectionRecords.empty()
    truth = (
        np.concatenate(truth_parts) if truth_parts else np.empty(0, dtype=TRUTH_DTYPE)
    )

    manifest = {
        "seed": cfg.seed,
        "duration": n_true / cfg.rep_rate,
        "rep_rate": cfg.rep_rate,
        "slot_stride": cfg.slot_stride,
        "rate_scale": cfg.rate_scale,
        "mu": cfg.mu,
        "background_rate": cfg.background_rate,
        "t_bob": cfg.receiver.t_bob,
        "eta": cfg.receiver.eta,
        "window": cfg.receiver.window,
        "dark_rate_per_detector": cfg.receiver.dark_rate_per_detector,
        "beacon_leak_rate": cfg.receiver.beacon_leak_rate,
        "hwp_lag": cfg.receiver.hwp_lag,
        "compensation": cfg.compensation,
        "channel_mode": cfg.channel_mode,
        "states": cfg.states.label or cfg.states_spec,
        "intrinsic_qber": intrinsic_qber(cfg.states),
        "pattern_length": cfg.pattern_length,
        "pattern_seed": pattern.seed,
        "bin_duration": cfg.bin_duration,
        "pickup_time": trace.pickup_time,
        "q": cfg.q,
        "f": cfg.f,
        "r_static_ref": cfg.static_reference_rate(),
        "n_slots_simulated": int(sim_slots_total),
        "n_records": len(records),
    }
    return SimulationResult(records, trace, pattern, truth, manifest, comp)


def write_simulation(result: SimulationResult, out_dir) -> dict[str, Path]:
    """Write all simulation artifacts; returns the file map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "records": out / "records.bin",
        "records_csv": out / "records.csv",
        "trace": out / "trace.csv",
        "pattern": out / "pattern.bin",
        "truth": out / "truth.npy",
        "manifest": out / "manifest.json",
    }
    save_records(result.records, paths["records"])
    save_records_csv(result.records, paths["records_csv"])
    save_link_trace(result.trace, paths["trace"])
    save_pattern(result.pattern, paths["pattern"])
    np.save(paths["truth"], result.truth)
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(result.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def distill_records(
    records: DetectionRecords,
    pattern: PatternBuffer,
    *,
    rep_rate: float,
    bin_duration: float,
    r_static_ref: float,
    mu: float,
    t_bob: float,
    eta: float,
    q: float = 1.0,
    f: float = 1.22,
    rate_scale: float = 1.0,
    xi_thr: float | None = None,
    optimize: bool = False,
    n_bins: int | None = None,
    link_start_bin: int | None = None,
    decoy: DecoyInputs | None = None,
) -> tuple[RateReport, BinStatistics, ThresholdChoice | None]:
    """Full distillation pass: sift, bin, post-select, evaluate rates.

    With ``optimize`` the transmission threshold is scanned; with ``xi_thr``
    it is fixed; otherwise no post-selection is applied and the rate formula
    uses the full static transmission (appropriate for mounted operation).
    """
    key = sift(pattern, records, rep_rate)
    qber = estimate_qber(key)
    bins = bin_statistics(
        key, records, bin_duration, r_static_ref, rate_scale=rate_scale, n_bins=n_bins
    )
    xi_link = link_efficiency(bins, link_start_bin or 0) if bins.n_bins else 0.0

    choice: ThresholdChoice | None = None
    extras: dict = {}
    if optimize:
        choice = optimize_threshold(bins, mu=mu, t_bob=t_bob, eta=eta, q=q, f=f)
        rate = choice.rate
        chosen_thr: float | None = choice.xi_thr
        extras["qber_filtered"] = choice.qber
    elif xi_thr is not None:
        filtered = threshold_filter(bins, xi_thr)
        e = filtered.qber()
        rate = evaluate_gllp(
            filtered.total_sifted_rate_bps(), e, mu, xi_thr * t_bob, eta, q, f
        )
        chosen_thr = xi_thr
        extras["qber_filtered"] = e
    else:
        rate = evaluate_gllp(
            bins.total_sifted_rate_bps(), qber.value, mu, t_bob, eta, q, f
        )
        chosen_thr = None

    r_sec_decoy = None
    if decoy is not None:
        r_sec_decoy = decoy_secret_rate(decoy, rep_rate).rate_bps

    report = RateReport(
        r_raw=bins.total_raw_rate_bps(),
        r_sift=bins.total_sifted_rate_bps(),
        qber=qber.value,
        delta=rate.delta,
        xi_link=xi_link,
        xi_thr=chosen_thr,
        r_sec_gllp=rate.rate_bps,
        r_sec_decoy=r_sec_decoy,
        qber_ci=(qber.ci_low, qber.ci_high),
        extras=extras,
    )
    return report, bins, choice


def expected_click_rates(cfg: ScenarioConfig, xi: float = 1.0) -> dict[str, float]:
    """Analytic per-slot expectations of the detection model at efficiency xi."""
    line = xi * cfg.receiver.t_bob * cfg.receiver.eta
    signal = cfg.mu * line
    background = cfg.background_rate * cfg.receiver.window * line
    noise = 4.0 * cfg.receiver.noise_click_probability()
    e_int = intrinsic_qber(cfg.states)
    sifted = signal / 2.0 + background / 2.0 + noise / 2.0
    errors = e_int * signal / 2.0 + background / 4.0 + noise / 4.0
    return {
        "signal_per_slot": signal,
        "background_per_slot": background,
        "noise_per_slot": noise,
        "sifted_per_slot": sifted,
        "qber": errors / sifted if sifted else 0.0,
    }


def synthesize_bin_statistics(
    trace: LinkTrace,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
) -> BinStatistics:
    """Draw per-bin counts directly from the analytic detection model.

    Fast-path replacement for a full click-level simulation when only binned
    statistics are needed (threshold studies over trace ensembles); one
    Poisson/binomial draw per bin instead of millions of slots.
    """
    slots_per_bin = int(round(trace.bin_duration * cfg.rep_rate))
    raw = np.zeros(trace.n_bins, dtype=np.int64)
    sifted = np.zeros(trace.n_bins, dtype=np.int64)
    errors = np.zeros(trace.n_bins, dtype=np.int64)
    for k in range(trace.n_bins):
        rates = expected_click_rates(cfg, xi=float(trace.xi[k]))
        lam = (
            rates["signal_per_slot"]
            + rates["background_per_slot"]
            + rates["noise_per_slot"]
        )
        raw[k] = rng.poisson(lam * slots_per_bin)
        sifted[k] = rng.binomial(raw[k], 0.5)
        errors[k] = rng.binomial(sifted[k], rates["qber"]) if sifted[k] else 0
    ref = cfg.static_reference_rate()
    xi_est = np.minimum(raw / (trace.bin_duration * ref), 1.0)
    return BinStatistics(
        bin_duration=trace.bin_duration,
        raw_count=raw,
        sifted_count=sifted,
        error_count=errors,
        xi_estimate=xi_est,
        rate_scale=1.0,
    )

"""Monte Carlo detection model of the four-detector polarization analyzer.

Detection chain per photon: survive the channel and receiver optics with
probability xi * t_bob, fire the detector with efficiency eta, pick a basis
at the 50:50 splitter, then land on one of the two detectors of that basis
with probability (1 +- v.a)/2 for corrected Stokes vector v and detector
axis a.  Dark counts and beacon leakage are added per detector at their rate
times the coincidence window.  Timestamps are the slot start in picoseconds.

Double clicks (two detectors within one slot) are all kept as records; the
distillation stage discards such slots.  Detector dead time and afterpulsing
are omitted (second-order at the sub-Mcps rates simulated here), and the
basis choice is exactly 50:50.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SensorStream
from .errors import ParseError
from .polarization import STATE_LABELS, compose_stack
from .source import EmissionEvent

CHANNEL_CODES = {label: code for code, label in enumerate(STATE_LABELS)}

_RECORD_DTYPE = np.dtype([("timestamp_ps", "<u8"), ("channel", "u1")])


@dataclass(frozen=True)
class ReceiverConfig:
    """Receiver transmission, detector and noise parameters.

    ``dark_rate_per_detector`` is per APD; ``beacon_leak_rate`` is the total
    leak rate, shared equally by the four detectors.  ``hwp_lag`` is the
    actuation delay of the frame-correction half-waveplate.
    """

    t_bob: float = 0.409
    eta: float = 0.38
    dark_rate_per_detector: float = 0.0
    window: float = 1.5e-9
    beacon_leak_rate: float = 0.0
    hwp_lag: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.t_bob <= 1.0 or not 0.0 < self.eta <= 1.0:
            raise ValueError("t_bob and eta must lie in (0, 1]")
        if self.dark_rate_per_detector < 0 or self.beacon_leak_rate < 0:
            raise ValueError("noise rates must be non-negative")
        if self.window <= 0:
            raise ValueError("window must be positive")
        if self.hwp_lag < 0:
            raise ValueError("hwp_lag must be non-negative")

    def noise_click_probability(self) -> float:
        """Per-detector, per-slot probability of a dark or beacon count."""
        return (self.dark_rate_per_detector + self.beacon_leak_rate / 4.0) * self.window


@dataclass(frozen=True)
class DetectionRecords:
    """Time-tagged detector clicks, sorted by timestamp."""

    timestamps_ps: np.ndarray
    channels: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps_ps, dtype=np.uint64)
        ch = np.asarray(self.channels, dtype=np.uint8)
        if ts.shape != ch.shape or ts.ndim != 1:
            raise ValueError("timestamps and channels must be equal-length 1-D arrays")
        if len(ts) > 1 and np.any(np.diff(ts.astype(np.int64)) < 0):
            raise ValueError("timestamps must be non-decreasing")
        if np.any(ch > 3):
            raise ValueError("channel codes must be 0..3")
        object.__setattr__(self, "timestamps_ps", ts)
        object.__setattr__(self, "channels", ch)

    def __len__(self) -> int:
        return len(self.timestamps_ps)

    @classmethod
    def empty(cls) -> "DetectionRecords":
        return cls(np.empty(0, dtype=np.uint64), np.empty(0, dtype=np.uint8))

    @classmethod
    def concatenate(cls, parts) -> "DetectionRecords":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.timestamps_ps for p in parts]),
            np.concatenate([p.channels for p in parts]),
        )


def save_records(records: DetectionRecords, path) -> None:
    """Binary record file: repeating little-endian 9-byte records.

    8-byte unsigned timestamp in picoseconds followed by a 1-byte channel
    code (0=H, 1=V, 2=P45, 3=M45).  No header.
    """
    arr = np.empty(len(records), dtype=_RECORD_DTYPE)
    arr["timestamp_ps"] = records.timestamps_ps
    arr["channel"] = records.channels
    with open(path, "wb") as fh:
        fh.write(arr.tobytes())


def load_records(path) -> DetectionRecords:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) % _RECORD_DTYPE.itemsize:
        raise ParseError(
            f"record file size {len(raw)} is not a multiple of {_RECORD_DTYPE.itemsize}"
        )
    arr = np.frombuffer(raw, dtype=_RECORD_DTYPE)
    return DetectionRecords(arr["timestamp_ps"].copy(), arr["channel"].copy())


def save_records_csv(records: DetectionRecords, path) -> None:
    """CSV mirror of the binary record format."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp_ps,channel\n")
        for ts, ch in zip(records.timestamps_ps, records.channels):
            fh.write(f"{ts},{ch}\n")


def load_records_csv(path) -> DetectionRecords:
    ts, ch = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1:
                if line != "timestamp_ps,channel":
                    raise ParseError("expected header 'timestamp_ps,channel'", line=lineno)
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ParseError(f"expected 2 fields, got {len(parts)}", line=lineno)
            try:
                ts.append(int(parts[0]))
                ch.append(int(parts[1]))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
    return DetectionRecords(np.array(ts, dtype=np.uint64), np.array(ch, dtype=np.uint8))


def frame_correction_angle(sensor: SensorStream, time: float, lag: float = 0.0) -> float:
    """Axis angle (radians) of the frame-correction half-waveplate.

    The motor follows half the reported roll angle, delayed by the actuation
    lag: a half-waveplate at theta/2 works against the analyzer calibration
    (taken with the plate at zero) to undo a physical frame roll of theta.
    """
    return np.deg2rad(sensor.reported_at(time, lag=lag)) / 2.0


def roll_rotation(angle_deg) -> np.ndarray:
    """Poincare rotation of a physical frame roll by ``angle_deg``.

    A roll by theta advances every linear polarization angle by theta, i.e.
    rotates the Stokes vector by 2*theta about the S3 axis.
    """
    a = 2.0 * np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def detector_probabilities(stokes) -> np.ndarray:
    """Click probabilities of the four detectors for one corrected state.

    Order (H, V, P45, M45); includes the 50:50 basis choice, so the four
    entries sum to exactly 1 for any physical Stokes vector.
    """
    s = np.asarray(stokes, dtype=float)
    return np.array(
        [
            (1.0 + s[0]) / 4.0,
            (1.0 - s[0]) / 4.0,
            (1.0 + s[1]) / 4.0,
            (1.0 - s[1]) / 4.0,
        ]
    )


def slot_period_ps(rep_rate: float) -> int:
    period = 1e12 / rep_rate
    rounded = int(round(period))
    if abs(period - rounded) > 1e-6:
        raise ValueError("repetition rate must give an integer slot period in ps")
    return rounded


def detect_slot(
    event: EmissionEvent,
    xi: float,
    cfg: ReceiverConfig,
    correction,
    rng: np.random.Generator,
    rep_rate: float = 1e8,
) -> DetectionRecords:
    """Detect the photons of one emission event; reference implementation.

    ``correction`` is a 3x3 Poincare rotation, a sequence of
    :class:`~fsqkd.polarization.RetarderSetting`, or None for identity.
    Background events additionally pass the time-window gate (they are
    uniform over the slot, signal pulses are far shorter than the window).
    The bulk simulation pipeline reproduces these statistics in vectorized
    form.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError("xi must lie in [0, 1]")
    period = slot_period_ps(rep_rate)
    if cfg.window > period * 1e-12:
        raise ValueError("window must not exceed the slot period")
    if correction is None:
        matrix = np.eye(3)
    elif isinstance(correction, np.ndarray):
        matrix = correction
    else:
        matrix = compose_stack(correction)

    p_survive = xi * cfg.t_bob * cfg.eta
    if event.is_background:
        p_survive *= cfg.window * rep_rate  # time-window gate
    survivors = rng.binomial(event.photon_count, p_survive) if event.photon_count else 0

    hit = np.zeros(4, dtype=bool)
    if survivors:
        probs = detector_probabilities(matrix @ event.stokes.as_array())
        counts = rng.multinomial(survivors, probs)
        hit |= counts > 0

    p_noise = cfg.noise_click_probability()
    if p_noise > 0:
        hit |= rng.random(4) < p_noise

    channels = np.nonzero(hit)[0].astype(np.uint8)
    timestamps = np.full(len(channels), event.slot_index * period, dtype=np.uint64)
    return DetectionRecords(timestamps, channels)


def noise_rate_for_qber_share(
    share: float,
    mu: float,
    t_bob: float = 0.409,
    eta: float = 0.38,
    window: float = 1.5e-9,
) -> float:
    """Per-detector noise rate producing a given QBER share at xi = 1.

    A noise click sifts with probability 1/2 and errs with probability 1/2,
    so four detectors contribute q_det errors per slot against a sifted
    signal of mu*T*eta/2 per slot; solving for the per-detector, per-slot
    click probability q_det and dividing by the window gives the rate.  Used
    to calibrate the sum of dark and beacon rates to a measured share.
    """
    sifted_per_slot = mu * t_bob * eta / 2.0
    return share * sifted_per_slot / window

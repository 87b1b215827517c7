"""Time-varying free-space link model.

The channel efficiency xi(t) in [0, 1] multiplies the static receiver
transmission: T(t) = xi(t) * T_Bob.  Before the unit is picked up it sits
aligned on its mount (xi = 1); during the initial aiming phase essentially
nothing couples (xi = 0); afterwards the residual pointing error of the
tracking system determines a Gaussian-aperture coupling efficiency.

The hand jitter itself is a calibrated stand-in (band-limited Gaussian
pointing error); no claim of statistical fidelity to real hands is made.
The calibration targets are the observed post-aiming link efficiencies
(roughly 0.1 to 0.4 on average) and optimal post-selection thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError, RangeError

DEFAULT_BIN_DURATION = 0.010
SENSOR_RESOLUTION_DEG = 1.0
SENSOR_REFRESH_INTERVAL = 0.1

# Gaussian-aperture beam-waist parameter (degrees), fixed so that a residual
# pointing error of 1.2 deg couples at 50 %.
BEAM_WAIST_DEG = float(np.sqrt(2.0 * 1.2**2 / np.log(2.0)))


@dataclass(frozen=True)
class LinkTrace:
    """Per-bin channel efficiency and sender roll angle."""

    bin_duration: float
    xi: np.ndarray
    theta_deg: np.ndarray
    pickup_time: float = 0.0

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        theta = np.asarray(self.theta_deg, dtype=float)
        if xi.shape != theta.shape or xi.ndim != 1:
            raise ValueError("xi and theta_deg must be equal-length 1-D sequences")
        if np.any(xi < 0.0) or np.any(xi > 1.0):
            raise RangeError("xi values must lie in [0, 1]")
        if self.bin_duration <= 0:
            raise ValueError("bin_duration must be positive")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "theta_deg", theta)

    @property
    def n_bins(self) -> int:
        return len(self.xi)

    @property
    def duration(self) -> float:
        return self.n_bins * self.bin_duration

    def times(self) -> np.ndarray:
        """Start time of each bin."""
        return np.arange(self.n_bins) * self.bin_duration


@dataclass(frozen=True)
class JitterModel:
    """Hand-jitter and tracking parameters, all angles in degrees.

    ``pointing_rms`` is the per-axis RMS of the raw pointing error;
    ``tracking_residual_rms`` the per-axis RMS left after the fast steering
    loop; errors beyond ``tracking_range`` fall outside the steering
    acceptance and couple nothing.  ``aiming_delay_mean`` is the mean time the
    user needs to find the receiver after pickup.
    """

    pointing_rms: float = 1.5
    correlation_time: float = 0.3
    tracking_range: float = 3.0
    tracking_residual_rms: float = 1.6
    aiming_delay_mean: float = 8.5
    roll_step_deg: float = 0.05

    def __post_init__(self):
        if min(self.pointing_rms, self.roll_step_deg) < 0:
            raise ValueError("jitter magnitudes must be non-negative")
        if min(self.correlation_time, self.tracking_range, self.aiming_delay_mean) <= 0:
            raise ValueError("correlation_time, tracking_range, aiming_delay_mean must be positive")
        if self.tracking_residual_rms < 0 or self.tracking_residual_rms >= self.tracking_range:
            raise ValueError("tracking_residual_rms must be in [0, tracking_range)")


def coupling_efficiency(residual_error_deg) -> np.ndarray:
    """Gaussian-aperture coupling for a given residual pointing error."""
    r = np.asarray(residual_error_deg, dtype=float)
    return np.exp(-2.0 * r**2 / BEAM_WAIST_DEG**2)


def simulate_link_trace(
    model: JitterModel,
    duration: float,
    seed: int,
    bin_duration: float = DEFAULT_BIN_DURATION,
    pickup_time: float = 2.0,
) -> LinkTrace:
    """Simulate one hand-held trial.

    xi = 1 while the unit is mounted, 0 during the aiming phase (duration
    gamma-distributed around ``aiming_delay_mean``), afterwards a Gaussian
    coupling of the tracking residual; bins whose raw pointing error exceeds
    the tracking acceptance range are fully dark.  The sender roll angle
    performs an independent slow random walk once the unit leaves the mount.
    Identical seeds give identical traces.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(duration / bin_duration))
    dt = bin_duration

    aiming_delay = rng.gamma(shape=4.0, scale=model.aiming_delay_mean / 4.0)
    pickup_bin = min(n, int(round(pickup_time / dt)))
    link_bin = min(n, pickup_bin + int(round(aiming_delay / dt)))

    # Raw pointing error: per-axis Ornstein-Uhlenbeck, stationary init.
    decay = np.exp(-dt / model.correlation_time)
    kick = model.pointing_rms * np.sqrt(max(0.0, 1.0 - decay**2))
    err = rng.normal(0.0, model.pointing_rms, size=2)
    raw = np.empty((n, 2))
    for k in range(n):
        err = err * decay + rng.normal(0.0, 1.0, size=2) * kick
        raw[k] = err

    # Fast steering leaves an uncorrelated residual (loop bandwidth is far
    # above the bin rate); a perfectly steady hand leaves nothing to track.
    residual_rms = model.tracking_residual_rms if model.pointing_rms > 0 else 0.0
    residual = rng.normal(0.0, 1.0, size=(n, 2)) * residual_rms

    xi = coupling_efficiency(np.linalg.norm(residual, axis=1))
    xi[np.linalg.norm(raw, axis=1) > model.tracking_range] = 0.0
    xi[:pickup_bin] = 1.0
    xi[pickup_bin:link_bin] = 0.0
    xi = np.clip(xi, 0.0, 1.0)

    theta = np.cumsum(rng.normal(0.0, model.roll_step_deg, size=n))
    theta[:pickup_bin] = 0.0
    if pickup_bin < n:
        theta[pickup_bin:] -= theta[pickup_bin]

    return LinkTrace(bin_duration=dt, xi=xi, theta_deg=theta, pickup_time=pickup_bin * dt)


def first_link_bin(trace: LinkTrace) -> int:
    """Index of the first successfully pointed bin after pickup.

    Falls back to the end of the trace if the link never comes up.
    """
    start = int(round(trace.pickup_time / trace.bin_duration))
    nonzero = np.nonzero(trace.xi[start:] > 0.0)[0]
    return start + int(nonzero[0]) if len(nonzero) else trace.n_bins


def save_link_trace(trace: LinkTrace, path) -> None:
    """Write a trace as CSV; values round-trip exactly through %.17g."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# bin_duration = {trace.bin_duration:.17g}\n")
        fh.write(f"# pickup_time = {trace.pickup_time:.17g}\n")
        fh.write("bin_index,xi,theta_deg\n")
        for i in range(trace.n_bins):
            fh.write(f"{i},{trace.xi[i]:.17g},{trace.theta_deg[i]:.17g}\n")


def load_link_trace(path) -> LinkTrace:
    bin_duration = DEFAULT_BIN_DURATION
    pickup_time = 0.0
    xi, theta = [], []
    saw_header = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                try:
                    key, value = (p.strip() for p in line[1:].split("=", 1))
                except ValueError:
                    raise ParseError("malformed metadata comment", line=lineno) from None
                if key == "bin_duration":
                    bin_duration = float(value)
                elif key == "pickup_time":
                    pickup_time = float(value)
                else:
                    raise ParseError(f"unknown metadata key {key!r}", line=lineno)
                continue
            if not saw_header:
                if line != "bin_index,xi,theta_deg":
                    raise ParseError("expected header 'bin_index,xi,theta_deg'", line=lineno)
                saw_header = True
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ParseError(f"expected 3 fields, got {len(parts)}", line=lineno)
            try:
                idx, x, t = int(parts[0]), float(parts[1]), float(parts[2])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if idx != len(xi):
                raise ParseError(f"non-contiguous bin index {idx}", line=lineno)
            if not 0.0 <= x <= 1.0:
                raise RangeError(f"line {lineno}: xi={x!r} outside [0, 1]")
            xi.append(x)
            theta.append(t)
    if not saw_header or not xi:
        raise ParseError("trace file contains no data rows", line=1)
    return LinkTrace(
        bin_duration=bin_duration,
        xi=np.array(xi),
        theta_deg=np.array(theta),
        pickup_time=pickup_time,
    )


@dataclass(frozen=True)
class SensorStream:
    """Quantized attitude updates sent by the sender's orientation sensor."""

    times: np.ndarray
    theta_deg: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.theta_deg, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and theta_deg must be equal-length 1-D sequences")
        if np.any(np.diff(t) < 0):
            raise ValueError("update times must be non-decreasing")
        if len(v) > 1 and np.any(np.abs(np.diff(v)) < SENSOR_RESOLUTION_DEG):
            raise ValueError("consecutive reported values must differ by >= 1 degree")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "theta_deg", v)

    def reported_at(self, time: float, lag: float = 0.0) -> float:
        """Latest value reported at or before ``time - lag`` (0 before any)."""
        t = time - lag
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.theta_deg[idx]) if idx >= 0 else 0.0


def sensor_stream_from_trace(trace: LinkTrace) -> SensorStream:
    """Updates the sensor would send while replaying a trace.

    An update goes out when the 1-degree-quantized roll angle differs from
    the last transmitted value, rate-limited to one update per 0.1 s.  The
    initial value is always sent.
    """
    times, values = [], []
    quantized = np.round(trace.theta_deg)
    t = trace.times()
    last_value, last_time = None, -np.inf
    for k in range(trace.n_bins):
        q = quantized[k]
        if last_value is None or (
            abs(q - last_value) >= SENSOR_RESOLUTION_DEG
            and t[k] - last_time >= SENSOR_REFRESH_INTERVAL - 1e-12
        ):
            times.append(t[k])
            values.append(q)
            last_value, last_time = q, t[k]
    return SensorStream(np.array(times), np.array(values))

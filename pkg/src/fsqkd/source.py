"""Transmitter model: pulse pattern, Poisson photon statistics, emission.

The sender runs at a fixed repetition rate (default 100 MHz) and replays a
finite pseudorandom pattern of (bit, basis) symbols cyclically.  Each slot
carries a weak coherent pulse with Poissonian photon number of mean ``mu`` in
the polarization of the pattern symbol, plus optional unpolarized background
light from the laser diodes idling below threshold.

Bit/basis to state mapping (fixed convention):
    (0, Z) -> H,  (1, Z) -> V,  (0, X) -> P45,  (1, X) -> M45
so the numeric state code is ``basis * 2 + bit`` matching the detector
channel codes 0=H, 1=V, 2=P45, 3=M45.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError
from .polarization import STATE_LABELS, PreparedStateSet, StokesVector, ideal_bb84_set

DEFAULT_PATTERN_LENGTH = 131056
DEFAULT_REP_RATE = 1e8

_PATTERN_MAGIC = b"BBPAT\x01"
_PATTERN_HEADER = struct.Struct("<6sQq")  # magic, length, seed (-1 if unknown)


@dataclass(frozen=True)
class PatternBuffer:
    """Cyclic sequence of (bit, basis) symbols; basis 0=Z, 1=X."""

    bits: np.ndarray
    bases: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if len(self.bits) != len(self.bases) or len(self.bits) == 0:
            raise ValueError("bits and bases must be equal-length and non-empty")

    def __len__(self) -> int:
        return len(self.bits)

    def state_codes(self) -> np.ndarray:
        """Per-symbol state code basis*2 + bit (0=H, 1=V, 2=P45, 3=M45)."""
        return (self.bases * 2 + self.bits).astype(np.uint8)

    def symbol(self, slot_index: int) -> tuple[int, int]:
        i = int(slot_index) % len(self)
        return int(self.bits[i]), int(self.bases[i])

    def state_label(self, slot_index: int) -> str:
        bit, basis = self.symbol(slot_index)
        return STATE_LABELS[basis * 2 + bit]

    def period_seconds(self, rep_rate: float = DEFAULT_REP_RATE) -> float:
        return len(self) / float(rep_rate)


def build_pattern(seed: int, length: int = DEFAULT_PATTERN_LENGTH) -> PatternBuffer:
    """Deterministic pseudorandom pattern of ``length`` symbols."""
    if length <= 0:
        raise ValueError("pattern length must be positive")
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=length, dtype=np.uint8)
    bases = rng.integers(0, 2, size=length, dtype=np.uint8)
    return PatternBuffer(bits, bases, seed=int(seed))


def save_pattern(pattern: PatternBuffer, path) -> None:
    """Write a pattern file: 22-byte header, then one byte per symbol.

    Header (little-endian): 6-byte magic ``BBPAT\\x01``, uint64 length, int64
    seed (-1 when unknown).  Payload byte: bit in the LSB, basis in bit 1.
    """
    payload = (pattern.bits | (pattern.bases << 1)).astype(np.uint8)
    seed = -1 if pattern.seed is None else int(pattern.seed)
    with open(path, "wb") as fh:
        fh.write(_PATTERN_HEADER.pack(_PATTERN_MAGIC, len(pattern), seed))
        fh.write(payload.tobytes())


def load_pattern(path) -> PatternBuffer:
    with open(path, "rb") as fh:
        header = fh.read(_PATTERN_HEADER.size)
        if len(header) < _PATTERN_HEADER.size:
            raise ParseError("truncated pattern header")
        magic, length, seed = _PATTERN_HEADER.unpack(header)
        if magic != _PATTERN_MAGIC:
            raise ParseError("not a pattern file (bad magic)")
        payload = np.frombuffer(fh.read(), dtype=np.uint8)
    if len(payload) != length:
        raise ParseError(f"pattern payload has {len(payload)} symbols, header says {length}")
    return PatternBuffer(
        bits=(payload & 1).astype(np.uint8),
        bases=((payload >> 1) & 1).astype(np.uint8),
        seed=None if seed < 0 else int(seed),
    )


@dataclass(frozen=True)
class SourceConfig:
    """Transmitter parameters.

    ``background_rate`` is the rate (photons/s) of unpolarized below-threshold
    emission, spread uniformly over each slot; ``mu`` is the signal mean
    photon number per pulse.
    """

    mu: float
    rep_rate: float = DEFAULT_REP_RATE
    states: PreparedStateSet = field(default_factory=ideal_bb84_set)
    background_rate: float = 0.0
    beacon_on: bool = True

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.rep_rate <= 0:
            raise ValueError("rep_rate must be positive")
        if self.background_rate < 0:
            raise ValueError("background_rate must be non-negative")


@dataclass(frozen=True)
class EmissionEvent:
    """Photons leaving the transmitter in one slot."""

    slot_index: int
    photon_count: int
    state_label: str
    stokes: StokesVector
    is_background: bool = False


def sample_photon_number(mu: float, rng: np.random.Generator) -> int:
    """Poissonian photon number of a phase-randomized weak coherent pulse."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return int(rng.poisson(mu))


def emission_for_slot(
    pattern: PatternBuffer,
    slot_index: int,
    cfg: SourceConfig,
    rng: np.random.Generator,
) -> list[EmissionEvent]:
    """Emission events for one slot: the signal pulse plus any background.

    Background photons are unpolarized (zero Stokes vector) and uniform in
    time over the slot; the receiver applies its detection-window gate to
    them.  A signal event is always returned, possibly with zero photons.
    """
    label = pattern.state_label(slot_index)
    events = [
        EmissionEvent(
            slot_index=int(slot_index),
            photon_count=sample_photon_number(cfg.mu, rng),
            state_label=label,
            stokes=cfg.states.states[label],
        )
    ]
    if cfg.background_rate > 0:
        n_bg = int(rng.poisson(cfg.background_rate / cfg.rep_rate))
        if n_bg > 0:
            events.append(
                EmissionEvent(
                    slot_index=int(slot_index),
                    photon_count=n_bg,
                    state_label=label,
                    stokes=StokesVector(0.0, 0.0, 0.0),
                    is_background=True,
                )
            )
    return events


def emit_slots(
    pattern: PatternBuffer,
    slot_indices: np.ndarray,
    cfg: SourceConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized emission for a batch of slots.

    Returns ``(state_codes, signal_photons, background_photons)`` arrays, one
    entry per requested slot.  Statistically identical to calling
    :func:`emission_for_slot` per slot (stream layout differs).
    """
    slots = np.asarray(slot_indices, dtype=np.int64)
    codes = pattern.state_codes()[slots % len(pattern)]
    signal = rng.poisson(cfg.mu, size=len(slots))
    if cfg.background_rate > 0:
        background = rng.poisson(cfg.background_rate / cfg.rep_rate, size=len(slots))
    else:
        background = np.zeros(len(slots), dtype=np.int64)
    return codes, signal, background

"""Simulator and analysis toolkit for a hand-held free-space BB84 QKD link."""

from .channel import JitterModel, LinkTrace, SensorStream, sensor_stream_from_trace, simulate_link_trace
from .distill import (
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
    sift,
    tagged_fraction,
    threshold_filter,
)
from .pipeline import ScenarioConfig, distill_records, parse_scenario, run_simulation
from .polarization import (
    PreparedStateSet,
    RetarderSetting,
    StokesVector,
    degree_of_polarization,
    intrinsic_qber,
    optimize_compensation,
    preparation_quality,
    retarder_rotation,
    state_fidelity,
    stokes_from_intensities,
)
from .receiver import DetectionRecords, ReceiverConfig, detect_slot, frame_correction_angle
from .source import PatternBuffer, SourceConfig, build_pattern, emission_for_slot, sample_photon_number

__version__ = "0.1.0"

__all__ = [
    "BinStatistics",
    "DecoyInputs",
    "DetectionRecords",
    "GllpInputs",
    "JitterModel",
    "LinkTrace",
    "PatternBuffer",
    "PreparedStateSet",
    "RateReport",
    "ReceiverConfig",
    "RetarderSetting",
    "ScenarioConfig",
    "SensorStream",
    "SiftedKey",
    "SourceConfig",
    "StokesVector",
    "bin_statistics",
    "binary_entropy",
    "build_pattern",
    "decoy_secret_rate",
    "degree_of_polarization",
    "detect_slot",
    "distill_records",
    "emission_for_slot",
    "estimate_qber",
    "frame_correction_angle",
    "gllp_secret_rate",
    "intrinsic_qber",
    "link_efficiency",
    "optimize_compensation",
    "optimize_threshold",
    "parse_scenario",
    "preparation_quality",
    "retarder_rotation",
    "run_simulation",
    "sample_photon_number",
    "sensor_stream_from_trace",
    "sift",
    "simulate_link_trace",
    "state_fidelity",
    "stokes_from_intensities",
    "tagged_fraction",
    "threshold_filter",
]

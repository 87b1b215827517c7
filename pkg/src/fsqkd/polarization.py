"""Stokes-vector algebra for BB84 polarization states.

Polarization is represented by the reduced Stokes vector (S1, S2, S3) on or
inside the Poincare sphere; the intensity component S0 is normalized away.
Pure states sit on the unit sphere, partially polarized states inside it.

Sign conventions (fixed throughout the package):
  * S1 = +1 horizontal, S2 = +1 linear +45 degrees, S3 = +1 right circular.
  * A retarder with fast axis at laboratory angle ``phi`` acts on the sphere
    as a right-handed rotation by its retardance about the equatorial axis
    (cos 2*phi, sin 2*phi, 0).  Consequence: a quarter-wave plate with
    horizontal fast axis maps +45 linear light to right circular (+S3).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import pi

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateState, InvalidState, ZeroIntensityPair

# Numerical slack allowed on the Poincare-sphere radius.
NORM_EPS = 1e-9

# The four BB84 state labels, in canonical order.
STATE_LABELS = ("H", "V", "P45", "M45")

# Measurement axis on the Poincare sphere for the detector of each label.
BASIS_AXES = {
    "H": np.array([1.0, 0.0, 0.0]),
    "V": np.array([-1.0, 0.0, 0.0]),
    "P45": np.array([0.0, 1.0, 0.0]),
    "M45": np.array([0.0, -1.0, 0.0]),
}

# The cross-basis pairs entering the preparation quality.
CROSS_BASIS_PAIRS = (("H", "P45"), ("H", "M45"), ("V", "P45"), ("V", "M45"))

IDEAL_VECTORS = {
    "H": (1.0, 0.0, 0.0),
    "V": (-1.0, 0.0, 0.0),
    "P45": (0.0, 1.0, 0.0),
    "M45": (0.0, -1.0, 0.0),
}


@dataclass(frozen=True)
class StokesVector:
    """Reduced Stokes vector, each component dimensionless in [-1, 1]."""

    s1: float
    s2: float
    s3: float

    def __post_init__(self):
        norm = float(np.sqrt(self.s1**2 + self.s2**2 + self.s3**2))
        if norm > 1.0 + NORM_EPS:
            raise InvalidState(f"Stokes norm {norm!r} exceeds 1 beyond tolerance")

    def as_array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "StokesVector":
        a = np.asarray(arr, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))


def ideal_bb84_set() -> "PreparedStateSet":
    """The four perfectly prepared BB84 states."""
    return PreparedStateSet(
        {k: StokesVector(*v) for k, v in IDEAL_VECTORS.items()}, label="ideal"
    )


@dataclass(frozen=True)
class PreparedStateSet:
    """The four BB84 Stokes vectors, e.g. as emitted or as measured."""

    states: dict[str, StokesVector]
    label: str = ""

    def __post_init__(self):
        if set(self.states) != set(STATE_LABELS):
            raise InvalidState(
                f"state set must contain exactly {STATE_LABELS}, got {sorted(self.states)}"
            )

    def as_matrix(self) -> np.ndarray:
        """4x3 matrix of the states in canonical (H, V, P45, M45) order."""
        return np.stack([self.states[k].as_array() for k in STATE_LABELS])

    @classmethod
    def from_matrix(cls, mat, label: str = "") -> "PreparedStateSet":
        mat = np.asarray(mat, dtype=float)
        states = {k: StokesVector.from_array(mat[i]) for i, k in enumerate(STATE_LABELS)}
        return cls(states, label=label)


@dataclass(frozen=True)
class RetarderSetting:
    """A linear retarder: retardance in radians, fast-axis angle in the lab frame.

    The axis angle is normalized to [0, pi); a retarder is invariant under a
    half-turn of its axis.
    """

    retardance: float
    axis_angle: float

    def __post_init__(self):
        if not 0.0 < self.retardance < 2.0 * pi:
            raise InvalidState(f"retardance {self.retardance!r} outside (0, 2*pi)")
        object.__setattr__(self, "axis_angle", float(self.axis_angle) % pi)


def quarter_wave(axis_angle: float) -> RetarderSetting:
    return RetarderSetting(pi / 2.0, axis_angle)


def half_wave(axis_angle: float) -> RetarderSetting:
    return RetarderSetting(pi, axis_angle)


def stokes_from_intensities(iH, iV, iP45, iM45, iR, iL) -> StokesVector:
    """Reconstruct a Stokes vector from six projective intensity measurements.

    S1 = (I_H - I_V) / (I_H + I_V), and analogously for the +-45 linear and
    the circular basis pairs.  Raises :class:`ZeroIntensityPair` if any basis
    pair carries no intensity.
    """
    vals = [float(x) for x in (iH, iV, iP45, iM45, iR, iL)]
    if any(v < 0 for v in vals):
        raise ZeroIntensityPair("intensities must be non-negative")
    iH, iV, iP45, iM45, iR, iL = vals
    components = []
    for plus, minus, name in ((iH, iV, "H/V"), (iP45, iM45, "+45/-45"), (iR, iL, "R/L")):
        total = plus + minus
        if total <= 0.0:
            raise ZeroIntensityPair(f"basis pair {name} has zero total intensity")
        components.append((plus - minus) / total)
    return StokesVector(*components)


def degree_of_polarization(v: StokesVector) -> float:
    """Euclidean norm of the Stokes vector, clamped to 1 within tolerance."""
    norm = float(np.linalg.norm(v.as_array()))
    if norm > 1.0 + NORM_EPS:
        raise InvalidState(f"Stokes norm {norm!r} exceeds 1 beyond tolerance")
    return min(norm, 1.0)


def state_fidelity(a: StokesVector, b: StokesVector) -> float:
    """Squared overlap of the pure states along the two Stokes directions.

    Both inputs are unit-normalized first; partial polarization is therefore
    ignored here (it enters the error model elsewhere).  For unit vectors the
    overlap is (1 + a.b) / 2.
    """
    va, vb = a.as_array(), b.as_array()
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na < 1e-6 or nb < 1e-6:
        raise DegenerateState("state fidelity undefined for unpolarized input")
    return float((1.0 + va @ vb / (na * nb)) / 2.0)


@dataclass(frozen=True)
class PreparationQuality:
    """Conjugation quality of the four-state set and the pair that limits it."""

    value: float
    worst_pair: tuple[str, str]

    def __float__(self) -> float:
        return self.value


def preparation_quality(state_set: PreparedStateSet) -> PreparationQuality:
    """-log2 of the worst cross-basis overlap; 1.0 for ideally conjugate bases.

    The maximum of |<psi_z|psi_x>|^2 over the four {H,V} x {+45,-45} pairs
    measures how far the two bases are from mutually unbiased; taking -log2
    turns the ideal value 1/2 into quality 1.0.
    """
    fids = {
        pair: state_fidelity(state_set.states[pair[0]], state_set.states[pair[1]])
        for pair in CROSS_BASIS_PAIRS
    }
    worst = max(CROSS_BASIS_PAIRS, key=lambda p: fids[p])
    return PreparationQuality(float(-np.log2(fids[worst])), worst)


def rotation_matrix(setting: RetarderSetting) -> np.ndarray:
    """3x3 Poincare-sphere rotation implemented by a retarder.

    Right-handed rotation by the retardance about (cos 2*phi, sin 2*phi, 0).
    """
    axis = np.array(
        [np.cos(2.0 * setting.axis_angle), np.sin(2.0 * setting.axis_angle), 0.0]
    )
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    d = setting.retardance
    return np.eye(3) + np.sin(d) * k + (1.0 - np.cos(d)) * (k @ k)


def retarder_rotation(setting: RetarderSetting, v: StokesVector) -> StokesVector:
    """Apply one retarder to a Stokes vector; the norm (DOP) is preserved."""
    return StokesVector.from_array(rotation_matrix(setting) @ v.as_array())


def compose_stack(settings) -> np.ndarray:
    """Net rotation of a retarder stack, listed in the order light traverses it."""
    mat = np.eye(3)
    for s in settings:
        mat = rotation_matrix(s) @ mat
    return mat


def transform_state_set(matrix, state_set: PreparedStateSet, label: str = "") -> PreparedStateSet:
    mat = np.asarray(matrix, dtype=float)
    return PreparedStateSet.from_matrix(
        state_set.as_matrix() @ mat.T, label=label or state_set.label
    )


def intrinsic_qber(state_set: PreparedStateSet) -> float:
    """Mean own-basis error probability of the four states.

    For a state with (un-normalized) Stokes vector v analyzed in its own
    basis with detector axis a, the wrong detector fires with probability
    (1 - v.a)/2.  Using the un-normalized vector makes partial polarization
    contribute to the error, as it does physically.
    """
    errs = [
        (1.0 - state_set.states[k].as_array() @ BASIS_AXES[k]) / 2.0
        for k in STATE_LABELS
    ]
    return float(np.mean(errs))


@dataclass(frozen=True)
class CompensationResult:
    """Optimal quarter/quarter/half-wave stack and its residual error."""

    settings: tuple[RetarderSetting, RetarderSetting, RetarderSetting]
    residual_qber: float
    matrix: np.ndarray


# 2-degree coarse grid; the objective is smooth and low-dimensional, so a
# global grid followed by a local polish avoids local minima.
_GRID = np.deg2rad(np.arange(0.0, 180.0, 2.0))


def _stack_matrix(angles: np.ndarray) -> np.ndarray:
    q1 = rotation_matrix(RetarderSetting(pi / 2.0, angles[0]))
    q2 = rotation_matrix(RetarderSetting(pi / 2.0, angles[1]))
    h = rotation_matrix(RetarderSetting(pi, angles[2]))
    return h @ q2 @ q1


def optimize_compensation(measured: PreparedStateSet) -> CompensationResult:
    """Find waveplate angles minimizing the intrinsic QBER of the set.

    The stack is quarter-wave, quarter-wave, half-wave in traversal order,
    which spans all proper Poincare-sphere rotations.  The intrinsic QBER of
    the rotated set is linear in the rotation matrix M:

        qber(M) = 1/2 - tr(M K) / 8,   K = sum_i v_i a_i^T,

    so the grid stage reduces to a cheap tensor contraction; the best cell is
    then refined with a derivative-free local search.  Fully deterministic.
    """
    for k in STATE_LABELS:
        if np.linalg.norm(measured.states[k].as_array()) < 1e-6:
            raise DegenerateState(f"state {k} is unpolarized; cannot compensate")

    vs = measured.as_matrix()
    axes = np.stack([BASIS_AXES[k] for k in STATE_LABELS])
    kmat = vs.T @ axes  # sum_i v_i a_i^T

    qmats = np.stack([rotation_matrix(RetarderSetting(pi / 2.0, a)) for a in _GRID])
    hmats = np.stack([rotation_matrix(RetarderSetting(pi, a)) for a in _GRID])
    t1 = np.einsum("aij,jk->aik", qmats, kmat)
    t2 = np.einsum("bij,ajk->baik", qmats, t1)
    gain = np.einsum("cij,baji->cba", hmats, t2)
    ci, bi, ai = np.unravel_index(int(np.argmax(gain)), gain.shape)
    x0 = np.array([_GRID[ai], _GRID[bi], _GRID[ci]])

    def objective(x):
        return 0.5 - np.trace(_stack_matrix(x) @ kmat) / 8.0

    res = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000, "maxfev": 8000},
    )
    angles = res.x
    settings = (
        RetarderSetting(pi / 2.0, angles[0]),
        RetarderSetting(pi / 2.0, angles[1]),
        RetarderSetting(pi, angles[2]),
    )
    matrix = compose_stack(settings)
    residual = intrinsic_qber(transform_state_set(matrix, measured))
    return CompensationResult(settings, float(max(residual, 0.0)), matrix)


def load_state_set(path, label: str = "") -> PreparedStateSet:
    """Load a state set from a JSON file.

    Expected layout::

        {"H": [s1, s2, s3], "V": [...], "P45": [...], "M45": [...],
         "dop_override": 0.99}       # optional

    ``dop_override`` rescales every vector to the given norm, preserving the
    direction (used when the file stores directions inferred at unit DOP).
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    dop_override = data.pop("dop_override", None)
    missing = set(STATE_LABELS) - set(data)
    if missing:
        raise InvalidState(f"state-set file missing keys: {sorted(missing)}")
    extra = set(data) - set(STATE_LABELS)
    if extra:
        raise InvalidState(f"state-set file has unknown keys: {sorted(extra)}")
    mat = np.array([data[k] for k in STATE_LABELS], dtype=float)
    if mat.shape != (4, 3):
        raise InvalidState("each state must be a triple of reals")
    if dop_override is not None:
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise DegenerateState("cannot rescale an unpolarized state")
        mat = mat / norms * float(dop_override)
    return PreparedStateSet.from_matrix(mat, label=label)


def save_state_set(state_set: PreparedStateSet, path) -> None:
    data = {k: list(state_set.states[k].as_array()) for k in STATE_LABELS}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")

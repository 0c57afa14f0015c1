"""Point-source scene simulation and intensity-only measurements."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import InvalidInputError
from app.services.array_model import ApertureGeometry

LOGGER = logging.getLogger(__name__)

PLANCK_CONSTANT = 6.62607015e-34  # J/Hz
MM_TO_M = 1e-3

Vector3 = Tuple[float, float, float]


# ---------------------------------------------------------------------------
# Scene description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Source:
    """Narrowband point source; position in millimeters, power in dB."""

    position_mm: Vector3
    power_db: float

    def __post_init__(self) -> None:
        if len(self.position_mm) != 3 or not all(math.isfinite(c) for c in self.position_mm):
            raise InvalidInputError(f"Source position {self.position_mm!r} must be three finite numbers")
        if not math.isfinite(self.power_db):
            raise InvalidInputError("Source power must be finite")

    @property
    def position_m(self) -> np.ndarray:
        return np.asarray(self.position_mm, dtype=float) * MM_TO_M

    @property
    def power_linear(self) -> float:
        return 10.0 ** (self.power_db / 10.0)


@dataclass(frozen=True)
class ApertureEmbedding:
    """Scene-frame unit vectors of the aperture's x and y axes and its boresight.

    The defaults put the aperture in the X-Z plane looking along +Y with its
    axes oriented so that a source at scene position (X, Y, Z) and range r
    beamforms at (u, v) = (X / r, Z / r) under the e^{+jkd} propagation phase.
    """

    x_axis: Vector3 = (-1.0, 0.0, 0.0)
    y_axis: Vector3 = (0.0, 0.0, -1.0)
    boresight: Vector3 = (0.0, 1.0, 0.0)

    def __post_init__(self) -> None:
        basis = np.array([self.x_axis, self.y_axis, self.boresight], dtype=float)
        if basis.shape != (3, 3) or not np.allclose(basis @ basis.T, np.eye(3), atol=1e-9):
            raise InvalidInputError("Aperture embedding axes must be orthonormal")

    def to_scene(self, positions: np.ndarray) -> np.ndarray:
        """Map (N, 2) aperture coordinates to (N, 3) scene coordinates in meters."""

        return np.outer(positions[:, 0], self.x_axis) + np.outer(positions[:, 1], self.y_axis)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian noise on intensity; sigma = 0 disables it."""

    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise InvalidInputError("Noise sigma must be a finite value >= 0")


@dataclass(frozen=True)
class Scenario:
    sources: Sequence[Source]
    geometry: ApertureGeometry
    embedding: ApertureEmbedding = field(default_factory=ApertureEmbedding)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self) -> None:
        if len(self.sources) < 1:
            raise InvalidInputError("Scenario needs at least one source")


@dataclass(frozen=True)
class Measurements:
    """Probe readings. ``b_true`` is kept for evaluation only."""

    b_true: np.ndarray
    intensity: np.ndarray
    magnitude: np.ndarray

    @classmethod
    def from_intensity(
        cls, intensity: Sequence[float], b_true: Optional[np.ndarray] = None
    ) -> "Measurements":
        values = np.asarray(intensity, dtype=float)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise InvalidInputError("Intensities must be a finite 1-D vector")
        if np.any(values < 0):
            raise InvalidInputError("Intensities must be non-negative")
        truth = np.full(values.shape, np.nan + 0j) if b_true is None else np.asarray(b_true, complex)
        return cls(b_true=truth, intensity=values, magnitude=np.sqrt(values))

    @property
    def size(self) -> int:
        return int(self.intensity.shape[0])

    @property
    def has_truth(self) -> bool:
        return bool(np.all(np.isfinite(self.b_true)))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def intensity_from_field(b: np.ndarray) -> np.ndarray:
    """Elementwise squared modulus."""

    b = np.asarray(b, dtype=complex)
    return (b.real * b.real + b.imag * b.imag).astype(float)


def source_direction(scenario: Scenario, source: Source) -> Tuple[float, float]:
    """Sine-space (u, v) at which ``source`` appears to the conventional beamformer."""

    position = source.position_m
    r = float(np.linalg.norm(position))
    if r == 0.0:
        raise InvalidInputError("Source located at the aperture origin has no direction")
    unit = position / r
    emb = scenario.embedding
    return (-float(unit @ np.asarray(emb.x_axis)), -float(unit @ np.asarray(emb.y_axis)))


def simulate_received(scenario: Scenario) -> Measurements:
    """Spherical-wave field y_m = sum_k sqrt(P_k) exp(j 2pi/lambda d_km) and its intensities."""

    geom = scenario.geometry
    elements = scenario.embedding.to_scene(geom.positions)
    field_values = np.zeros(geom.num_elements, dtype=complex)
    for source in scenario.sources:
        distances = np.linalg.norm(elements - source.position_m[None, :], axis=1)
        if np.any(distances == 0.0):
            raise InvalidInputError(
                f"Source at {source.position_mm} mm coincides with an aperture element"
            )
        field_values += math.sqrt(source.power_linear) * np.exp(1j * geom.wavenumber * distances)

    intensity = intensity_from_field(field_values)
    noise = scenario.noise
    if noise.sigma > 0:
        rng = np.random.default_rng(noise.seed)
        intensity = np.maximum(intensity + rng.normal(scale=noise.sigma, size=intensity.shape), 0.0)
        LOGGER.info("Added intensity noise sigma=%s seed=%s", noise.sigma, noise.seed)

    return Measurements(b_true=field_values, intensity=intensity, magnitude=np.sqrt(intensity))


# ---------------------------------------------------------------------------
# Autler-Townes splitting <-> field strength
# ---------------------------------------------------------------------------


def dipole_ratio_from_moment(dipole_moment_cm: float) -> float:
    """Transition dipole moment (C*m) expressed as splitting per field, Hz/(V/m)."""

    if not dipole_moment_cm > 0:
        raise InvalidInputError("Dipole moment must be positive")
    return dipole_moment_cm / PLANCK_CONSTANT


def at_splitting_to_field(delta_f: float, dipole_over_h: float) -> float:
    """|E_RF| in V/m from an Autler-Townes splitting in Hz."""

    if not dipole_over_h > 0:
        raise InvalidInputError("dipole_over_h must be positive")
    if not delta_f >= 0:
        raise InvalidInputError("Splitting must be non-negative")
    return delta_f / dipole_over_h


def field_to_splitting(field_strength: float, dipole_over_h: float) -> float:
    """Inverse of :func:`at_splitting_to_field`."""

    if not dipole_over_h > 0:
        raise InvalidInputError("dipole_over_h must be positive")
    if not field_strength >= 0:
        raise InvalidInputError("Field strength must be non-negative")
    return field_strength * dipole_over_h


def reference_sources() -> List[Source]:
    """The two-source scene of the bundled reproduction config."""

    return [
        Source(position_mm=(-1663.0, 3155.0, 2870.0), power_db=10.0),
        Source(position_mm=(1301.0, 2878.0, 0.0), power_db=8.0),
    ]

"""Phase-randomized weak-coherent time-bin sources and fiber loss.

Each arm is a pair of coherent-state amplitudes, one per time bin, as they
arrive at the beam splitter.  The attenuator setting is folded into the chosen
intensity, so the only channel effect is the fiber transmittance.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .config import Basis

TWO_PI = 2.0 * math.pi


def arm_transmittance(length_km: float, attenuation_db_per_km: float) -> float:
    if length_km < 0 or attenuation_db_per_km < 0:
        raise ValueError("fiber length and attenuation must be >= 0")
    return 10.0 ** (-attenuation_db_per_km * length_km / 10.0)


@dataclass(frozen=True)
class ArmState:
    amp_bin0: complex
    amp_bin1: complex
    global_phase: float

    @property
    def mean_photons(self) -> float:
        return abs(self.amp_bin0) ** 2 + abs(self.amp_bin1) ** 2

    def phased(self) -> tuple[complex, complex]:
        """Bin amplitudes with the global phase applied."""
        rot = cmath.exp(1j * self.global_phase)
        return self.amp_bin0 * rot, self.amp_bin1 * rot


def encode_pulse(intensity: float, basis: Basis, bit: int, transmittance: float,
                 rng) -> ArmState:
    """Encode one time-bin qubit and attenuate it by ``transmittance``.

    ``rng`` is anything with a ``random()`` method returning a uniform on
    [0, 1); one draw is consumed for the global phase.
    """
    if intensity < 0:
        raise ValueError("intensity must be >= 0")
    phase = TWO_PI * rng.random()
    mean = transmittance * intensity
    if basis == Basis.Z:
        amp = math.sqrt(mean)
        return ArmState(complex(amp if bit == 0 else 0.0),
                        complex(amp if bit == 1 else 0.0), phase)
    half = math.sqrt(mean / 2.0)
    return ArmState(complex(half), complex(-half if bit else half), phase)


def encode_arrays(mean: np.ndarray, is_x: np.ndarray, bit: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized encoding of real bin amplitudes before the global phase.

    ``mean`` is the arriving mean photon number ``τ·I`` per round.
    """
    root = np.sqrt(mean)
    half = root * math.sqrt(0.5)
    bin0 = np.where(is_x, half, np.where(bit == 0, root, 0.0))
    bin1 = np.where(is_x, np.where(bit == 0, half, -half), np.where(bit == 1, root, 0.0))
    return bin0, bin1

"""Beam-splitter interference, threshold detection and round simulation.

Click flags are always ordered (D1@t0, D1@t1, D2@t0, D2@t1).  A round is
accepted by the relay when exactly two detectors fire in different time bins:
D1@t0 with D2@t1, or D1@t1 with D2@t0.
"""
from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .config import Basis, ExperimentConfig, PulsePairOutcome
from .rng import round_seeds, slot_uniform_pair
from .source import TWO_PI, ArmState, arm_transmittance, encode_arrays

SQRT_HALF = math.sqrt(0.5)
ENERGY_TOL = 1e-12

ACCEPTED_PATTERNS = ((True, False, False, True), (False, True, True, False))
ALL_PATTERNS = tuple(itertools.product((False, True), repeat=4))


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float
    dark_count_prob: float
    misalignment: float = 0.0

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> DetectorModel:
        return cls(cfg.detector_efficiency, cfg.dark_count_prob_per_gate, cfg.misalignment)


@dataclass(frozen=True)
class BsmOutputs:
    """Output amplitudes: ``d1[b]`` and ``d2[b]`` for time bin ``b``."""

    d1: tuple[complex, complex]
    d2: tuple[complex, complex]

    def mean_photons(self) -> tuple[float, float, float, float]:
        return (abs(self.d1[0]) ** 2, abs(self.d1[1]) ** 2,
                abs(self.d2[0]) ** 2, abs(self.d2[1]) ** 2)


def misaligned(bob: ArmState, phase: float) -> ArmState:
    """Bob's state after a stray relative phase on his second time bin."""
    return ArmState(bob.amp_bin0, bob.amp_bin1 * cmath.exp(1j * phase), bob.global_phase)


def interfere(alice: ArmState, bob: ArmState) -> BsmOutputs:
    a = alice.phased()
    b = bob.phased()
    d1 = tuple((a[k] + b[k]) * SQRT_HALF for k in range(2))
    d2 = tuple((a[k] - b[k]) * SQRT_HALF for k in range(2))
    for k in range(2):
        before = abs(a[k]) ** 2 + abs(b[k]) ** 2
        after = abs(d1[k]) ** 2 + abs(d2[k]) ** 2
        assert abs(after - before) <= ENERGY_TOL * max(1.0, before), "beam splitter lost energy"
    return BsmOutputs(d1, d2)


def click_probability(mean_photons, efficiency: float, dark_count_prob: float):
    """Threshold-detector click probability ``1 - (1 - p_d) exp(-η m)``.

    Works on scalars and arrays.
    """
    return -np.expm1(np.log1p(-dark_count_prob) - efficiency * np.asarray(mean_photons))


def pattern_probabilities(mean_photons, efficiency: float, dark_count_prob: float
                          ) -> dict[tuple[bool, ...], float]:
    """Probability of each of the 16 click patterns for four output modes.

    Coherent output modes are independent, so the pattern probability is a
    product over modes.
    """
    p = [float(click_probability(m, efficiency, dark_count_prob)) for m in mean_photons]
    return {
        pattern: math.prod(pk if c else 1.0 - pk for pk, c in zip(p, pattern))
        for pattern in ALL_PATTERNS
    }


def detect(outputs: BsmOutputs, model: DetectorModel, rng) -> tuple[bool, bool, bool, bool]:
    """Independent threshold clicks per detector and bin; one draw per mode."""
    log_dark = math.log1p(-model.dark_count_prob)
    return tuple(rng.random() < -math.expm1(log_dark - model.efficiency * m)
                 for m in outputs.mean_photons())


def is_accepted_pattern(clicks) -> bool:
    return tuple(bool(c) for c in clicks) in ACCEPTED_PATTERNS


@dataclass(frozen=True)
class RoundBatch:
    """Struct-of-arrays record of consecutive rounds ``start .. start+len-1``."""

    start: int
    intensity_index_alice: np.ndarray
    intensity_index_bob: np.ndarray
    basis_alice: np.ndarray
    basis_bob: np.ndarray
    bit_alice: np.ndarray
    bit_bob: np.ndarray
    clicks: np.ndarray  # (n, 4) bool
    phase_alice: np.ndarray
    phase_bob: np.ndarray
    arriving_alice: np.ndarray  # mean photons at the beam splitter
    arriving_bob: np.ndarray

    def __len__(self) -> int:
        return len(self.bit_alice)

    def outcome(self, i: int) -> PulsePairOutcome:
        return PulsePairOutcome(
            int(self.intensity_index_alice[i]), int(self.intensity_index_bob[i]),
            Basis(int(self.basis_alice[i])), Basis(int(self.basis_bob[i])),
            int(self.bit_alice[i]), int(self.bit_bob[i]),
            tuple(bool(c) for c in self.clicks[i]),
        )


def _choose(u: np.ndarray, probs) -> np.ndarray:
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    return np.minimum(np.searchsorted(cum, u, side="right"), len(probs) - 1).astype(np.int8)


def simulate_rounds(cfg: ExperimentConfig, start: int, stop: int) -> RoundBatch:
    """Simulate rounds ``start <= i < stop``; results depend only on (seed, i).

    Hash slots: 0 intensities, 1 bases, 2 bits, 3 global phases,
    4 misalignment flag and phase, 5-6 the four click draws.
    """
    seeds = round_seeds(cfg.seed, start, stop)
    u_ia, u_ib = slot_uniform_pair(seeds, 0)
    u_basis_a, u_basis_b = slot_uniform_pair(seeds, 1)
    u_bit_a, u_bit_b = slot_uniform_pair(seeds, 2)
    u_ph_a, u_ph_b = slot_uniform_pair(seeds, 3)
    u_mis, u_mis_ph = slot_uniform_pair(seeds, 4)
    u_c0, u_c1 = slot_uniform_pair(seeds, 5)
    u_c2, u_c3 = slot_uniform_pair(seeds, 6)

    ia = _choose(u_ia, cfg.intensity_probs_alice)
    ib = _choose(u_ib, cfg.intensity_probs_bob)
    basis_a = (u_basis_a >= cfg.basis_prob_z).astype(np.int8)
    basis_b = (u_basis_b >= cfg.basis_prob_z).astype(np.int8)
    bit_a = (u_bit_a >= 0.5).astype(np.int8)
    bit_b = (u_bit_b >= 0.5).astype(np.int8)
    phase_a = TWO_PI * u_ph_a
    phase_b = TWO_PI * u_ph_b

    tau_a = arm_transmittance(cfg.fiber_length_km_alice, cfg.attenuation_db_per_km)
    tau_b = arm_transmittance(cfg.fiber_length_km_bob, cfg.attenuation_db_per_km)
    mean_a = tau_a * np.asarray(cfg.intensities_alice, dtype=float)[ia]
    mean_b = tau_b * np.asarray(cfg.intensities_bob, dtype=float)[ib]
    a0, a1 = encode_arrays(mean_a, basis_a == Basis.X, bit_a)
    b0, b1 = encode_arrays(mean_b, basis_b == Basis.X, bit_b)

    # Amplitudes are real up to phases, so the cross term is a cosine.
    delta = phase_a - phase_b
    stray = np.where(u_mis < cfg.misalignment, TWO_PI * u_mis_ph, 0.0)
    cross0 = 2.0 * a0 * b0 * np.cos(delta)
    cross1 = 2.0 * a1 * b1 * np.cos(delta - stray)
    sum0 = a0 * a0 + b0 * b0
    sum1 = a1 * a1 + b1 * b1
    eta, pd = cfg.detector_efficiency, cfg.dark_count_prob_per_gate
    clicks = np.empty((len(seeds), 4), dtype=bool)
    clicks[:, 0] = u_c0 < click_probability(0.5 * (sum0 + cross0), eta, pd)
    clicks[:, 1] = u_c1 < click_probability(0.5 * (sum1 + cross1), eta, pd)
    clicks[:, 2] = u_c2 < click_probability(0.5 * (sum0 - cross0), eta, pd)
    clicks[:, 3] = u_c3 < click_probability(0.5 * (sum1 - cross1), eta, pd)
    return RoundBatch(start, ia, ib, basis_a, basis_b, bit_a, bit_b, clicks,
                      phase_a, phase_b, mean_a, mean_b)


def simulate_round(cfg: ExperimentConfig, round_index: int) -> PulsePairOutcome:
    return simulate_rounds(cfg, round_index, round_index + 1).outcome(0)

"""Expected gains and error rates without sampling, and e_d calibration.

Acceptance and error probabilities are averaged over bit values, the relative
global phase (uniform) and, for misaligned rounds, the stray phase on Bob's
second time bin.  Phase averages use the periodic trapezoid rule, which is
spectrally accurate for these smooth integrands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bsm import click_probability
from .config import N_INTENSITIES, Basis, ExperimentConfig
from .source import TWO_PI, arm_transmittance
from .tally import CellRates

DEFAULT_PHASE_POINTS = 128


def _accept_prob(a0, a1, b0, b1, cos0, cos1, eta, pd):
    c = [
        click_probability(0.5 * (a0 * a0 + b0 * b0 + 2 * a0 * b0 * cos0), eta, pd),
        click_probability(0.5 * (a1 * a1 + b1 * b1 + 2 * a1 * b1 * cos1), eta, pd),
        click_probability(0.5 * (a0 * a0 + b0 * b0 - 2 * a0 * b0 * cos0), eta, pd),
        click_probability(0.5 * (a1 * a1 + b1 * b1 - 2 * a1 * b1 * cos1), eta, pd),
    ]
    return (c[0] * (1 - c[1]) * (1 - c[2]) * c[3]) + ((1 - c[0]) * c[1] * c[2] * (1 - c[3]))


def _amplitudes(mean: float, basis: Basis, bit: int) -> tuple[float, float]:
    root = math.sqrt(mean)
    if basis == Basis.Z:
        return (root, 0.0) if bit == 0 else (0.0, root)
    half = root * math.sqrt(0.5)
    return half, (-half if bit else half)


def cell_probabilities(mean_a: float, mean_b: float, basis: Basis, eta: float, pd: float,
                       misalignment: float, points: int = DEFAULT_PHASE_POINTS
                       ) -> tuple[float, float]:
    """Expected ``(gain, error gain)`` for one setting with matching bases.

    ``mean_a`` and ``mean_b`` are photon numbers arriving at the beam splitter.
    """
    delta = TWO_PI * np.arange(points) / points
    stray = delta[None, :]
    d = delta[:, None]
    gain = 0.0
    err = 0.0
    for bit_a in (0, 1):
        for bit_b in (0, 1):
            a0, a1 = _amplitudes(mean_a, basis, bit_a)
            b0, b1 = _amplitudes(mean_b, basis, bit_b)
            aligned = _accept_prob(a0, a1, b0, b1, np.cos(delta), np.cos(delta), eta, pd).mean()
            if misalignment > 0:
                tilted = _accept_prob(a0, a1, b0, b1, np.cos(d), np.cos(d - stray), eta, pd).mean()
            else:
                tilted = 0.0
            p = (1 - misalignment) * aligned + misalignment * tilted
            gain += 0.25 * p
            if bit_a == bit_b:
                err += 0.25 * p
    return float(gain), float(err)


@dataclass(frozen=True)
class ExpectedTable:
    """Expected per-cell probabilities and sent counts, shaped (4, 4, 2)."""

    gain: np.ndarray
    error_gain: np.ndarray
    sent: np.ndarray

    def rates(self) -> CellRates:
        """Noise-free rates with binomial deviations at the expected counts."""
        Q = self.gain
        EQ = self.error_gain
        sent = self.sent
        with np.errstate(divide="ignore", invalid="ignore"):
            E = np.where(Q > 0, EQ / Q, 0.0)
            sigma_Q = np.sqrt(Q * (1 - Q) / sent)
            acc = Q * sent
            sigma_E = np.where(acc > 0, np.sqrt(E * (1 - E) / acc), 0.0)
            sigma_EQ = np.sqrt(EQ * (1 - EQ) / sent)
        empty = sent == 0
        return CellRates(Q, E, sigma_Q, sigma_E, sigma_EQ, empty, ~empty & (Q == 0), sent)


def expected_table(cfg: ExperimentConfig, points: int = DEFAULT_PHASE_POINTS) -> ExpectedTable:
    tau_a = arm_transmittance(cfg.fiber_length_km_alice, cfg.attenuation_db_per_km)
    tau_b = arm_transmittance(cfg.fiber_length_km_bob, cfg.attenuation_db_per_km)
    shape = (N_INTENSITIES, N_INTENSITIES, 2)
    gain = np.zeros(shape)
    error_gain = np.zeros(shape)
    sent = np.zeros(shape)
    pz = cfg.basis_prob_z
    basis_prob = {Basis.Z: pz * pz, Basis.X: (1 - pz) * (1 - pz)}
    for k, mu in enumerate(cfg.intensities_alice):
        for l, nu in enumerate(cfg.intensities_bob):
            for basis in Basis:
                g, e = cell_probabilities(tau_a * mu, tau_b * nu, basis, cfg.detector_efficiency,
                                          cfg.dark_count_prob_per_gate, cfg.misalignment, points)
                gain[k, l, basis] = g
                error_gain[k, l, basis] = e
                sent[k, l, basis] = (cfg.pulse_pairs * cfg.intensity_probs_alice[k]
                                     * cfg.intensity_probs_bob[l] * basis_prob[basis])
    return ExpectedTable(gain, error_gain, sent)


def expected_e11_upper(cfg: ExperimentConfig) -> float:
    from .decoy import estimate

    return estimate(expected_table(cfg).rates(), cfg).e11_upper


def calibrate_misalignment(cfg: ExperimentConfig, target_e11: float = 0.246,
                           tol: float = 1e-4, max_iter: int = 40) -> float:
    """Misalignment whose noise-free expected tables give ``e11_upper == target``.

    Bisection over [0, 0.5]; the bound grows with e_d.  Raises ``ValueError``
    when the target lies outside the bracket.
    """
    lo, hi = 0.0, 0.5
    f_lo = expected_e11_upper(cfg.replace(misalignment=lo)) - target_e11
    f_hi = expected_e11_upper(cfg.replace(misalignment=hi)) - target_e11
    if f_lo > 0:
        raise ValueError(f"e11 bound already {f_lo + target_e11:.4f} at zero misalignment")
    if f_hi < 0:
        raise ValueError(f"e11 bound only {f_hi + target_e11:.4f} at maximal misalignment")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = expected_e11_upper(cfg.replace(misalignment=mid)) - target_e11
        if abs(f_mid) <= tol:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)

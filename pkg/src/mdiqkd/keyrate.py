"""Secure key rate from Z-basis tallies and decoy bounds.

Every intensity pair (k, l) contributes its own positive part::

    R_kl = w_kl * max(Q11_kl (1 - H(e11)) - Q_kl f H(E_kl), 0)

where ``w_kl`` is the fraction of all rounds that were (k, l) with both
parties in Z, so the total is in bits per sent pulse pair.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .config import N_INTENSITIES, Basis
from .decoy import DecoyEstimate
from .tally import SENT, TallyTable, rates


def binary_entropy(e: float) -> float:
    if not 0.0 <= e <= 1.0:
        raise ValueError(f"binary entropy is defined on [0, 1], got {e!r}")
    if e == 0.0 or e == 1.0:
        return 0.0
    return -e * math.log2(e) - (1.0 - e) * math.log2(1.0 - e)


def q11_gain(mu: float, nu: float, y11: float) -> float:
    """Gain of rounds where both sources emitted exactly one photon."""
    return mu * nu * math.exp(-mu - nu) * y11


@dataclass(frozen=True)
class KeyRateReport:
    contributions: np.ndarray  # (4, 4) bits per sent pulse pair
    i_ec: np.ndarray  # (4, 4) error-correction cost per pulse of that setting
    q11: np.ndarray  # (4, 4)
    weights: np.ndarray  # (4, 4) fraction of rounds that are (k, l) in Z
    total_bits_per_pulse: float
    bits_per_second: float
    total_bits: float
    e11_used: float
    y11_used: float
    ec_efficiency: float
    empty_cells: tuple[tuple[int, int], ...] = ()

    def to_dict(self) -> dict:
        return {
            "contributions": self.contributions.tolist(),
            "i_ec": self.i_ec.tolist(),
            "q11": self.q11.tolist(),
            "weights": self.weights.tolist(),
            "total_bits_per_pulse": self.total_bits_per_pulse,
            "bits_per_second": self.bits_per_second,
            "total_bits": self.total_bits,
            "e11_used": self.e11_used,
            "y11_used": self.y11_used,
            "ec_efficiency": self.ec_efficiency,
            "empty_cells": [list(c) for c in self.empty_cells],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        lines = [
            f"total key rate      {self.total_bits_per_pulse:.6e} bits/pulse",
            f"key rate            {self.bits_per_second:.6e} bits/s",
            f"run total           {self.total_bits:.6e} bits",
            f"y11 (lower)         {self.y11_used:.6e}",
            f"e11 (upper)         {self.e11_used:.6f}",
            f"ec efficiency f     {self.ec_efficiency:g}",
            "",
            f"{'k':>2} {'l':>2} {'weight':>10} {'Q11':>12} {'I_ec':>12} {'R_kl':>12}",
        ]
        for k in range(N_INTENSITIES):
            for l in range(N_INTENSITIES):
                lines.append(f"{k:>2} {l:>2} {self.weights[k, l]:>10.5f} {self.q11[k, l]:>12.4e} "
                             f"{self.i_ec[k, l]:>12.4e} {self.contributions[k, l]:>12.4e}")
        if self.empty_cells:
            lines.append("empty cells (contribute 0): "
                         + ", ".join(f"({k},{l})" for k, l in self.empty_cells))
        return "\n".join(lines) + "\n"


def key_rate(table: TallyTable, estimate: DecoyEstimate, mu, nu, ec_efficiency: float,
             total_rounds: int | None = None, repetition_rate_hz: float = 1.0) -> KeyRateReport:
    """Evaluate the key rate; phase error bounds above 1/2 are capped at 1/2."""
    total = table.total_rounds if total_rounds is None else total_rounds
    r = rates(table)
    z = int(Basis.Z)
    e11 = estimate.e11_upper
    privacy = 1.0 - binary_entropy(min(e11, 0.5))
    contributions = np.zeros((N_INTENSITIES, N_INTENSITIES))
    i_ec = np.zeros_like(contributions)
    q11 = np.zeros_like(contributions)
    weights = np.zeros_like(contributions)
    empty = []
    for k in range(N_INTENSITIES):
        for l in range(N_INTENSITIES):
            sent = int(table.counts[k, l, z, SENT])
            if sent == 0:
                empty.append((k, l))
                continue
            weights[k, l] = sent / total if total else 0.0
            q11[k, l] = q11_gain(mu[k], nu[l], estimate.y11_lower)
            i_ec[k, l] = r.Q[k, l, z] * ec_efficiency * binary_entropy(float(r.E[k, l, z]))
            contributions[k, l] = weights[k, l] * max(q11[k, l] * privacy - i_ec[k, l], 0.0)
    per_pulse = float(contributions.sum())
    return KeyRateReport(
        contributions=contributions, i_ec=i_ec, q11=q11, weights=weights,
        total_bits_per_pulse=per_pulse,
        bits_per_second=per_pulse * repetition_rate_hz,
        total_bits=per_pulse * total,
        e11_used=e11, y11_used=estimate.y11_lower, ec_efficiency=ec_efficiency,
        empty_cells=tuple(empty),
    )

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdiqkd.bsm import simulate_rounds
from mdiqkd.config import Basis, PulsePairOutcome
from mdiqkd.tally import (
    ACCEPTED,
    ERRORS,
    SENT,
    TallyFormatError,
    TallyTable,
    accumulate,
    from_csv,
    rates,
    sift,
    tally_batch,
    to_csv,
)

D1T0_D2T1 = (True, False, False, True)


def _outcome(ba, bb, bits, clicks, k=1, l=1):
    return PulsePairOutcome(k, l, ba, bb, bits[0], bits[1], clicks)


def test_basis_mismatch_never_accepted():
    for clicks in [D1T0_D2T1, (True,) * 4, (False,) * 4]:
        assert sift(_outcome(Basis.Z, Basis.X, (0, 1), clicks)) == (False, False)


def test_z_complementary_bits_no_error():
    assert sift(_outcome(Basis.Z, Basis.Z, (0, 1), D1T0_D2T1)) == (True, False)
    assert sift(_outcome(Basis.Z, Basis.Z, (1, 1), D1T0_D2T1)) == (True, True)


def test_single_click_not_accepted():
    assert sift(_outcome(Basis.X, Basis.X, (0, 0), (True, False, False, False))) == (False, False)


def test_empty_stream():
    assert accumulate([]) == TallyTable.empty()
    assert TallyTable.empty().total_rounds == 0


def _random_table(rng):
    counts = rng.integers(0, 1000, size=(4, 4, 2, 3))
    counts[..., ACCEPTED] = np.minimum(counts[..., ACCEPTED], counts[..., SENT])
    counts[..., ERRORS] = np.minimum(counts[..., ERRORS], counts[..., ACCEPTED])
    return TallyTable(counts, rng.integers(0, 1000, size=(4, 4)))


def test_merge_commutes_and_adds():
    rng = np.random.default_rng(0)
    a, b = _random_table(rng), _random_table(rng)
    assert a.merge(b) == b.merge(a)
    assert (a + b).total_rounds == a.total_rounds + b.total_rounds


def test_tables_are_immutable():
    t = TallyTable.empty()
    with pytest.raises(ValueError):
        t.counts[0, 0, 0, 0] = 1


@settings(max_examples=25, deadline=None)
@given(cuts=st.lists(st.integers(min_value=1, max_value=29_999), max_size=6))
def test_partition_merge_equivalence(bright_cfg, cuts):
    whole = tally_batch(simulate_rounds(bright_cfg, 0, 30_000))
    edges = [0, *sorted(set(cuts)), 30_000]
    parts = [tally_batch(simulate_rounds(bright_cfg, a, b)) for a, b in zip(edges[:-1], edges[1:])]
    merged = TallyTable.empty()
    for p in reversed(parts):
        merged = merged + p
    assert merged == whole
    assert whole.total_rounds == 30_000


def test_dark_coincidences(preset_cfg):
    pd = 5e-4
    cfg = preset_cfg.replace(intensities_alice=(0.0,) * 4, intensities_bob=(0.0,) * 4,
                            dark_count_prob_per_gate=pd, basis_prob_z=1.0)
    n = 1_000_000
    table = tally_batch(simulate_rounds(cfg, 0, n))
    p = 2 * pd ** 2 * (1 - pd) ** 2
    accepted = int(table.counts[..., ACCEPTED].sum())
    assert abs(accepted - n * p) <= 3 * math.sqrt(n * p * (1 - p))


def test_rate_definitions():
    counts = np.zeros((4, 4, 2, 3), np.int64)
    counts[2, 3, 0] = (1_000_000, 1_000, 10)
    counts[..., SENT] = np.maximum(counts[..., SENT], 1)
    r = rates(TallyTable(counts, np.zeros((4, 4), np.int64)))
    assert r.Q[2, 3, 0] == pytest.approx(1e-3, rel=1e-15)
    assert r.E[2, 3, 0] == pytest.approx(1e-2, rel=1e-15)
    assert r.sigma_Q[2, 3, 0] == pytest.approx(3.16e-5, rel=1e-3)
    assert r.sigma_Q[2, 3, 0] == pytest.approx(math.sqrt(1e-3 * (1 - 1e-3) / 1e6), rel=1e-12)


def test_rates_bounded(bright_cfg):
    r = rates(tally_batch(simulate_rounds(bright_cfg, 0, 50_000)))
    assert np.all((r.Q >= 0) & (r.Q <= 1))
    assert np.all((r.E >= 0) & (r.E <= 1))


def test_z_errors_small_at_preset_parameters(preset_cfg):
    from mdiqkd.analytic import expected_table

    exp = expected_table(preset_cfg)
    E = exp.error_gain[1:, 1:, 0] / exp.gain[1:, 1:, 0]
    assert E.max() < 0.005


def test_loss_lowers_every_nonvacuum_gain(preset_cfg):
    n = 10_000_000
    base = preset_cfg.replace(intensities_alice=(0.0, 0.3, 0.5, 0.8),
                             intensities_bob=(0.0, 0.3, 0.5, 0.8), detector_efficiency=1.0,
                             fiber_length_km_alice=0.0, fiber_length_km_bob=0.0,
                             pulse_pairs=n, seed=1)
    far = base.replace(fiber_length_km_alice=10.0, fiber_length_km_bob=10.0, seed=2)
    near_r = rates(tally_batch(simulate_rounds(base, 0, n)))
    far_r = rates(tally_batch(simulate_rounds(far, 0, n)))
    for b in range(2):
        for k in range(1, 4):
            for l in range(1, 4):
                diff = near_r.Q[k, l, b] - far_r.Q[k, l, b]
                sigma = math.hypot(near_r.sigma_Q[k, l, b], far_r.sigma_Q[k, l, b])
                assert diff > 5 * sigma, (k, l, b)


def test_csv_round_trip(bright_cfg):
    table = tally_batch(simulate_rounds(bright_cfg, 0, 20_000))
    text = to_csv(table)
    back = from_csv(text)
    assert np.array_equal(back.counts, table.counts)
    assert to_csv(back) == text
    assert text.splitlines()[0] == "k,l,basis,sent,accepted,errors,Q,E,sigma_Q,sigma_E"
    assert len(text.splitlines()) == 33


def test_csv_missing_cell_named(bright_cfg):
    lines = to_csv(tally_batch(simulate_rounds(bright_cfg, 0, 5_000))).splitlines()
    kept = [line for line in lines if not line.startswith("2,1,X,")]
    with pytest.raises(TallyFormatError, match=r"k=2, l=1, basis=X"):
        from_csv("\n".join(kept))


@pytest.mark.parametrize("mutate,pattern", [
    (lambda row: row.replace(",Z,", ",Y,", 1), "basis"),
    (lambda row: "3,3,Z,10,20,0,1,0,0,0", "accepted"),
    (lambda row: "3,3,Z,ten,0,0,0,0,0,0", "sent"),
    (lambda row: row + ",extra", "columns"),
])
def test_csv_errors_name_row_and_column(mutate, pattern):
    lines = to_csv(TallyTable.empty()).splitlines()
    lines[-2] = mutate(lines[-2])
    with pytest.raises(TallyFormatError, match=pattern) as info:
        from_csv("\n".join(lines))
    assert "row" in str(info.value)


def test_csv_missing_column():
    with pytest.raises(TallyFormatError, match="errors"):
        from_csv("k,l,basis,sent,accepted\n")

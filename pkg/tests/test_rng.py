import math

import numpy as np

from mdiqkd.rng import RoundStream, derive_round_seed, mix64, round_seeds, slot_uniform_pair


def test_same_inputs_same_seed():
    assert derive_round_seed(987654321, 17) == derive_round_seed(987654321, 17)


def test_neighbouring_rounds_differ():
    assert derive_round_seed(5, 100) != derive_round_seed(5, 101)
    assert derive_round_seed(5, 100) != derive_round_seed(6, 100)


def test_vectorized_matches_scalar():
    seeds = round_seeds(123456789, 1000, 1100)
    assert [int(s) for s in seeds] == [derive_round_seed(123456789, i) for i in range(1000, 1100)]


def test_low_bit_balanced():
    n = 100_000
    ones = int(np.sum(round_seeds(42, 0, n) & np.uint64(1)))
    assert abs(ones - n / 2) <= 4 * math.sqrt(n / 4)


def test_slot_uniforms_in_unit_interval_and_independent_of_order():
    seeds = round_seeds(9, 0, 50_000)
    u, v = slot_uniform_pair(seeds, 3)
    assert u.min() >= 0.0 and u.max() < 1.0 and v.min() >= 0.0 and v.max() < 1.0
    part = slot_uniform_pair(round_seeds(9, 20_000, 30_000), 3)
    assert np.array_equal(part[0], u[20_000:30_000])
    # slots must not share a stream
    other, _ = slot_uniform_pair(seeds, 4)
    assert abs(np.corrcoef(u, other)[0, 1]) < 0.02


def test_mix64_is_bijective_on_sample():
    values = {mix64(i) for i in range(10_000)}
    assert len(values) == 10_000


def test_round_stream_deterministic():
    a = RoundStream(derive_round_seed(1, 2))
    b = RoundStream(derive_round_seed(1, 2))
    xs = [a.random() for _ in range(10)]
    assert xs == [b.random() for _ in range(10)]
    assert all(0.0 <= x < 1.0 for x in xs)
    assert len(set(xs)) == 10

import pytest

from mdiqkd.config import ExperimentConfig, preset


@pytest.fixture(scope="session")
def preset_cfg() -> ExperimentConfig:
    return preset("paper-50km")


@pytest.fixture(scope="session")
def bright_cfg() -> ExperimentConfig:
    """Short links and a lossless detector so small runs still give counts."""
    return preset(
        "paper-50km",
        fiber_length_km_alice=0.0,
        fiber_length_km_bob=0.0,
        detector_efficiency=0.5,
        dark_count_prob_per_gate=1e-5,
        misalignment=0.02,
        pulse_pairs=200_000,
        seed=7,
    )

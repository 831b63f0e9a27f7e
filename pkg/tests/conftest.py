import pytest

from syncprobe.backend import SimulatedBackend
from syncprobe.simulator import BenchTargets, load_profile

# Measured flush-latency table for ext4 on the ARM box; the single source
# the calibration tests solve by hand.
ORIN_TARGETS = BenchTargets(
    name="ext4-orin",
    baseline_mean=2509,
    write_mean=121092,
    write_sync_mean=41406,
    ftruncate_mean=61315,
    rename_mean=66774,
    baseline_std=491,
    write_std=11436,
    write_sync_std=4670,
    ftruncate_std=6916,
    rename_std=8134,
    write_size=4096,
)


@pytest.fixture(scope="session")
def orin_profile():
    return load_profile("ext4-orin")


@pytest.fixture(scope="session")
def orin_quiet(orin_profile):
    return orin_profile.without_noise()


@pytest.fixture(scope="session")
def xeon_profile():
    return load_profile("ext4-xeon-slopes")


@pytest.fixture
def sim_backend(orin_quiet):
    return SimulatedBackend(orin_quiet)


def make_backend(profile, seed=0, noise=None):
    return SimulatedBackend(profile, seed=seed, noise=noise)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from somqe.pipeline import default_config, run_all

settings.register_profile(
    "somqe",
    deadline=None,
    max_examples=30,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("somqe")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """One full default desk-scale pipeline run, shared across tests."""
    import time

    out = tmp_path_factory.mktemp("desk_run")
    cfg = default_config("desk", out_dir=out)
    start = time.perf_counter()
    report = run_all(cfg)
    elapsed = time.perf_counter() - start
    return cfg, report, elapsed


@pytest.fixture(scope="session")
def full_ground_truth():
    from somqe.pipeline import default_ground_truth_spec
    from somqe.simulate import synthesize_ground_truth

    return synthesize_ground_truth(default_ground_truth_spec("full"))

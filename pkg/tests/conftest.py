import time
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from liftgeo import data
from liftgeo import training as tr

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_synth():
    return data.synth_generate(data.SyntheticSkeletonConfig(n_samples=500, seed=11))


# reduced-width benchmark shared by the synthetic training criteria
BENCHMARK_CONFIG = dict(width=256, batch_size=512, steps_per_epoch=200, epochs=12, lr_g=1e-4, lr_d=1e-4, seed=0)
BENCHMARK_FLAGS = ("Adv+SS", "Adv", "SS")


@dataclass
class BenchmarkRun:
    result: tr.TrainResult
    initial: dict     # held-out metrics of the untrained lifter
    seconds: float


@dataclass
class Benchmark:
    train: data.SyntheticDataset
    test: data.SyntheticDataset
    runs: dict
    seconds: float


@pytest.fixture(scope="session")
def benchmark():
    """100k synthetic 2D training poses, 2000 held-out poses, and one run per configuration."""
    start = time.perf_counter()
    train = data.synth_generate(data.SyntheticSkeletonConfig(n_samples=100_000, seed=1))
    test = data.synth_generate(data.SyntheticSkeletonConfig(n_samples=2000, seed=2))
    runs = {}
    for flags in BENCHMARK_FLAGS:
        t0 = time.perf_counter()
        cfg = tr.TrainingConfig(flags=flags, **BENCHMARK_CONFIG)
        trainer = tr.Trainer(cfg, tr.TrainingData(train.poses2d, eval2d=test.poses2d, eval3d=test.poses3d))
        initial = trainer.evaluate()
        runs[flags] = BenchmarkRun(trainer.fit(), initial, time.perf_counter() - t0)
    return Benchmark(train, test, runs, time.perf_counter() - start)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])

import numpy as np
import pytest

from martlab.models import TabulatedSteps, rng_for, sample_path


def random_jump_battery(n_paths, seed=0, max_jumps=50, lo=-0.9, hi=9.0,
                        horizon=10.0):
    """Random pure-jump paths: up to max_jumps jumps at distinct times,
    sizes uniform in (lo, hi]."""
    from martlab.paths import CadlagPath, JumpEvent

    rng = rng_for(seed, salt=101)
    paths = []
    for _ in range(n_paths):
        k = int(rng.integers(1, max_jumps + 1))
        times = np.sort(rng.uniform(0.0, horizon, size=k))
        times = np.unique(times)
        sizes = rng.uniform(lo, hi, size=times.size)
        jumps = tuple(JumpEvent(float(t), float(s))
                      for t, s in zip(times, sizes))
        paths.append(CadlagPath(initial=0.0, horizon=horizon, jumps=jumps))
    return paths


def random_step_models(n_models, seed=0, n_steps=8, centered=True):
    """Random two-point tabulated step models with analytic compensators.
    Outcomes stay in (-0.95, 9]; centered models have mean-zero steps."""
    rng = rng_for(seed, salt=103)
    models = []
    for _ in range(n_models):
        steps = []
        for _n in range(n_steps):
            while True:
                up = float(rng.uniform(0.05, 2.0))
                m = float(rng.uniform(0.2, 0.8))
                down = -m * up / (1.0 - m) if centered \
                    else float(rng.uniform(-0.9, 0.0))
                if down > -0.95:
                    break
            steps.append(((up, m), (down, 1.0 - m)))
        models.append(TabulatedSteps(tuple(steps), float(n_steps)))
    return models


@pytest.fixture(scope="session")
def jump_battery():
    return random_jump_battery(200, seed=0)


@pytest.fixture(scope="session")
def step_model_battery():
    models = random_step_models(50, seed=1)
    return [(m, sample_path(m, seed=2, salt=7, index=i))
            for i, m in enumerate(models)]

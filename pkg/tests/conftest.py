import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """One small finished training run shared by harness/cli/report tests."""
    from convarrange.harness import RunConfig, run_bias_tracking

    config = RunConfig(
        dataset={"kind": "synth_shapes", "n": 160, "classes": 2, "test_n": 64},
        model={
            "input_shape": [1, 16, 16],
            "layers": [
                {"kind": "conv", "filters": 8, "kernel": 3, "padding": 1},
                {"kind": "relu"},
                {"kind": "maxpool"},
                {"kind": "conv", "filters": 8, "kernel": 3, "padding": 1},
                {"kind": "relu"},
                {"kind": "maxpool"},
                {"kind": "flatten"},
                {"kind": "dense", "out": 2},
            ],
        },
        schedule={"kind": "step", "base": 0.01, "factor": 0.1, "period": 25},
        epochs=3,
        seed=11,
        batch_size=32,
        run_id="tiny",
    )
    work = tmp_path_factory.mktemp("tiny_run")
    return run_bias_tracking(config, work)

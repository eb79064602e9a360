"""Shared fixtures: a miniature on-disk dataset reused by CLI tests."""
import json

import numpy as np
import pytest

from paddyspec import synthetic

TEST_CONFIG = {
    "paths": {"data_root": "data", "cache_dir": "cache", "output_dir": "out"},
    "registration": {"target_count": 800, "ransac_iters": 1500},
    "calibration_session": "data/session.json",
    "training": {"epochs": 1, "batch_size": 4, "input_size": 32},
    "seed": 11,
}


def write_workdir(root, n_per_class=2, image_size=200, seed=424242):
    """Populate a working directory with data/, a config, and nothing else."""
    rng = np.random.default_rng(seed)
    synthetic.write_fixture_tree(root / "data", rng, n_per_class=n_per_class,
                                 image_size=image_size)
    (root / "config.json").write_text(json.dumps(TEST_CONFIG, indent=2) + "\n")


@pytest.fixture(scope="session")
def fixture_workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("workdir")
    write_workdir(root)
    return root

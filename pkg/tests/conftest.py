import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))
from cross_spline_lab.simgen import Dataset, gen_dataset


@pytest.fixture
def small_dataset():
    """Petit jeu simulé continu (main_cont), 400 lignes + 200 de test"""
    return gen_dataset("main_cont", n=400, response="continuous", seed=0, n_test=200)


@pytest.fixture
def binary_dataset():
    """Petit jeu simulé binaire (main_cont)"""
    return gen_dataset("main_cont", n=400, response="binary", seed=0, n_test=200)


@pytest.fixture
def make_dataset():
    """Fabrique un Dataset à partir d'une matrice et d'une réponse, tout en 'test'"""

    def _make(X, y=None, kind="continuous", split=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.zeros(X.shape[0]) if y is None else y
        split = np.full(X.shape[0], "test", dtype=object) if split is None else split
        return Dataset(X=X, y=y, kind=kind, feature_names=[f"x{j + 1}" for j in range(X.shape[1])], split=split)

    return _make


@pytest.fixture
def project_dir(tmp_path, monkeypatch):
    """Se place dans un répertoire de projet temporaire"""
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def tiny_fit_config(project_dir):
    """Config YAML d'un fit très court (2 époques, 300 lignes)"""

    def _write(name="fit.yaml", **changes):
        config = {
            "task": "fit",
            "data": {"scenario": "main_cont", "response": "continuous", "n": 300, "n_test": 100},
            "model": {"preset": "treenet2", "csn": {"d": 4, "m": 3}},
            "train": {"max_epochs": 2, "patience": 5, "batch_fraction": 0.1},
            "seeds": [0, 1],
            "output": "runs/fit",
        }
        config.update(changes)
        path = project_dir / name
        path.write_text(yaml.safe_dump(config))
        return path

    return _write

from pathlib import Path
import sys

import numpy as np
import pandas as pd
import pytest
from scipy.special import expit

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))
from cross_spline_lab.errors import ConfigurationError, DataError
from cross_spline_lab.simgen import (
    BIKE_COLUMNS,
    BIKE_PREDICTORS,
    SCENARIOS,
    Dataset,
    assign_splits,
    calibrate_beta0,
    gen_dataset,
    gen_design,
    get_scenario,
    load_bike_sharing,
    load_dataset_csv,
    save_dataset_csv,
    scenario_value,
)


def write_hour_csv(path, rows=40, bad_row=None):
    """Écrit un faux fichier hour.csv au format UCI"""
    rng = np.random.default_rng(0)
    frame = pd.DataFrame({
        "instant": np.arange(1, rows + 1), "dteday": "2011-01-01", "season": rng.integers(1, 5, rows),
        "yr": rng.integers(0, 2, rows), "mnth": rng.integers(1, 13, rows), "hr": rng.integers(0, 24, rows),
        "holiday": 0, "weekday": rng.integers(0, 7, rows), "workingday": 1, "weathersit": rng.integers(1, 4, rows),
        "temp": rng.uniform(0, 1, rows).round(2), "atemp": rng.uniform(0, 1, rows).round(4),
        "hum": rng.uniform(0, 1, rows).round(2), "windspeed": rng.uniform(0, 1, rows).round(4),
        "casual": rng.integers(0, 50, rows), "registered": rng.integers(0, 300, rows),
    })
    frame["cnt"] = (frame["casual"] + frame["registered"] + 1).astype(str)
    if bad_row is not None:
        frame.loc[bad_row, "cnt"] = "n/a"
    frame[BIKE_COLUMNS].to_csv(path, index=False)
    return path


class TestDesign:

    def test_uniform_range_and_shape(self):
        """Test que le plan d'expérience est Uniform(-1, 1) de taille n x 30"""
        X = gen_design(2000, seed=1)
        assert X.shape == (2000, 30)
        assert X.min() >= -1 and X.max() < 1
        assert abs(X.mean()) < 0.02

    def test_invalid_size(self):
        """Test que n=0 est refusé"""
        with pytest.raises(ConfigurationError):
            gen_design(0)


class TestScenarios:

    def test_eight_scenarios(self):
        """Test que les huit scénarios sont définis"""
        assert list(SCENARIOS) == ["main_cont", "main_jump", "2way_cont", "2way_jump",
                                   "2way_pure", "3way_cont", "3way_jump", "3way_pure"]

    def test_unknown_scenario_lists_names(self):
        """Test que le message d'erreur liste les noms valides"""
        with pytest.raises(ConfigurationError) as exc:
            get_scenario("4way_pure")
        for name in SCENARIOS:
            assert name in str(exc.value)

    @pytest.mark.parametrize("name,point,expected", [
        ("main_cont", np.zeros(30), 3.0),
        ("main_jump", np.zeros(30), 2.0),
        ("2way_pure", np.zeros(30), 0.0),
        ("2way_pure", np.r_[1.0, 1.0, np.zeros(28)], 2.0),
        ("3way_pure", np.r_[0.5, 0.5, 0.5, np.zeros(27)], 0.5 + 1.0 + 0.25),
        ("main_jump", np.r_[0, 0, 0, 0.5, 0.1, 0.6, np.zeros(24)], 2.0 + 1.0 + 1.0 + 2.0),
    ])
    def test_known_values(self, name, point, expected):
        """Test quelques valeurs exactes des fonctions de scénario"""
        assert scenario_value(name, point) == pytest.approx(expected)

    def test_only_first_six_features_matter(self):
        """Test que les 24 dernières variables sont du bruit pur"""
        X = gen_design(50, seed=3)
        shuffled = X.copy()
        shuffled[:, 6:] = gen_design(50, seed=4)[:, 6:]
        for name in SCENARIOS:
            np.testing.assert_array_equal(scenario_value(name, X), scenario_value(name, shuffled))

    def test_main_pair_shares_first_four_terms(self):
        """Test que main_cont et main_jump partagent exactement les termes de x1..x4"""
        X = gen_design(200, seed=5)
        redrawn = X.copy()
        redrawn[:, :4] = gen_design(200, seed=6)[:, :4]
        gap = scenario_value("main_cont", X) - scenario_value("main_jump", X)
        gap_redrawn = scenario_value("main_cont", redrawn) - scenario_value("main_jump", redrawn)
        np.testing.assert_allclose(gap, gap_redrawn, rtol=0, atol=1e-12)

    def test_pure_interactions_have_no_main_effect(self):
        """Test que les pentes marginales de 2way_pure sont nulles à ±0.02"""
        X = gen_design(100_000, seed=8)
        f = scenario_value("2way_pure", X)
        for j in range(6):
            slope = np.polyfit(X[:, j], f, 1)[0]
            assert abs(slope) < 0.02, f"x{j + 1} slope {slope:.4f}"


class TestCalibration:

    def test_calibrated_intercept_balances_sample(self):
        """Test que beta0 rend la probabilité moyenne égale à 1/2"""
        f = np.random.default_rng(0).normal(loc=2.0, size=5000)
        beta0 = calibrate_beta0(f)
        assert np.mean(expit(beta0 + f)) == pytest.approx(0.5, abs=1e-8)

    def test_constant_and_symmetric_samples(self):
        """Test que beta0 vaut -c pour f constante et 0 pour f symétrique"""
        assert calibrate_beta0(np.full(100, 1.7)) == pytest.approx(-1.7, abs=1e-8)
        v = np.random.default_rng(1).normal(scale=2.0, size=500)
        assert calibrate_beta0(np.concatenate([v, -v])) == pytest.approx(0.0, abs=1e-8)

    def test_matches_grid_search(self):
        """Test que beta0 de 2way_pure sur 100k tirages coïncide avec une recherche sur grille à 1e-4"""
        f = scenario_value("2way_pure", gen_design(100_000, seed=11))
        balance = lambda b: abs(np.mean(expit(b + f)) - 0.5)
        center, width = 0.0, 3.0
        for _ in range(4):
            grid = np.linspace(center - width, center + width, 201)
            center = grid[np.argmin([balance(b) for b in grid])]
            width = 2 * (grid[1] - grid[0])
        assert calibrate_beta0(f) == pytest.approx(center, abs=1e-4)

    @pytest.mark.parametrize("name", list(SCENARIOS))
    def test_binary_classes_balanced(self, name):
        """Test que chaque scénario binaire a une fraction de 1 dans [0.49, 0.51]"""
        data = gen_dataset(name, n=10_000, response="binary", seed=0, n_test=50_000)
        probability = expit(data.extras["beta0"] + scenario_value(name, data.X))
        assert 0.49 <= probability.mean() <= 0.51
        assert 0.49 <= data.y.mean() <= 0.51


class TestGenDataset:

    def test_split_sizes(self):
        """Test le découpage 70/30 plus l'échantillon de test"""
        data = gen_dataset("main_cont", n=1000, seed=0, n_test=500)
        assert data.sizes() == {"train": 700, "val": 300, "test": 500}
        assert data.p == 30 and data.feature_names[0] == "x1"

    def test_same_seed_same_data(self):
        """Test que la même graine reproduit exactement les données"""
        a = gen_dataset("3way_jump", n=200, seed=5, n_test=50)
        b = gen_dataset("3way_jump", n=200, seed=5, n_test=50)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.split, b.split)

    def test_different_seeds_differ(self):
        """Test que deux graines donnent des données différentes"""
        a = gen_dataset("main_cont", n=100, seed=0, n_test=0)
        b = gen_dataset("main_cont", n=100, seed=1, n_test=0)
        assert not np.array_equal(a.X, b.X)

    def test_continuous_noise_has_unit_variance(self):
        """Test que le bruit continu est N(0, 1)"""
        data = gen_dataset("main_cont", n=20_000, seed=2, n_test=0)
        residual = data.y - scenario_value("main_cont", data.X)
        assert residual.var() == pytest.approx(1.0, abs=0.05)

    def test_bad_response(self):
        """Test qu'un type de réponse inconnu est refusé"""
        with pytest.raises(ConfigurationError, match="response"):
            gen_dataset("main_cont", n=100, response="count")

    def test_assign_splits_counts(self):
        """Test que le dernier split reçoit le reste des lignes"""
        labels = assign_splits(10, {"train": 0.5, "val": 0.25, "test": 0.25}, np.random.default_rng(0))
        assert list(labels).count("train") == 5
        assert list(labels).count("val") == 2
        assert list(labels).count("test") == 3


class TestDataset:

    def test_binary_labels_checked(self):
        """Test qu'une réponse binaire hors {0, 1} est refusée"""
        with pytest.raises(ConfigurationError, match="0/1"):
            Dataset(X=np.zeros((2, 1)), y=np.array([0.0, 2.0]), kind="binary", feature_names=["a"],
                    split=np.array(["train", "val"], dtype=object))

    def test_csv_round_trip(self, tmp_path):
        """Test que l'écriture puis la lecture CSV conserve les valeurs exactes"""
        data = gen_dataset("2way_cont", n=60, seed=0, n_test=20)
        path = save_dataset_csv(data, tmp_path / "data.csv", "abc123")
        assert path.read_text().startswith("# cross-spline-lab")
        loaded = load_dataset_csv(path)
        np.testing.assert_array_equal(loaded.X, data.X)
        np.testing.assert_array_equal(loaded.y, data.y)
        assert list(loaded.split) == list(data.split)

    def test_csv_bad_row_line_number(self, tmp_path):
        """Test que le numéro de ligne signalé tient compte de l'en-tête de provenance"""
        path = tmp_path / "data.csv"
        path.write_text("# provenance\nx1,target,split\n1,2,train\n3,4,val\nfoo,5,test\n")
        with pytest.raises(DataError) as exc:
            load_dataset_csv(path)
        assert exc.value.rows == [5]


class TestBikeSharing:

    def test_load_hour_csv(self, tmp_path):
        """Test le chargement : 11 prédicteurs, cible log(cnt), découpage 50/25/25"""
        path = write_hour_csv(tmp_path / "hour.csv", rows=40)
        data = load_bike_sharing(path, seed=0)
        assert data.feature_names == BIKE_PREDICTORS
        assert "atemp" not in data.feature_names
        assert data.sizes() == {"train": 20, "val": 10, "test": 10}
        raw = pd.read_csv(path)
        np.testing.assert_allclose(data.y, np.log(raw["cnt"]))

    def test_bad_row_reports_line(self, tmp_path):
        """Test qu'une ligne illisible est signalée avec son numéro de ligne"""
        path = write_hour_csv(tmp_path / "hour.csv", rows=10, bad_row=4)
        with pytest.raises(DataError) as exc:
            load_bike_sharing(path)
        assert exc.value.rows == [6]

    def test_missing_column(self, tmp_path):
        """Test qu'une colonne manquante est signalée"""
        path = tmp_path / "hour.csv"
        pd.DataFrame({"cnt": [1, 2]}).to_csv(path, index=False)
        with pytest.raises(DataError, match="missing columns"):
            load_bike_sharing(path)

    def test_missing_file(self, tmp_path):
        """Test qu'un fichier absent lève DataError"""
        with pytest.raises(DataError, match="not found"):
            load_bike_sharing(tmp_path / "hour.csv")

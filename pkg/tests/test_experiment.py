from pathlib import Path
import json
import math
import sys

import pytest
import yaml

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))
from cross_spline_lab import __version__
from cross_spline_lab.errors import ConfigurationError
from cross_spline_lab.experiment import (
    ExperimentConfig,
    RunReport,
    csn_config,
    load_config,
    parse_config,
    reproduce,
    run_experiment,
)
from cross_spline_lab.model import load_model, model_header
from cross_spline_lab.simgen import SCENARIOS, Dataset, load_dataset_csv, save_dataset_csv
from cross_spline_lab.utils import read_csv


def tiny_config(task, **changes):
    """Config minimale pour une tâche donnée"""
    config = {
        "task": task,
        "data": {"scenario": "main_cont", "response": "continuous", "n": 300, "n_test": 100},
        "model": {"preset": "treenet2", "csn": {"d": 4, "m": 3}},
        "train": {"max_epochs": 1, "batch_fraction": 0.1},
        "seeds": [0],
        "output": f"runs/{task}",
    }
    config.update(changes)
    return config


class TestParseConfig:

    def test_defaults_filled_in(self, project_dir):
        """Test que les valeurs par défaut sont complétées"""
        cfg = parse_config({"task": "fit", "data": {"scenario": "2way_pure"}})
        assert cfg.seeds == [0]
        assert cfg.data["n"] == 10_000 and cfg.data["n_test"] == 50_000
        assert cfg.model["preset"] == "treenet2"
        assert cfg.output == Path("runs/fit")

    def test_collects_every_problem(self, project_dir):
        """Test que toutes les erreurs sont rapportées ensemble"""
        raw = {"task": "fit", "data": {"scenario": "main_cont", "n": 0}, "seeds": [-1], "colour": "red"}
        with pytest.raises(ConfigurationError) as exc:
            parse_config(raw)
        problems = " | ".join(exc.value.problems)
        assert "unknown config key 'colour'" in problems
        assert "seed" in problems
        assert "data.n" in problems
        assert len(exc.value.problems) == 3

    def test_unknown_scenario_lists_valid_names(self, project_dir):
        """Test que le message d'un scénario inconnu liste les noms valides"""
        with pytest.raises(ConfigurationError) as exc:
            parse_config({"task": "fit", "data": {"scenario": "4way"}})
        message = str(exc.value)
        assert "unknown scenario '4way'" in message
        assert all(name in message for name in SCENARIOS)

    def test_evaluate_needs_model_path(self, project_dir):
        """Test que la tâche evaluate exige model_path"""
        with pytest.raises(ConfigurationError, match="model_path"):
            parse_config(tiny_config("evaluate"))

    def test_missing_model_file(self, project_dir):
        """Test qu'un fichier modèle absent est signalé"""
        with pytest.raises(ConfigurationError, match="not found"):
            parse_config(tiny_config("evaluate", model_path="runs/none.npz"))

    def test_bad_model_override(self, project_dir):
        """Test qu'un champ de modèle invalide est signalé avec sa section"""
        with pytest.raises(ConfigurationError) as exc:
            parse_config(tiny_config("fit", model={"preset": "csn", "csn": {"depth": 3}}))
        assert any(p.startswith("model.csn") for p in exc.value.problems)

    def test_reproduce_validation(self, project_dir):
        """Test la validation de la section reproduce"""
        with pytest.raises(ConfigurationError, match="reproduce.table is required"):
            parse_config({"task": "reproduce"})
        with pytest.raises(ConfigurationError, match="unknown table"):
            parse_config({"task": "reproduce", "reproduce": {"table": "9-9"}})
        with pytest.raises(ConfigurationError, match="bike_path"):
            parse_config({"task": "reproduce", "reproduce": {"table": "5-2"}})
        with pytest.raises(ConfigurationError, match="no row 'nope'"):
            parse_config({"task": "reproduce", "reproduce": {"table": "4-2", "rows": ["nope"]}})

    def test_hash_ignores_output_and_jobs(self, project_dir):
        """Test que le hash ne dépend ni de output ni de jobs"""
        a = parse_config(tiny_config("fit", output="runs/a", jobs=1))
        b = parse_config(tiny_config("fit", output="runs/b", jobs=4))
        c = parse_config(tiny_config("fit", seeds=[1]))
        assert a.hash == b.hash
        assert a.hash != c.hash


class TestLoadConfig:

    def test_overrides_replace_and_merge(self, tiny_fit_config):
        """Test que les options remplacent les clés et fusionnent les sections"""
        path = tiny_fit_config()
        cfg = load_config(path, {"seeds": [5], "output": None, "train": {"max_epochs": 3}})
        assert cfg.seeds == [5]
        assert cfg.output == Path("runs/fit")
        assert cfg.train == {"max_epochs": 3, "patience": 5, "batch_fraction": 0.1}

    def test_missing_file(self, project_dir):
        """Test qu'un fichier de config absent est signalé"""
        with pytest.raises(ConfigurationError, match="not found"):
            load_config("absent.yaml")

    def test_invalid_yaml(self, project_dir):
        """Test qu'un YAML invalide est signalé"""
        path = project_dir / "bad.yaml"
        path.write_text("task: [fit\n")
        with pytest.raises(ConfigurationError, match="not valid YAML"):
            load_config(path)


class TestModelConfig:

    def test_treenet2_overrides(self, small_dataset):
        """Test que les surcharges s'appliquent sur les défauts TreeNet2"""
        cfg = csn_config({"csn": {"d": 4}}, {"max_epochs": 3}, small_dataset, seed=7)
        assert (cfg.d, cfg.m, cfg.k) == (4, 5, 2)
        assert cfg.max_epochs == 3 and cfg.seed == 7


class TestRunReport:

    def test_summary_mean_and_best(self):
        """Test la moyenne et le meilleur des graines (min pour MSE, max pour AUC)"""
        report = RunReport(task="fit", seeds=[0, 1], config={}, config_hash="x", output=Path("."), rows=[
            {"seed": 0, "test_mse": 1.0, "test_auc": 0.7, "best_epoch": 3},
            {"seed": 1, "test_mse": 2.0, "test_auc": 0.8, "best_epoch": 9},
        ])
        summary = report.summary()
        assert summary["test_mse"] == {"mean": 1.5, "best": 1.0}
        assert summary["test_auc"]["best"] == pytest.approx(0.8)
        assert "best_epoch" not in summary


class TestRunExperiment:

    def test_fit_writes_artifacts(self, tiny_fit_config):
        """Test qu'un fit écrit métriques, résumé, rapport et modèles"""
        report = run_experiment(tiny_fit_config())
        out = Path("runs/fit")
        metrics = read_csv(out / "metrics.csv")
        assert list(metrics["seed"]) == [0, 1]
        assert {"train_mse", "val_mse", "test_mse", "gap_mse"} <= set(metrics.columns)
        assert (out / "summary.csv").exists()
        assert (out / "model_seed1.npz").exists()
        assert (out / "history_seed0.csv").exists()
        saved = json.loads((out / "report.json").read_text())
        assert saved["config_hash"] == report.config_hash
        assert saved["seeds"] == [0, 1]
        assert load_model(out / "model_seed0.npz").p == 30
        header = model_header(out / "model_seed0.npz")
        assert header["config_hash"] == report.config_hash
        assert header["tool_version"] == __version__

    def test_rerun_is_byte_identical(self, tiny_fit_config):
        """Test que deux exécutions identiques écrivent le même metrics.csv"""
        path = tiny_fit_config()
        run_experiment(path)
        first = Path("runs/fit/metrics.csv").read_bytes()
        run_experiment(path)
        assert Path("runs/fit/metrics.csv").read_bytes() == first

    def test_failure_leaves_marker(self, tiny_fit_config, mocker):
        """Test qu'une erreur d'exécution laisse un marqueur FAILED"""
        mocker.patch("cross_spline_lab.experiment.fit", side_effect=RuntimeError("boom"))
        with pytest.raises(RuntimeError):
            run_experiment(tiny_fit_config())
        marker = Path("runs/fit/FAILED")
        assert marker.read_text() == "RuntimeError: boom\n"
        assert not Path("runs/fit/report.json").exists()

    def test_success_clears_stale_marker(self, tiny_fit_config):
        """Test qu'une exécution réussie supprime un ancien marqueur"""
        Path("runs/fit").mkdir(parents=True)
        Path("runs/fit/FAILED").write_text("old\n")
        run_experiment(tiny_fit_config(seeds=[0]))
        assert not Path("runs/fit/FAILED").exists()

    def test_simulate_writes_datasets(self, project_dir):
        """Test que simulate écrit un CSV par graine"""
        cfg = parse_config(tiny_config("simulate", seeds=[0, 3], data={"scenario": "2way_jump",
                                                                        "response": "binary", "n": 200,
                                                                        "n_test": 50}))
        report = run_experiment(cfg)
        data = load_dataset_csv("runs/simulate/dataset_seed3.csv", kind="binary")
        assert data.sizes() == {"train": 140, "val": 60, "test": 50}
        assert [row["n_train"] for row in report.rows] == [140, 140]

    def test_evaluate_saved_model(self, tiny_fit_config):
        """Test l'évaluation d'un modèle sauvegardé"""
        run_experiment(tiny_fit_config(seeds=[0]))
        fit_metrics = read_csv("runs/fit/metrics.csv")
        report = run_experiment(parse_config(tiny_config("evaluate", model_path="runs/fit/model_seed0.npz")))
        assert report.rows[0]["test_mse"] == pytest.approx(fit_metrics["test_mse"].iloc[0])

    def test_evaluate_feature_mismatch(self, project_dir, small_dataset):
        """Test qu'un modèle au mauvais nombre de variables est refusé"""
        run_experiment(parse_config(tiny_config("fit")))
        data = {"source": "csv", "path": "small.csv"}
        narrow = Dataset(X=small_dataset.X[:, :5], y=small_dataset.y, kind="continuous",
                         feature_names=small_dataset.feature_names[:5], split=small_dataset.split)
        save_dataset_csv(narrow, "small.csv")
        with pytest.raises(ConfigurationError, match="expects 30 features"):
            run_experiment(parse_config(tiny_config("evaluate", data=data, model_path="runs/fit/model_seed0.npz")))

    def test_search_writes_trial_log(self, project_dir):
        """Test que search écrit le journal des essais et la meilleure configuration"""
        cfg = parse_config(tiny_config("search", search={"space": "treenet", "trials": 2}))
        report = run_experiment(cfg)
        trials = read_csv("runs/search/trials_seed0.csv")
        assert len(trials) == 2
        best = yaml.safe_load(Path("runs/search/best_config_seed0.yaml").read_text())
        assert best["config"]["k"] in (0, 1, 2, 3)
        assert best["family"] == "csn"
        assert best["config_hash"] == report.config_hash
        assert best["tool_version"] == __version__
        assert model_header("runs/search/model_seed0.npz")["config_hash"] == report.config_hash
        assert report.rows[0]["trials_ok"] == 2

    def test_diagnose_writes_artifacts(self, project_dir):
        """Test que diagnose écrit importance, PDP, ICE, interactions et surface 2d"""
        diagnose = {"features": ["x1", "x2"], "grid_size": 5, "pd_subsample": 20, "h_subsample": 20,
                    "repeats": 1}
        report = run_experiment(parse_config(tiny_config("diagnose", diagnose=diagnose)))
        out = Path("runs/diagnose")
        for name in ("importance_seed0.csv", "importance_seed0.json", "pdp_x1_seed0.csv", "ice_x2_seed0.csv",
                     "interactions_seed0.csv", "pdp2_x1_x2_seed0.csv", "model_seed0.npz"):
            assert (out / name).exists(), name
        sidecar = json.loads((out / "pdp_x1_seed0.json").read_text())
        assert sidecar["pd_subsample"] == 20 and sidecar["seed"] == 0
        assert len(read_csv(out / "pdp2_x1_x2_seed0.csv")) == 25
        assert report.rows[0]["top_pair"] == "x1:x2"


class TestReproduce:

    def test_small_comparison(self, project_dir):
        """Test une comparaison réduite : colonnes externes non exécutées et valeurs publiées"""
        frame = reproduce("4-2", [0], rows=["main_cont"], n=300, n_test=100,
                          train={"max_epochs": 1, "batch_fraction": 0.1})
        xgb = frame[frame["algorithm"] == "XGBoost"]
        assert set(xgb["status"]) == {"external - not run"}
        assert xgb["ours_best"].isna().all()
        treenet = frame[frame["algorithm"] == "TreeNet"]
        assert set(treenet["status"]) == {"needs search budget"}
        test_row = frame[(frame["algorithm"] == "TreeNet2") & (frame["split"] == "test")
                         & (frame["metric"] == "mse")].iloc[0]
        assert test_row["reference"] == pytest.approx(1.072)
        assert test_row["status"] in ("pass", "fail")
        assert math.isfinite(test_row["ours_best"])
        assert (frame["metric"] == "gap_mse").sum() == 1

    def test_unknown_budget(self):
        """Test qu'un budget inconnu est refusé"""
        with pytest.raises(ConfigurationError, match="budget"):
            reproduce("4-2", [0], budget="huge")

    def test_reproduce_task_writes_comparison(self, project_dir):
        """Test que la tâche reproduce écrit comparison.csv"""
        cfg = parse_config({"task": "reproduce", "seeds": [0],
                            "train": {"max_epochs": 1, "batch_fraction": 0.1},
                            "reproduce": {"table": "4-3", "rows": ["2way_pure"], "n": 300, "n_test": 100}})
        assert isinstance(cfg, ExperimentConfig)
        run_experiment(cfg)
        comparison = read_csv("runs/reproduce/comparison.csv")
        assert set(comparison["metric"]) == {"auc"}
        assert not Path("runs/reproduce/metrics.csv").exists()

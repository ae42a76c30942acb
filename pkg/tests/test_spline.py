from pathlib import Path
import logging
import sys

import numpy as np
import pytest
from scipy.special import expit

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))
from cross_spline_lab.errors import ConfigurationError, DataError
from cross_spline_lab.model import CsnConfig, build_csn
from cross_spline_lab.spline import (
    BasisKind,
    SplineParams,
    column_stats,
    init_bases,
    knot_levels,
    spline_backward,
    spline_forward,
)
from cross_spline_lab.train import TrainConfig, fit


@pytest.fixture
def train_matrix():
    return np.random.default_rng(0).uniform(-1, 1, size=(500, 3))


class TestBasisKind:

    def test_parse_string_and_mapping(self):
        """Test la lecture d'un type de base depuis une chaîne ou un dictionnaire"""
        assert BasisKind.parse("hinge").name == "hinge"
        kind = BasisKind.parse({"kind": "sigmoid_fixed", "slope": 10})
        assert kind.name == "sigmoid_fixed" and kind.slope == 10
        assert BasisKind.parse(kind.to_dict()) == kind

    def test_unknown_kind(self):
        """Test qu'un type inconnu est refusé"""
        with pytest.raises(ConfigurationError, match="unknown basis kind"):
            BasisKind.parse("cubic")

    def test_unknown_option(self):
        """Test qu'une option inconnue est refusée"""
        with pytest.raises(ConfigurationError, match="unknown basis options"):
            BasisKind.parse({"kind": "hinge", "degree": 3})

    @pytest.mark.parametrize("name,width", [
        ("sigmoid_trainable", 15), ("sigmoid_fixed", 15), ("hinge", 30), ("identity", 3),
    ])
    def test_width(self, name, width):
        """Test le nombre de colonnes produit pour m=5, p=3"""
        assert BasisKind(name).width(5, 3) == width

    def test_frozen_slopes(self):
        """Test quelles bases ont des pentes figées"""
        assert BasisKind("sigmoid_fixed").frozen_slopes
        assert BasisKind("hinge").frozen_slopes
        assert not BasisKind("sigmoid_trainable").frozen_slopes


class TestColumnStats:

    def test_stats_values(self, train_matrix):
        """Test moyenne, écart-type (ddof=1), min et max"""
        stats = column_stats(train_matrix)
        np.testing.assert_allclose(stats.mean, train_matrix.mean(axis=0))
        np.testing.assert_allclose(stats.std, train_matrix.std(axis=0, ddof=1))
        np.testing.assert_array_equal(stats.minimum, train_matrix.min(axis=0))
        assert stats.p == 3

    def test_standardized_stats(self, train_matrix):
        """Test que les stats standardisées ont moyenne 0 et écart-type 1"""
        std = column_stats(train_matrix).standardized()
        np.testing.assert_allclose(std.sorted_values.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(std.sorted_values.std(axis=0, ddof=1), 1.0)

    def test_empty_matrix(self):
        """Test qu'une matrice vide lève DataError"""
        with pytest.raises(DataError):
            column_stats(np.zeros((0, 3)))


class TestInitBases:

    def test_knot_levels(self):
        """Test les niveaux i/(m+1)"""
        np.testing.assert_allclose(knot_levels(4), [0.2, 0.4, 0.6, 0.8])

    @pytest.mark.parametrize("name", ["sigmoid_trainable", "sigmoid_fixed", "hinge"])
    def test_knots_at_training_quantiles(self, train_matrix, name):
        """Test que -alpha/beta retrouve les quantiles d'entraînement"""
        stats = column_stats(train_matrix)
        params = init_bases(stats, 5, BasisKind(name))
        knots = -params.alpha / params.beta
        expected = np.quantile(train_matrix, knot_levels(5), axis=0).T
        np.testing.assert_allclose(knots, expected)

    def test_trainable_slope_from_std(self, train_matrix):
        """Test que la pente initiale vaut 2 / écart-type"""
        stats = column_stats(train_matrix)
        params = init_bases(stats, 3, BasisKind("sigmoid_trainable"))
        np.testing.assert_allclose(params.beta[:, 0], 2.0 / stats.std)

    def test_constant_feature_warns(self, caplog):
        """Test qu'une variable constante centre ses bases sur sa moyenne avec un avertissement"""
        X = np.column_stack([np.linspace(-1, 1, 50), np.full(50, 3.0)])
        with caplog.at_level(logging.WARNING):
            params = init_bases(column_stats(X), 3, BasisKind("sigmoid_trainable"))
        assert "constant" in caplog.text
        np.testing.assert_allclose(-params.alpha[1] / params.beta[1], 3.0)
        # the m columns of the constant feature collapse to one centered basis
        out = spline_forward(np.array([[0.0, 2.5], [0.5, 3.0], [1.0, 3.5]]), params, BasisKind("sigmoid_trainable"))
        np.testing.assert_array_equal(out[:, 3:], np.repeat(out[:, 3:4], 3, axis=1))
        np.testing.assert_allclose(out[1, 3:], 0.5)

    def test_oblique_directions_are_unit(self, train_matrix):
        """Test que les directions obliques sont de norme 1"""
        params = init_bases(column_stats(train_matrix), 4, BasisKind("oblique_sigmoid", q=2), seed=3)
        assert params.w.shape == (2, 3)
        np.testing.assert_allclose(np.linalg.norm(params.w, axis=1), 1.0)
        assert params.alpha.shape == (2, 4)

    def test_identity_has_no_parameters(self, train_matrix):
        """Test que la base identité n'a aucun paramètre"""
        params = init_bases(column_stats(train_matrix), 5, BasisKind("identity"))
        assert params.alpha.size == 0 and params.beta.size == 0


class TestSplineForward:

    def test_fixed_sigmoid_approximates_indicator(self):
        """Test que la sigmoïde de pente 20 reste à 0.0068 de l'indicatrice hors de |x-c| < 0.25"""
        c = 0.3
        x = np.concatenate([np.linspace(-3, c - 0.25, 400), np.linspace(c + 0.25, 3, 400)])
        params = SplineParams(alpha=np.array([[-20.0 * c]]), beta=np.array([[20.0]]))
        out = spline_forward(x[:, None], params, BasisKind("sigmoid_fixed"))[:, 0]
        assert np.max(np.abs(out - (x > c))) <= 0.0068
        # worst case sits exactly at the band edge
        assert np.max(np.abs(out - (x > c))) == pytest.approx(expit(-5.0))

    def test_feature_major_column_order(self, train_matrix):
        """Test que les colonnes sont ordonnées variable puis base"""
        params = init_bases(column_stats(train_matrix), 2, BasisKind("sigmoid_trainable"))
        out = spline_forward(train_matrix[:1], params, BasisKind("sigmoid_trainable"))
        expected = expit(params.beta[1, 0] * train_matrix[0, 1] + params.alpha[1, 0])
        assert out[0, 2] == pytest.approx(expected)

    def test_hinge_pairs(self):
        """Test que la base charnière produit (x-c)+ et (c-x)+"""
        params = SplineParams(alpha=np.array([[-0.5]]), beta=np.array([[1.0]]))
        out = spline_forward(np.array([[2.0], [0.0]]), params, BasisKind("hinge"))
        np.testing.assert_allclose(out, [[1.5, 0.0], [0.0, 0.5]])

    def test_hinge_pair_identities(self, train_matrix):
        """Test que la somme d'une paire charnière vaut |x-c| et la différence x-c"""
        params = init_bases(column_stats(train_matrix), 4, BasisKind("hinge"))
        out = spline_forward(train_matrix, params, BasisKind("hinge")).reshape(500, 3, 4, 2)
        pos, neg = out[..., 0], out[..., 1]
        shifted = train_matrix[:, :, None] + params.alpha[None, :, :]
        np.testing.assert_allclose(pos + neg, np.abs(shifted), atol=1e-12)
        np.testing.assert_allclose(pos - neg, shifted, atol=1e-12)
        assert np.all(pos >= 0) and np.all(neg >= 0)

    def test_identity_passthrough(self, train_matrix):
        """Test que la base identité renvoie une copie des entrées"""
        params = init_bases(column_stats(train_matrix), 5, BasisKind("identity"))
        out = spline_forward(train_matrix, params, BasisKind("identity"))
        np.testing.assert_array_equal(out, train_matrix)
        assert out is not train_matrix

    def test_non_finite_input_names_row(self, train_matrix):
        """Test qu'une entrée NaN lève DataError en citant la ligne"""
        params = init_bases(column_stats(train_matrix), 3, BasisKind("sigmoid_trainable"))
        X = train_matrix[:5].copy()
        X[3, 1] = np.nan
        with pytest.raises(DataError, match="row 3"):
            spline_forward(X, params, BasisKind("sigmoid_trainable"))

    def test_wrong_column_count(self, train_matrix):
        """Test qu'un nombre de colonnes incorrect est refusé"""
        params = init_bases(column_stats(train_matrix), 3, BasisKind("sigmoid_trainable"))
        with pytest.raises(ConfigurationError):
            spline_forward(np.zeros((2, 4)), params, BasisKind("sigmoid_trainable"))


class TestSplineBackward:

    @pytest.mark.parametrize("kind", [
        BasisKind("sigmoid_trainable"), BasisKind("hinge"), BasisKind("oblique_sigmoid", q=2),
    ])
    def test_gradients_match_finite_differences(self, train_matrix, kind):
        """Test des gradients de la base contre les différences finies"""
        X = train_matrix[:6].copy()
        params = init_bases(column_stats(train_matrix), 3, kind, seed=1)
        R = np.random.default_rng(5).normal(size=(6, kind.width(3, 3)))
        loss = lambda: np.sum(spline_forward(X, params, kind) * R)
        _, grads = spline_backward(X, params, kind, R)
        step = 1e-6
        for name in ("alpha", "beta") + (("w",) if kind.name == "oblique_sigmoid" else ()):
            array, analytic = getattr(params, name), getattr(grads, name)
            for idx in np.ndindex(array.shape):
                orig = array[idx]
                array[idx] = orig + step
                up = loss()
                array[idx] = orig - step
                down = loss()
                array[idx] = orig
                assert analytic[idx] == pytest.approx((up - down) / (2 * step), abs=1e-5)


class TestFrozenSlopes:

    @pytest.mark.parametrize("name", ["sigmoid_fixed", "hinge"])
    def test_slopes_unchanged_by_fit(self, small_dataset, name):
        """Test que les pentes figées sont identiques au bit près après entraînement"""
        X, _ = small_dataset.arrays("train")
        model = build_csn(CsnConfig(basis=name, m=3, d=4, k=1), column_stats(X), small_dataset.feature_names)
        cfg = TrainConfig(lr=0.05, batch_fraction=0.1, patience=5, max_epochs=3, seed=0)
        trained, history = fit(model, small_dataset, cfg)
        assert history.best_epoch > 0
        np.testing.assert_array_equal(trained.spline.beta, model.spline.beta)
        assert not np.array_equal(trained.spline.alpha, model.spline.alpha)

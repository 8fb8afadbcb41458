import json
import math

import numpy as np
import pytest

from src.exceptions import ConfigurationError, DimensionError, InputError
from src.models import DatasetSpec, TrainConfig, TrainRunConfig
from src.modules.module_a.disco import rbf_weights, sdisco
from src.modules.module_a.distance import median_heuristic, pairwise_distance, standardize_columns
from src.modules.module_b.families import get_family
from src.modules.module_b.generators import generate_dataset
from src.modules.module_b.storage import save_dataset
from src.modules.module_c.agent import ModuleC
from src.modules.module_c.metrics import (
    balanced_accuracy, evaluate, group_accuracies, loss, r2_score, worst_group_accuracy
)
from src.modules.module_c.optimizer import Adam, SGD, make_optimizer
from src.modules.module_c.predictor import (
    Predictor, forward, init_predictor, load_checkpoint, save_checkpoint
)
from src.modules.module_c.trainer import TrainData, fit, train_step
from src.modules.module_d.sensitivity import ctf_accuracy, sensitivity
from src.utils.matrix_engine import Tape, finite_diff_check


def _birds(n, seed, mode="biased"):
    spec = DatasetSpec(family="waterbirds_discrete", n=n, seed=seed, bias_mode=mode, label_noise=0.0)
    return generate_dataset(spec)


def _config(**kwargs) -> TrainConfig:
    base = {"epochs": 2, "batch_size": 32, "hidden": [8], "learning_rate": 0.01}
    base.update(kwargs)
    return TrainConfig.model_validate(base)


def test_cross_entropy_of_zero_logits_is_log_k():
    tape = Tape()
    logits = tape.leaf(np.zeros((6, 3)))
    value = loss(tape, logits, [0, 1, 2, 0, 1, 2], "logits").item()
    assert value == pytest.approx(math.log(3.0), abs=1e-12)


def test_mse_loss():
    tape = Tape()
    outputs = tape.leaf([[1.0], [2.0]])
    assert loss(tape, outputs, [0.0, 4.0], "linear").item() == pytest.approx(2.5)
    with pytest.raises(DimensionError):
        loss(tape, outputs, [0.0], "linear")


def test_r2_score():
    assert r2_score([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0
    assert r2_score([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == pytest.approx(0.0)
    assert r2_score([5.0, 5.0], [5.0, 5.0]) == 1.0


def test_accuracies_on_hand_built_groups():
    targets = [0, 0, 1, 1, 1, 0]
    predicted = [0, 1, 1, 1, 0, 0]
    groups = [0, 0, 0, 1, 1, 1]
    assert balanced_accuracy(targets, predicted) == pytest.approx((2 / 3 + 2 / 3) / 2)
    accs = group_accuracies(targets, predicted, groups)
    assert accs == {"y=0|b=0": 0.5, "y=0|b=1": 1.0, "y=1|b=0": 1.0, "y=1|b=1": 0.5}
    assert worst_group_accuracy(targets, predicted, groups) == 0.5


def test_empty_groups_are_skipped():
    accs = group_accuracies([0, 0, 1], [0, 0, 1], [0, 1, 0])
    assert "y=1|b=1" not in accs
    assert len(accs) == 3


def test_evaluate_classification_with_categorical_bias():
    probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]])
    metrics = evaluate(probs, [0, 1, 1, 1], "logits", bias=np.array([[0], [0], [1], [1]]), bias_categorical=True)
    assert metrics["accuracy"] == 0.75
    assert metrics["worst_group_accuracy"] == 0.5


def test_forward_gradient_matches_finite_differences(rng):
    features = rng.normal(size=(10, 3))

    def f(t, w):
        return t.mean_all(t.tanh(t.constant(features) @ w))

    assert finite_diff_check(f, rng.normal(size=(3, 2))) < 1e-6


def test_forward_checks_input_width():
    predictor = init_predictor(3, [4], 1)
    with pytest.raises(DimensionError):
        forward(predictor, np.zeros((2, 5)))


def test_forward_records_on_the_given_empty_tape():
    tape = Tape()
    predictor = init_predictor(2, [3], 2, head="logits", seed=0)
    out, params = forward(predictor, np.ones((4, 2)), tape)
    assert out.tape is tape
    assert all(p.tape is tape for p in params)
    assert len(tape) > 0
    value = loss(tape, out, [0, 1, 0, 1], "logits")
    tape.backward(value)
    assert tape.grad(params[0]).shape == (2, 3)


def test_predict_returns_probabilities_for_logits():
    predictor = init_predictor(2, [4], 3, head="logits", seed=1)
    probs = predictor.predict(np.ones((5, 2)))
    assert probs.shape == (5, 3)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_predictor_rejects_bad_settings():
    with pytest.raises(ConfigurationError):
        init_predictor(2, [], 1, activation="gelu")
    with pytest.raises(DimensionError):
        Predictor(sizes=[2, 1], weights=[np.zeros((3, 1))], biases=[np.zeros((1, 1))])


def test_optimizers_move_against_gradient():
    for opt in (SGD(0.1), Adam(0.1)):
        p = np.array([[1.0, -1.0]])
        opt.step([p], [np.array([[1.0, -1.0]])])
        assert p[0, 0] < 1.0 and p[0, 1] > -1.0
    with pytest.raises(ConfigurationError):
        make_optimizer("rmsprop", 0.1)
    with pytest.raises(DimensionError):
        SGD(0.1).step([np.zeros((1, 2))], [np.zeros((2, 1))])


def test_train_step_rejects_tiny_batch_with_penalty():
    data = TrainData.from_dataset(_birds(3, seed=0))
    cfg = _config(**{"lambda": 1.0})
    predictor = init_predictor(2, [8], 2, head="logits")
    with pytest.raises(ConfigurationError):
        train_step(predictor, data, cfg, make_optimizer("adam", 0.01), bandwidth=1.0)


def test_train_step_without_penalty_accepts_tiny_batch():
    data = TrainData.from_dataset(_birds(3, seed=0))
    predictor = init_predictor(2, [8], 2, head="logits")
    out = train_step(predictor, data, _config(), make_optimizer("adam", 0.01), bandwidth=1.0)
    assert out["penalty"] is None
    assert out["task_loss"] > 0


def test_train_step_reports_penalty_and_updates_weights():
    data = TrainData.from_dataset(_birds(32, seed=1))
    predictor = init_predictor(2, [8], 2, head="logits")
    before = predictor.copy()
    out = train_step(predictor, data, _config(**{"lambda": 2.0}), make_optimizer("sgd", 0.1), bandwidth=1.0)
    assert 0.0 <= out["penalty"] <= 1.0
    assert not np.array_equal(before.weights[0], predictor.weights[0])


@pytest.mark.parametrize("estimator", ["sdisco", "disco_m"])
def test_fit_is_reproducible(estimator):
    train = TrainData.from_dataset(_birds(200, seed=2))
    val = TrainData.from_dataset(_birds(100, seed=3, mode="unbiased"))
    cfg = _config(**{"lambda": 1.0, "estimator": estimator})
    first = fit(train, val, cfg, progress=False)
    second = fit(train, val, cfg, progress=False)
    for a, b in zip(first.predictor.parameters, second.predictor.parameters):
        np.testing.assert_array_equal(a, b)
    assert first.metric_name == "worst_group_accuracy"
    assert len(first.history) == 2
    assert first.predictor.meta["lambda"] == 1.0


def test_fit_logs_penalty_even_when_unweighted():
    train = TrainData.from_dataset(_birds(100, seed=4))
    result = fit(train, train, _config(epochs=1), progress=False)
    assert math.isfinite(result.history[0].penalty)


def test_bias_columns_must_exist():
    with pytest.raises(InputError):
        TrainData.from_dataset(_birds(10, seed=0), ["habitat"])


def test_checkpoint_round_trip(tmp_path):
    predictor = init_predictor(4, [5, 3], 2, activation="tanh", head="logits", seed=7)
    predictor.meta["run"] = "demo"
    path = save_checkpoint(predictor, tmp_path / "model.dprd")
    loaded = load_checkpoint(path)
    x = np.linspace(-1, 1, 12).reshape(3, 4)
    np.testing.assert_array_equal(loaded.predict(x), predictor.predict(x))
    assert loaded.meta == {"run": "demo"}
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "other.dprd")


def test_grid_expansion(tmp_path):
    module = ModuleC(output_dir=tmp_path)
    config = TrainRunConfig(train_path="a", val_path="b", lambda_grid=[0.0, 1.0], bandwidth_grid=[0.5])
    names = [name for name, _ in module.grid(config)]
    assert names == ["lambda_0__bw_0.5", "lambda_1__bw_0.5"]
    full = TrainRunConfig(train_path="a", val_path="b", full_grid=True)
    assert len(module.grid(full)) == 36


def test_module_c_trains_grid_and_writes_runs(tmp_path):
    train_path = save_dataset(_birds(160, seed=5), tmp_path / "train.dscm")
    val_path = save_dataset(_birds(80, seed=6, mode="unbiased"), tmp_path / "val.dscm")
    config = TrainRunConfig.model_validate({
        "train_path": str(train_path),
        "val_path": str(val_path),
        "test_path": str(val_path),
        "train": {"epochs": 2, "batch_size": 40, "hidden": [4]},
        "lambda_grid": [0.0, 1.0],
        "bandwidth_grid": [1.0],
        "workers": 1
    })
    results = ModuleC(output_dir=tmp_path / "runs").run(config)
    assert [r["run"] for r in results["runs"]] == ["lambda_0__bw_1", "lambda_1__bw_1"]
    for r in results["runs"]:
        run_dir = tmp_path / "runs" / r["run"]
        assert (run_dir / "model.dprd").exists()
        lines = (run_dir / "metrics.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        assert json.loads(lines[0])["epoch"] == 0
        assert "worst_group_accuracy" in r["test_metrics"]
    assert (tmp_path / "runs" / "module_c_training.json").exists()


def test_module_c_requires_datasets(tmp_path):
    config = TrainRunConfig(train_path=str(tmp_path / "missing.dscm"), val_path=str(tmp_path / "missing.dscm"))
    with pytest.raises(FileNotFoundError):
        ModuleC(output_dir=tmp_path).run(config)


# ===== End-to-end training behaviour =====

def _data(family, n, seed, mode="biased", **kwargs):
    spec = DatasetSpec(family=family, n=n, seed=seed, bias_mode=mode, label_noise=0.0, **kwargs)
    return TrainData.from_dataset(generate_dataset(spec))


def _heldout_sdisco(predictor, data):
    condition = data.condition
    W = rbf_weights(condition, median_heuristic(condition))
    A = pairwise_distance(predictor.predict(data.features))
    B = pairwise_distance(standardize_columns(data.bias))
    return sdisco(A, B, W)


@pytest.mark.slow
def test_erm_learns_unbiased_blobs():
    train = _data("blob", 5000, seed=17, mode="unbiased")
    val = _data("blob", 1000, seed=18, mode="unbiased")
    test = _data("blob", 2000, seed=19, mode="unbiased")
    cfg = TrainConfig.model_validate({"lambda": 0.0, "epochs": 50, "hidden": [64, 64]})
    result = fit(train, val, cfg, bandwidth=0.1, progress=False)
    assert r2_score(test.labels, result.predictor.predict(test.features)) > 0.6


@pytest.mark.slow
def test_penalty_trades_shortcut_for_unbiased_accuracy_on_blobs():
    train = _data("blob", 5000, seed=7)
    val = _data("blob", 1000, seed=8, mode="unbiased")
    test = _data("blob", 2000, seed=9, mode="unbiased")
    scores = {}
    for lam in (0.0, 1.0):
        cfg = TrainConfig.model_validate({"lambda": lam, "epochs": 20, "hidden": [64, 64]})
        model = fit(train, val, cfg, bandwidth=0.1, progress=False).predictor
        scores[lam] = {
            "train_r2": r2_score(train.labels, model.predict(train.features)),
            "test_r2": r2_score(test.labels, model.predict(test.features)),
            "sdisco": _heldout_sdisco(model, test)
        }
    # the unregularized model leans on the copied blob
    assert scores[0.0]["train_r2"] > scores[0.0]["test_r2"]
    assert scores[1.0]["test_r2"] > scores[0.0]["test_r2"] + 0.05
    assert 2.0 * scores[1.0]["sdisco"] <= scores[0.0]["sdisco"]


def _fit_tabular(family, lam, seed):
    train = _data(family, 4000, seed=seed)
    val = _data(family, 1000, seed=seed + 1, mode="unbiased")
    cfg = _config(**{"lambda": lam, "epochs": 30, "batch_size": 128, "hidden": [16]})
    return fit(train, val, cfg, bandwidth=0.1, progress=False).predictor


@pytest.mark.slow
def test_penalty_lowers_background_sensitivity_on_birds():
    family = get_family(DatasetSpec(family="waterbirds_discrete", n=1))
    test = _data("waterbirds_discrete", 2000, seed=23, mode="unbiased")
    results = {}
    for lam in (0.0, 2.0):
        model = _fit_tabular("waterbirds_discrete", lam, seed=21)
        metrics = evaluate(model.predict(test.features), test.labels, "logits",
                           bias=test.bias, bias_categorical=True)
        results[lam] = (
            sensitivity(model, family, "background", n_units=1000, n_interventions=3),
            metrics["worst_group_accuracy"]
        )
    assert results[2.0][0] < results[0.0][0]
    assert results[2.0][1] > results[0.0][1]


@pytest.mark.slow
def test_penalty_improves_counterfactual_accuracy_under_selection():
    # Y and B are independent in the population; selection alone couples them
    family = get_family(DatasetSpec(family="fairface_like", n=1))
    results = {}
    for lam in (0.0, 2.0):
        model = _fit_tabular("fairface_like", lam, seed=31)
        results[lam] = (
            ctf_accuracy(model, family, n_units=1000, n_interventions=3),
            sensitivity(model, family, "B", n_units=1000, n_interventions=3)
        )
    assert results[2.0][0] > results[0.0][0]
    assert results[2.0][1] < results[0.0][1]


@pytest.mark.slow
def test_penalizing_more_lighting_attributes_orders_counterfactual_scores():
    dataset = generate_dataset(DatasetSpec(family="yaleb_like", n=4000, seed=41, label_noise=0.0))
    val = _data("yaleb_like", 1000, seed=42, mode="unbiased")
    family = get_family(DatasetSpec(family="yaleb_like", n=1))
    scores = {}
    for name, lam, columns in (("none", 0.0, None), ("one", 3.0, ["azimuth"]), ("both", 3.0, None)):
        train = TrainData.from_dataset(dataset, columns)
        cfg = _config(**{"lambda": lam, "epochs": 30, "batch_size": 128, "hidden": [16]})
        model = fit(train, val, cfg, bandwidth=0.1, progress=False).predictor
        lighting = sum(
            sensitivity(model, family, v, n_units=2000, n_interventions=3) for v in ("azimuth", "elevation")
        )
        scores[name] = (ctf_accuracy(model, family, n_units=2000, n_interventions=3), lighting)
    acc = {k: v[0] for k, v in scores.items()}
    lighting = {k: v[1] for k, v in scores.items()}
    assert acc["both"] > acc["none"] + 0.02
    assert acc["both"] >= acc["one"] - 0.01
    assert acc["one"] >= acc["none"] - 0.01
    assert lighting["both"] < lighting["none"]
    assert lighting["both"] <= lighting["one"] + 0.01

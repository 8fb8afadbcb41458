import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.exceptions import ConfigurationError, ContractError, InputError
from src.models import DatasetSpec
from src.modules.module_b import ModuleB
from src.modules.module_b import scm_config as cfg
from src.modules.module_b.families import get_family
from src.modules.module_b.generators import (
    apply_label_noise,
    blob_sample,
    counterfactual,
    dsprites_sample,
    generate_dataset,
    positivity_report,
    retention_probabilities,
    sample_units,
    selection_bias_filter,
    waterbirds_discrete,
)
from src.modules.module_b.storage import export_csv, load_dataset, save_dataset


def _spec(**kwargs) -> DatasetSpec:
    kwargs.setdefault("label_noise", 0.0)
    return DatasetSpec(**kwargs)


def _column(units, name):
    return np.asarray([u.endogenous[name] for u in units])


def test_same_seed_gives_identical_features():
    spec = _spec(family="blob", n=50, seed=3)
    a = generate_dataset(spec)
    b = generate_dataset(spec)
    np.testing.assert_array_equal(a.features(), b.features())
    assert a.features().shape == (50, 32 * 32)


def test_different_seeds_differ():
    a = generate_dataset(_spec(family="blob", n=20, seed=1))
    b = generate_dataset(_spec(family="blob", n=20, seed=2))
    assert not np.array_equal(a.features(), b.features())


def test_blob_bias_follows_mode():
    biased = blob_sample(_spec(family="blob", n=5000, seed=0, resolution=8))
    unbiased = blob_sample(_spec(family="blob", n=5000, seed=0, resolution=8, bias_mode="unbiased"))
    assert np.corrcoef(_column(biased, "CI"), _column(biased, "BI"))[0, 1] > 0.9
    assert abs(np.corrcoef(_column(unbiased, "CI"), _column(unbiased, "BI"))[0, 1]) < 0.05


def test_dsprites_position_shortcut_follows_mode():
    biased = dsprites_sample(_spec(family="dsprites", n=3000, seed=0, resolution=16))
    unbiased = dsprites_sample(_spec(family="dsprites", n=3000, seed=0, resolution=16, bias_mode="unbiased"))
    assert np.corrcoef(_column(biased, "x_pos"), _column(biased, "y"))[0, 1] > 0.7
    assert abs(np.corrcoef(_column(unbiased, "x_pos"), _column(unbiased, "y"))[0, 1]) < 0.07


def test_sampler_rejects_other_family():
    with pytest.raises(ContractError):
        blob_sample(_spec(family="dsprites", n=5))


def test_null_intervention_returns_same_unit():
    family = get_family(_spec(family="blob", n=1))
    unit = sample_units(family, 1, seed=4)[0]
    assert counterfactual(unit, {}, family) is unit
    assert counterfactual(unit, {"BI": unit.endogenous["BI"]}, family) is unit


def test_intervening_on_target_reaches_descendants_only_when_biased():
    for mode, moves in (("biased", True), ("unbiased", False)):
        family = get_family(_spec(family="blob", n=1, bias_mode=mode))
        unit = sample_units(family, 1, seed=9)[0]
        cf = counterfactual(unit, {"CI": unit.endogenous["CI"] + 0.25}, family)
        assert cf.label == pytest.approx(unit.endogenous["CI"] + 0.25)
        assert cf.exogenous == unit.exogenous
        assert (cf.endogenous["BI"] != unit.endogenous["BI"]) is moves
        assert not cf.same_as(unit)


def test_scale_task_positions_are_not_descendants_of_class():
    family = get_family(_spec(family="dsprites", task="scale", n=1, resolution=16))
    assert family.n_classes == 2
    unit = sample_units(family, 1, seed=2)[0]
    cf = counterfactual(unit, {"C": 1.0 - unit.endogenous["C"]}, family)
    assert cf.endogenous["x_pos"] == unit.endogenous["x_pos"]
    assert cf.endogenous["y_pos"] == unit.endogenous["y_pos"]
    assert cf.endogenous["scale"] != unit.endogenous["scale"]


def test_unknown_variables_are_rejected():
    family = get_family(_spec(family="waterbirds_discrete", n=1))
    unit = sample_units(family, 1, seed=0)[0]
    with pytest.raises(InputError):
        counterfactual(unit, {"habitat": 1.0}, family)
    with pytest.raises(InputError):
        family.intervention_domain("habitat")


def test_family_options_are_validated():
    with pytest.raises(ValidationError):
        DatasetSpec(family="blob", n=10, task="scale")
    with pytest.raises(ValidationError):
        DatasetSpec(family="waterbirds_discrete", n=10, resolution=32)
    with pytest.raises(ValidationError):
        DatasetSpec(family="blob", n=10, colour="red")


def test_waterbirds_background_agreement():
    units = waterbirds_discrete(20_000, seed=1)
    agree = np.mean(_column(units, "bird") == _column(units, "background"))
    assert agree == pytest.approx(0.9, abs=0.02)
    balanced = waterbirds_discrete(20_000, seed=1, bias_mode="unbiased")
    assert np.mean(_column(balanced, "bird") == _column(balanced, "background")) == pytest.approx(0.5, abs=0.02)


def test_fairface_selection_keeps_half_and_induces_dependence():
    dataset = generate_dataset(_spec(family="fairface_like", n=20_000, seed=5))
    assert dataset.retained_fraction == pytest.approx(0.5, abs=0.015)
    assert np.mean(_column(dataset.units, "Y") == _column(dataset.units, "B")) == pytest.approx(0.9, abs=0.02)


def test_unbiased_selection_family_keeps_everything():
    dataset = generate_dataset(_spec(family="fairface_like", n=500, seed=5, bias_mode="unbiased"))
    assert dataset.retained_fraction == 1.0
    assert len(dataset) == 500


def test_unknown_selection_rule():
    units = waterbirds_discrete(10, seed=0)
    with pytest.raises(ConfigurationError):
        selection_bias_filter(units, "celeba_like", seed=0)


def test_selection_needs_its_attributes():
    units = waterbirds_discrete(10, seed=0)
    with pytest.raises(InputError):
        selection_bias_filter(units, "fairface_like", seed=0)


def test_yaleb_selection_stays_positive():
    dataset = generate_dataset(_spec(family="yaleb_like", n=3000, seed=2))
    report = positivity_report(dataset)
    assert report["positive"]
    assert set(report["per_bias"]) == {"azimuth", "elevation"}


def test_label_noise_rate():
    units = waterbirds_discrete(5000, seed=3)
    noisy = apply_label_noise(units, 0.2, seed=3, n_classes=2)
    flipped = np.mean([a.label != b.label for a, b in zip(units, noisy)])
    assert flipped == pytest.approx(0.2, abs=0.02)
    assert all(u.endogenous == v.endogenous for u, v in zip(units, noisy))


def test_label_noise_bounds():
    units = waterbirds_discrete(5, seed=0)
    assert all(a is b for a, b in zip(apply_label_noise(units, 0.0, seed=0, n_classes=2), units))
    with pytest.raises(ConfigurationError):
        apply_label_noise(units, 1.0, seed=0, n_classes=2)


def test_regression_label_noise_keeps_targets():
    dataset = generate_dataset(_spec(family="blob", n=200, seed=1, resolution=8, label_noise=0.3))
    assert not np.array_equal(dataset.labels(), dataset.targets())
    np.testing.assert_array_equal(dataset.targets(), _column(dataset.units, "CI"))


def test_condition_is_one_hot_for_classification():
    dataset = generate_dataset(_spec(family="yaleb_like", n=30, seed=0, bias_mode="unbiased"))
    condition = dataset.condition()
    assert condition.shape == (30, 3)
    np.testing.assert_array_equal(condition.sum(axis=1), np.ones(30))


def test_unknown_bias_column():
    dataset = generate_dataset(_spec(family="waterbirds_discrete", n=5))
    with pytest.raises(InputError):
        dataset.bias(["habitat"])


def test_dataset_container_round_trip(tmp_path):
    dataset = generate_dataset(_spec(family="fairface_like", n=300, seed=8, label_noise=0.1))
    path = save_dataset(dataset, tmp_path / "faces.dscm")
    loaded = load_dataset(path)
    np.testing.assert_array_equal(loaded.features(), dataset.features())
    np.testing.assert_array_equal(loaded.labels(), dataset.labels())
    np.testing.assert_array_equal(loaded.bias(), dataset.bias())
    assert loaded.retained_fraction == dataset.retained_fraction
    assert loaded.units[0].exogenous == dataset.units[0].exogenous


def test_missing_dataset_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing.dscm")


def test_csv_export(tmp_path):
    dataset = generate_dataset(_spec(family="waterbirds_discrete", n=12, seed=0))
    path = export_csv(dataset, tmp_path / "birds.csv")
    header = path.read_text(encoding="utf-8").splitlines()[0].split(",")
    assert header[:2] == ["unit", "label"]
    assert "endo.background" in header


def test_module_b_is_deterministic(tmp_path):
    spec = _spec(family="waterbirds_discrete", n=200, seed=4)
    first = ModuleB(output_dir=tmp_path / "a").generate("birds", spec)
    second = ModuleB(output_dir=tmp_path / "b").generate("birds", spec)
    assert first["sha256"] == second["sha256"]
    assert first["positivity"]["positive"]


# ===== Monte Carlo oracles =====

def test_blob_correlation_matches_closed_form():
    units = blob_sample(_spec(family="blob", n=10_000, seed=11, resolution=8))
    # CI ~ Unif(0, 1) and BI = CI + N(0, s^2)
    expected = np.sqrt((1.0 / 12.0) / (1.0 / 12.0 + cfg.BLOB_U_BIAS_STD ** 2))
    assert np.corrcoef(_column(units, "CI"), _column(units, "BI"))[0, 1] == pytest.approx(expected, abs=0.02)


@pytest.mark.slow
def test_dsprites_correlation_matches_closed_form():
    units = dsprites_sample(_spec(family="dsprites", n=10_000, seed=12, resolution=16))
    # moments of x = sin(U), U ~ Unif(0, pi/2): E x = 2/pi, E x^2 = 1/2, E x^3 = 4/(3 pi), E x^4 = 3/8
    m1, m2, m3, m4 = 2.0 / math.pi, 0.5, 4.0 / (3.0 * math.pi), 3.0 / 8.0
    cov = m3 - m1 * m2
    var_y = m4 - m2 ** 2 + cfg.DSPRITES_U_Y_STD ** 2
    expected = cov / math.sqrt((m2 - m1 ** 2) * var_y)
    assert np.corrcoef(_column(units, "x"), _column(units, "y"))[0, 1] == pytest.approx(expected, abs=0.02)


@pytest.mark.slow
def test_waterbirds_group_proportions():
    units = waterbirds_discrete(100_000, seed=13)
    bird = _column(units, "bird")
    background = _column(units, "background")
    assert bird.mean() == pytest.approx(cfg.WATERBIRDS_P_BIRD, abs=0.01)
    assert background[bird == 1].mean() == pytest.approx(cfg.WATERBIRDS_P_MATCH, abs=0.01)
    for b, g, share in ((0, 0, 0.45), (0, 1, 0.05), (1, 0, 0.05), (1, 1, 0.45)):
        assert np.mean((bird == b) & (background == g)) == pytest.approx(share, abs=0.01)


@pytest.mark.slow
@pytest.mark.parametrize("rule, family, low, high", [
    ("fairface_like", "fairface_like", cfg.FAIRFACE_KEEP_CONFLICT, cfg.FAIRFACE_KEEP_ALIGNED),
    ("yaleb_like", "yaleb_like", cfg.YALEB_KEEP_OTHER, cfg.YALEB_KEEP_MATCH),
])
def test_selection_retention_frequencies(rule, family, low, high):
    units = sample_units(get_family(_spec(family=family, n=1)), 100_000, seed=14)
    keep_prob = retention_probabilities(units, rule)
    kept = np.zeros(len(units), dtype=bool)
    kept_ids = {id(u) for u in selection_bias_filter(units, rule, seed=14)}
    kept[[i for i, u in enumerate(units) if id(u) in kept_ids]] = True
    assert kept[keep_prob == high].mean() == pytest.approx(high, abs=0.01)
    assert kept[keep_prob == low].mean() == pytest.approx(low, abs=0.01)
    if rule == "yaleb_like":
        # pose is independent of the lighting tertile before selection
        assert np.mean(keep_prob == high) == pytest.approx(1.0 / 3.0, abs=0.01)
    else:
        assert np.mean(keep_prob == high) == pytest.approx(0.5, abs=0.01)

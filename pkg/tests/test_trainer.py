from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
import torch

from src.data.cohort import split_monte_carlo
from src.data.cohort_types import Cohort, SyntheticSpec
from src.data.synthetic import make_synthetic_cohort
from src.survival.metrics import concordance_index
from src.training.ablation import build_ablation
from src.training.trainer import predict_risks, run_cv, train_fold
from src.training.training_types import TrainConfig
from src.util.errors import CohortDataError, TrainingError


def first_split(cohort: Cohort, config: TrainConfig):
    return split_monte_carlo(cohort, 1, config.train_fraction, config.seed, n_bins=config.model.n_bins)[0]


def test_zero_epochs_returns_initial_parameters(small_cohort, fast_train_config):
    config = replace(fast_train_config, epochs=0)
    train, val = first_split(small_cohort, config)
    result = train_fold(train, val, config, fold=0)
    initial = build_ablation(config, small_cohort.d_in_p, small_cohort.d_in_g, seed=config.seed)
    for name, value in initial.state_dict().items():
        torch.testing.assert_close(result.state_dict[name], value, rtol=0, atol=0)
    assert result.trace.step_totals == []
    assert 0.0 <= result.val_c_index <= 1.0


def test_same_seed_same_trace(small_cohort, fast_train_config):
    train, val = first_split(small_cohort, fast_train_config)
    a = train_fold(train, val, fast_train_config)
    b = train_fold(train, val, fast_train_config)
    assert a.trace.step_totals == b.trace.step_totals
    assert a.val_c_index == b.val_c_index
    for name in a.state_dict:
        assert torch.equal(a.state_dict[name], b.state_dict[name])


def test_trace_is_finite_and_complete(small_cohort, fast_train_config):
    train, val = first_split(small_cohort, fast_train_config)
    result = train_fold(train, val, fast_train_config)
    assert len(result.trace.step_totals) == fast_train_config.epochs * len(train)
    assert len(result.trace.epoch_means) == fast_train_config.epochs
    assert np.all(np.isfinite(result.trace.step_totals))
    assert set(result.trace.epoch_means[0]) == {"l_sim", "l_diff", "l_recon", "l_surv", "l_total"}


def test_accumulation_changes_update_schedule(small_cohort, fast_train_config):
    train, val = first_split(small_cohort, fast_train_config)
    single = train_fold(train, val, fast_train_config)
    accumulated = train_fold(train, val, replace(fast_train_config, accumulate_steps=8))
    assert single.trace.step_totals[0] == accumulated.trace.step_totals[0]
    assert single.trace.step_totals != accumulated.trace.step_totals


def test_progress_callback_receives_epochs(small_cohort, fast_train_config):
    train, val = first_split(small_cohort, fast_train_config)
    messages: list[str] = []
    train_fold(train, val, fast_train_config, progress_callback=messages.append, fold=3)
    assert any("[train] fold 3 epoch 2/2" in m for m in messages)


def test_leakage_is_refused(small_cohort, fast_train_config):
    train, val = first_split(small_cohort, fast_train_config)
    leaky_val = Cohort(patients=val.patients + train.patients[:1], bin_edges=val.bin_edges, n_bins=val.n_bins)
    with pytest.raises(TrainingError, match="leakage"):
        train_fold(train, leaky_val, fast_train_config)


def test_mismatched_edges_are_refused(small_cohort, fast_train_config):
    train, val = first_split(small_cohort, fast_train_config)
    shifted = Cohort(patients=val.patients, bin_edges=val.bin_edges + 1.0, n_bins=val.n_bins)
    with pytest.raises(CohortDataError):
        train_fold(train, shifted, fast_train_config)


def test_non_finite_loss_names_component(small_cohort, fast_train_config, monkeypatch):
    from src.model.losses import total_loss

    def poisoned(l_sim, l_diff, l_recon, l_surv, weights, diff_sign=1):
        return total_loss(l_sim, l_diff, l_recon * float("nan"), l_surv, weights, diff_sign)

    monkeypatch.setattr("src.model.losses.total_loss", poisoned)
    train, val = first_split(small_cohort, fast_train_config)
    with pytest.raises(TrainingError, match="l_recon"):
        train_fold(train, val, fast_train_config)


def test_predict_risks_order_and_determinism(small_cohort, fast_train_config):
    model = build_ablation(fast_train_config, small_cohort.d_in_p, small_cohort.d_in_g)
    risks = predict_risks(model, small_cohort)
    assert risks.shape == (len(small_cohort),)
    np.testing.assert_array_equal(risks, predict_risks(model, small_cohort))
    first = small_cohort.subset([0])
    assert predict_risks(model, first)[0] == risks[0]


def test_run_cv_aggregates_folds(small_cohort, fast_train_config):
    fit = run_cv(small_cohort, fast_train_config)
    assert len(fit.folds) == fast_train_config.n_splits
    assert fit.mean_c_index == pytest.approx(float(np.mean(fit.fold_c_index)))
    assert fit.std_c_index == pytest.approx(float(np.std(fit.fold_c_index)))
    summary = fit.metric_summary()
    assert summary["model"] == "F"
    assert summary["fold_c_index"] == fit.fold_c_index


def test_run_cv_folds_use_their_own_splits(small_cohort, fast_train_config):
    fit = run_cv(small_cohort, fast_train_config)
    for fold in fit.folds:
        assert not set(fold.train_ids) & set(fold.val_ids)
        assert set(fold.train_ids) | set(fold.val_ids) == set(small_cohort.patient_ids)


def test_run_cv_is_deterministic(small_cohort, fast_train_config):
    a = run_cv(small_cohort, fast_train_config).metric_summary()
    b = run_cv(small_cohort, fast_train_config).metric_summary()
    assert a == b


def test_run_cv_rejects_unstratifiable_cohort(fast_train_config):
    cohort = make_synthetic_cohort(SyntheticSpec(n_patients=3, censor_rate=1.0, d_in_p=3, d_in_g=2))
    with pytest.raises(CohortDataError, match="too small to stratify"):
        run_cv(cohort, fast_train_config)


@pytest.mark.slow
def test_parallel_folds_match_sequential(small_cohort, fast_train_config):
    sequential = run_cv(small_cohort, fast_train_config, jobs=1)
    parallel = run_cv(small_cohort, fast_train_config, jobs=2)
    assert sequential.metric_summary() == parallel.metric_summary()


@pytest.mark.slow
def test_training_reduces_loss_on_strong_signal():
    cohort = make_synthetic_cohort(SyntheticSpec(n_patients=120, n_p_range=(4, 8), d_in_p=8, d_in_g=6, seed=1))
    config = TrainConfig(epochs=20, n_splits=1, lr=1e-3)
    config = replace(config, model=replace(config.model, d=16, n_heads=2, n_landmarks=16, gate_hidden=8))
    train, val = first_split(cohort, config)
    result = train_fold(train, val, config)
    means = [epoch["l_total"] for epoch in result.trace.epoch_means]
    assert np.all(np.isfinite(result.trace.step_totals))
    assert means[-1] < means[0]


@pytest.mark.slow
def test_untrained_model_is_near_chance_without_signal():
    spec = SyntheticSpec(
        n_patients=300, n_p_range=(2, 4), d_in_p=4, d_in_g=3, shared_signal_strength=0.0,
        specific_signal_strength_p=0.0, specific_signal_strength_g=0.0, seed=5,
    )
    cohort = make_synthetic_cohort(spec)
    config = TrainConfig(epochs=0, model=replace(TrainConfig().model, d=8, n_heads=2, n_landmarks=8, gate_hidden=4))
    model = build_ablation(config, cohort.d_in_p, cohort.d_in_g)
    c_index = concordance_index(predict_risks(model, cohort), cohort.times(), cohort.events())
    assert abs(c_index - 0.5) < 0.1

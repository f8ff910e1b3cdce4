from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
import torch

from src.model.layers import count_parameters
from src.model.losses import objective
from src.model.model_types import AblationFlags, LossWeights, ModelConfig
from src.model.network import ConcatBaseline, MurreNet, build_model, forward
from src.training.ablation import LADDER, build_ablation, ladder_config
from src.training.training_types import TrainConfig
from src.util.errors import ConfigError, StageError
from tests.conftest import make_patient

FULL_STAGES = ["embed", "mrd", "reconstruct", "concat", "cross_attention", "decoder", "dhof", "head"]


def f64_model(config: ModelConfig, name: str = "F"):
    return build_model(config, AblationFlags.for_model(name), 6, 5).to(torch.float64)


def test_hazards_are_probabilities(tiny_model_config, rng):
    model = f64_model(tiny_model_config)
    hazard, bundle, fused = forward(make_patient(rng), model)
    assert hazard.hazards.shape == (4,)
    assert np.all((hazard.hazards > 0) & (hazard.hazards < 1))
    assert np.all(np.diff(hazard.survival) <= 0)
    assert bundle is not None and fused is not None


def test_identical_patients_identical_outputs(tiny_model_config, rng):
    model = f64_model(tiny_model_config).eval()
    patient = make_patient(rng)
    a, _, _ = forward(patient, model)
    b, _, _ = forward(replace(patient), model)
    np.testing.assert_array_equal(a.hazards, b.hazards)
    assert a.risk == b.risk


def test_single_token_patient_shapes(tiny_model_config, rng):
    model = f64_model(tiny_model_config)
    patient = make_patient(rng, n_p=1, n_g=6)
    output = model(patient)
    d = tiny_model_config.d
    bundle, fused = output.bundle, output.fused
    for name, tensor in bundle.tensors().items():
        expected_rows = 1 if name.startswith("h_p") else 6
        assert tensor.shape == (expected_rows, d), name
    assert fused.f_s_o.shape == (7, d) and fused.f_c_o.shape == (7, d)
    assert fused.f_s_prime.shape == (7, d)
    assert fused.f_s.shape == (8, d) and fused.f_c.shape == (8, d)
    assert fused.f_s_orth.shape == (7, d)
    assert fused.f_mm.shape == (d,)
    assert output.hazards.shape == (tiny_model_config.n_bins,)


def test_full_model_runs_every_stage(tiny_model_config, rng):
    output = f64_model(tiny_model_config)(make_patient(rng))
    assert output.stages == FULL_STAGES


def test_full_model_trains_every_parameter(tiny_model_config, rng):
    model = f64_model(tiny_model_config).train()
    patient = make_patient(rng)
    output = model(patient)
    loss = objective(output.bundle, output.hazards, patient.time_bin, patient.event_observed, LossWeights())
    loss.l_total.backward()
    untouched = [name for name, p in model.named_parameters() if p.grad is None]
    assert untouched == []


def test_without_dhof_pools_class_tokens(tiny_model_config, rng):
    model = f64_model(tiny_model_config, "B")
    output = model(make_patient(rng))
    assert "dhof" not in output.stages and "pool" in output.stages
    assert output.fused.f_s_orth is None
    torch.testing.assert_close(output.fused.f_mm, (output.fused.f_s[0] + output.fused.f_c[0]) / 2)


def test_baseline_has_no_decomposition_or_fusion(tiny_model_config, rng):
    model = f64_model(tiny_model_config, "A")
    assert isinstance(model, ConcatBaseline)
    prefixes = {name.split(".")[0] for name, _ in model.named_parameters()}
    assert prefixes == {"heads", "classifier"}
    output = model(make_patient(rng))
    assert output.bundle is None and output.stages == ["embed", "head"]


def test_ladder_parameter_counts(tiny_model_config):
    counts = {name: count_parameters(f64_model(tiny_model_config, name)) for name in LADDER}
    assert counts["A"] < counts["B"] < counts["C"] <= counts["D"]
    assert counts["D"] == counts["E"] == counts["F"]


def test_murrenet_requires_decomposition(tiny_model_config):
    with pytest.raises(ValueError):
        MurreNet(tiny_model_config, AblationFlags.for_model("A"), 6, 5)


def test_inconsistent_flags_rejected():
    with pytest.raises(ConfigError, match="use_dhof requires"):
        AblationFlags(use_mrd=False, use_dhof=True, use_sim=False, use_diff=False, use_recon=False)


def test_ladder_names_round_trip():
    for name in LADDER:
        assert AblationFlags.for_model(name).model_name == name
    assert AblationFlags(use_mrd=True, use_dhof=False, use_sim=True, use_diff=False, use_recon=False).model_name == "custom"


def test_stage_errors_name_the_stage(tiny_model_config, rng):
    model = f64_model(tiny_model_config)
    with pytest.raises(StageError, match="stage embed") as info:
        model(make_patient(rng, d_in_p=7))
    assert info.value.exit_code == 2


def test_build_ablation_is_seeded(tiny_model_config):
    config = TrainConfig(model=tiny_model_config, precision="float64")
    a = build_ablation(config, 6, 5, seed=4)
    b = build_ablation(config, 6, 5, seed=4)
    c = build_ablation(config, 6, 5, seed=5)
    for (name, p), (_, q), (_, r) in zip(a.state_dict().items(), b.state_dict().items(), c.state_dict().items()):
        assert p.dtype == torch.float64
        torch.testing.assert_close(p, q, rtol=0, atol=0)
    assert any(not torch.equal(p, r) for p, r in zip(a.parameters(), c.parameters()))


def test_build_ablation_leaves_global_generator_alone(tiny_model_config):
    torch.manual_seed(123)
    expected = torch.rand(3)
    torch.manual_seed(123)
    build_ablation(ladder_config(TrainConfig(model=tiny_model_config), "F"), 6, 5, seed=0)
    torch.testing.assert_close(torch.rand(3), expected)


def test_fused_vector_ignores_pathology_token_order(tiny_model_config, rng):
    model = f64_model(tiny_model_config).eval()
    with torch.no_grad():
        for decoder in (model.fusion.decoder_s, model.fusion.decoder_c):
            for conv in (decoder.ppeg.conv3, decoder.ppeg.conv5, decoder.ppeg.conv7):
                conv.weight.zero_()
                conv.bias.zero_()
    patient = make_patient(rng, n_p=5)
    shuffled = replace(patient, pathology_tokens=patient.pathology_tokens[rng.permutation(5)])
    with torch.no_grad():
        f_mm = model(patient).fused.f_mm
        f_mm_shuffled = model(shuffled).fused.f_mm
    torch.testing.assert_close(f_mm_shuffled, f_mm, rtol=1e-10, atol=1e-12)

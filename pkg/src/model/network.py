"""
End-to-end survival models: the concat baseline and the decoupled multimodal network.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import torch
import torch.nn as nn

from .attention import AttentionPath, cross_attention
from .encoders import (
    EmbeddingHeads, MRDParams,
    embed_genomics, embed_pathology, encode_common, encode_specific, reconstruct,
)
from .fusion import FusionParams, concat_streams, dhof_fuse_with_parts, transformer_decoder
from .layers import TokenMLP
from .model_types import AblationFlags, FusedState, ModelConfig, Modality, RepresentationBundle, Stream
from src.data.cohort_types import PatientRecord
from src.survival.metrics import hazards_to_output
from src.survival.survival_types import HazardOutput, RiskMode
from src.util.errors import MurreNetError, StageError


@dataclass
class ModelOutput:
    hazards: torch.Tensor
    bundle: RepresentationBundle | None = None
    fused: FusedState | None = None
    stages: list[str] = field(default_factory=list)

    def hazard_output(self, risk_mode: RiskMode = RiskMode.NEG_SURVIVAL_SUM) -> HazardOutput:
        return hazards_to_output(self.hazards.detach().cpu().numpy().astype(np.float64), risk_mode)


@contextmanager
def _stage(name: str, stages: list[str]) -> Iterator[None]:
    stages.append(name)
    try:
        yield
    except StageError:
        raise
    except (MurreNetError, RuntimeError, ValueError) as e:
        raise StageError(name, e) from e


class SurvivalModel(nn.Module):
    """Common plumbing: parameter dtype and conversion of patient arrays to tensors."""

    flags: AblationFlags
    config: ModelConfig

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def patient_tensors(self, patient: PatientRecord) -> tuple[torch.Tensor, torch.Tensor]:
        return (
            torch.as_tensor(patient.pathology_tokens, dtype=self.dtype),
            torch.as_tensor(patient.genomic_groups, dtype=self.dtype),
        )

    def forward(self, patient: PatientRecord, path: AttentionPath = AttentionPath.AUTO) -> ModelOutput:
        raise NotImplementedError


class ConcatBaseline(SurvivalModel):
    """Token-mean of each embedded modality, concatenated and mapped to hazards by an MLP."""

    def __init__(self, config: ModelConfig, d_in_p: int, d_in_g: int):
        super().__init__()
        self.config = config
        self.flags = AblationFlags.for_model("A")
        self.heads = EmbeddingHeads(d_in_p, d_in_g, config.d)
        self.classifier = TokenMLP(2 * config.d, config.d, config.n_bins)

    def forward(self, patient: PatientRecord, path: AttentionPath = AttentionPath.AUTO) -> ModelOutput:
        stages: list[str] = []
        x_p, x_g = self.patient_tensors(patient)
        with _stage("embed", stages):
            h_p_o = embed_pathology(x_p, self.heads)
            h_g_o = embed_genomics(x_g, self.heads)
        with _stage("head", stages):
            joint = torch.cat([h_p_o.mean(dim=0), h_g_o.mean(dim=0)]).unsqueeze(0)
            hazards = torch.sigmoid(self.classifier(joint)).squeeze(0)
        return ModelOutput(hazards=hazards, stages=stages)


class MurreNet(SurvivalModel):
    """
    Decoupled multimodal survival network.

    embed -> specific/common encoders -> reconstruction -> stream concat ->
    bidirectional cross-attention -> stream decoders -> DHOF (or class-token pooling
    when DHOF is ablated) -> hazard head.
    """

    def __init__(self, config: ModelConfig, flags: AblationFlags, d_in_p: int, d_in_g: int):
        super().__init__()
        if not flags.use_mrd:
            raise ValueError("MurreNet requires use_mrd; build the concat baseline instead")
        self.config = config
        self.flags = flags
        self.heads = EmbeddingHeads(d_in_p, d_in_g, config.d)
        self.mrd = MRDParams(config.d, config.gate_hidden, config.specific_residual)
        self.fusion = FusionParams(config, use_dhof=flags.use_dhof)

    def forward(self, patient: PatientRecord, path: AttentionPath = AttentionPath.AUTO) -> ModelOutput:
        stages: list[str] = []
        x_p, x_g = self.patient_tensors(patient)

        with _stage("embed", stages):
            h_p_o = embed_pathology(x_p, self.heads)
            h_g_o = embed_genomics(x_g, self.heads)
        with _stage("mrd", stages):
            h_p_s = encode_specific(h_p_o, Modality.PATHOLOGY, self.mrd)
            h_g_s = encode_specific(h_g_o, Modality.GENOMICS, self.mrd)
            h_p_c, h_g_c = encode_common(h_p_o, h_g_o, self.mrd)
        with _stage("reconstruct", stages):
            h_p_r = reconstruct(h_p_s, h_p_c, Modality.PATHOLOGY, self.mrd)
            h_g_r = reconstruct(h_g_s, h_g_c, Modality.GENOMICS, self.mrd)
        bundle = RepresentationBundle(
            h_p_o=h_p_o, h_g_o=h_g_o, h_p_s=h_p_s, h_g_s=h_g_s,
            h_p_c=h_p_c, h_g_c=h_g_c, h_p_r=h_p_r, h_g_r=h_g_r,
        )

        with _stage("concat", stages):
            f_s_o, f_c_o = concat_streams(bundle)
        with _stage("cross_attention", stages):
            f_s_prime = cross_attention(f_c_o, f_s_o, self.fusion.cross)
            f_c_prime = cross_attention(f_s_o, f_c_o, self.fusion.cross)
        with _stage("decoder", stages):
            f_s = transformer_decoder(f_s_prime, Stream.SPECIFIC, self.fusion, path)
            f_c = transformer_decoder(f_c_prime, Stream.COMMON, self.fusion, path)

        f_s_proj: torch.Tensor | None = None
        f_s_orth: torch.Tensor | None = None
        if self.flags.use_dhof:
            with _stage("dhof", stages):
                # Optimisation steps regularise a vanishing common vector instead of failing
                f_mm, f_s_proj, f_s_orth = dhof_fuse_with_parts(f_s, f_c, self.fusion, strict=not self.training)
        else:
            with _stage("pool", stages):
                f_mm = torch.stack([f_s[0], f_c[0]]).mean(dim=0)

        with _stage("head", stages):
            hazards = torch.sigmoid(self.fusion.head(f_mm))

        fused = FusedState(
            f_s_o=f_s_o, f_c_o=f_c_o, f_s_prime=f_s_prime, f_c_prime=f_c_prime,
            f_s=f_s, f_c=f_c, f_s_proj=f_s_proj, f_s_orth=f_s_orth, f_mm=f_mm,
        )
        return ModelOutput(hazards=hazards, bundle=bundle, fused=fused, stages=stages)


def build_model(config: ModelConfig, flags: AblationFlags, d_in_p: int, d_in_g: int) -> SurvivalModel:
    if not flags.use_mrd:
        return ConcatBaseline(config, d_in_p, d_in_g)
    return MurreNet(config, flags, d_in_p, d_in_g)


def forward(
    patient: PatientRecord,
    model: SurvivalModel,
    risk_mode: RiskMode = RiskMode.NEG_SURVIVAL_SUM,
) -> tuple[HazardOutput, RepresentationBundle | None, FusedState | None]:
    """Run one patient through the model and return hazards plus every intermediate."""
    output = model(patient)
    return output.hazard_output(risk_mode), output.bundle, output.fused

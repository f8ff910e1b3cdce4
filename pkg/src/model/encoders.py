"""
Embedding heads and the representation decomposition block.

Every encoder maps an (N, d) token matrix to (N, d). The common encoder gates each
modality's tokens by an MLP of the mean co-attention they receive from the other
modality, so token counts never mix across modalities.
"""
from __future__ import annotations

import torch
import torch.nn as nn

from .layers import TokenMLP
from .model_types import Modality
from src.util.errors import NonFiniteError, ShapeError


class EmbeddingHeads(nn.Module):
    """Affine maps D_in_p -> d and D_in_g -> d applied per token."""

    def __init__(self, d_in_p: int, d_in_g: int, d: int):
        super().__init__()
        self.pathology = nn.Linear(d_in_p, d)
        self.genomics = nn.Linear(d_in_g, d)
        self.d = d


class CommonEncoder(nn.Module):
    """Co-attention gating producing the modality-common tokens."""

    def __init__(self, d: int, gate_hidden: int):
        super().__init__()
        self.proj_p = nn.Linear(d, d)
        self.proj_g = nn.Linear(d, d)
        self.gate_p = TokenMLP(1, gate_hidden, 1)
        self.gate_g = TokenMLP(1, gate_hidden, 1)

    def co_attention(self, h_p_o: torch.Tensor, h_g_o: torch.Tensor) -> torch.Tensor:
        """Token-by-token affinity matrix of shape (N_p, N_g)."""
        return self.proj_p(h_p_o) @ self.proj_g(h_g_o).transpose(0, 1)

    def gates(self, h_p_o: torch.Tensor, h_g_o: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Return (A, g_p of shape (N_p, 1), g_g of shape (N_g, 1))."""
        attention = self.co_attention(h_p_o, h_g_o)
        g_p = torch.sigmoid(self.gate_p(attention.mean(dim=1, keepdim=True)))
        g_g = torch.sigmoid(self.gate_g(attention.mean(dim=0).unsqueeze(1)))
        return attention, g_p, g_g

    def forward(self, h_p_o: torch.Tensor, h_g_o: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        _, g_p, g_g = self.gates(h_p_o, h_g_o)
        return g_p * h_p_o, g_g * h_g_o


class MRDParams(nn.Module):
    """Specific encoders, the common encoder and the two reconstruction decoders."""

    def __init__(self, d: int, gate_hidden: int, specific_residual: bool = True):
        super().__init__()
        self.specific_p = TokenMLP(d, d, d, residual=specific_residual)
        self.specific_g = TokenMLP(d, d, d, residual=specific_residual)
        self.common = CommonEncoder(d, gate_hidden)
        self.decoder_p = TokenMLP(2 * d, d, d)
        self.decoder_g = TokenMLP(2 * d, d, d)
        self.d = d

    def specific(self, which: Modality) -> TokenMLP:
        return self.specific_p if which is Modality.PATHOLOGY else self.specific_g

    def decoder(self, which: Modality) -> TokenMLP:
        return self.decoder_p if which is Modality.PATHOLOGY else self.decoder_g


def _check_tokens(name: str, tokens: torch.Tensor, width: int) -> None:
    if tokens.ndim != 2:
        raise ShapeError(f"{name}: expected a 2-D token matrix, got shape {tuple(tokens.shape)}")
    if tokens.shape[0] < 1:
        raise ShapeError(f"{name}: expected at least one token")
    if tokens.shape[1] != width:
        raise ShapeError(f"{name}: expected width {width}, got {tokens.shape[1]}")


def _check_finite(name: str, tokens: torch.Tensor) -> None:
    if not bool(torch.isfinite(tokens).all()):
        raise NonFiniteError(f"{name}: input contains non-finite values")


def embed_pathology(patch_features: torch.Tensor, heads: EmbeddingHeads) -> torch.Tensor:
    _check_tokens("pathology features", patch_features, heads.pathology.in_features)
    return heads.pathology(patch_features)


def embed_genomics(group_vectors: torch.Tensor, heads: EmbeddingHeads) -> torch.Tensor:
    _check_tokens("genomic features", group_vectors, heads.genomics.in_features)
    return heads.genomics(group_vectors)


def encode_specific(h_o: torch.Tensor, which: Modality | str, params: MRDParams) -> torch.Tensor:
    which = Modality.parse(which)
    _check_tokens(f"h_{which.value}^o", h_o, params.d)
    _check_finite(f"h_{which.value}^o", h_o)
    return params.specific(which)(h_o)


def encode_common(h_p_o: torch.Tensor, h_g_o: torch.Tensor, params: MRDParams) -> tuple[torch.Tensor, torch.Tensor]:
    _check_tokens("h_p^o", h_p_o, params.d)
    _check_tokens("h_g^o", h_g_o, params.d)
    return params.common(h_p_o, h_g_o)


def reconstruct(h_s: torch.Tensor, h_c: torch.Tensor, which: Modality | str, params: MRDParams) -> torch.Tensor:
    which = Modality.parse(which)
    if h_s.shape != h_c.shape:
        raise ShapeError(
            f"reconstruct {which.value}: specific and common shapes differ, {tuple(h_s.shape)} vs {tuple(h_c.shape)}"
        )
    _check_tokens(f"h_{which.value}^s", h_s, params.d)
    return params.decoder(which)(torch.cat([h_s, h_c], dim=1))

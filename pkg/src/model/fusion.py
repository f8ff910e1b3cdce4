"""
Joint representation: stream concatenation, cross-attention, decoder refinement and
deep holistic orthogonal fusion (DHOF).
"""
from __future__ import annotations

import torch
import torch.nn as nn

from .attention import AttentionPath, CrossAttention, TransformerDecoder
from .model_types import ModelConfig, RepresentationBundle, Stream
from src.util.errors import DegenerateRepresentationError, ShapeError

# Minimum norm of the common vector before projection is refused
COMMON_NORM_EPS = 1e-8


class FusionParams(nn.Module):
    """
    Cross-attention weights, the two stream decoders and the output layers.

    `fuse_fc` is the DHOF affine map and only exists when orthogonal fusion is enabled;
    `head` maps the fused d-vector to T hazard logits.
    """

    def __init__(self, config: ModelConfig, use_dhof: bool = True):
        super().__init__()
        d = config.d
        self.cross = CrossAttention(d)
        self.decoder_s = TransformerDecoder(d, config.n_heads, config.n_landmarks)
        self.decoder_c = TransformerDecoder(d, config.n_heads, config.n_landmarks)
        self.fuse_fc: nn.Linear | None = nn.Linear(d, d) if use_dhof else None
        self.head = nn.Linear(d, config.n_bins)
        self.pool_include_common = config.pool_include_common
        self.d = d

    @property
    def n_landmarks(self) -> int:
        return self.decoder_s.attn1.n_landmarks

    def decoder(self, which: Stream) -> TransformerDecoder:
        return self.decoder_s if which is Stream.SPECIFIC else self.decoder_c


def concat_streams(bundle: RepresentationBundle) -> tuple[torch.Tensor, torch.Tensor]:
    """Token-axis concatenation: f_s^o = [h_p^s; h_g^s], f_c^o = [h_p^c; h_g^c]."""
    widths = {t.shape[1] for t in (bundle.h_p_s, bundle.h_g_s, bundle.h_p_c, bundle.h_g_c)}
    if len(widths) != 1:
        raise ShapeError(f"concat_streams: representation widths differ: {sorted(widths)}")
    f_s_o = torch.cat([bundle.h_p_s, bundle.h_g_s], dim=0)
    f_c_o = torch.cat([bundle.h_p_c, bundle.h_g_c], dim=0)
    return f_s_o, f_c_o


def transformer_decoder(
    tokens: torch.Tensor,
    which: Stream | str,
    params: FusionParams,
    path: AttentionPath = AttentionPath.AUTO,
) -> torch.Tensor:
    if tokens.ndim != 2 or tokens.shape[1] != params.d:
        raise ShapeError(f"transformer_decoder: expected (N, {params.d}) tokens, got {tuple(tokens.shape)}")
    return params.decoder(Stream.parse(which))(tokens, path)


def project_onto(tokens: torch.Tensor, common: torch.Tensor, strict: bool = True) -> torch.Tensor:
    """
    Component of every token along the common vector.

    With strict=False the squared norm gets COMMON_NORM_EPS added instead of raising,
    which keeps optimisation steps finite.
    """
    if common.ndim != 1 or tokens.ndim != 2 or tokens.shape[1] != common.shape[0]:
        raise ShapeError(
            f"orthogonal_decompose: tokens {tuple(tokens.shape)} incompatible with common vector {tuple(common.shape)}"
        )
    sq_norm = common @ common
    if strict:
        if float(torch.sqrt(sq_norm)) <= COMMON_NORM_EPS:
            raise DegenerateRepresentationError("degenerate common representation")
    else:
        sq_norm = sq_norm + COMMON_NORM_EPS
    coeff = (tokens @ common) / sq_norm
    return coeff.unsqueeze(1) * common.unsqueeze(0)


def orthogonal_decompose(tokens: torch.Tensor, common: torch.Tensor, strict: bool = True) -> torch.Tensor:
    """Remove from each token its projection onto `common`; outputs are orthogonal to it."""
    return tokens - project_onto(tokens, common, strict)


def dhof_pool(f_c_vec: torch.Tensor, orth: torch.Tensor, include_common: bool = True) -> torch.Tensor:
    if include_common:
        return torch.cat([f_c_vec.unsqueeze(0), orth], dim=0).mean(dim=0)
    return orth.mean(dim=0)


def dhof_fuse_with_parts(
    f_s: torch.Tensor,
    f_c: torch.Tensor,
    params: FusionParams,
    strict: bool = True,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Return (f_mm, projections, orthogonal components) of the content tokens of f_s."""
    if params.fuse_fc is None:
        raise ShapeError("dhof_fuse: fusion parameters were built without DHOF")
    f_c_vec = f_c[0]
    content = f_s[1:]
    proj = project_onto(content, f_c_vec, strict)
    orth = content - proj
    pooled = dhof_pool(f_c_vec, orth, params.pool_include_common)
    return params.fuse_fc(pooled), proj, orth


def dhof_fuse(
    f_s: torch.Tensor,
    f_c: torch.Tensor,
    params: FusionParams,
    strict: bool = True,
) -> torch.Tensor:
    """
    Fuse the refined streams into f_mm.

    The class token of f_c is the common vector; the content tokens of f_s are reduced
    to their components orthogonal to it, mean-pooled together with the common vector
    and passed through the fusion affine map.
    """
    f_mm, _, _ = dhof_fuse_with_parts(f_s, f_c, params, strict)
    return f_mm

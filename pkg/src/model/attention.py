"""
Attention blocks of the fusion stage: single-head cross-attention, Nystrom multi-head
self-attention, the pyramid position encoding generator and the transformer decoder.

All blocks work on unbatched (N, d) token matrices.
"""
from __future__ import annotations

import math
from enum import Enum

import torch
import torch.nn as nn

from src.util.errors import ShapeError


class AttentionPath(Enum):
    AUTO = "auto"
    EXACT = "exact"
    NYSTROM = "nystrom"


class CrossAttention(nn.Module):
    """Softmax((W_q Q)(W_k K)^T / sqrt(d)) (W_v V) with one shared weight triple."""

    def __init__(self, d: int):
        super().__init__()
        self.w_q = nn.Linear(d, d, bias=False)
        self.w_k = nn.Linear(d, d, bias=False)
        self.w_v = nn.Linear(d, d, bias=False)
        self.d = d

    def forward(self, query_tokens: torch.Tensor, kv_tokens: torch.Tensor) -> torch.Tensor:
        q = self.w_q(query_tokens)
        k = self.w_k(kv_tokens)
        v = self.w_v(kv_tokens)
        weights = torch.softmax(q @ k.transpose(0, 1) / math.sqrt(self.d), dim=-1)
        return weights @ v


def cross_attention(query_tokens: torch.Tensor, kv_tokens: torch.Tensor, params: CrossAttention) -> torch.Tensor:
    if query_tokens.ndim != 2 or kv_tokens.ndim != 2:
        raise ShapeError("cross_attention expects 2-D token matrices")
    if kv_tokens.shape[0] == 0:
        raise ShapeError("cross_attention: empty key set")
    if query_tokens.shape[1] != kv_tokens.shape[1] or query_tokens.shape[1] != params.d:
        raise ShapeError(
            f"cross_attention: widths differ (query {query_tokens.shape[1]}, keys {kv_tokens.shape[1]}, model {params.d})"
        )
    return params(query_tokens, kv_tokens)


def iterative_pinv(x: torch.Tensor, n_iter: int = 6) -> torch.Tensor:
    """Moore-Penrose pseudo-inverse of a batch of softmax kernels by Newton-Schulz-style iteration."""
    abs_x = x.abs()
    col = abs_x.sum(dim=-1)
    row = abs_x.sum(dim=-2)
    z = x.transpose(-1, -2) / (torch.max(col) * torch.max(row))
    eye = torch.eye(x.shape[-1], dtype=x.dtype, device=x.device)
    for _ in range(n_iter):
        xz = x @ z
        z = 0.25 * z @ (13 * eye - xz @ (15 * eye - xz @ (7 * eye - xz)))
    return z


class NystromAttention(nn.Module):
    """
    Multi-head self-attention with a Nystrom approximation of the softmax kernel.

    Exact attention is used while the sequence holds at most 2 * n_landmarks tokens.
    """

    def __init__(self, d: int, n_heads: int, n_landmarks: int, pinv_iterations: int = 6):
        super().__init__()
        if d % n_heads != 0:
            raise ShapeError(f"width {d} is not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.head_dim = d // n_heads
        self.n_landmarks = n_landmarks
        self.pinv_iterations = pinv_iterations
        self.scale = self.head_dim ** -0.5
        self.to_qkv = nn.Linear(d, 3 * d, bias=False)
        self.to_out = nn.Linear(d, d)

    def uses_nystrom(self, n_tokens: int) -> bool:
        return n_tokens > 2 * self.n_landmarks

    def _split_heads(self, x: torch.Tensor) -> torch.Tensor:
        n = x.shape[0]
        return x.reshape(n, self.n_heads, self.head_dim).transpose(0, 1)

    def _landmarks(self, x: torch.Tensor) -> torch.Tensor:
        # Segment means over contiguous, nearly equal chunks of the sequence
        chunks = torch.tensor_split(x, self.n_landmarks, dim=-2)
        return torch.stack([c.mean(dim=-2) for c in chunks], dim=-2)

    def forward(self, x: torch.Tensor, path: AttentionPath = AttentionPath.AUTO) -> torch.Tensor:
        n = x.shape[0]
        q, k, v = (self._split_heads(t) for t in self.to_qkv(x).chunk(3, dim=-1))
        q = q * self.scale

        use_nystrom = self.uses_nystrom(n) if path is AttentionPath.AUTO else path is AttentionPath.NYSTROM
        if use_nystrom and n >= self.n_landmarks:
            q_l = self._landmarks(q)
            k_l = self._landmarks(k)
            kernel_1 = torch.softmax(q @ k_l.transpose(-1, -2), dim=-1)
            kernel_2 = torch.softmax(q_l @ k_l.transpose(-1, -2), dim=-1)
            kernel_3 = torch.softmax(q_l @ k.transpose(-1, -2), dim=-1)
            out = (kernel_1 @ iterative_pinv(kernel_2, self.pinv_iterations)) @ (kernel_3 @ v)
        else:
            out = torch.softmax(q @ k.transpose(-1, -2), dim=-1) @ v

        out = out.transpose(0, 1).reshape(n, self.n_heads * self.head_dim)
        return self.to_out(out)


class PPEG(nn.Module):
    """Pyramid position encoding: depthwise 3/5/7 convolutions over a square token grid."""

    def __init__(self, d: int):
        super().__init__()
        self.conv3 = nn.Conv2d(d, d, 3, 1, 3 // 2, groups=d)
        self.conv5 = nn.Conv2d(d, d, 5, 1, 5 // 2, groups=d)
        self.conv7 = nn.Conv2d(d, d, 7, 1, 7 // 2, groups=d)

    @staticmethod
    def grid_side(n_tokens: int) -> int:
        return math.isqrt(n_tokens - 1) + 1 if n_tokens > 0 else 0

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        n, d = tokens.shape
        if n < 1:
            raise ShapeError("PPEG needs at least one token")
        side = self.grid_side(n)
        extra = side * side - n
        # Pad by repeating leading tokens
        if extra:
            index = torch.arange(extra, device=tokens.device) % n
            tokens = torch.cat([tokens, tokens[index]], dim=0)
        grid = tokens.transpose(0, 1).reshape(1, d, side, side)
        grid = grid + self.conv3(grid) + self.conv5(grid) + self.conv7(grid)
        return grid.reshape(d, side * side).transpose(0, 1)[:n]


def ppeg(tokens_without_class: torch.Tensor, params: PPEG) -> torch.Tensor:
    return params(tokens_without_class)


class TransformerDecoder(nn.Module):
    """Class token, MSA -> PPEG -> MSA with pre-norm residuals."""

    def __init__(self, d: int, n_heads: int, n_landmarks: int):
        super().__init__()
        self.cls_token = nn.Parameter(torch.empty(1, d))
        nn.init.normal_(self.cls_token, std=1.0)
        self.norm1 = nn.LayerNorm(d)
        self.attn1 = NystromAttention(d, n_heads, n_landmarks)
        self.ppeg = PPEG(d)
        self.norm2 = nn.LayerNorm(d)
        self.attn2 = NystromAttention(d, n_heads, n_landmarks)

    def forward(self, tokens: torch.Tensor, path: AttentionPath = AttentionPath.AUTO) -> torch.Tensor:
        x = torch.cat([self.cls_token.to(tokens.dtype), tokens], dim=0)
        x = self.attn1(self.norm1(x), path) + x
        x = torch.cat([x[:1], self.ppeg(x[1:])], dim=0)
        return self.attn2(self.norm2(x), path) + x
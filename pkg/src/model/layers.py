from __future__ import annotations

import torch
import torch.nn as nn


class TokenMLP(nn.Module):
    """
    Per-token MLP: Linear -> LayerNorm -> GELU -> Linear, with an optional residual.

    Applied row-wise to an (N, in_dim) token matrix.
    """

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int, residual: bool = False):
        super().__init__()
        if residual and in_dim != out_dim:
            raise ValueError(f"residual TokenMLP needs in_dim == out_dim, got {in_dim} -> {out_dim}")
        self.fc1 = nn.Linear(in_dim, hidden_dim)
        self.norm = nn.LayerNorm(hidden_dim)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden_dim, out_dim)
        self.residual = residual

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.fc2(self.act(self.norm(self.fc1(x))))
        if self.residual:
            y = y + x
        return y


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())

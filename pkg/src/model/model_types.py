from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum
from typing import Any

from torch import Tensor

from src.util.errors import ConfigError


class Modality(Enum):
    PATHOLOGY = "p"
    GENOMICS = "g"

    @classmethod
    def parse(cls, which: Modality | str) -> Modality:
        if isinstance(which, Modality):
            return which
        try:
            return cls(which)
        except ValueError:
            raise ValueError(f"unknown modality {which!r}, expected 'p' or 'g'")


class Stream(Enum):
    SPECIFIC = "s"
    COMMON = "c"

    @classmethod
    def parse(cls, which: Stream | str) -> Stream:
        if isinstance(which, Stream):
            return which
        try:
            return cls(which)
        except ValueError:
            raise ValueError(f"unknown stream {which!r}, expected 's' or 'c'")


class SimVariant(Enum):
    PROSE = "prose"         # L1(mean h_p^c, mean h_g^c)
    LITERAL = "literal"     # L1(h_p^o, h_p^c)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyper-parameters shared by every rung of the model ladder."""
    d: int = 64
    n_heads: int = 8
    n_landmarks: int = 64
    gate_hidden: int = 16
    n_bins: int = 4
    specific_residual: bool = True
    pool_include_common: bool = True

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ConfigError(f"model.d must be >= 1, got {self.d}")
        if self.n_heads < 1 or self.d % self.n_heads != 0:
            raise ConfigError(f"model.n_heads must divide model.d ({self.d}), got {self.n_heads}")
        if self.n_landmarks < 1:
            raise ConfigError(f"model.n_landmarks must be >= 1, got {self.n_landmarks}")
        if self.gate_hidden < 1:
            raise ConfigError(f"model.gate_hidden must be >= 1, got {self.gate_hidden}")
        if self.n_bins < 2:
            raise ConfigError(f"model.n_bins must be >= 2, got {self.n_bins}")


_LADDER = {
    "A": (False, False, False, False, False),
    "B": (True, False, False, False, False),
    "C": (True, True, False, False, False),
    "D": (True, True, True, False, False),
    "E": (True, True, True, True, False),
    "F": (True, True, True, True, True),
}


@dataclass(frozen=True)
class AblationFlags:
    """Which stages and loss terms are active; all off is the concat baseline, all on the full model."""
    use_mrd: bool = True
    use_dhof: bool = True
    use_sim: bool = True
    use_diff: bool = True
    use_recon: bool = True

    def __post_init__(self) -> None:
        if self.use_dhof and not self.use_mrd:
            raise ConfigError("ablation.use_dhof requires ablation.use_mrd")
        for name in ("use_sim", "use_diff", "use_recon"):
            if getattr(self, name) and not self.use_mrd:
                raise ConfigError(f"ablation.{name} requires ablation.use_mrd")

    @classmethod
    def for_model(cls, name: str) -> AblationFlags:
        try:
            return cls(*_LADDER[name.upper()])
        except KeyError:
            raise ConfigError(f"unknown ladder rung {name!r}, expected one of {', '.join(_LADDER)}")

    @property
    def model_name(self) -> str:
        """Ladder letter A-F, or 'custom' for combinations off the ladder."""
        key = tuple(getattr(self, f.name) for f in fields(self))
        for name, flags in _LADDER.items():
            if flags == key:
                return name
        return "custom"


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1e-4
    beta: float = 1e-4
    gamma: float = 1.0

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"loss.{name} must be finite and >= 0, got {value}")

    def masked(self, flags: AblationFlags) -> LossWeights:
        """Zero the weight of every term switched off in the ablation flags."""
        return LossWeights(
            alpha=self.alpha if flags.use_sim else 0.0,
            beta=self.beta if flags.use_diff else 0.0,
            gamma=self.gamma if flags.use_recon else 0.0,
        )


@dataclass(frozen=True)
class LossBreakdown:
    """Every term of the training objective; l_total keeps the autograd graph."""
    l_sim: Tensor
    l_diff: Tensor
    l_recon: Tensor
    l_surv: Tensor
    l_total: Tensor

    def as_floats(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name).detach()) for f in fields(self)}


@dataclass(frozen=True)
class RepresentationBundle:
    """Original, specific, common and reconstructed tokens of both modalities."""
    h_p_o: Tensor
    h_g_o: Tensor
    h_p_s: Tensor
    h_g_s: Tensor
    h_p_c: Tensor
    h_g_c: Tensor
    h_p_r: Tensor
    h_g_r: Tensor

    def tensors(self) -> dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class FusedState:
    f_s_o: Tensor
    f_c_o: Tensor
    f_s_prime: Tensor
    f_c_prime: Tensor
    f_s: Tensor
    f_c: Tensor
    f_s_proj: Tensor | None
    f_s_orth: Tensor | None
    f_mm: Tensor


def dataclass_to_dict(obj: Any) -> dict[str, Any]:
    """Shallow dict of a config dataclass with enums flattened to their values."""
    out: dict[str, Any] = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        out[f.name] = value.value if isinstance(value, Enum) else value
    return out

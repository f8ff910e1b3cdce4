"""
Training objective: L_total = alpha*L_sim + beta*L_diff + gamma*L_recon + L_surv.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F

from .model_types import LossBreakdown, LossWeights, RepresentationBundle, SimVariant
from src.util.errors import NonFiniteError, ShapeError, SurvivalMetricError

# Floor applied before every log in the survival likelihood
LOG_CLAMP = 1e-12


def similarity_loss(h_p_c: torch.Tensor, h_g_c: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference between the token-mean common representations."""
    if h_p_c.shape[-1] != h_g_c.shape[-1]:
        raise ShapeError(f"similarity_loss: widths differ, {h_p_c.shape[-1]} vs {h_g_c.shape[-1]}")
    return (h_p_c.mean(dim=0) - h_g_c.mean(dim=0)).abs().mean()


def literal_similarity_loss(h_p_o: torch.Tensor, h_p_c: torch.Tensor) -> torch.Tensor:
    """(1/n)·||h_p^o - h_p^c||_1 over all elements."""
    if h_p_o.shape != h_p_c.shape:
        raise ShapeError(f"similarity_loss: shapes differ, {tuple(h_p_o.shape)} vs {tuple(h_p_c.shape)}")
    return (h_p_o - h_p_c).abs().mean()


def _kl_pooled(h_a: torch.Tensor, h_b: torch.Tensor) -> torch.Tensor:
    log_a = F.log_softmax(h_a.mean(dim=0), dim=-1)
    log_b = F.log_softmax(h_b.mean(dim=0), dim=-1)
    return (log_a.exp() * (log_a - log_b)).sum()


def difference_loss(
    h_p_c: torch.Tensor,
    h_p_s: torch.Tensor,
    h_g_c: torch.Tensor,
    h_g_s: torch.Tensor,
) -> torch.Tensor:
    """KL(softmax(mean h^c) || softmax(mean h^s)) summed over both modalities."""
    return _kl_pooled(h_p_c, h_p_s) + _kl_pooled(h_g_c, h_g_s)


def reconstruction_loss(
    h_p_o: torch.Tensor,
    h_p_r: torch.Tensor,
    h_g_o: torch.Tensor,
    h_g_r: torch.Tensor,
) -> torch.Tensor:
    if h_p_o.shape != h_p_r.shape:
        raise ShapeError(f"reconstruction_loss: pathology shapes differ, {tuple(h_p_o.shape)} vs {tuple(h_p_r.shape)}")
    if h_g_o.shape != h_g_r.shape:
        raise ShapeError(f"reconstruction_loss: genomic shapes differ, {tuple(h_g_o.shape)} vs {tuple(h_g_r.shape)}")
    return 0.5 * (F.mse_loss(h_p_r, h_p_o) + F.mse_loss(h_g_r, h_g_o))


def nll_survival_loss(hazards: torch.Tensor, time_bin: int, event_observed: bool) -> torch.Tensor:
    """
    Negative log-likelihood of a discrete-time survival label.

    Args:
        hazards: (T,) per-bin hazards in (0, 1)
        time_bin: Observed bin t, 0 <= t < T
        event_observed: True if death was observed in bin t, False if censored there

    Returns:
        -log S(t-1) - log h_t for events, -log S(t) for censored patients, with
        S(-1) = 1 and every log floored at LOG_CLAMP
    """
    n_bins = hazards.shape[-1]
    if not 0 <= time_bin < n_bins:
        raise SurvivalMetricError(f"time_bin {time_bin} out of range for {n_bins} bins")
    survival = torch.cumprod(1.0 - hazards, dim=-1)
    padded = torch.cat([torch.ones_like(survival[:1]), survival])
    if event_observed:
        return -torch.log(padded[time_bin].clamp(min=LOG_CLAMP)) - torch.log(hazards[time_bin].clamp(min=LOG_CLAMP))
    return -torch.log(padded[time_bin + 1].clamp(min=LOG_CLAMP))


def total_loss(
    l_sim: torch.Tensor,
    l_diff: torch.Tensor,
    l_recon: torch.Tensor,
    l_surv: torch.Tensor,
    weights: LossWeights,
    diff_sign: int = 1,
) -> LossBreakdown:
    """
    Combine the four terms; a diff_sign of -1 subtracts the difference term instead.

    Raises:
        NonFiniteError: Naming the first component that is NaN or infinite
    """
    for name, value in (("l_sim", l_sim), ("l_diff", l_diff), ("l_recon", l_recon), ("l_surv", l_surv)):
        if not bool(torch.isfinite(value).all()):
            raise NonFiniteError(f"loss component {name} is not finite ({float(value.detach())})")
    total = weights.alpha * l_sim + diff_sign * weights.beta * l_diff + weights.gamma * l_recon + l_surv
    return LossBreakdown(l_sim=l_sim, l_diff=l_diff, l_recon=l_recon, l_surv=l_surv, l_total=total)


def objective(
    bundle: RepresentationBundle | None,
    hazards: torch.Tensor,
    time_bin: int,
    event_observed: bool,
    weights: LossWeights,
    sim_variant: SimVariant = SimVariant.PROSE,
    diff_sign: int = 1,
) -> LossBreakdown:
    """All loss terms for one patient; without a bundle (baseline model) only L_surv is non-zero."""
    l_surv = nll_survival_loss(hazards, time_bin, event_observed)
    if bundle is None:
        zero = torch.zeros((), dtype=hazards.dtype)
        return total_loss(zero, zero, zero, l_surv, weights, diff_sign)

    if sim_variant is SimVariant.LITERAL:
        l_sim = literal_similarity_loss(bundle.h_p_o, bundle.h_p_c)
    else:
        l_sim = similarity_loss(bundle.h_p_c, bundle.h_g_c)
    l_diff = difference_loss(bundle.h_p_c, bundle.h_p_s, bundle.h_g_c, bundle.h_g_s)
    l_recon = reconstruction_loss(bundle.h_p_o, bundle.h_p_r, bundle.h_g_o, bundle.h_g_r)
    return total_loss(l_sim, l_diff, l_recon, l_surv, weights, diff_sign)

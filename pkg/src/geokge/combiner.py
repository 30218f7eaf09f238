"""Attention over constituent queries, convex combination, and scoring.

Scores are plausibilities: higher is better. The Euclidean variant scores
-|t - q_E|^power + bias(h) + bias(t); the Poincare variant lifts the combined
query, the hyperbolic relation translation and the candidate through the
origin exponential map and scores with the curved distance instead.

The attention scalar for model i is the inner product <w, q_i> with a
relation-specific trainable w (a global-w mode exists for ablation). With
attention disabled (SE / SEP) every weight is exactly 1/n.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from . import geometry
from .config import TrainConfig
from .query_models import CANONICAL_ORDER, ModelKind, all_queries, param_width


def attention_weights(queries: torch.Tensor, w: torch.Tensor,
                      variant: str = "alpha", enabled: bool = True) -> torch.Tensor:
    """Softmax attention over stacked queries (..., n, d) -> (..., n).

    variant "alpha-squared" squares the softmax weights and renormalizes,
    which keeps the output a convex combination. Disabled attention returns
    exactly uniform weights.
    """
    if queries.shape[-2] == 0:
        raise ValueError("need at least one query")
    n = queries.shape[-2]
    if not enabled:
        shape = queries.shape[:-1]
        return torch.full(shape, 1.0 / n, dtype=queries.dtype,
                          device=queries.device)
    scores = (queries * w.unsqueeze(-2)).sum(dim=-1)
    alphas = torch.softmax(scores, dim=-1)
    if variant == "alpha-squared":
        sq = alphas ** 2
        alphas = sq / sq.sum(dim=-1, keepdim=True)
    elif variant != "alpha":
        raise ValueError(f"unknown attention variant {variant!r}")
    return alphas


def combine_euclidean(queries: torch.Tensor, alphas: torch.Tensor) -> torch.Tensor:
    """Convex combination sum_i alpha_i q_i; queries (..., n, d), alphas (..., n)."""
    if queries.shape[:-1] != alphas.shape:
        raise ValueError(
            f"alphas shape {tuple(alphas.shape)} does not match queries "
            f"{tuple(queries.shape[:-1])}")
    return (alphas.unsqueeze(-1) * queries).sum(dim=-2)


def _powered(dist_sq: torch.Tensor, power: int) -> torch.Tensor:
    if power == 2:
        return dist_sq
    return torch.sqrt(dist_sq.clamp_min(1e-30))


def score_sea(q_e: torch.Tensor, tail: torch.Tensor, bias_h, bias_t,
              power: int = 2) -> torch.Tensor:
    """-|tail - q_E|^power + bias_h + bias_t."""
    diff = tail - q_e
    dist_sq = (diff * diff).sum(dim=-1)
    return -_powered(dist_sq, power) + bias_h + bias_t


def score_sepa(q_e: torch.Tensor, r_hyp: torch.Tensor, tail: torch.Tensor, c,
               bias_h, bias_t, power: int = 2, prefactor: str = "paper",
               counter: geometry.ClampCounter | None = None) -> torch.Tensor:
    """Poincare score: lift q_E, r_hyp and tail, Mobius-translate, curved distance."""
    q_m = geometry.exp_map_zero(q_e, c)
    lhs = geometry.mobius_add(q_m, geometry.exp_map_zero(r_hyp, c), c)
    dist = geometry.ball_distance(lhs, geometry.exp_map_zero(tail, c), c,
                                  prefactor=prefactor, counter=counter)
    return -_powered(dist ** 2, power) + bias_h + bias_t


def sphere_radius(bias_h: float, bias_t: float, margin: float) -> tuple[float, bool]:
    """Implied answer-sphere radius bias_h + bias_t - margin (diagnostic).

    Returns (radius, degenerate); degenerate flags a negative radius, i.e.
    an empty answer space at this margin.
    """
    radius = bias_h + bias_t - margin
    return radius, radius < 0


def combined_radius(alphas, radii) -> float:
    """Radius of the combined sphere: the alpha-weighted sum of per-model radii."""
    alphas = torch.as_tensor(alphas, dtype=torch.float64)
    radii = torch.as_tensor(radii, dtype=torch.float64)
    return float((alphas * radii).sum())


class EnsembleModel(nn.Module):
    """Trainable parameter store plus scoring for all four variants.

    Parameter blocks: entity table, per-entity bias, one relation block per
    active constituent, attention w, and (Poincare variants only) the
    hyperbolic relation translation and log-curvature.
    """

    def __init__(self, n_entities: int, n_relations: int, config: TrainConfig,
                 generator: torch.Generator | None = None) -> None:
        super().__init__()
        self.config = config
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.active = config.models
        dtype = config.torch_dtype()

        def normal(shape, std):
            t = torch.empty(shape, dtype=dtype)
            t.normal_(0.0, std, generator=generator)
            return t

        scale = config.init_scale
        self.entity = nn.Parameter(normal((n_entities, config.d), scale))
        self.bias = nn.Parameter(torch.zeros(n_entities, dtype=dtype))
        self.rel = nn.ParameterDict({
            kind.value: nn.Parameter(
                normal((n_relations, param_width(kind, config.d)), scale))
            for kind in self.active
        })
        w_shape = (config.d,) if config.attention_scope == "global" \
            else (n_relations, config.d)
        self.attn_w = nn.Parameter(normal(w_shape, 1.0 / math.sqrt(config.d)))
        if config.hyperbolic:
            self.rel_hyp = nn.Parameter(normal((n_relations, config.d), scale))
            self.log_curvature = nn.Parameter(torch.zeros((), dtype=dtype))
        else:
            self.rel_hyp = None
            self.log_curvature = None
        self.clamp_counter = geometry.ClampCounter()

    @property
    def curvature(self) -> torch.Tensor:
        if self.log_curvature is None:
            raise ValueError("Euclidean variant has no curvature")
        return torch.exp(self.log_curvature)

    def queries(self, h_idx: torch.Tensor, r_idx: torch.Tensor) -> torch.Tensor:
        """Stacked constituent queries, (B, n_active, d) in canonical order."""
        h = self.entity[h_idx]
        params = {kind: self.rel[kind.value][r_idx] for kind in self.active}
        return all_queries(h, params, self.active)

    def alphas_for(self, qs: torch.Tensor, r_idx: torch.Tensor,
                   force_alphas: torch.Tensor | None = None) -> torch.Tensor:
        if force_alphas is not None:
            return force_alphas.to(qs.dtype).expand(qs.shape[:-1])
        w = self.attn_w if self.attn_w.dim() == 1 else self.attn_w[r_idx]
        variant = "alpha-squared" if self.config.attention_reg else "alpha"
        return attention_weights(qs, w, variant=variant,
                                 enabled=self.config.attention_enabled)

    def combined_query(self, h_idx: torch.Tensor, r_idx: torch.Tensor,
                       force_alphas: torch.Tensor | None = None):
        """(q_E, alphas) for a batch of (head, relation) queries."""
        qs = self.queries(h_idx, r_idx)
        alphas = self.alphas_for(qs, r_idx, force_alphas)
        return combine_euclidean(qs, alphas), alphas

    def _query_point(self, h_idx, r_idx, force_alphas=None):
        """Scoring-side point: q_E for SEA/SE, exp-lifted and translated for SEPA/SEP."""
        q_e, alphas = self.combined_query(h_idx, r_idx, force_alphas)
        if not self.config.hyperbolic:
            return q_e, alphas
        c = self.curvature
        q_m = geometry.exp_map_zero(q_e, c)
        r_lift = geometry.exp_map_zero(self.rel_hyp[r_idx], c)
        return geometry.mobius_add(q_m, r_lift, c), alphas

    def _candidate_point(self, t_emb: torch.Tensor) -> torch.Tensor:
        if not self.config.hyperbolic:
            return t_emb
        return geometry.exp_map_zero(t_emb, self.curvature)

    def score_candidates(self, h_idx: torch.Tensor, r_idx: torch.Tensor,
                         cand_idx: torch.Tensor,
                         force_alphas: torch.Tensor | None = None) -> torch.Tensor:
        """Scores for explicit candidate tails; cand_idx (B,) or (B, K)."""
        point, _ = self._query_point(h_idx, r_idx, force_alphas)
        squeeze = cand_idx.dim() == 1
        if squeeze:
            cand_idx = cand_idx.unsqueeze(-1)
        tails = self._candidate_point(self.entity[cand_idx])
        if self.config.hyperbolic:
            dist = geometry.ball_distance_bcast(
                point.unsqueeze(-2), tails, self.curvature,
                prefactor=self.config.distance_prefactor,
                counter=self.clamp_counter)
            dist_sq = dist ** 2
        else:
            diff = tails - point.unsqueeze(-2)
            dist_sq = (diff * diff).sum(dim=-1)
        scores = (-_powered(dist_sq, self.config.distance_power)
                  + self.bias[h_idx].unsqueeze(-1) + self.bias[cand_idx])
        return scores.squeeze(-1) if squeeze else scores

    def score_all_with_alphas(self, h_idx: torch.Tensor, r_idx: torch.Tensor,
                              force_alphas: torch.Tensor | None = None):
        """Scores against every entity, (B, E), plus the attention used."""
        point, alphas = self._query_point(h_idx, r_idx, force_alphas)
        if self.config.hyperbolic:
            tails = self._candidate_point(self.entity)
            dist = geometry.ball_distance_matrix(
                point, tails, self.curvature,
                prefactor=self.config.distance_prefactor,
                counter=self.clamp_counter)
            dist_sq = dist ** 2
        else:
            # Gram expansion |t|^2 - 2 t.q + |q|^2 keeps this one matmul.
            t_sq = (self.entity * self.entity).sum(dim=-1)
            dist_sq = (t_sq.unsqueeze(0) - 2.0 * point @ self.entity.T
                       + (point * point).sum(dim=-1, keepdim=True)).clamp_min(0.0)
        scores = (-_powered(dist_sq, self.config.distance_power)
                  + self.bias[h_idx].unsqueeze(-1) + self.bias.unsqueeze(0))
        return scores, alphas

    def score_all(self, h_idx: torch.Tensor, r_idx: torch.Tensor,
                  force_alphas: torch.Tensor | None = None) -> torch.Tensor:
        return self.score_all_with_alphas(h_idx, r_idx, force_alphas)[0]

    def standalone_scores(self, kind: ModelKind, h_idx: torch.Tensor,
                          r_idx: torch.Tensor, cand_idx: torch.Tensor) -> torch.Tensor:
        """Scores using a single constituent's query alone (subsumption oracle)."""
        if kind not in self.active:
            raise ValueError(f"{kind} is not active")
        one_hot = torch.zeros(len(self.active), dtype=self.entity.dtype)
        one_hot[self.active.index(kind)] = 1.0
        return self.score_candidates(h_idx, r_idx, cand_idx, force_alphas=one_hot)

    def parameter_blocks(self) -> dict[str, nn.Parameter]:
        """Named blocks in a stable order, for checkpoints and gradcheck."""
        blocks: dict[str, nn.Parameter] = {
            "entity": self.entity, "bias": self.bias}
        for kind in CANONICAL_ORDER:
            if kind in self.active:
                blocks[f"rel_{kind.value}"] = self.rel[kind.value]
        blocks["attn_w"] = self.attn_w
        if self.rel_hyp is not None:
            blocks["rel_hyp"] = self.rel_hyp
            blocks["log_curvature"] = self.log_curvature
        return blocks

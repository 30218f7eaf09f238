"""Constituent query transformations mapping a head embedding to a query
vector in the shared d-dimensional real space.

All five transformations live on one flat real layout; complex-valued models
treat consecutive coordinate pairs as (re, im). The canonical order below
fixes attention-index semantics across checkpoints.
"""

from __future__ import annotations

from enum import Enum

import torch

from . import geometry


class ModelKind(str, Enum):
    TRANSE = "transe"
    ROTATE = "rotate"
    DISTMULT = "distmult"
    COMPLEX = "complex"
    REFLECTION = "reflection"


CANONICAL_ORDER = (
    ModelKind.TRANSE,
    ModelKind.ROTATE,
    ModelKind.DISTMULT,
    ModelKind.COMPLEX,
    ModelKind.REFLECTION,
)

# Models whose relation parameters are d/2 angles instead of d-vectors.
ANGLE_MODELS = frozenset({ModelKind.ROTATE, ModelKind.REFLECTION})
# Models that interpret coordinates as complex pairs (need even d).
PAIR_MODELS = frozenset({ModelKind.ROTATE, ModelKind.COMPLEX, ModelKind.REFLECTION})


def parse_models(names) -> tuple[ModelKind, ...]:
    """Normalize a config list of model names into canonical order."""
    kinds = set()
    for name in names:
        if isinstance(name, ModelKind):
            kinds.add(name)
            continue
        try:
            kinds.add(ModelKind(str(name).lower()))
        except ValueError:
            raise ValueError(f"unknown model kind {name!r}") from None
    if not kinds:
        raise ValueError("active model set must be non-empty")
    return tuple(k for k in CANONICAL_ORDER if k in kinds)


def param_width(kind: ModelKind, d: int) -> int:
    return d // 2 if kind in ANGLE_MODELS else d


def _check_dims(h: torch.Tensor, r: torch.Tensor) -> None:
    if h.shape[-1] != r.shape[-1]:
        raise ValueError(f"dimension mismatch: {h.shape[-1]} vs {r.shape[-1]}")


def query_transe(h: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
    """q = h + r."""
    _check_dims(h, r)
    return h + r


def query_rotate(h: torch.Tensor, theta: torch.Tensor) -> torch.Tensor:
    """q = h rotated pairwise by the relation angles (unit-modulus rotor)."""
    return geometry.complex_rotate(h, theta)


def query_distmult(h: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
    """q = h * r elementwise; symmetric in (h, r) by construction."""
    _check_dims(h, r)
    return h * r


def query_complex(h: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
    """q = h x r, element-wise complex product without normalization."""
    return geometry.complex_product(h, r)


def query_reflect(h: torch.Tensor, theta: torch.Tensor) -> torch.Tensor:
    """q = Ref(theta) h, block-diagonal 2D reflections."""
    return geometry.reflect2d(h, theta)


_QUERY_FNS = {
    ModelKind.TRANSE: query_transe,
    ModelKind.ROTATE: query_rotate,
    ModelKind.DISTMULT: query_distmult,
    ModelKind.COMPLEX: query_complex,
    ModelKind.REFLECTION: query_reflect,
}


def query(kind: ModelKind, h: torch.Tensor, rel_param: torch.Tensor) -> torch.Tensor:
    return _QUERY_FNS[kind](h, rel_param)


def all_queries(h: torch.Tensor, rel_params: dict[ModelKind, torch.Tensor],
                active: tuple[ModelKind, ...]) -> torch.Tensor:
    """Stack one query per active model along a new second-to-last axis.

    h: (..., d); rel_params[kind]: (..., d) or (..., d/2) for angle models.
    Returns (..., n_active, d) in canonical order.
    """
    if not active:
        raise ValueError("active model set must be non-empty")
    ordered = [k for k in CANONICAL_ORDER if k in active]
    return torch.stack([query(k, h, rel_params[k]) for k in ordered], dim=-2)

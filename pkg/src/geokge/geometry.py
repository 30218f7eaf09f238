"""Numerical kernels: paired-coordinate complex arithmetic, 2D reflections,
and Poincare-ball operations (exponential map, Mobius addition, curved distance).

All functions operate on torch tensors whose last dimension is the embedding
dimension d. Complex vectors are stored interleaved (re, im, re, im, ...), so
pair-based operations require d to be even. Curvature c may be a python float
or a scalar tensor (it stays in the autograd graph when trainable).
"""

from __future__ import annotations

import math

import torch

# Margin used when rescaling points onto the ball; keeps atanh finite.
BOUNDARY_MARGIN = 1e-5

# atanh argument clamp, per floating dtype. 1 - 1e-15 is not representable in
# float32, so the single-precision path clamps earlier.
_ATANH_CLAMP = {torch.float64: 1.0 - 1e-15, torch.float32: 1.0 - 1e-7}

# Norms below this use the first-order series (tanh(x)/x -> 1), avoiding 0/0.
MIN_NORM = 1e-15


class ClampCounter:
    """Counts ball-boundary clamp events so training logs can report them."""

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)

    def reset(self) -> int:
        n, self.count = self.count, 0
        return n


def _check_pairs(h: torch.Tensor, theta: torch.Tensor | None = None) -> None:
    d = h.shape[-1]
    if d % 2 != 0:
        raise ValueError(f"pair-based op needs even dimension, got d={d}")
    if theta is not None and theta.shape[-1] != d // 2:
        raise ValueError(
            f"angle vector must have length d/2={d // 2}, got {theta.shape[-1]}"
        )


def _interleave(re: torch.Tensor, im: torch.Tensor) -> torch.Tensor:
    return torch.stack((re, im), dim=-1).flatten(-2)


def complex_rotate(h: torch.Tensor, theta: torch.Tensor) -> torch.Tensor:
    """Rotate each (re, im) pair of h by the corresponding angle in theta.

    The rotor has unit modulus by construction, so per-pair norms are
    preserved exactly (up to rounding).
    """
    _check_pairs(h, theta)
    re, im = h[..., 0::2], h[..., 1::2]
    cos, sin = torch.cos(theta), torch.sin(theta)
    return _interleave(re * cos - im * sin, re * sin + im * cos)


def complex_product(h: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
    """Element-wise complex product of two interleaved vectors (no normalization)."""
    if h.shape[-1] != r.shape[-1]:
        raise ValueError(
            f"dimension mismatch: {h.shape[-1]} vs {r.shape[-1]}"
        )
    _check_pairs(h)
    a, b = h[..., 0::2], h[..., 1::2]
    c, d = r[..., 0::2], r[..., 1::2]
    return _interleave(a * c - b * d, a * d + b * c)


def reflect2d(h: torch.Tensor, theta: torch.Tensor) -> torch.Tensor:
    """Apply the 2D reflection [[cos t, sin t], [sin t, -cos t]] per pair.

    Reflections are involutions: applying the same theta twice returns h.
    """
    _check_pairs(h, theta)
    re, im = h[..., 0::2], h[..., 1::2]
    cos, sin = torch.cos(theta), torch.sin(theta)
    return _interleave(re * cos + im * sin, re * sin - im * cos)


def _sqrt_c(c) -> torch.Tensor | float:
    return c ** 0.5 if not torch.is_tensor(c) else torch.sqrt(c)


def exp_map_zero(v: torch.Tensor, c) -> torch.Tensor:
    """Exponential map at the origin: tanh(sqrt(c)|v|) * v / (sqrt(c)|v|).

    For |v| below MIN_NORM the clamped ratio tanh(x)/x evaluates to 1, which
    is the first-order series, so v = 0 maps to 0 without a 0/0.
    """
    sc = _sqrt_c(c)
    norm = torch.linalg.vector_norm(v, dim=-1, keepdim=True).clamp_min(MIN_NORM)
    return torch.tanh(sc * norm) / (sc * norm) * v


def mobius_add(p: torch.Tensor, q: torch.Tensor, c) -> torch.Tensor:
    """Mobius addition on the curvature-c Poincare ball."""
    p2 = (p * p).sum(dim=-1, keepdim=True)
    q2 = (q * q).sum(dim=-1, keepdim=True)
    pq = (p * q).sum(dim=-1, keepdim=True)
    num = (1 + 2 * c * pq + c * q2) * p + (1 - c * p2) * q
    den = 1 + 2 * c * pq + c ** 2 * p2 * q2
    return num / den.clamp_min(MIN_NORM)


def _dist_from_arg(arg: torch.Tensor, c, prefactor: str,
                   counter: ClampCounter | None) -> torch.Tensor:
    clamp = _ATANH_CLAMP.get(arg.dtype, _ATANH_CLAMP[torch.float32])
    if counter is not None:
        counter.add((arg >= clamp).sum().item())
    arg = arg.clamp(max=clamp)
    if prefactor == "paper":
        pref = 2.0 / c
    elif prefactor == "sqrt":
        pref = 2.0 / _sqrt_c(c)
    else:
        raise ValueError(f"unknown distance prefactor {prefactor!r}")
    return pref * torch.atanh(arg)


def ball_distance(p: torch.Tensor, q: torch.Tensor, c, prefactor: str = "paper",
                  counter: ClampCounter | None = None) -> torch.Tensor:
    """Geodesic distance pref * atanh(sqrt(c) |(-p) + q|) with + Mobius.

    prefactor="paper" uses 2/c; prefactor="sqrt" uses the conventional
    2/sqrt(c). Both agree at c=1. Arguments reaching 1 after rounding are
    clamped and (optionally) counted.
    """
    diff = mobius_add(-p, q, c)
    norm = torch.linalg.vector_norm(diff, dim=-1)
    return _dist_from_arg(_sqrt_c(c) * norm, c, prefactor, counter)


def _gram_sqnorm(p2: torch.Tensor, q2: torch.Tensor, pq: torch.Tensor,
                 c) -> torch.Tensor:
    # |(-p) + q|^2 from the Gram terms only; avoids materializing the
    # (batch, candidates, d) Mobius sum during all-entity scoring.
    a = 1 - 2 * c * pq + c * q2
    b = 1 - c * p2
    den = 1 - 2 * c * pq + c ** 2 * p2 * q2
    num = a ** 2 * p2 - 2 * a * b * pq + b ** 2 * q2
    return (num / (den ** 2).clamp_min(MIN_NORM)).clamp_min(0.0)


def ball_distance_bcast(x: torch.Tensor, y: torch.Tensor, c,
                        prefactor: str = "paper",
                        counter: ClampCounter | None = None) -> torch.Tensor:
    """ball_distance for broadcastable x, y via the Gram form."""
    p2 = (x * x).sum(dim=-1)
    q2 = (y * y).sum(dim=-1)
    pq = (x * y).sum(dim=-1)
    sq = _gram_sqnorm(p2, q2, pq, c)
    arg = torch.sqrt((c * sq).clamp_min(MIN_NORM ** 2))
    return _dist_from_arg(arg, c, prefactor, counter)


def ball_distance_matrix(x: torch.Tensor, ys: torch.Tensor, c,
                         prefactor: str = "paper",
                         counter: ClampCounter | None = None) -> torch.Tensor:
    """Distance from each row of x (B, d) to every row of ys (E, d) -> (B, E)."""
    p2 = (x * x).sum(dim=-1, keepdim=True)
    q2 = (ys * ys).sum(dim=-1).unsqueeze(0)
    pq = x @ ys.transpose(-1, -2)
    sq = _gram_sqnorm(p2, q2, pq, c)
    arg = torch.sqrt((c * sq).clamp_min(MIN_NORM ** 2))
    return _dist_from_arg(arg, c, prefactor, counter)


def project_to_ball(v: torch.Tensor, c) -> torch.Tensor:
    """Rescale rows with sqrt(c)|v| >= 1 to norm (1 - 1e-5)/sqrt(c)."""
    sc = _sqrt_c(c)
    norm = torch.linalg.vector_norm(v, dim=-1, keepdim=True)
    limit = (1.0 - BOUNDARY_MARGIN) / sc
    factor = torch.where(sc * norm >= 1.0, limit / norm.clamp_min(MIN_NORM),
                         torch.ones_like(norm))
    return v * factor

"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from geokge import RelationPattern, SyntheticSpec, augment_reciprocal, \
    generate_synthetic
from geokge.kg_data import from_string_triples


def rand_vec(rng: np.random.Generator, d: int, scale: float = 1.0,
             dtype=torch.float64) -> torch.Tensor:
    return torch.tensor(rng.normal(0.0, scale, size=d), dtype=dtype)


def fd_gradient(f, x: torch.Tensor, step: float = 1e-6) -> torch.Tensor:
    """Central finite-difference gradient of scalar f at x (same shape as x)."""
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + step
        f_plus = float(f(x))
        flat[i] = orig - step
        f_minus = float(f(x))
        flat[i] = orig
        out[i] = (f_plus - f_minus) / (2 * step)
    return grad


def max_rel_err(a: torch.Tensor, b: torch.Tensor, atol: float = 1e-8) -> float:
    a, b = a.double(), b.double()
    denom = torch.maximum(torch.maximum(a.abs(), b.abs()),
                          torch.full_like(a, atol))
    return ((a - b).abs() / denom).max().item()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def toy_kg():
    """Small two-pattern graph, reciprocal-augmented, for training tests."""
    spec = SyntheticSpec(
        n_entities=20,
        relations=[RelationPattern(kind="symmetric", pairs=14),
                   RelationPattern(kind="antisymmetric", edges=12)],
        seed=99,
    )
    return augment_reciprocal(generate_synthetic(spec))


def tiny_graph(reciprocal: bool = True):
    """Hand-written 5-entity graph used by evaluation oracles."""
    train = [("a", "r", "b"), ("b", "r", "c"), ("c", "s", "a"),
             ("a", "r", "c"), ("d", "s", "b")]
    valid = [("a", "s", "d")]
    test = [("b", "r", "d"), ("d", "s", "e"), ("e", "r", "a")]
    kg = from_string_triples(train, valid, test)
    return augment_reciprocal(kg) if reciprocal else kg

"""Constituent query transformations and their Jacobians."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from geokge.query_models import CANONICAL_ORDER, ModelKind, all_queries, \
    param_width, parse_models, query_complex, query_distmult, query_reflect, \
    query_rotate, query_transe
from conftest import fd_gradient, max_rel_err, rand_vec

ALL = tuple(CANONICAL_ORDER)


class TestTransE:
    def test_zero_translation(self):
        h = torch.tensor([1.0, 2.0])
        assert torch.equal(query_transe(h, torch.zeros(2)), h)

    def test_additive_inverse(self):
        h = torch.tensor([1.0, 2.0])
        assert torch.equal(query_transe(h, -h), torch.zeros(2))

    def test_random_sum_oracle(self, rng):
        h, r = rand_vec(rng, 6), rand_vec(rng, 6)
        expect = torch.tensor([h[i].item() + r[i].item() for i in range(6)],
                              dtype=torch.float64)
        assert torch.equal(query_transe(h, r), expect)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            query_transe(torch.zeros(4), torch.zeros(2))


class TestDistMult:
    def test_ones_identity(self, rng):
        h = rand_vec(rng, 6)
        assert torch.equal(query_distmult(h, torch.ones(6, dtype=torch.float64)), h)

    def test_zero_annihilates(self, rng):
        h = rand_vec(rng, 6)
        out = query_distmult(h, torch.zeros(6, dtype=torch.float64))
        assert torch.equal(out, torch.zeros(6, dtype=torch.float64))

    def test_random_product_oracle(self, rng):
        h, r = rand_vec(rng, 6), rand_vec(rng, 6)
        expect = torch.tensor([h[i].item() * r[i].item() for i in range(6)],
                              dtype=torch.float64)
        assert torch.equal(query_distmult(h, r), expect)

    @given(st.lists(st.floats(-5, 5), min_size=4, max_size=4),
           st.lists(st.floats(-5, 5), min_size=4, max_size=4))
    @settings(max_examples=50, deadline=None)
    def test_symmetric_in_arguments(self, hs, rs):
        h = torch.tensor(hs, dtype=torch.float64)
        r = torch.tensor(rs, dtype=torch.float64)
        assert torch.equal(query_distmult(h, r), query_distmult(r, h))


class TestRotateReflectInverses:
    @given(st.lists(st.floats(-3, 3), min_size=6, max_size=6),
           st.lists(st.floats(-3, 3), min_size=3, max_size=3))
    @settings(max_examples=100, deadline=None)
    def test_rotate_then_unrotate(self, hs, ts):
        h = torch.tensor(hs, dtype=torch.float64)
        theta = torch.tensor(ts, dtype=torch.float64)
        back = query_rotate(query_rotate(h, theta), -theta)
        assert (back - h).abs().max().item() < 1e-12


class TestAllQueries:
    def params_for(self, rng, active, d, identity=False):
        params = {}
        for kind in active:
            width = param_width(kind, d)
            if not identity:
                params[kind] = rand_vec(rng, width)
                continue
            if kind == ModelKind.TRANSE:
                params[kind] = torch.zeros(d, dtype=torch.float64)
            elif kind == ModelKind.DISTMULT:
                params[kind] = torch.ones(d, dtype=torch.float64)
            elif kind == ModelKind.COMPLEX:
                unit = torch.zeros(d, dtype=torch.float64)
                unit[0::2] = 1.0
                params[kind] = unit
            else:  # angle models
                params[kind] = torch.zeros(width, dtype=torch.float64)
        return params

    def test_singleton(self, rng):
        h = rand_vec(rng, 4)
        params = self.params_for(rng, (ModelKind.TRANSE,), 4)
        out = all_queries(h, params, (ModelKind.TRANSE,))
        assert out.shape == (1, 4)

    def test_all_five_shape(self, rng):
        h = rand_vec(rng, 4)
        params = self.params_for(rng, ALL, 4)
        out = all_queries(h, params, ALL)
        assert out.shape == (5, 4)

    def test_identity_parameters(self, rng):
        # identity-like params: all queries except Reflection reproduce h;
        # Reflection yields the theta=0 reflection of h.
        h = rand_vec(rng, 6)
        params = self.params_for(rng, ALL, 6, identity=True)
        out = all_queries(h, params, ALL)
        for i, kind in enumerate(ALL[:-1]):
            assert torch.allclose(out[i], h, atol=1e-15), kind
        expect_ref = query_reflect(h, torch.zeros(3, dtype=torch.float64))
        assert torch.equal(out[4], expect_ref)

    def test_empty_active_rejected(self, rng):
        with pytest.raises(ValueError):
            all_queries(rand_vec(rng, 4), {}, ())

    def test_canonical_order_is_fixed(self):
        got = parse_models(["reflection", "transe", "complex"])
        assert got == (ModelKind.TRANSE, ModelKind.COMPLEX, ModelKind.REFLECTION)


class TestJacobians:
    """Analytic Jacobians vs central differences, rel err < 1e-4."""

    CASES = {
        ModelKind.TRANSE: query_transe,
        ModelKind.ROTATE: query_rotate,
        ModelKind.DISTMULT: query_distmult,
        ModelKind.COMPLEX: query_complex,
        ModelKind.REFLECTION: query_reflect,
    }

    @pytest.mark.parametrize("kind", list(CASES))
    def test_jacobian_matches_fd(self, kind, rng):
        d = 6
        fn = self.CASES[kind]
        h = rand_vec(rng, d)
        p = rand_vec(rng, param_width(kind, d))
        w = rand_vec(rng, d)  # random projection makes the output scalar

        for arg_index, x0 in ((0, h), (1, p)):
            def scalar(x):
                args = (x, p) if arg_index == 0 else (h, x)
                return (fn(*args) * w).sum()

            x = x0.clone().requires_grad_(True)
            scalar(x).backward()
            fd = fd_gradient(lambda t: scalar(t).detach(), x0.clone())
            assert max_rel_err(x.grad, fd, atol=1e-6) < 1e-4, (kind, arg_index)

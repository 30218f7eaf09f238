"""Loss values, negative sampling, optimization, gradient verification,
reproducibility, and the standalone-model training equivalence oracle."""

import dataclasses
import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from scipy.stats import chisquare

from geokge import TrainConfig, grad_check, load_checkpoint, loss_one_query, \
    sample_negatives, save_checkpoint, train
from geokge.combiner import EnsembleModel
from geokge.training import _loss_sampled, batch_loss, make_optimizer


class TestLossOneQuery:
    def test_saturated_ranking_has_zero_loss(self):
        scores = torch.tensor([200.0, -200.0, -200.0], dtype=torch.float64)
        assert loss_one_query(scores, 0).item() < 1e-12

    def test_two_zero_scores(self):
        scores = torch.tensor([0.0, 0.0], dtype=torch.float64)
        expect = 2 * math.log(2.0)
        assert abs(loss_one_query(scores, 0).item() - expect) < 1e-12
        assert abs(expect - 1.3862943611) < 1e-9

    def test_monotone_in_positive_score(self):
        negs = torch.tensor([0.3, -0.7], dtype=torch.float64)
        losses = [
            loss_one_query(torch.cat([torch.tensor([s], dtype=torch.float64),
                                      negs]), 0).item()
            for s in (-1.0, 0.0, 1.0, 3.0)
        ]
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            loss_one_query(torch.zeros(3), 3)

    def test_matches_sampled_form(self, rng):
        scores = torch.tensor(rng.normal(size=6), dtype=torch.float64)
        direct = loss_one_query(scores, 2)
        pos = scores[2].reshape(1)
        neg = scores[[0, 1, 3, 4, 5]].reshape(1, 5)
        assert abs(direct.item() - _loss_sampled(pos, neg).item()) < 1e-12


class TestSampleNegatives:
    def test_two_entities_forces_the_other(self):
        gen = torch.Generator().manual_seed(0)
        tails = torch.zeros(8, dtype=torch.long)
        negs = sample_negatives(gen, tails, 5, 2)
        assert torch.equal(negs, torch.ones(8, 5, dtype=torch.long))

    def test_never_hits_the_tail(self):
        gen = torch.Generator().manual_seed(1)
        tails = torch.arange(50) % 7
        negs = sample_negatives(gen, tails, 20, 7)
        assert (negs != tails.unsqueeze(1)).all()

    def test_deterministic_given_seed(self):
        a = sample_negatives(torch.Generator().manual_seed(9),
                             torch.zeros(4, dtype=torch.long), 10, 20)
        b = sample_negatives(torch.Generator().manual_seed(9),
                             torch.zeros(4, dtype=torch.long), 10, 20)
        assert torch.equal(a, b)

    def test_chi_square_uniformity(self):
        gen = torch.Generator().manual_seed(7)
        tails = torch.full((100_000,), 13, dtype=torch.long)
        negs = sample_negatives(gen, tails, 1, 50).reshape(-1)
        counts = torch.bincount(negs, minlength=50)
        assert counts[13] == 0
        kept = counts[counts > 0]
        assert kept.shape[0] == 49
        _, p = chisquare(kept.numpy())
        assert p > 0.001

    def test_too_few_entities_rejected(self):
        gen = torch.Generator().manual_seed(0)
        with pytest.raises(ValueError):
            sample_negatives(gen, torch.zeros(2, dtype=torch.long), 3, 1)


class TestOptimizerStep:
    def test_zero_gradient_leaves_params_unchanged(self):
        x = torch.nn.Parameter(torch.tensor([1.5, -2.0]))
        opt = torch.optim.Adam([x], lr=0.1)
        x.grad = torch.zeros_like(x)
        opt.step()
        assert torch.equal(x.detach(), torch.tensor([1.5, -2.0]))

    @pytest.mark.parametrize("optimizer", ["adam", "adagrad"])
    def test_quadratic_descent(self, optimizer):
        # lr small enough that 100 steps stay in the monotone approach phase
        # (Adam's near-constant step size crosses zero around step 1/lr)
        cfg = TrainConfig(d=2, models=["transe"], optimizer=optimizer, lr=0.005)
        x = torch.nn.Parameter(torch.tensor(1.0, dtype=torch.float64))
        holder = torch.nn.Module()
        holder.register_parameter("x", x)
        opt = make_optimizer(holder, cfg)
        prev = abs(x.item())
        for _ in range(100):
            opt.zero_grad()
            (x ** 2).backward()
            opt.step()
            cur = abs(x.item())
            assert cur < prev
            prev = cur

    def test_smoke_train_halves_loss(self, toy_kg):
        cfg = TrainConfig(d=8, models=["transe", "distmult"], variant="SEA",
                          lr=0.05, negatives=-1, batch_size=128,
                          dtype="double", max_epochs=200, eval_every=1000,
                          patience=0, seed=5)
        result = train(toy_kg, cfg)
        first, last = result.history[0]["loss"], result.history[-1]["loss"]
        assert last <= 0.5 * first

    def test_non_finite_loss_aborts_with_diagnostic(self, toy_kg):
        cfg = TrainConfig(d=8, models=["transe"], variant="SEA", lr=0.1,
                          negatives=2, batch_size=16, dtype="single",
                          max_epochs=3, init_scale=1e30, seed=0)
        with pytest.raises(RuntimeError, match="non-finite"):
            train(toy_kg, cfg)

    def test_unaugmented_graph_rejected(self):
        from conftest import tiny_graph
        kg = tiny_graph(reciprocal=False)
        with pytest.raises(ValueError, match="reciprocal"):
            train(kg, TrainConfig(d=4, models=["transe"], max_epochs=1))


class TestGradCheck:
    def test_sea_all_models(self):
        cfg = TrainConfig(d=8, models=["transe", "rotate", "distmult",
                                       "complex", "reflection"], variant="SEA")
        report = grad_check(cfg, n_probes=60)
        assert report.passed, report.to_dict()

    def test_sepa_all_models(self):
        cfg = TrainConfig(d=8, models=["transe", "rotate", "distmult",
                                       "complex", "reflection"],
                          variant="SEPA")
        report = grad_check(cfg, n_probes=60)
        assert report.passed, report.to_dict()
        assert "rel_hyp" in report.blocks and "log_curvature" in report.blocks

    def test_attention_disabled_w_gradient_is_zero(self):
        cfg = TrainConfig(d=8, models=["transe", "distmult"], variant="SE")
        report = grad_check(cfg, n_probes=30)
        assert report.passed
        assert report.blocks["attn_w"].max_rel_err == 0.0


class TestReproducibility:
    def test_identical_seed_identical_loss(self, toy_kg):
        torch.set_num_threads(1)
        cfg = TrainConfig(d=8, models=["transe", "distmult"], variant="SEA",
                          lr=0.01, negatives=4, batch_size=32, dtype="double",
                          max_epochs=10, eval_every=1000, patience=0, seed=3)
        r1 = train(toy_kg, cfg)
        r2 = train(toy_kg, cfg)
        assert r1.history[-1]["loss"] == r2.history[-1]["loss"]

    def test_curvature_stays_positive(self, toy_kg):
        cfg = TrainConfig(d=8, models=["transe"], variant="SEPA", lr=0.05,
                          negatives=4, batch_size=32, dtype="double",
                          max_epochs=15, eval_every=1000, patience=0, seed=3)
        result = train(toy_kg, cfg)
        assert result.model.curvature.item() > 0.0

    def test_early_stopping_respects_patience(self, toy_kg):
        cfg = TrainConfig(d=8, models=["transe"], variant="SEA", lr=1e-12,
                          negatives=4, batch_size=32, dtype="double",
                          max_epochs=50, eval_every=1, patience=2, seed=3)
        result = train(toy_kg, cfg)
        assert len(result.history) <= 4
        assert result.best_epoch == 1


class StandaloneTransE(torch.nn.Module):
    """Independent reference implementation: score -|h + r - t|^2 + b_h + b_t."""

    def __init__(self, entity, rel, bias):
        super().__init__()
        self.entity = torch.nn.Parameter(entity.clone())
        self.rel = torch.nn.Parameter(rel.clone())
        self.bias = torch.nn.Parameter(bias.clone())

    def scores(self, h, r, cand):
        q = self.entity[h] + self.rel[r]
        diff = self.entity[cand] - q.unsqueeze(-2)
        dist_sq = (diff * diff).sum(dim=-1)
        return -dist_sq + self.bias[h].unsqueeze(-1) + self.bias[cand]


class TestSingleModelEquivalence:
    def test_transe_trajectory_matches_standalone(self, toy_kg):
        cfg = TrainConfig(d=8, models=["transe"], variant="SEA", lr=0.01,
                          negatives=6, batch_size=16, dtype="double", seed=21)
        gen = torch.Generator().manual_seed(cfg.seed)
        model = EnsembleModel(toy_kg.n_entities, toy_kg.n_relations, cfg,
                              generator=gen)
        oracle = StandaloneTransE(model.entity.detach(),
                                  model.rel["transe"].detach(),
                                  model.bias.detach())
        opt_m = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        opt_o = torch.optim.Adam(oracle.parameters(), lr=cfg.lr)

        data = torch.from_numpy(toy_kg.train)
        neg_gen = torch.Generator().manual_seed(777)
        for step in range(50):
            idx = torch.arange(step * 16, (step + 1) * 16) % data.shape[0]
            batch = data[idx]
            h, r, t = batch[:, 0], batch[:, 1], batch[:, 2]
            negs = sample_negatives(neg_gen, t, cfg.negatives,
                                    toy_kg.n_entities)

            pos_m = model.score_candidates(h, r, t)
            neg_m = model.score_candidates(h, r, negs)
            loss_m = _loss_sampled(pos_m, neg_m).mean()
            opt_m.zero_grad()
            loss_m.backward()
            opt_m.step()

            pos_o = oracle.scores(h, r, t.unsqueeze(-1)).squeeze(-1)
            neg_o = oracle.scores(h, r, negs)
            loss_o = (F.softplus(-pos_o) + F.softplus(neg_o).sum(-1)).mean()
            opt_o.zero_grad()
            loss_o.backward()
            opt_o.step()

            for got, want in ((model.entity, oracle.entity),
                              (model.rel["transe"], oracle.rel),
                              (model.bias, oracle.bias)):
                diff = (got.detach() - want.detach()).abs().max().item()
                assert diff < 1e-10, f"step {step}: {diff}"


class TestCheckpointIO:
    def test_round_trip(self, tmp_path, toy_kg):
        cfg = TrainConfig(d=8, models=["transe", "complex"], variant="SEPA",
                          lr=0.05, negatives=4, batch_size=32, dtype="double",
                          max_epochs=3, eval_every=1000, patience=0, seed=8)
        result = train(toy_kg, cfg)
        ckpt = save_checkpoint(tmp_path / "ckpt", result.model, cfg,
                               meta={"epoch": 3})
        model, manifest = load_checkpoint(ckpt)
        assert manifest["model_order"] == ["transe", "complex"]
        assert manifest["epoch"] == 3
        for name, param in result.model.parameter_blocks().items():
            got = dict(model.parameter_blocks())[name]
            assert torch.equal(got.detach(), param.detach()), name
        h = torch.tensor([0, 1]); r = torch.tensor([0, 1])
        with torch.no_grad():
            assert torch.equal(model.score_all(h, r),
                               result.model.score_all(h, r))

    def test_single_precision_blocks_stored_as_f4(self, tmp_path, toy_kg):
        cfg = TrainConfig(d=4, models=["transe"], variant="SEA", dtype="single",
                          max_epochs=1, negatives=2, eval_every=1000,
                          patience=0)
        result = train(toy_kg, cfg)
        ckpt = save_checkpoint(tmp_path / "c", result.model, cfg)
        _, manifest = load_checkpoint(ckpt)
        assert all(b["dtype"] == "<f4" for b in manifest["blocks"].values())
        entity = manifest["blocks"]["entity"]
        nbytes = (ckpt / entity["file"]).stat().st_size
        assert nbytes == 4 * np.prod(entity["shape"])

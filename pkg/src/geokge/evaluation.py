"""Filtered-ranking evaluation: MRR, Hits@k, per-relation breakdown and
per-relation mean attention.

Every test triple is ranked in both directions: the tail query (h, r, ?)
directly and the head query through the reciprocal relation (t, r_inv, ?).
Known true competitors from train/valid/test are filtered out; ties are
broken pessimistically (a tied competitor counts as ranked above).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import torch

from .kg_data import KnowledgeGraph

DEFAULT_KS = (1, 3, 10)


def filtered_rank(scores: torch.Tensor, true_tail: int,
                  filtered: set[int]) -> int:
    """Pessimistic filtered rank of the true tail within a score vector.

    rank = 1 + #competitors with a strictly higher score
             + #competitors tied with the true score,
    where competitors exclude the true tail and every filtered candidate.
    """
    scores = scores.detach()
    s_true = scores[true_tail].clone()
    drop = [e for e in filtered if e != true_tail]
    if drop:
        scores = scores.clone()
        scores[torch.as_tensor(drop, dtype=torch.long)] = float("-inf")
    higher = (scores > s_true).sum().item()
    tied = (scores == s_true).sum().item() - 1  # the true tail ties itself
    return int(1 + higher + tied)


@dataclass
class RankingReport:
    mrr: float
    hits: dict[int, float]
    n_test: int
    per_relation: dict[str, dict] = field(default_factory=dict)
    per_relation_attention: dict[str, list[float]] = field(default_factory=dict)
    model_order: list[str] = field(default_factory=list)
    rank_averaging: str = "reciprocal"
    split: str = "test"

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "mrr": self.mrr,
            "hits": {str(k): v for k, v in self.hits.items()},
            "n_test": self.n_test,
            "rank_averaging": self.rank_averaging,
            "model_order": self.model_order,
            "per_relation": self.per_relation,
            "per_relation_attention": self.per_relation_attention,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def per_relation_csv(self) -> str:
        """Per-relation rows (relation, count, mrr, hits columns)."""
        buf = io.StringIO()
        ks = sorted(self.hits)
        writer = csv.writer(buf)
        writer.writerow(["relation", "count", "mrr"] + [f"h@{k}" for k in ks])
        for name in sorted(self.per_relation):
            row = self.per_relation[name]
            writer.writerow([name, row["count"], f"{row['mrr']:.6f}"]
                            + [f"{row['hits'][k]:.6f}" for k in ks])
        return buf.getvalue()


class _Agg:
    """Accumulates reciprocal ranks and hit counts."""

    def __init__(self, ks) -> None:
        self.ks = ks
        self.rr_sum = 0.0
        self.hit_sums = {k: 0 for k in ks}
        self.count = 0

    def add(self, rank: float) -> None:
        self.rr_sum += 1.0 / rank
        for k in self.ks:
            self.hit_sums[k] += 1 if rank <= k else 0
        self.count += 1

    def mrr(self) -> float:
        return self.rr_sum / self.count if self.count else 0.0

    def hits(self) -> dict[int, float]:
        return {k: (self.hit_sums[k] / self.count if self.count else 0.0)
                for k in self.ks}


def evaluate(kg: KnowledgeGraph, model, split: str = "test",
             ks=DEFAULT_KS, rank_averaging: str = "reciprocal",
             block_size: int = 256, collect_attention: bool = True,
             force_alphas: torch.Tensor | None = None) -> RankingReport:
    """Rank every triple of a split in both directions against all entities.

    ``rank_averaging="reciprocal"`` treats each direction as its own query
    (mean of the 2N reciprocal ranks); ``"rank"`` first averages the two raw
    ranks of a triple and takes the reciprocal of that mean.
    """
    if not kg.reciprocal:
        raise ValueError("evaluation expects a reciprocal-augmented graph")
    if rank_averaging not in ("reciprocal", "rank"):
        raise ValueError("rank_averaging must be 'reciprocal' or 'rank'")
    if getattr(model, "n_entities", kg.n_entities) != kg.n_entities or \
            getattr(model, "n_relations", kg.n_relations) != kg.n_relations:
        raise ValueError("checkpoint vocab sizes do not match the dataset")
    triples = kg.split(split)
    if triples.shape[0] == 0:
        raise ValueError(f"split {split!r} is empty")
    n_raw = kg.n_raw_relations
    if (triples[:, 1] >= n_raw).any():
        raise ValueError(f"split {split!r} contains reciprocal relation ids")

    overall = _Agg(ks)
    per_rel: dict[str, _Agg] = {}
    attn_sum: dict[str, torch.Tensor] = {}
    attn_count: dict[str, int] = {}

    data = torch.from_numpy(triples)
    for start in range(0, data.shape[0], block_size):
        block = data[start:start + block_size]
        h, r, t = block[:, 0], block[:, 1], block[:, 2]
        with torch.no_grad():
            fwd_scores, fwd_alphas = model.score_all_with_alphas(
                h, r, force_alphas=force_alphas)
            bwd_scores, _ = model.score_all_with_alphas(
                t, r + n_raw, force_alphas=force_alphas)
        for i in range(block.shape[0]):
            hi, ri, ti = int(h[i]), int(r[i]), int(t[i])
            rel_name = kg.relations.name(ri)
            rank_fwd = filtered_rank(fwd_scores[i], ti,
                                     kg.filtered_tails(hi, ri))
            rank_bwd = filtered_rank(bwd_scores[i], hi,
                                     kg.filtered_tails(ti, ri + n_raw))
            agg = per_rel.setdefault(rel_name, _Agg(ks))
            if rank_averaging == "reciprocal":
                for rank in (rank_fwd, rank_bwd):
                    overall.add(rank)
                    agg.add(rank)
            else:
                mean_rank = (rank_fwd + rank_bwd) / 2.0
                overall.add(mean_rank)
                agg.add(mean_rank)
            if collect_attention and fwd_alphas is not None:
                vec = fwd_alphas[i].detach().double()
                if rel_name in attn_sum:
                    attn_sum[rel_name] += vec
                else:
                    attn_sum[rel_name] = vec.clone()
                attn_count[rel_name] = attn_count.get(rel_name, 0) + 1

    per_relation = {
        name: {"mrr": agg.mrr(), "hits": agg.hits(), "count": agg.count
               if rank_averaging == "rank" else agg.count // 2}
        for name, agg in per_rel.items()
    }
    attention = {name: (attn_sum[name] / attn_count[name]).tolist()
                 for name in attn_sum}
    model_order = [k.value for k in getattr(model, "active", ())]
    return RankingReport(
        mrr=overall.mrr(),
        hits=overall.hits(),
        n_test=int(triples.shape[0]),
        per_relation=per_relation,
        per_relation_attention=attention,
        model_order=model_order,
        rank_averaging=rank_averaging,
        split=split,
    )


def attention_by_relation(kg: KnowledgeGraph, model, split: str = "train",
                          include_reciprocal: bool = True,
                          block_size: int = 1024) -> dict[str, list[float]]:
    """Mean attention vector per relation name over a split's queries.

    The train split of an augmented graph already contains reciprocal rows;
    for other splits the mirrored queries are added when
    ``include_reciprocal`` is set.
    """
    triples = kg.split(split)
    if triples.shape[0] == 0:
        return {}
    data = torch.from_numpy(triples)
    queries = [(data[:, 0], data[:, 1])]
    if include_reciprocal and split != "train" and kg.reciprocal:
        queries.append((data[:, 2], data[:, 1] + kg.n_raw_relations))
    sums: dict[int, torch.Tensor] = {}
    counts: dict[int, int] = {}
    for heads, rels in queries:
        for start in range(0, heads.shape[0], block_size):
            h = heads[start:start + block_size]
            r = rels[start:start + block_size]
            with torch.no_grad():
                qs = model.queries(h, r)
                alphas = model.alphas_for(qs, r)
            for i in range(h.shape[0]):
                ri = int(r[i])
                vec = alphas[i].double()
                if ri in sums:
                    sums[ri] += vec
                else:
                    sums[ri] = vec.clone()
                counts[ri] = counts.get(ri, 0) + 1
    return {kg.relations.name(ri): (sums[ri] / counts[ri]).tolist()
            for ri in sorted(sums)}

"""Loss, negative sampling, optimization loop, gradient verification and
checkpoint I/O.

The loss for one query is a sum of softplus terms: softplus(-s) for the
positive candidate and softplus(+s) for each negative. A batch averages the
per-query sums. Full negative sampling (negatives = -1) scores every entity.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .combiner import EnsembleModel
from .config import TrainConfig
from .kg_data import KnowledgeGraph, RelationPattern, SyntheticSpec, \
    augment_reciprocal, generate_synthetic

GRAD_CHECK_THRESHOLD = 1e-4


def loss_one_query(scores: torch.Tensor, label_index: int) -> torch.Tensor:
    """Loss over one candidate list: softplus(-s_pos) + sum softplus(s_neg)."""
    if not 0 <= label_index < scores.shape[-1]:
        raise IndexError(f"label_index {label_index} out of range")
    pos = scores[label_index]
    return F.softplus(-pos) - F.softplus(pos) + F.softplus(scores).sum()


def _loss_sampled(pos_scores: torch.Tensor, neg_scores: torch.Tensor) -> torch.Tensor:
    """Per-query losses from a positive (B,) and sampled negatives (B, K)."""
    return F.softplus(-pos_scores) + F.softplus(neg_scores).sum(dim=-1)


def _loss_full(all_scores: torch.Tensor, tails: torch.Tensor) -> torch.Tensor:
    """Per-query losses scoring every entity; the true tail is the positive."""
    pos = all_scores.gather(-1, tails.unsqueeze(-1)).squeeze(-1)
    return (F.softplus(-pos) - F.softplus(pos)
            + F.softplus(all_scores).sum(dim=-1))


def sample_negatives(generator: torch.Generator, tails: torch.Tensor, n: int,
                     num_entities: int) -> torch.Tensor:
    """n uniform entity ids per query, excluding the positive tail.

    Sampling is with replacement and exactly uniform over the other
    num_entities - 1 ids (draw from [0, E-1) and shift past the tail).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if num_entities < 2:
        raise ValueError("need at least 2 entities to sample negatives")
    draws = torch.randint(0, num_entities - 1, (tails.shape[0], n),
                          generator=generator)
    return draws + (draws >= tails.unsqueeze(-1)).long()


def make_optimizer(model: torch.nn.Module, config: TrainConfig):
    if config.optimizer == "adam":
        return torch.optim.Adam(model.parameters(), lr=config.lr,
                                betas=(0.9, 0.999), eps=1e-8)
    return torch.optim.Adagrad(model.parameters(), lr=config.lr, eps=1e-10)


def _batch_query_losses(model: EnsembleModel, h, r, t, config: TrainConfig,
                        generator: torch.Generator) -> torch.Tensor:
    if config.negatives == -1:
        return _loss_full(model.score_all(h, r), t)
    negs = sample_negatives(generator, t, config.negatives, model.n_entities)
    pos = model.score_candidates(h, r, t)
    neg = model.score_candidates(h, r, negs)
    return _loss_sampled(pos, neg)


def batch_loss(model: EnsembleModel, batch: torch.Tensor, config: TrainConfig,
               kg: KnowledgeGraph, generator: torch.Generator) -> torch.Tensor:
    """Mean per-query loss over a batch; double_neg adds the mirrored queries."""
    h, r, t = batch[:, 0], batch[:, 1], batch[:, 2]
    losses = _batch_query_losses(model, h, r, t, config, generator)
    if config.double_neg:
        n_raw = kg.n_raw_relations
        r_inv = torch.where(r < n_raw, r + n_raw, r - n_raw)
        losses = torch.cat(
            [losses, _batch_query_losses(model, t, r_inv, h, config, generator)])
    return losses.mean()


@dataclass
class TrainResult:
    model: EnsembleModel
    history: list[dict]
    best_epoch: int
    best_val_mrr: float | None
    checkpoint_dir: Path | None = None


def train(kg: KnowledgeGraph, config: TrainConfig,
          out_dir: str | Path | None = None,
          progress: bool = False) -> TrainResult:
    """Train on an augmented graph with early stopping on validation MRR.

    Validation runs every ``eval_every`` epochs when the valid split is
    non-empty; the best-MRR parameter snapshot is restored at the end. With
    an empty valid split training simply runs to ``max_epochs``.
    """
    from .evaluation import evaluate

    if not kg.reciprocal:
        raise ValueError("train expects a reciprocal-augmented graph")
    generator = torch.Generator().manual_seed(config.seed)
    model = EnsembleModel(kg.n_entities, kg.n_relations, config,
                          generator=generator)
    optimizer = make_optimizer(model, config)
    data = torch.from_numpy(kg.train)
    n_rows = data.shape[0]

    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = (out_dir / "log.jsonl").open("w", encoding="utf-8")

    history: list[dict] = []
    best_state = None
    best_epoch, best_mrr = 0, None
    has_valid = kg.valid.shape[0] > 0
    try:
        for epoch in range(1, config.max_epochs + 1):
            t0 = time.perf_counter()
            perm = torch.randperm(n_rows, generator=generator)
            epoch_losses = []
            for start in range(0, n_rows, config.batch_size):
                batch = data[perm[start:start + config.batch_size]]
                loss = batch_loss(model, batch, config, kg, generator)
                if not torch.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch}, "
                        f"batch starting {start}: {loss.item()!r}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                epoch_losses.append(loss.item())
            record = {
                "epoch": epoch,
                "loss": float(np.mean(epoch_losses)),
                "wall_ms": round(1000 * (time.perf_counter() - t0), 3),
                "clamp_events": model.clamp_counter.reset(),
            }
            if has_valid and (epoch % config.eval_every == 0
                              or epoch == config.max_epochs):
                with torch.no_grad():
                    report = evaluate(kg, model, "valid",
                                      collect_attention=False)
                record["val_mrr"] = report.mrr
                if best_mrr is None or report.mrr > best_mrr:
                    best_mrr, best_epoch = report.mrr, epoch
                    best_state = copy.deepcopy(model.state_dict())
            history.append(record)
            if log_fh is not None:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            if progress:
                print(f"epoch {epoch}: loss={record['loss']:.6f}"
                      + (f" val_mrr={record['val_mrr']:.4f}"
                         if "val_mrr" in record else ""))
            if (best_mrr is not None and config.patience > 0
                    and epoch - best_epoch >= config.patience):
                break
    finally:
        if log_fh is not None:
            log_fh.close()

    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        best_epoch = len(history)

    checkpoint_dir = None
    if out_dir is not None:
        checkpoint_dir = save_checkpoint(
            out_dir / "checkpoint", model, config,
            meta={"epoch": best_epoch, "best_val_mrr": best_mrr,
                  "epochs_run": len(history)})
    return TrainResult(model=model, history=history, best_epoch=best_epoch,
                       best_val_mrr=best_mrr, checkpoint_dir=checkpoint_dir)


# --------------------------------------------------------------------------
# Gradient verification
# --------------------------------------------------------------------------

@dataclass
class BlockReport:
    max_rel_err: float
    n_probes: int
    passed: bool


@dataclass
class GradientReport:
    blocks: dict[str, BlockReport]
    threshold: float
    loss_value: float

    @property
    def passed(self) -> bool:
        return all(b.passed for b in self.blocks.values())

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "passed": self.passed,
            "loss_value": self.loss_value,
            "blocks": {k: dataclasses.asdict(v) for k, v in self.blocks.items()},
        }


def _gradcheck_graph(seed: int = 0) -> KnowledgeGraph:
    spec = SyntheticSpec(
        n_entities=25,
        relations=[RelationPattern(kind="symmetric", pairs=15),
                   RelationPattern(kind="antisymmetric", edges=12)],
        seed=seed,
    )
    return augment_reciprocal(generate_synthetic(spec))


def grad_check(config: TrainConfig, n_probes: int = 200,
               kg: KnowledgeGraph | None = None, step: float = 1e-6,
               seed: int = 0) -> GradientReport:
    """Compare autograd gradients against central finite differences.

    Always runs in double precision on a full-negative objective over a small
    graph, with parameters drawn at a moderate scale so no block sits at a
    degenerate origin. Probes are random coordinates per parameter block;
    differences below the finite-difference resolution floor count as
    agreement at zero.
    """
    config = dataclasses.replace(config, dtype="double", negatives=-1,
                                 init_scale=0.3)
    if kg is None:
        kg = _gradcheck_graph(seed)
    generator = torch.Generator().manual_seed(seed)
    model = EnsembleModel(kg.n_entities, kg.n_relations, config,
                          generator=generator)
    batch = torch.from_numpy(kg.train)
    h, r, t = batch[:, 0], batch[:, 1], batch[:, 2]

    def objective() -> torch.Tensor:
        return _loss_full(model.score_all(h, r), t).mean()

    loss = objective()
    model.zero_grad()
    loss.backward()
    loss_value = loss.item()
    # Floor below which central differences cannot resolve a gradient:
    # cancellation noise of the loss divided by the probe threshold.
    atol = max(1e-8, abs(loss_value) * np.finfo(np.float64).eps / step
               / GRAD_CHECK_THRESHOLD)

    rng = np.random.default_rng(seed)
    blocks: dict[str, BlockReport] = {}
    for name, param in model.parameter_blocks().items():
        flat = param.detach().reshape(-1)
        grad = (param.grad.reshape(-1) if param.grad is not None
                else torch.zeros_like(flat))
        count = min(n_probes, flat.numel())
        coords = rng.choice(flat.numel(), size=count, replace=False)
        worst = 0.0
        with torch.no_grad():
            for idx in coords:
                original = flat[idx].item()
                flat[idx] = original + step
                f_plus = objective().item()
                flat[idx] = original - step
                f_minus = objective().item()
                flat[idx] = original
                fd = (f_plus - f_minus) / (2 * step)
                a = grad[idx].item()
                rel = abs(a - fd) / max(abs(a), abs(fd), atol)
                worst = max(worst, rel)
        blocks[name] = BlockReport(max_rel_err=worst, n_probes=count,
                                   passed=worst < GRAD_CHECK_THRESHOLD)
    return GradientReport(blocks=blocks, threshold=GRAD_CHECK_THRESHOLD,
                          loss_value=loss_value)


# --------------------------------------------------------------------------
# Checkpoint I/O
# --------------------------------------------------------------------------

_NP_DTYPES = {"single": "<f4", "double": "<f8"}
CHECKPOINT_FORMAT = "geokge-checkpoint-v1"


def save_checkpoint(ckpt_dir: str | Path, model: EnsembleModel,
                    config: TrainConfig, meta: dict | None = None) -> Path:
    """Write manifest.json plus one raw little-endian tensor file per block."""
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    np_dtype = _NP_DTYPES[config.dtype]
    blocks = {}
    for name, param in model.parameter_blocks().items():
        filename = f"{name}.bin"
        arr = param.detach().cpu().numpy().astype(np_dtype)
        arr.tofile(ckpt_dir / filename)
        blocks[name] = {"file": filename, "shape": list(param.shape),
                        "dtype": np_dtype}
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "config": config.to_dict(),
        "n_entities": model.n_entities,
        "n_relations": model.n_relations,
        "model_order": [k.value for k in model.active],
        "dtype": config.dtype,
        "blocks": blocks,
    }
    manifest.update(meta or {})
    with (ckpt_dir / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ckpt_dir


def load_checkpoint(ckpt_dir: str | Path) -> tuple[EnsembleModel, dict]:
    ckpt_dir = Path(ckpt_dir)
    with (ckpt_dir / "manifest.json").open("r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{ckpt_dir}: not a {CHECKPOINT_FORMAT} checkpoint")
    config = TrainConfig(**manifest["config"])
    model = EnsembleModel(manifest["n_entities"], manifest["n_relations"], config)
    if [k.value for k in model.active] != manifest["model_order"]:
        raise ValueError("checkpoint model order does not match its config")
    with torch.no_grad():
        for name, param in model.parameter_blocks().items():
            info = manifest["blocks"][name]
            arr = np.fromfile(ckpt_dir / info["file"], dtype=info["dtype"])
            expected = int(np.prod(info["shape"])) if info["shape"] else 1
            if arr.size != expected:
                raise ValueError(f"block {name}: expected {expected} values, "
                                 f"file has {arr.size}")
            tensor = torch.from_numpy(arr.reshape(info["shape"]).astype(
                np.float64 if config.dtype == "double" else np.float32))
            param.copy_(tensor.reshape(param.shape))
    return model, manifest

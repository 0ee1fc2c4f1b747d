"""Losses, Adam, and the pretraining / fine-tuning loops."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import GradientTape, backward
from .context import RANDOM_WALK, mask_random_node, pair_context
from .evaluate import auroc, choose_threshold, micro_f1, score_pairs
from .graph import sample_negative_edges
from .model import (forward_on_tape, link_logits_on_tape, mask_logits_on_tape,
                    similarity_logits_on_tape)

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "SamplerConfig", "AdamState", "NumericalError", "pretrain_loss",
           "finetune_loss", "backward", "adam_step", "clip_gradients", "run_pretraining",
           "run_finetuning", "masked_accuracy"]


OBJECTIVES = ("similarity", "link_head")
_PAIR_LOGITS = {"similarity": similarity_logits_on_tape, "link_head": link_logits_on_tape}


class NumericalError(FloatingPointError):
    """Training hit a non-finite loss; ``model`` holds the last good parameters."""

    def __init__(self, msg, model=None):
        super().__init__(msg)
        self.model = model


@dataclass
class TrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    clip_norm: float | None = 5.0
    patience: int | None = None
    freeze_pretrained: bool = False
    objective: str = "similarity"
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")


@dataclass
class SamplerConfig:
    strategy: str = RANDOM_WALK
    max_size: int = 6
    negative_ratio: int = 2
    n_eval_contexts: int = 10
    type_constrained: bool = False


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def pretrain_loss(model, masked_ctx, target, tape=None):
    """``-log p(target | context)`` from the masked-node head.

    When ``tape`` is given the loss is added to it for a later :func:`backward`.
    """
    if masked_ctx.mask_pos is None:
        raise ValueError("context has no masked position")
    tape = GradientTape(model.params) if tape is None else tape
    _, final, _ = forward_on_tape(tape, masked_ctx.nodes, model)
    loss = tape.cross_entropy(mask_logits_on_tape(tape, final, masked_ctx.mask_pos), int(target))
    tape.add_loss(loss)
    return float(loss.value)


def finetune_loss(model, pos, neg, tape=None, objective="link_head"):
    """``-sum log p(pos) - sum log(1 - p(neg))`` over anchored pair contexts.

    ``p`` is the pair classifier's probability (``objective="link_head"``) or
    ``sigma(h_u . h_v)`` on the anchors' final rows (``"similarity"``).
    """
    pair_logits = _PAIR_LOGITS[objective]
    tape = GradientTape(model.params) if tape is None else tape
    total = 0.0
    for label, batch in ((1, pos), (0, neg)):
        for ctx in batch:
            i, j = ctx.anchor_positions()
            _, final, _ = forward_on_tape(tape, ctx.nodes, model)
            loss = tape.cross_entropy(pair_logits(tape, final, i, j), label)
            tape.add_loss(loss)
            total += float(loss.value)
    return total


def clip_gradients(grads, max_norm):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place bias-corrected Adam update for every name in ``grads``."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


def _step(model, tape, cfg, state, trainable=None):
    grads = backward(tape)
    if trainable is not None:
        grads = {k: g for k, g in grads.items() if k in trainable}
    clip_gradients(grads, cfg.clip_norm)
    adam_step(model.params, grads, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)


def _snapshot(model):
    return {k: v.copy() for k, v in model.params.items()}


@dataclass
class PretrainResult:
    model: object
    losses: list


def run_pretraining(model, contexts, cfg, rng=None):
    """Masked-node training; a fresh mask is drawn for every context each epoch.

    ``losses`` holds the mean per-context loss of each epoch. The returned
    model carries the parameters of the lowest-loss epoch.
    """
    if not contexts:
        raise ValueError("no pretraining contexts")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    state = AdamState()
    losses = []
    best, best_loss = _snapshot(model), math.inf
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(contexts))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            tape = GradientTape(model.params)
            batch_loss = 0.0
            for idx in order[start:start + cfg.batch_size]:
                masked, target = mask_random_node(contexts[idx], rng, model.mask_id)
                batch_loss += pretrain_loss(model, masked, target, tape)
            if not math.isfinite(batch_loss):
                model.params = best
                raise NumericalError(f"non-finite pretraining loss in epoch {epoch + 1}", model)
            _step(model, tape, cfg, state)
            total += batch_loss
        losses.append(total / len(contexts))
        log.info("pretrain epoch %d loss %.6f", epoch + 1, losses[-1])
        if losses[-1] < best_loss:
            best, best_loss = _snapshot(model), losses[-1]
    if cfg.epochs:
        model.params = best
    return PretrainResult(model, losses)


def masked_accuracy(model, examples):
    """Top-1 accuracy of the masked-node head on ``(masked_ctx, target)`` pairs."""
    from .model import forward, masked_node_logits

    hits = 0
    for ctx, target in examples:
        res = forward(ctx, model)
        hits += int(np.argmax(masked_node_logits(res.final, ctx.mask_pos, model)) == target)
    return hits / len(examples)


@dataclass
class FinetuneResult:
    model: object
    curve: list  # (epoch, split, metric, value)
    threshold: float | None = None


def run_finetuning(model, g, split, cfg, sampler=None, rng=None, eval_seed=None, threads=1):
    """Link-prediction training on ``split.train_pos`` with sampled negatives.

    Contexts are drawn from the graph restricted to the training edges; a
    positive pair never uses its own edge as context. Each step holds up to
    ``cfg.batch_size`` positives together with their ``negative_ratio``
    negatives. After every epoch dev pairs are scored and the parameters with
    the best dev micro-F1 are kept.
    """
    sampler = SamplerConfig() if sampler is None else sampler
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    eval_seed = cfg.seed if eval_seed is None else eval_seed
    positives = list(split.train_pos)
    if not positives:
        raise ValueError("split has no training positives")
    ctx_graph = g.subgraph_with_edges(positives)
    negatives = sample_negative_edges(g, positives, sampler.negative_ratio, rng,
                                      exclude=list(split.dev) + list(split.test),
                                      type_constrained=sampler.type_constrained)
    ratio = sampler.negative_ratio
    trainable = None
    if cfg.freeze_pretrained:
        if cfg.objective != "link_head":
            raise ValueError("freeze_pretrained only makes sense with objective='link_head'")
        trainable = {"link_head.W", "link_head.b"}

    state = AdamState()
    curve = []
    best, best_f1, best_thr = _snapshot(model), -1.0, None
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(positives))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            tape = GradientTape(model.params)
            pos_ctx, neg_ctx = [], []
            for i in order[start:start + cfg.batch_size]:
                u, _, v, *_ = positives[i]
                pos_ctx.append(pair_context(ctx_graph, u, v, sampler.strategy, sampler.max_size,
                                            rng, skip_direct=True))
                for nu, _, nv, _ in negatives[i * ratio:(i + 1) * ratio]:
                    neg_ctx.append(pair_context(ctx_graph, nu, nv, sampler.strategy,
                                                sampler.max_size, rng, skip_direct=True))
            batch_loss = finetune_loss(model, pos_ctx, neg_ctx, tape, cfg.objective)
            if not math.isfinite(batch_loss):
                model.params = best
                raise NumericalError(f"non-finite fine-tuning loss in epoch {epoch}", model)
            _step(model, tape, cfg, state, trainable)
            total += batch_loss
        n_ex = len(positives) * (1 + ratio)
        curve.append((epoch, "train", "loss", total / n_ex))

        if split.dev:
            records = score_pairs(model, ctx_graph, split.dev, sampler.n_eval_contexts, eval_seed,
                                  sampler.strategy, sampler.max_size, threads)
            thr = choose_threshold(records)
            f1 = micro_f1(records, thr)
            curve.append((epoch, "dev", "micro_f1", f1))
            if len({r.label for r in records}) == 2:
                curve.append((epoch, "dev", "auroc", auroc(records)))
            log.info("finetune epoch %d loss %.6f dev micro-F1 %.4f", epoch, total / n_ex, f1)
            if f1 > best_f1:
                best, best_f1, best_thr, stale = _snapshot(model), f1, thr, 0
            else:
                stale += 1
                if cfg.patience is not None and stale >= cfg.patience:
                    break
    if split.dev:
        model.params = best
    elif cfg.epochs:
        warnings.warn("no dev split: keeping the final-epoch parameters", stacklevel=2)
    return FinetuneResult(model, curve, best_thr)

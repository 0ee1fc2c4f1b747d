"""The contextual translation network.

Each layer computes, per head, bilinear attention over the context nodes
and mixes a shared linear transform of the node states with it; the head
outputs are concatenated, added to the layer input and passed through
GELU. The outputs of all layers are concatenated per node and fed to a
masked-node head (pretraining) or a pair classifier (link prediction).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .autodiff import GradientTape

CHECKPOINT_VERSION = 1
ACTIVATIONS = ("gelu", "identity")


def _glorot(rng, fan_in, fan_out, shape):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class SliceModel:
    """All learnable tensors, kept in a flat ``params`` dict of float64 arrays."""

    def __init__(self, num_nodes, dim=128, num_layers=4, num_heads=4, embeddings=None,
                 rng=None, activation="gelu"):
        if dim % num_heads:
            raise ValueError(f"dim={dim} is not divisible by num_heads={num_heads}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        rng = np.random.default_rng() if rng is None else rng
        self.num_nodes = num_nodes
        self.dim = dim
        self.num_layers = num_layers
        self.num_heads = num_heads
        self.activation = activation

        d, h, dh, dcat = dim, num_heads, dim // num_heads, num_layers * dim
        if embeddings is None:
            embed = _glorot(rng, num_nodes + 1, d, (num_nodes + 1, d))
            embed[num_nodes] = 0.0
        else:
            embed = np.array(getattr(embeddings, "matrix", embeddings), dtype=np.float64)
            if embed.shape != (num_nodes + 1, d):
                raise ValueError(f"embedding table has shape {embed.shape}, expected {(num_nodes + 1, d)}")
        params = {"embed": embed}
        for k in range(num_layers):
            params[f"layer{k}.W1"] = _glorot(rng, d, dh, (h, d, dh))
            params[f"layer{k}.W2"] = _glorot(rng, d, dh, (h, d, dh))
            params[f"layer{k}.Ws"] = _glorot(rng, d, d, (d, d))
        params["mask_head.W"] = _glorot(rng, dcat, num_nodes + 1, (dcat, num_nodes + 1))
        params["mask_head.b"] = np.zeros(num_nodes + 1)
        params["link_head.W"] = _glorot(rng, 2 * dcat, 2, (2 * dcat, 2))
        params["link_head.b"] = np.zeros(2)
        self.params = params

    @property
    def head_dim(self):
        return self.dim // self.num_heads

    @property
    def d_cat(self):
        return self.num_layers * self.dim

    @property
    def mask_id(self):
        return self.num_nodes

    def copy(self):
        other = object.__new__(SliceModel)
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def hyperparameters(self):
        return {"num_nodes": self.num_nodes, "dim": self.dim, "num_layers": self.num_layers,
                "num_heads": self.num_heads, "activation": self.activation}

    def save(self, path):
        """JSON checkpoint: version, hyperparameters, and row-major tensors with shapes."""
        doc = {"version": CHECKPOINT_VERSION, "hyperparameters": self.hyperparameters(),
               "tensors": {name: {"shape": list(v.shape), "data": v.ravel().tolist()}
                           for name, v in self.params.items()}}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, separators=(",", ":"))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
        hp = doc["hyperparameters"]
        model = cls(hp["num_nodes"], hp["dim"], hp["num_layers"], hp["num_heads"],
                    rng=np.random.default_rng(0), activation=hp.get("activation", "gelu"))
        for name, t in doc["tensors"].items():
            if name not in model.params:
                raise ValueError(f"unexpected tensor {name!r} in checkpoint")
            arr = np.asarray(t["data"], dtype=np.float64).reshape(t["shape"])
            if arr.shape != model.params[name].shape:
                raise ValueError(f"tensor {name!r} has shape {arr.shape}, "
                                 f"expected {model.params[name].shape}")
            model.params[name] = arr
        return model


@dataclass
class ForwardResult:
    layer_outputs: list
    final: np.ndarray
    assoc: np.ndarray  # (layers, heads, n, n), rows sum to one


# -- tape-level building blocks (shared by inference and training) -----------

def _check_ids(nodes, model):
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise ValueError("empty context")
    if nodes.min() < 0 or nodes.max() > model.num_nodes:
        raise IndexError(f"context ids {nodes.tolist()} outside 0..{model.num_nodes}")
    return nodes


def _attention_var(tape, H, layer):
    q = tape.matmul(H, tape.param(f"layer{layer}.W1"))           # (h, n, dh)
    k = tape.matmul(H, tape.param(f"layer{layer}.W2"))           # (h, n, dh)
    scores = tape.matmul(q, tape.transpose(k, (0, 2, 1)))        # (h, n, n)
    if not np.all(np.isfinite(scores.value)):
        raise FloatingPointError(f"non-finite attention scores in layer {layer}")
    return tape.softmax(scores)


def _translate_var(tape, H, A, layer, model):
    n = H.value.shape[0]
    h, dh = model.num_heads, model.head_dim
    proj = tape.matmul(H, tape.param(f"layer{layer}.Ws"))         # (n, d)
    per_head = tape.transpose(tape.reshape(proj, (n, h, dh)), (1, 0, 2))
    msg = tape.matmul(A, per_head)                                 # (h, n, dh)
    msg = tape.reshape(tape.transpose(msg, (1, 0, 2)), (n, h * dh))
    pre = tape.add(msg, H)
    return tape.gelu(pre) if model.activation == "gelu" else pre


def forward_on_tape(tape, nodes, model):
    """Record a forward pass; returns ``(layer_vars, final_var, attention_vars)``."""
    nodes = _check_ids(nodes, model)
    H = tape.take_rows(tape.param("embed"), nodes)
    layers, assoc = [], []
    for k in range(model.num_layers):
        A = _attention_var(tape, H, k)
        H = _translate_var(tape, H, A, k, model)
        assoc.append(A)
        layers.append(H)
    final = layers[0] if len(layers) == 1 else tape.concat(layers, axis=1)
    return layers, final, assoc


def mask_logits_on_tape(tape, final, mask_pos):
    row = tape.take_rows(final, [mask_pos])                        # (1, dcat)
    logits = tape.add(tape.matmul(row, tape.param("mask_head.W")), tape.param("mask_head.b"))
    return tape.reshape(logits, (logits.value.shape[1],))


def link_logits_on_tape(tape, final, u_pos, v_pos):
    pair = tape.reshape(tape.take_rows(final, [u_pos, v_pos]), (1, -1))   # (1, 2*dcat)
    logits = tape.add(tape.matmul(pair, tape.param("link_head.W")), tape.param("link_head.b"))
    return tape.reshape(logits, (2,))


def similarity_logits_on_tape(tape, final, u_pos, v_pos):
    """Two-class logits ``[0, h_u . h_v]``; their softmax is ``sigma(h_u . h_v)``."""
    hu = tape.take_rows(final, [u_pos])
    hv = tape.take_rows(final, [v_pos])
    dot = tape.matmul(hu, tape.transpose(hv, (1, 0)))                     # (1, 1)
    return tape.reshape(tape.concat([tape.constant(np.zeros((1, 1))), dot], axis=1), (2,))


# -- numpy-level public API ---------------------------------------------------

def _nodes_of(ctx):
    return getattr(ctx, "nodes", ctx)


def encode(ctx, model):
    """Layer-0 states: one embedding row per context slot (MASK slot gets the MASK row)."""
    return model.params["embed"][_check_ids(_nodes_of(ctx), model)].copy()


def attention(H, model, layer, head=None):
    """Row-stochastic association matrices for ``layer``: ``(heads, n, n)`` or one head."""
    tape = GradientTape(model.params)
    A = _attention_var(tape, tape.constant(H), layer).value
    return A if head is None else A[head]


def translate_layer(H, A_heads, model, layer):
    """Apply one translation step given explicit per-head association matrices."""
    A_heads = np.asarray(A_heads, dtype=np.float64)
    if A_heads.shape != (model.num_heads, H.shape[0], H.shape[0]):
        raise ValueError(f"expected {model.num_heads} association matrices of size "
                         f"{H.shape[0]}x{H.shape[0]}, got shape {A_heads.shape}")
    if H.shape[1] != model.dim:
        raise ValueError(f"state width {H.shape[1]} != model dim {model.dim}")
    tape = GradientTape(model.params)
    return _translate_var(tape, tape.constant(H), tape.constant(A_heads), layer, model).value


def forward(ctx, model):
    tape = GradientTape(model.params)
    layers, final, assoc = forward_on_tape(tape, _nodes_of(ctx), model)
    return ForwardResult(layer_outputs=[v.value for v in layers], final=final.value,
                         assoc=np.stack([a.value for a in assoc]))


def masked_node_logits(final, mask_pos, model):
    return final[mask_pos] @ model.params["mask_head.W"] + model.params["mask_head.b"]


def link_probability(final, u_pos, v_pos, model):
    """Probability of the positive class from the pair classifier."""
    z = np.concatenate([final[u_pos], final[v_pos]]) @ model.params["link_head.W"] \
        + model.params["link_head.b"]
    return float(expit(z[1] - z[0]))


def similarity(h_i, h_j):
    """Logistic sigmoid of the dot product."""
    h_i, h_j = np.asarray(h_i), np.asarray(h_j)
    if h_i.shape != h_j.shape:
        raise ValueError("vectors must have equal width")
    return float(expit(float(h_i @ h_j)))

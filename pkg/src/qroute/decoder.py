"""Pointer-network decoder: masked two-stage attention over node embeddings.

Each step builds a query from [graph embedding || current-node embedding
|| remaining load / C], runs multi-head attention over the nodes (stage
one) to get a context vector, then scores every node against that
context with a tanh-clipped single-head product (stage two). Masked
nodes sit at -inf so their probability is exactly zero. Sampling divides
the stage-two logits by a temperature; greedy takes the argmax, which no
positive temperature can change.

The step functions are free functions over tensors so they can be tested
in isolation; PointerDecoder wires them into full episodes against the
environment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import env as cvrp_env
from .core import Route
from .errors import ConfigurationError, NoFeasibleActionError, ShapeError

_RDTYPE = torch.float64
_NEG_INF = float("-inf")


def default_temperature(m):
    """Benchmark sampling temperature by instance size."""
    if m <= 20:
        return 2.5
    if m <= 50:
        return 1.8
    return 1.2


def first_stage_scores(query, keys, mask):
    """Scaled dot-product scores per head with masked entries at -inf.

    query: (B, H, d_v); keys: (B, M, H, d_v); mask: (B, M) boolean.
    Returns (B, H, M). Raises if any row has no allowed action.
    """
    if not bool(mask.any(dim=-1).all()):
        raise NoFeasibleActionError("a decoding step has every node masked")
    d_v = query.shape[-1]
    u = torch.einsum("bhd,bmhd->bhm", query, keys) / math.sqrt(d_v)
    return u.masked_fill(~mask[:, None, :], _NEG_INF)


def attention_context(scores, values, w_f):
    """Softmax the per-head scores and mix values; concat heads through w_f.

    scores: (B, H, M); values: (B, M, H, d_v); returns (B, H * d_v).
    """
    if scores.shape[-1] != values.shape[1]:
        raise ShapeError(
            f"scores cover {scores.shape[-1]} nodes, values {values.shape[1]}"
        )
    weights = F.softmax(scores, dim=-1)
    heads = torch.einsum("bhm,bmhd->bhd", weights, values)
    return w_f(heads.reshape(heads.shape[0], -1))


def step_logits(context, keys, mask, clip, d_v):
    """Stage-two logits: clip * tanh(context . k_i / sqrt(d_v)), masked at -inf."""
    u = (keys @ context[:, :, None]).squeeze(-1) / math.sqrt(d_v)
    u = clip * torch.tanh(u)
    return u.masked_fill(~mask, _NEG_INF)


def step_probabilities(context, keys, mask, clip, temperature, d_v):
    """Per-node choice distribution for one step.

    Masked entries are exactly zero; unmasked logits lie in [-clip, clip]
    before the temperature division.
    """
    if temperature <= 0:
        raise ConfigurationError(f"temperature must be positive, got {temperature}")
    logits = step_logits(context, keys, mask, clip, d_v)
    return F.softmax(logits / temperature, dim=-1)


@dataclass
class DecodeResult:
    route: Route
    log_prob: float
    step_probabilities: tuple = None  # per-step numpy vectors when requested


class PointerDecoder(nn.Module):
    def __init__(self, d_x, heads, clip=10.0):
        super().__init__()
        if d_x % heads != 0:
            raise ConfigurationError(f"heads ({heads}) must divide d_x ({d_x})")
        if clip <= 0:
            raise ConfigurationError(f"clip must be positive, got {clip}")
        self.d_x = d_x
        self.heads = heads
        self.d_v = d_x // heads
        self.clip = clip
        self.q_proj = nn.Linear(2 * d_x + 1, d_x, dtype=_RDTYPE)
        self.k1 = nn.Linear(d_x, d_x, bias=False, dtype=_RDTYPE)
        self.v1 = nn.Linear(d_x, d_x, bias=False, dtype=_RDTYPE)
        self.w_f = nn.Linear(d_x, d_x, bias=False, dtype=_RDTYPE)
        self.k2 = nn.Linear(d_x, d_x, bias=False, dtype=_RDTYPE)

    # ------------------------------------------------------------------
    # Episode driver
    # ------------------------------------------------------------------

    def _run(self, emb, instances, mode, temperature=None, rngs=None,
             forced=None, collect_probs=False):
        """Decode every instance to completion in lockstep.

        mode is "greedy", "sample", or "replay" (follow the given action
        lists, differentiably). Finished episodes drop out of the math.
        Returns (actions, log_prob (B,), entropy_terms (total steps,),
        per-step probability logs or None).
        """
        B = len(instances)
        nodes, graph = emb.node_embeddings, emb.graph_embedding
        M = nodes.shape[1]
        if temperature is None:
            temperature = default_temperature(M - 1)
        if temperature <= 0:
            raise ConfigurationError(f"temperature must be positive, got {temperature}")
        k1 = self.k1(nodes).view(B, M, self.heads, self.d_v)
        v1 = self.v1(nodes).view(B, M, self.heads, self.d_v)
        k2 = self.k2(nodes)
        caps = torch.tensor([float(i.capacity) for i in instances], dtype=_RDTYPE)
        states = [cvrp_env.reset(inst) for inst in instances]
        done = np.zeros(B, dtype=bool)
        actions = [[] for _ in range(B)]
        log_prob = torch.zeros(B, dtype=_RDTYPE)
        entropy_terms = []
        probs_log = [[] for _ in range(B)] if collect_probs else None

        while not done.all():
            active = np.nonzero(~done)[0]
            act_idx = torch.from_numpy(active)
            mask_np = np.stack([cvrp_env.feasible_mask(states[b]) for b in active])
            mask = torch.from_numpy(mask_np)
            cur = torch.tensor([states[b].current_node for b in active])
            load = torch.tensor(
                [float(states[b].remaining_load) for b in active], dtype=_RDTYPE
            )
            cur_emb = nodes[act_idx, cur]
            q_in = torch.cat(
                [graph[act_idx], cur_emb, (load / caps[act_idx])[:, None]], dim=-1
            )
            q = self.q_proj(q_in).view(-1, self.heads, self.d_v)
            u1 = first_stage_scores(q, k1[act_idx], mask)
            context = attention_context(u1, v1[act_idx], self.w_f)
            logits = step_logits(context, k2[act_idx], mask, self.clip, self.d_v)
            logp = F.log_softmax(logits / temperature, dim=-1)
            probs = torch.exp(logp)

            if mode == "greedy":
                # ties resolve to the lowest node index (argmax takes the first)
                chosen = logits.detach().numpy().argmax(axis=1)
            elif mode == "sample":
                chosen = np.empty(len(active), dtype=np.int64)
                p = probs.detach().numpy()
                for row, b in enumerate(active):
                    pr = p[row] / p[row].sum()
                    r = rngs[b].random()
                    chosen[row] = min(np.searchsorted(np.cumsum(pr), r, side="right"),
                                      M - 1)
            elif mode == "replay":
                chosen = np.array(
                    [forced[b][len(actions[b])] for b in active], dtype=np.int64
                )
            else:
                raise ValueError(f"unknown decode mode {mode!r}")

            rows = torch.arange(len(active))
            log_prob = log_prob.index_add(
                0, act_idx, logp[rows, torch.from_numpy(chosen)]
            )
            # -inf log-probs at masked entries would poison gradients through
            # the product, so zero them before multiplying (probs are 0 there)
            logp_safe = torch.where(mask, logp, torch.zeros((), dtype=_RDTYPE))
            ent = -(probs * logp_safe).sum(dim=-1)
            entropy_terms.append(ent)
            if collect_probs:
                p_np = probs.detach().numpy()
                for row, b in enumerate(active):
                    probs_log[b].append(p_np[row].copy())
            for row, b in enumerate(active):
                states[b], terminal = cvrp_env.step(states[b], int(chosen[row]))
                actions[b].append(int(chosen[row]))
                done[b] = terminal

        entropy = torch.cat(entropy_terms) if entropy_terms else torch.zeros(0, dtype=_RDTYPE)
        return actions, log_prob, entropy, probs_log

    # ------------------------------------------------------------------
    # Public decoding API
    # ------------------------------------------------------------------

    def decode_greedy(self, emb, instances, collect_probs=False):
        """Highest-probability action each step; deterministic."""
        with torch.no_grad():
            actions, log_prob, _, probs_log = self._run(
                emb, instances, "greedy", collect_probs=collect_probs
            )
        return _results(actions, log_prob, probs_log)

    def decode_sample(self, emb, instances, rng, temperature=None,
                      collect_probs=False):
        """Sample each step from the tempered distribution.

        rng is one numpy Generator (split per instance) or a list of
        per-instance generators.
        """
        rngs = rng if isinstance(rng, (list, tuple)) else rng.spawn(len(instances))
        with torch.no_grad():
            actions, log_prob, _, probs_log = self._run(
                emb, instances, "sample", temperature=temperature, rngs=rngs,
                collect_probs=collect_probs,
            )
        return _results(actions, log_prob, probs_log)

    def replay(self, emb, instances, actions, temperature=None):
        """Log-probabilities and entropies of fixed action lists, with grad.

        Returns (log_prob (B,), entropy_terms (total steps,)), both torch
        tensors connected to the model parameters.
        """
        replayed, log_prob, entropy, _ = self._run(
            emb, instances, "replay", temperature=temperature, forced=actions
        )
        for given, got in zip(actions, replayed):
            if list(given) != got:
                raise ShapeError("replay diverged from the recorded actions")
        return log_prob, entropy


def _results(actions, log_prob, probs_log):
    out = []
    lp = log_prob.detach().numpy()
    for b, acts in enumerate(actions):
        out.append(DecodeResult(
            route=Route((0,) + tuple(acts)),
            log_prob=float(lp[b]),
            step_probabilities=tuple(probs_log[b]) if probs_log else None,
        ))
    return out

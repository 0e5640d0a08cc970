"""Shared world builders for tests. Everything is seed-deterministic."""

from __future__ import annotations

import itertools

import numpy as np

from cpmidec.corpus import Sequence, Vocabulary
from cpmidec.models import Distribution, TableWorld


def small_vocab(n_tokens: int) -> Vocabulary:
    return Vocabulary(tuple(["<bos>", "<eos>"] + [f"w{i}" for i in range(n_tokens - 2)]))


def all_prefixes(vocab: Vocabulary, depth: int) -> list[tuple[int, ...]]:
    """Every EOS-free prefix with up to `depth` content tokens."""
    content = [i for i in range(len(vocab)) if i not in (vocab.bos_id, vocab.eos_id)]
    out = []
    for d in range(depth + 1):
        for body in itertools.product(content, repeat=d):
            out.append((vocab.bos_id,) + body)
    return out


def random_table_world(
    rng: np.random.Generator,
    n_tokens: int = 4,
    depth: int = 3,
    n_sources: int = 2,
) -> TableWorld:
    """Random strictly-positive conditional rows (BOS carries zero mass)."""
    vocab = small_vocab(n_tokens)
    prefixes = all_prefixes(vocab, depth)
    content = [i for i in range(n_tokens) if i not in (0, 1)]
    sources = tuple(
        Sequence((0, content[i % len(content)], content[(i // len(content)) % len(content)]))
        for i in range(n_sources)
    )
    rows = []
    for _ in range(n_sources):
        table = {}
        for pre in prefixes:
            p = rng.random(n_tokens) + 1e-3
            p[0] = 0.0
            table[pre] = Distribution.from_probs(p)
        rows.append(table)
    prior = rng.random(n_sources) + 0.1
    prior = prior / prior.sum()
    prior = tuple(float(x) for x in prior)
    return TableWorld(vocab, sources, prior, tuple(rows))


def one_hot_chain_world(tokens: tuple[int, ...], n_tokens: int = 4) -> TableWorld:
    """World whose conditional puts all mass on one fixed continuation chain."""
    vocab = small_vocab(n_tokens)
    depth = len(tokens) + 1
    rows = {}
    chain = (0,) + tokens
    for pre in all_prefixes(vocab, depth):
        p = np.zeros(n_tokens)
        if pre == chain[: len(pre)] and len(pre) < len(chain):
            p[chain[len(pre)]] = 1.0
        else:
            p[1] = 1.0  # off-chain: finish immediately
        rows[pre] = Distribution.from_probs(p)
    source = Sequence((0, tokens[0] if tokens else 2))
    return TableWorld(vocab, (source,), (1.0,), (rows,))

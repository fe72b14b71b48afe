"""Seeded synthetic datasets with a controllable informative context dimension."""

from __future__ import annotations

import random

from ctxrec.domain import SESSION_ATTRIBUTE, ContextDimension, Dataset, DimensionRegistry, Session


def context_pool_dataset(n_sessions: int = 2000, n_items: int = 20, purity: float = 0.9,
                         seed: int = 0, session_length: tuple[int, int] = (2, 4),
                         zipf: float = 1.0, noise_dims: int = 0,
                         signal: str = "signal") -> Dataset:
    """Two context values, each owning half of the items.

    Each session draws a context value c uniformly; each of its items comes
    from c's pool with probability ``purity`` (otherwise from the other pool),
    with Zipf-like popularity inside a pool. ``noise_dims`` adds independent
    uniform binary dimensions named ``noise1``, ``noise2``, ...
    """
    rng = random.Random(seed)
    half = n_items // 2
    pools = [[f"i{k:02d}" for k in range(half)], [f"i{k:02d}" for k in range(half, n_items)]]
    weights = [1 / (rank + 1) ** zipf for rank in range(half)]
    noise_names = [f"noise{k + 1}" for k in range(noise_dims)]

    sessions = []
    for sid in range(n_sessions):
        c = rng.randrange(2)
        length = rng.randint(*session_length)
        items: dict[str, None] = {}
        while len(items) < length:
            pool = pools[c] if rng.random() < purity else pools[1 - c]
            items.setdefault(rng.choices(pool, weights)[0], None)
        context = {signal: frozenset({str(c)})}
        for name in noise_names:
            context[name] = frozenset({str(rng.randrange(2))})
        sessions.append(Session(f"s{sid:05d}", tuple(items), context, f"u{sid:05d}"))
    dims = DimensionRegistry([ContextDimension(signal, SESSION_ATTRIBUTE)]
                             + [ContextDimension(n, SESSION_ATTRIBUTE) for n in noise_names])
    return Dataset.from_sessions(sessions, {}, dims)

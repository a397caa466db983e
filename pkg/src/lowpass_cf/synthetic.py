"""Synthetic implicit-feedback data with planted item clusters."""

import numpy as np

from .interactions import InteractionMatrix, from_pairs


def planted_clusters(
    n_users: int = 2000,
    n_items: int = 3000,
    density: float = 0.005,
    n_clusters: int = 20,
    in_cluster: float = 0.8,
    seed: int = 0,
) -> InteractionMatrix:
    """Each user belongs to one cluster and draws ~``in_cluster`` of its items from it.

    The interaction count is exactly round(density * n_users * n_items), every
    user has at least one interaction, and item popularity is Zipf-like within
    each cluster.
    """
    rng = np.random.default_rng(seed)
    total = int(round(density * n_users * n_items))
    if not n_users <= total <= n_users * n_items:
        raise ValueError("density leaves some user without interactions")
    item_cluster = rng.integers(n_clusters, size=n_items)
    user_cluster = rng.integers(n_clusters, size=n_users)
    degree = 1 + rng.multinomial(total - n_users, np.full(n_users, 1.0 / n_users))
    degree = np.minimum(degree, n_items)

    popularity = 1.0 / (rng.permutation(n_items) + 10.0) ** 0.8
    members = [np.flatnonzero(item_cluster == c) for c in range(n_clusters)]
    rows, cols = [], []
    for u in range(n_users):
        inside = members[user_cluster[u]]
        outside = np.flatnonzero(item_cluster != user_cluster[u])
        n_in = min(rng.binomial(degree[u], in_cluster), inside.size)
        n_out = min(degree[u] - n_in, outside.size)
        for pool, count in ((inside, n_in), (outside, n_out)):
            if count:
                p = popularity[pool] / popularity[pool].sum()
                cols.append(rng.choice(pool, size=count, replace=False, p=p))
                rows.append(np.full(count, u))
    return from_pairs(
        np.concatenate(rows), np.concatenate(cols), [str(u) for u in range(n_users)], [str(i) for i in range(n_items)]
    )

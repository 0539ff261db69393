"""Shared test helpers."""

import numpy as np

from dsrm_hrl.env import GROUP_LONGTAIL, GROUP_POPULAR, ItemCatalog

FAST_CFG = """\
[env]
d = 8
n_items = 40
slate_k = 3
max_len = 6
init_exposure = 100

[dsrm]
k_steps = 4
hidden = 16
time_dim = 4
epochs = 2
batch = 64
n_pairs = 300
min_pairs = 64

[hrl]
hidden = 16
batch_steps = 60
total_steps = 120
ppo_epochs = 2

[eval]
episodes = 5
"""


def tiny_catalog():
    """4 items: ids 0,1 popular; 2,3 long-tail."""
    rng = np.random.default_rng(0)
    emb = rng.standard_normal((4, 8))
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    group = np.array([GROUP_POPULAR, GROUP_POPULAR,
                      GROUP_LONGTAIL, GROUP_LONGTAIL], dtype=np.int64)
    prior = emb.mean(axis=0)
    return ItemCatalog(4, emb, np.zeros(4, dtype=np.int64),
                       np.ones(4), group, prior / np.linalg.norm(prior))

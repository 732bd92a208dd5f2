"""Checking every hand-written backward pass against central differences."""

import numpy as np

from gridner.core import RelationGrid
from gridner.model import ModelConfig, init_params, loss_and_grad, zero_grads
from gridner.numerics import finite_diff_check, make_rng

cfg = ModelConfig(vocab_size=12, relation_count=4, d_word=6, d_h=8, d_c=6, d_biaffine=5, d_mlp=7,
                  d_Ed=3, d_Et=2, dropout_p=0.0)
rng = make_rng(0)
params = init_params(cfg, rng)
# The initial conditional-norm weights are exactly zero, which hides some paths; shake everything a little.
for t in params.values():
    t.data += rng.normal(0.0, 0.3, t.shape)

ids = [1, 4, 2, 7, 3]
gold = RelationGrid(np.tril(rng.integers(0, 4, (5, 5))) + np.triu(rng.integers(0, 2, (5, 5)), 1))


def loss():
    zero_grads(params)
    return loss_and_grad(ids, gold, params, cfg)


print(f"loss {loss():.6f}, {sum(t.data.size for t in params.values())} parameters")
for name, t in params.items():
    err = finite_diff_check(loss, [t], eps=1e-4, max_coords=None)
    print(f"{name:12s} {str(t.shape):16s} max rel err {err:.1e}")

"""
Symmetric in-batch contrastive loss
===================================

The loss treats row i of the English batch and row i of the target batch as
the only positive pair; every other row is a negative.
"""

import math

import numpy as np

from ipac import PairBatch, brute_force_info_nce, info_nce, ipac_loss
from ipac.gradsuite import ipac_embedding_error

# two orthogonal pairs at temperature 1: log(1 + e^-1)
batch = PairBatch(np.eye(2), np.eye(2), temperature=1.0)
print(info_nce(batch).item(), math.log(1 + math.exp(-1)))

###############################################################################
# Lower temperatures sharpen the softmax; the same batch scores a smaller loss.

for tau in (1.0, 0.5, 0.1):
    print(tau, ipac_loss(PairBatch(np.eye(2), np.eye(2), tau)).item())

###############################################################################
# The vectorised loss agrees with a plain double loop.

rng = np.random.default_rng(0)
ze = rng.normal(size=(6, 4))
zt = rng.normal(size=(6, 4))
ze /= np.linalg.norm(ze, axis=1, keepdims=True)
zt /= np.linalg.norm(zt, axis=1, keepdims=True)
b = PairBatch(ze, zt, 0.1)
print(abs(info_nce(b).item() - brute_force_info_nce(b)))

###############################################################################
# And its gradient matches central finite differences.

print(ipac_embedding_error(seed=0))

"""Counter-style keyed random streams.

A stream is fully determined by its key, so the same draw is reproduced no
matter which worker, node ordering or execution mode requests it.
"""

import numpy as np


def keyed_rng(master_seed: int, node: int, level: int, iteration: int,
              replicate: int = 0) -> np.random.Generator:
    key = [int(master_seed), int(node), int(level), int(iteration), int(replicate)]
    if min(key) < 0:
        raise ValueError(f"stream keys must be nonnegative, got {key}")
    return np.random.default_rng(key)

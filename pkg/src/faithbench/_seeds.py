"""Child-seed derivation. Every stochastic site asks for its own seed."""
import hashlib

import numpy as np


def derive_seed(master: int, *parts) -> int:
    """Stable 63-bit seed from a master seed and a cell identity."""
    key = "/".join([str(int(master))] + [str(p) for p in parts])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def rng_for(master: int, *parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *parts))

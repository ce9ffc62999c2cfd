import hashlib
import logging
import random

import numpy as np
import torch

logger = logging.getLogger(__name__)


def derive_seed(global_seed: int, *keys: str) -> int:
    """Stable 31-bit seed from a global seed and string keys (e.g. a video id)."""
    digest = hashlib.sha256(
        ":".join([str(global_seed), *map(str, keys)]).encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:4], "little") & 0x7FFFFFFF


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed)
    random.seed(seed)
    logger.debug(f"seeded torch/numpy/random with {seed}")

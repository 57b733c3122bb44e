import hashlib
import os

import numpy as np

SEED_ENV_VAR = "SWITCHSIM_SEED"


def master_seed(config_seed: int) -> int:
    """
    The master seed of a run: the environment variable wins over the config value.
    """
    override = os.environ.get(SEED_ENV_VAR)
    if override is not None and override.strip() != "":
        return int(override)
    return int(config_seed)


def stage_seed(master: int, stage: str) -> int:
    """
    Derive the seed of a named stage: first 8 bytes of sha256("<master>:<stage>"), unsigned.
    """
    digest = hashlib.sha256(f"{master}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derived_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Generator for a (seed, key, ...) tuple, independent of how work is split across threads.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))

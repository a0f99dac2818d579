import numpy as np


def derive_seed(master: int, *path: int) -> int:
    """Stable 32-bit seed for the stream addressed by ``(master, *path)``."""
    return int(np.random.SeedSequence([int(master), *map(int, path)]).generate_state(1)[0])


def rng_for(master: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master), *map(int, path)]))

from contextlib import contextmanager
from hashlib import blake2b
from typing import Generator, Iterator, Union

import torch

Key = Union[str, int]


def derive_seed(seed: int, *keys: Key) -> int:
    """Derives the seed of a named stream from the root seed.

    Args:
        seed: root seed of the run.
        *keys: stream name followed by any qualifiers, e.g. `("eval", "pgd", 3)`.

    Returns:
        A 63-bit integer that depends on the root seed and every key.
    """
    digest = blake2b(digest_size=8)
    digest.update(str(int(seed)).encode())
    for key in keys:
        digest.update(b"\x1f")
        digest.update(str(key).encode())
    return int.from_bytes(digest.digest(), "big") & ((1 << 63) - 1)


def make_generator(seed: int, *keys: Key, device: Union[str, torch.device] = "cpu") -> torch.Generator:
    """A `torch.Generator` seeded for the named stream."""
    generator = torch.Generator(device=device)
    generator.manual_seed(derive_seed(seed, *keys))
    return generator


@contextmanager
def seeded(seed: int, *keys: Key) -> Iterator[None]:
    """Runs the block with the global torch RNG seeded for a stream and restores it afterwards.

    Layer constructors draw from the global RNG; this makes them deterministic without leaking state.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(derive_seed(seed, *keys))
        yield


def shuffled_batches(n: int, batch_size: int, generator: torch.Generator) -> Generator[torch.Tensor, None, None]:
    """Yields index batches of a fresh permutation of `range(n)`."""
    order = torch.randperm(n, generator=generator)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]

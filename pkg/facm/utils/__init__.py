from .freeze import frozen
from .hashing import array_digest, parameter_hash
from .numbers import parse_fraction
from .seeding import derive_seed, make_generator, seeded, shuffled_batches

__all__ = [
    "array_digest",
    "derive_seed",
    "frozen",
    "make_generator",
    "parameter_hash",
    "parse_fraction",
    "seeded",
    "shuffled_batches",
]

from hashlib import sha256
from typing import Iterable

import numpy as np
import torch
from torch import nn


def array_digest(array: np.ndarray) -> str:
    """Sha256 of an array's dtype, shape and C-ordered bytes."""
    array = np.ascontiguousarray(array)
    digest = sha256()
    digest.update(str(array.dtype).encode())
    digest.update(str(array.shape).encode())
    digest.update(array.tobytes())
    return digest.hexdigest()


def parameter_hash(*modules: nn.Module) -> str:
    """Sha256 over every parameter and buffer of the given modules, in registration order."""
    digest = sha256()
    for module in modules:
        for name, tensor in _named_state(module):
            digest.update(name.encode())
            digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def _named_state(module: nn.Module) -> Iterable[tuple]:
    yield from module.named_parameters()
    yield from ((name, buffer) for name, buffer in module.named_buffers() if isinstance(buffer, torch.Tensor))

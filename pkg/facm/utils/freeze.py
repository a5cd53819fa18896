from contextlib import contextmanager
from logging import getLogger
from typing import Dict, Iterator, List

from torch import nn

from facm.exceptions import InternalException
from facm.utils.hashing import parameter_hash

logger = getLogger(__name__)


@contextmanager
def frozen(*modules: nn.Module) -> Iterator[None]:
    """Freezes modules for the duration of a fine-tuning phase.

    Gradients are disabled and the modules are put in eval mode. On exit the previous flags are restored and the
    parameter hash is compared with the one taken on entry.

    Raises:
        InternalException: a frozen parameter or buffer changed inside the block.
    """
    before = parameter_hash(*modules)
    flags: List[Dict[str, bool]] = []
    modes: List[bool] = []
    for module in modules:
        flags.append({name: p.requires_grad for name, p in module.named_parameters()})
        modes.append(module.training)
        module.requires_grad_(False)
        module.eval()
    try:
        yield
    finally:
        for module, saved, mode in zip(modules, flags, modes):
            for name, parameter in module.named_parameters():
                parameter.requires_grad_(saved[name])
            module.train(mode)
    after = parameter_hash(*modules)
    if after != before:
        raise InternalException(detail=f"frozen parameters changed during fine-tuning ({before[:12]} -> {after[:12]})")
    logger.debug("freeze check passed for %d module(s)", len(modules))

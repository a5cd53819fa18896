from collections import Counter
from typing import List, Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from facm.backbone import FeatureTaps, TappableClassifier
from facm.cmpd import ConditionalAutoencoder, cmpd_predict
from facm.correction import AuxiliaryClassifier, FACorrectionModule, aux_forward, fa_forward
from facm.enums import CorrectionMode
from facm.exceptions import ImproperlyConfiguredException, ValidationException


class CorrectionSet:
    """The ordered members [f, phi_1..phi_{n-1}, f∘g_0..f∘g_{n-1}].

    Fast mode keeps only the backbone and the FA modules. Every member evaluation is counted per member id.
    """

    def __init__(
        self,
        model: TappableClassifier,
        auxs: Sequence[AuxiliaryClassifier],
        fas: Sequence[FACorrectionModule],
        cae: Optional[ConditionalAutoencoder] = None,
        mode: CorrectionMode = CorrectionMode.FACM,
    ):
        if len(auxs) != model.n - 1 or len(fas) != model.n - 1:
            raise ImproperlyConfiguredException(
                detail=f"a backbone with {model.n - 1} taps needs as many auxiliary classifiers and FA modules, "
                f"got {len(auxs)} and {len(fas)}"
            )
        if mode == CorrectionMode.FACM and cae is None:
            raise ImproperlyConfiguredException(detail="the full correction set needs the conditional autoencoder")
        self.model = model
        self.auxs = list(auxs)
        self.fas = list(fas)
        self.cae = cae if mode == CorrectionMode.FACM else None
        self.mode = CorrectionMode(mode)
        self.calls: Counter = Counter()

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def num_classes(self) -> int:
        return self.model.num_classes

    @property
    def member_ids(self) -> List[str]:
        ids = ["f"] + [f"fa{i}" for i in range(1, self.n)]
        if self.mode == CorrectionMode.FACM:
            ids += [f"cmpd{i}" for i in range(self.n)]
        return ids

    def __len__(self) -> int:
        return 2 * self.n if self.mode == CorrectionMode.FACM else self.n

    def is_cmpd(self, j: int) -> bool:
        return j >= self.n

    def member_logits(self, j: int, batch: torch.Tensor, taps: Optional[FeatureTaps] = None) -> torch.Tensor:
        """Logits of member `j` on a batch, reusing `taps` of that batch when given.

        Raises:
            ValidationException: `j` is not a member index.
        """
        if not 0 <= j < len(self):
            raise ValidationException(detail=f"member index must be within 0..{len(self) - 1}, got {j}")
        self.calls[self.member_ids[j]] += 1
        if taps is None:
            taps = self.model.forward_with_taps(batch)
        if j == 0:
            return taps.logits
        if j < self.n:
            return fa_forward(self.fas[j - 1], taps, self.auxs[j - 1])
        return cmpd_predict(self.cae, self.model, self.auxs, batch, j - self.n, taps=taps)  # type: ignore[arg-type]

    def all_logits(self, batch: torch.Tensor, taps: Optional[FeatureTaps] = None) -> torch.Tensor:
        """Logits of every member, [batch, |C|, m]."""
        if taps is None:
            taps = self.model.forward_with_taps(batch)
        return torch.stack([self.member_logits(j, batch, taps) for j in range(len(self))], dim=1)

    def decision_features(self, taps: FeatureTaps) -> torch.Tensor:
        """Decision input: softmax outputs of f_1..f_{n-1} followed by softmax(f(x)), width n * m."""
        blocks = [F.softmax(aux_forward(aux, taps), dim=1) for aux in self.auxs]
        blocks.append(F.softmax(taps.logits, dim=1))
        return torch.cat(blocks, dim=1)

    def modules(self) -> List[nn.Module]:
        """Every module whose parameters the members read."""
        modules: List[nn.Module] = [self.model, *self.auxs, *self.fas]
        if self.cae is not None:
            modules.append(self.cae)
        return modules

    def reset_calls(self) -> None:
        self.calls.clear()

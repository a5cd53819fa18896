from .modules import (
    Autoencoder,
    AutoencoderCore,
    ConditionalAutoencoder,
    ConditionHead,
    ConditionVector,
    build_condition,
    build_conditional_autoencoder,
    cae_forward,
    cmpd_predict,
    mpd_predict,
)
from .training import cmpd_kl_loss, finetune_cmpd

__all__ = [
    "Autoencoder",
    "AutoencoderCore",
    "ConditionHead",
    "ConditionVector",
    "ConditionalAutoencoder",
    "build_condition",
    "build_conditional_autoencoder",
    "cae_forward",
    "cmpd_kl_loss",
    "cmpd_predict",
    "finetune_cmpd",
    "mpd_predict",
]

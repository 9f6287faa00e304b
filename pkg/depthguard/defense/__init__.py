from .optim import Adam, AdamConfig
from .training import (
    AuditRecord,
    TrainConfig,
    TrainResult,
    default_saliency_spec,
    depth_loss,
    saliency_loss,
    sample_branch,
    train_depth,
    train_depth_adv,
    train_saliency,
    train_saliency_adv,
    train_saliency_clean,
)
from .configurations import (
    ConfigurationId,
    Stores,
    adversarial_input,
    attack_name,
    configuration_forward,
    evaluate_configuration,
)
from .sweeps import encoder_depth_sweep, eps_sweep, iters_sweep, loss_ablation
from depthguard.masking import apply_mask

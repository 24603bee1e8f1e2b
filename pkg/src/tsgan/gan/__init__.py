from .config import (
    ConditionLabel,
    ConfigError,
    CriticConfig,
    GeneratorConfig,
    LossConfig,
    ModelConfig,
)
from .losses import (
    critic_loss,
    generator_loss,
    gradient_penalty,
    smooth_label_array,
    smooth_labels,
    weighted_label_mse,
)
from .models import (
    condition_embed,
    critic_features,
    critic_forward,
    generator_forward,
    init_critic,
    init_generator,
)
from .train import Adam, NumericAbort, TrainState, init_state, synthesize, train_step

__all__ = [
    "ConditionLabel", "ConfigError", "CriticConfig", "GeneratorConfig", "LossConfig",
    "ModelConfig", "critic_loss", "generator_loss", "gradient_penalty", "smooth_label_array",
    "smooth_labels", "weighted_label_mse", "condition_embed", "critic_features",
    "critic_forward", "generator_forward", "init_critic", "init_generator", "Adam",
    "NumericAbort", "TrainState", "init_state", "synthesize", "train_step",
]

from jsonschema import ValidationError
from .config import load_config, dump_config, dump_default_config, validate, emit_defaults, TrainerConfig
from .grpo_kernel import Rollout, RolloutGroup, group_advantages, k3_kl, mask_overlength, batch_objective
from .trainer import MetricsLog, train
from . import json

__version__ = "0.1.0"

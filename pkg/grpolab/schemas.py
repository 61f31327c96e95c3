"""
JSON schemas for grpolab configuration files.

Every object rejects unknown keys. Defaults are injected by
:py:func:`grpolab.config.load_config`, so a config file only needs to name
the settings it changes.
"""
import copy

GRPO_SCHEMA = {
    "description": "Objective and advantage settings",
    "type": "object",
    "additionalProperties": False,
    "default": {},
    "properties": {
        "eps_clip": {
            "description": "Clip range of the importance ratio: [1 - eps_clip, 1 + eps_clip]",
            "type": "number",
            "exclusiveMinimum": 0,
            "exclusiveMaximum": 1,
            "default": 0.2
        },
        "beta": {
            "description": "Weight of the k3 KL penalty against the reference policy (0 removes it)",
            "type": "number",
            "minimum": 0,
            "default": 0.0
        },
        "group_size": {
            "description": "Rollouts sampled per task (G)",
            "type": "integer",
            "minimum": 2,
            "default": 8
        },
        "eps_std": {
            "description": "Groups whose reward std falls below this get all-zero advantages",
            "type": "number",
            "exclusiveMinimum": 0,
            "default": 1e-8
        },
        "max_response_tokens": {
            "description": "Responses longer than this (or truncated) get zero advantage",
            "type": "integer",
            "minimum": 1,
            "default": 8
        },
        "loss_aggregation": {
            "description": "How the surrogate is averaged: over all tokens, or per response then per group",
            "type": "string",
            "enum": ["token", "sequence"],
            "default": "token"
        },
        "updates_per_step": {
            "description": "Optimizer updates per sampling phase (1 is strictly on-policy)",
            "type": "integer",
            "minimum": 1,
            "default": 1
        }
    }
}

POLICY_SCHEMA = {
    "description": "Toy categorical policy",
    "type": "object",
    "additionalProperties": False,
    "default": {},
    "properties": {
        "vocab_size": {
            "description": "Number of tokens, including the terminator (token 0)",
            "type": "integer",
            "minimum": 2,
            "default": 16
        },
        "max_len": {
            "description": "Maximum number of sampled tokens per response",
            "type": "integer",
            "minimum": 1,
            "default": 8
        },
        "init_scale": {
            "description": "Std of the Gaussian initial logits (0 gives the uniform policy)",
            "type": "number",
            "minimum": 0,
            "default": 0.0
        }
    }
}

OPTIMIZER_SCHEMA = {
    "description": "AdamW optimizer",
    "type": "object",
    "additionalProperties": False,
    "default": {},
    "properties": {
        "lr": {
            "description": "Constant learning rate",
            "type": "number",
            "exclusiveMinimum": 0,
            "default": 0.01
        },
        "betas": {
            "description": "First and second moment decay rates",
            "type": "array",
            "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "minItems": 2,
            "maxItems": 2,
            "default": [0.9, 0.95]
        },
        "eps": {
            "description": "Denominator guard",
            "type": "number",
            "exclusiveMinimum": 0,
            "default": 1e-8
        },
        "weight_decay": {
            "description": "Decoupled weight decay",
            "type": "number",
            "minimum": 0,
            "default": 0.0
        }
    }
}

TRAINING_SCHEMA = {
    "description": "Training loop",
    "type": "object",
    "additionalProperties": False,
    "default": {},
    "properties": {
        "steps": {
            "description": "Number of training steps",
            "type": "integer",
            "minimum": 0,
            "default": 200
        },
        "tasks_per_step": {
            "description": "Tasks (prompts) per batch",
            "type": "integer",
            "minimum": 1,
            "default": 32
        },
        "reward_mode": {
            "description": "binary: reward is task correctness; shaped: correctness plus the format reward",
            "type": "string",
            "enum": ["binary", "shaped"],
            "default": "binary"
        }
    }
}

POOL_SCHEMA = {
    "description": "Synthetic task pool",
    "type": "object",
    "additionalProperties": False,
    "default": {},
    "properties": {
        "n_math": {
            "description": "Number of math-domain tasks",
            "type": "integer",
            "minimum": 0,
            "default": 64
        },
        "n_code": {
            "description": "Number of code-domain tasks",
            "type": "integer",
            "minimum": 0,
            "default": 64
        },
        "trivial_fraction": {
            "description": "Share of tasks with an empty target (solved by every response)",
            "type": "number",
            "minimum": 0,
            "maximum": 1,
            "default": 0.0
        },
        "min_target_len": {
            "description": "Shortest non-trivial target",
            "type": "integer",
            "minimum": 1,
            "default": 1
        },
        "max_target_len": {
            "description": "Longest non-trivial target",
            "type": "integer",
            "minimum": 1,
            "default": 1
        },
        "master_sequence": {
            "description": "Targets are contiguous pieces of this token sequence (empty: 1, 2, ..., vocab_size - 1)",
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "default": []
        },
        "seed": {
            "description": "Seed of the pool generator",
            "type": "integer",
            "minimum": 0,
            "default": 0
        }
    }
}

STAGE_PLAN_SCHEMA = {
    "description": "Two-stage curriculum",
    "type": "object",
    "additionalProperties": False,
    "default": {},
    "properties": {
        "strategy": {
            "description": "staged, mixed (stage-2 mix from the start), math_only, or code_only",
            "type": "string",
            "enum": ["staged", "mixed", "math_only", "code_only"],
            "default": "staged"
        },
        "stage1_steps": {
            "description": "Steps of math-only training (fixed_steps transition)",
            "type": "integer",
            "minimum": 0,
            "default": 840
        },
        "stage2_mix_ratio": {
            "description": "Fraction of code tasks per stage-2 batch",
            "type": "number",
            "minimum": 0,
            "maximum": 1,
            "default": 0.5
        },
        "transition": {
            "description": "fixed_steps or reward_plateau",
            "type": "string",
            "enum": ["fixed_steps", "reward_plateau"],
            "default": "fixed_steps"
        },
        "plateau_window": {
            "description": "Steps in the least-squares window of the plateau detector",
            "type": "integer",
            "minimum": 2,
            "default": 50
        },
        "plateau_tolerance": {
            "description": "Reward slope (per step) below which the reward has plateaued",
            "type": "number",
            "default": 1e-4
        }
    }
}

RESAMPLING_SCHEMA = {
    "description": "Epoch-level history resampling",
    "type": "object",
    "additionalProperties": False,
    "default": {},
    "properties": {
        "enabled": {
            "description": "Drop all-correct tasks at every epoch boundary",
            "type": "boolean",
            "default": True
        },
        "readmit_dropped": {
            "description": "Rebuild from the full pool each epoch instead of shrinking monotonically",
            "type": "boolean",
            "default": False
        }
    }
}

REWARDS_SCHEMA = {
    "description": "Rule-based reward constants",
    "type": "object",
    "additionalProperties": False,
    "default": {},
    "properties": {
        "full": {"description": "Accuracy reward of a correct answer", "type": "number", "default": 1.0},
        "partial": {"description": "Accuracy reward of a partially correct answer", "type": "number", "default": 0.2},
        "format": {"description": "Reward for a well-formed <output> answer", "type": "number", "default": 0.2},
        "penalty": {"description": "Language-mixing penalty", "type": "number", "maximum": 0, "default": -0.1},
        "expected_script": {
            "description": "Unicode script the response is expected to be written in",
            "type": "string",
            "default": "LATIN"
        },
        "mix_threshold": {
            "description": "Foreign-script letters needed to trigger the mixing penalty",
            "type": "integer",
            "minimum": 1,
            "default": 5
        }
    }
}

DIFFICULTY_SCHEMA = {
    "description": "Difficulty bucketing thresholds",
    "type": "object",
    "additionalProperties": False,
    "default": {},
    "properties": {
        "t_easy": {"description": "pass@1 at or above which a task is easy", "type": "number",
                   "minimum": 0, "maximum": 1, "default": 0.7},
        "t_hard": {"description": "pass@k at or below which a task is hard", "type": "number",
                   "minimum": 0, "maximum": 1, "default": 0.3},
        "k": {"description": "Attempts behind pass@k", "type": "integer", "minimum": 1, "default": 8}
    }
}

EXECUTOR_SCHEMA = {
    "description": "Code test executor",
    "type": "object",
    "additionalProperties": False,
    "default": {},
    "properties": {
        "command_template": {
            "description": "argv of the runner; '{program}' is replaced by the program path",
            "type": "array",
            "items": {"type": "string"},
            "minItems": 1,
            "default": ["python3", "{program}"]
        },
        "builtin": {
            "description": "Run programs with the built-in stack-language evaluator instead",
            "type": "boolean",
            "default": False
        },
        "wall_clock_limit": {
            "description": "Seconds per test case",
            "type": "number",
            "exclusiveMinimum": 0,
            "default": 2.0
        },
        "output_limit": {
            "description": "Bytes of standard output allowed per test case",
            "type": "integer",
            "minimum": 1,
            "default": 65536
        },
        "memory_note": {
            "description": "Advisory memory limit (not enforced)",
            "type": "string",
            "default": "256MB"
        },
        "network": {
            "description": "Network access for programs; must stay disabled",
            "type": "boolean",
            "enum": [False],
            "default": False
        },
        "max_concurrency": {
            "description": "Simultaneous sandboxes",
            "type": "integer",
            "minimum": 1,
            "default": 4
        }
    }
}

TEMPLATES_SCHEMA = {
    "description": "Prompt templates; '{question}' is the required placeholder",
    "type": "object",
    "additionalProperties": False,
    "default": {},
    "properties": {
        "math": {
            "type": "string",
            "default": ("A conversation between User and Assistant. The User asks a question, "
                        "and the Assistant solves it. The Assistant reasons step by step and then "
                        "gives the final answer as <output>answer</output>.\n"
                        "User: {question}\nAssistant:")
        },
        "code": {
            "type": "string",
            "default": ("A conversation between User and Assistant. The User asks a programming "
                        "question, and the Assistant writes a program that reads standard input "
                        "and writes standard output, giving the final program inside "
                        "<output></output>.\nUser: {question}\nAssistant:")
        }
    }
}

TRAINER_CONFIG_SCHEMA = {
    "description": "grpolab configuration",
    "type": "object",
    "additionalProperties": False,
    "default": {},
    "properties": {
        "preset": {
            "description": "Named profile whose values are applied beneath this file: toy or full",
            "type": "string",
            "enum": ["toy", "full"],
            "default": "toy"
        },
        "seed": {
            "description": "Master seed; every random draw in a run derives from it",
            "type": "integer",
            "minimum": 0,
            "default": 0
        },
        "workers": {
            "description": "Threads used to sample rollouts (results do not depend on it)",
            "type": "integer",
            "minimum": 1,
            "default": 1
        },
        "grpo": GRPO_SCHEMA,
        "policy": POLICY_SCHEMA,
        "optimizer": OPTIMIZER_SCHEMA,
        "training": TRAINING_SCHEMA,
        "pool": POOL_SCHEMA,
        "stage_plan": STAGE_PLAN_SCHEMA,
        "resampling": RESAMPLING_SCHEMA,
        "rewards": REWARDS_SCHEMA,
        "difficulty": DIFFICULTY_SCHEMA,
        "executor": EXECUTOR_SCHEMA,
        "templates": TEMPLATES_SCHEMA
    }
}

LEXICON_SCHEMA = {
    "description": "Reflection-pattern lexicon: group name -> lowercase phrases",
    "type": "object",
    "minProperties": 1,
    "additionalProperties": {
        "type": "array",
        "minItems": 1,
        "items": {"type": "string", "minLength": 1, "pattern": "^[^A-Z]*$"}
    }
}

# Values applied beneath the user's file, before schema defaults.
PRESETS = {
    "toy": {},
    "full": {
        "grpo": {"group_size": 32, "max_response_tokens": 10000, "beta": 0.0},
        "policy": {"max_len": 10000},
        "optimizer": {"lr": 1e-6, "betas": [0.9, 0.95], "weight_decay": 0.0},
        "training": {"tasks_per_step": 256},
        "stage_plan": {"stage1_steps": 840},
    },
}


def preset_overlay(name):
    """Return a deep copy of the named preset's values."""
    return copy.deepcopy(PRESETS[name])

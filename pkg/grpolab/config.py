"""
Schema-checked configuration files, with default values for missing fields.

A config file (JSON, or YAML, which is a superset of JSON) is merged onto a
named preset, overridden by ``GRPOLAB_*`` environment variables, validated
against :py:data:`grpolab.schemas.TRAINER_CONFIG_SCHEMA` and filled in with the
schema defaults. :py:class:`TrainerConfig` is the typed view of the result.
"""
import io
import os
import copy
import hashlib
import logging
from os import PathLike
from pathlib import Path
from dataclasses import dataclass, field
from collections.abc import Mapping, Sequence

from jsonschema import validators
from jsonschema.exceptions import _Error, ValidationError
from ruamel.yaml import YAML
from ruamel.yaml.comments import CommentedMap, CommentedSeq

from . import json
from .errors import ConfigError
from .schemas import TRAINER_CONFIG_SCHEMA, preset_overlay
from .optim import AdamHyper
from .policy import PoolSpec
from .rewards import RewardConstants
from .sandbox import ExecutorConfig
from .scheduler import StagePlan
from .curation import DifficultyThresholds

logger = logging.getLogger(__name__)

yaml = YAML()
yaml.default_flow_style = False

ENV_PREFIX = "GRPOLAB_"

# Remove comparability of ValidationError and SchemaError,
# and endow them with hashability instead.
# Otherwise they can choke pytest.
# See https://github.com/Julian/jsonschema/issues/477
_Error.__eq__ = object.__eq__
_Error.__ne__ = object.__ne__
_Error.__hash__ = object.__hash__


def load_config(path_or_file=None, schema=TRAINER_CONFIG_SCHEMA, preset=None,
                environ=None, overrides=None):
    """
    Load, merge, validate and default-fill a configuration.

    Layers, lowest precedence first:

    1. schema defaults
    2. the preset named by ``preset`` (or by the file's ``preset`` key)
    3. the file contents
    4. ``GRPOLAB_<SECTION>__<KEY>`` environment variables
    5. ``overrides`` (typically command-line flags)

    Args:
        path_or_file:
            A path, an open file, an already-loaded mapping, or ``None``
            for an empty config.
        schema:
            The config schema. Presets only apply to the trainer schema.
        preset:
            ``"toy"`` or ``"full"``. Takes precedence over the file's own
            ``preset`` key.
        environ:
            Mapping searched for overrides; defaults to ``os.environ``.
        overrides:
            Nested mapping applied last.

    Returns:
        ``dict`` of plain Python types.
    """
    assert isinstance(schema, Mapping), \
        "Invalid schema type: should be a dict of jsonschema specs"

    config = _read(path_or_file)
    if not isinstance(config, Mapping):
        raise ConfigError(f"Config must be an object, not {type(config).__name__}")

    env_layer = env_overrides(os.environ if environ is None else environ)
    config = deep_merge(config, env_layer)
    config = deep_merge(config, overrides or {})

    if schema is TRAINER_CONFIG_SCHEMA:
        name = preset or config.get("preset", "toy")
        if name not in ("toy", "full"):
            raise ConfigError(f"Unknown preset: {name!r}")
        config = deep_merge(preset_overlay(name), config)
        config["preset"] = name

    validate(config, schema, inject_defaults=True)
    config = convert_to_base_types(config)
    if schema is TRAINER_CONFIG_SCHEMA:
        check_consistency(config)
    return config


def _read(path_or_file):
    if path_or_file is None:
        return {}
    if isinstance(path_or_file, Mapping):
        return copy.deepcopy(convert_to_base_types(path_or_file))
    if isinstance(path_or_file, str):
        path_or_file = Path(path_or_file)
    if isinstance(path_or_file, PathLike):
        with open(path_or_file, 'r') as f:
            data = yaml.load(f)
    else:
        data = yaml.load(path_or_file)
    return {} if data is None else convert_to_base_types(data)


def env_overrides(environ):
    """
    Collect ``GRPOLAB_*`` variables into a nested mapping.

    ``GRPOLAB_GRPO__EPS_CLIP=0.3`` becomes ``{"grpo": {"eps_clip": 0.3}}``.
    Values are parsed as YAML scalars (so numbers, booleans and JSON lists
    keep their types); anything else stays a string.
    """
    result = {}
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        if not all(path):
            continue
        raw = environ[name]
        try:
            value = convert_to_base_types(yaml.load(raw))
        except Exception:
            value = raw
        if value is None:
            value = raw
        node = result
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value
        logger.debug("config override from %s", name)
    return result


def deep_merge(base, update):
    """A copy of ``base`` with ``update`` merged in; nested mappings merge, other values replace."""
    merged = copy.deepcopy(dict(base))
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def check_consistency(config):
    """
    Constraints that span several fields and cannot be written in the schema.
    Raises :py:class:`ConfigError`.
    """
    policy = config["policy"]
    pool = config["pool"]
    if pool["min_target_len"] > pool["max_target_len"]:
        raise ConfigError("pool.min_target_len exceeds pool.max_target_len")
    if pool["max_target_len"] > policy["max_len"]:
        raise ConfigError("pool.max_target_len exceeds policy.max_len")
    master = pool["master_sequence"] or list(range(1, policy["vocab_size"]))
    if any(t >= policy["vocab_size"] for t in master):
        raise ConfigError("pool.master_sequence uses tokens outside the vocabulary")
    if pool["max_target_len"] > len(master) and pool["trivial_fraction"] < 1:
        raise ConfigError("pool.max_target_len exceeds the master sequence length")
    if pool["n_math"] + pool["n_code"] == 0:
        raise ConfigError("the task pool is empty")


def validate(instance, schema, base_cls=None, *args, inject_defaults=False, **kwargs):
    """
    Drop-in replacement for ``jsonschema.validate()``,
    with the following extended functionality:

    - Specifically allow types from ``ruamel.yaml.comments``
    - If ``inject_defaults`` is ``True``, this function *modifies* the instance IN-PLACE
      to fill missing properties with their schema-provided default values.
    """
    cls = _validator_class(schema, base_cls)
    if inject_defaults:
        cls = extend_with_default(cls)
    cls(schema, *args, **kwargs).validate(instance)


def _validator_class(schema, base_cls=None):
    if base_cls is None:
        base_cls = validators.validator_for(schema)
    base_cls.check_schema(schema)

    def is_object(checker, instance):
        return (base_cls.TYPE_CHECKER.is_type(instance, "object")
                or isinstance(instance, CommentedMap))

    def is_array(checker, instance):
        return (base_cls.TYPE_CHECKER.is_type(instance, "array")
                or isinstance(instance, CommentedSeq))

    type_checker = base_cls.TYPE_CHECKER.redefine_many(
        {"object": is_object, "array": is_array})
    return validators.extend(base_cls, type_checker=type_checker)


def extend_with_default(validator_class):
    """
    Add default injection to a validator class.

    Adapted from the jsonschema FAQ:
    http://python-jsonschema.readthedocs.org/en/latest/faq/
    """
    validate_properties = validator_class.VALIDATORS["properties"]

    def set_defaults_and_validate(validator, properties_schema, instance, schema):
        if isinstance(instance, Mapping):
            for property_name, subschema in properties_schema.items():
                if "default" in subschema:
                    instance.setdefault(property_name, copy.deepcopy(subschema["default"]))
        yield from validate_properties(validator, properties_schema, instance, schema)

    def check_required(validator, required, instance, schema):
        # Only properties without a schema default are really required.
        if not isinstance(instance, Mapping):
            return
        for prop in required:
            if prop in instance:
                continue
            if 'default' not in schema.get('properties', {}).get(prop, {}):
                yield ValidationError(f"{prop!r} is a required property and has no default value")

    return validators.extend(
        validator_class,
        {
            "properties": set_defaults_and_validate,
            "required": check_required
        }
    )


def emit_defaults(schema, include_yaml_comments=False, yaml_indent=2):
    """
    Emit all default values for the given schema.

    If ``include_yaml_comments`` is True, the result is made of ``CommentedMap``
    objects with each property's ``description`` attached as a comment above it.
    """
    instance = {}
    validate(instance, schema, inject_defaults=True)
    if not include_yaml_comments:
        return convert_to_base_types(instance)
    commented = _to_commented(instance, schema, 0, yaml_indent)
    if "description" in schema:
        commented.yaml_set_start_comment('\n' + schema["description"] + '\n\n')
    return commented


def _to_commented(o, schema, key_indent, indent_increment):
    if isinstance(o, Mapping):
        props = schema.get("properties", {}) if isinstance(schema, Mapping) else {}
        cm = CommentedMap()
        for k, v in o.items():
            cm[k] = _to_commented(v, props.get(k, {}), key_indent + indent_increment,
                                  indent_increment)
            description = props.get(k, {}).get("description")
            if description:
                cm.yaml_set_comment_before_after_key(k, '\n' + description, key_indent)
        return cm
    if isinstance(o, list):
        seq = CommentedSeq(o)
        if all(isinstance(i, (int, float, str)) for i in o):
            seq.fa.set_flow_style()
        return seq
    return o


def dump_default_config(schema=TRAINER_CONFIG_SCHEMA, f=None, format="yaml-with-comments"):  # noqa
    """
    Dump the default config settings from the given schema.

    Args:
        schema:
            The config schema
        f:
            File object to write to. If ``None``, the text is returned.
        format:
            ``"json"``, ``"yaml"``, or ``"yaml-with-comments"``.
    """
    assert format in ("json", "yaml", "yaml-with-comments")
    output_stream = io.StringIO() if f is None else f

    if format == "json":
        json.dump(emit_defaults(schema), output_stream, indent=2, sort_keys=True)
        output_stream.write("\n")
    else:
        yaml.dump(emit_defaults(schema, format == "yaml-with-comments"), output_stream)

    if f is None:
        return output_stream.getvalue()


def dump_config(config_data, path_or_file=None):
    """
    Write the config as canonical JSON (sorted keys, two-space indent).
    If no path or file is given, return it as a string.
    """
    text = canonical_json(config_data) + "\n"
    if path_or_file is None:
        return text
    if isinstance(path_or_file, (str, PathLike)):
        with open(path_or_file, 'w') as f:
            f.write(text)
    else:
        path_or_file.write(text)


def canonical_json(config_data):
    return json.dumps(convert_to_base_types(config_data), sort_keys=True, indent=2)


def config_hash(config_data):
    """SHA-256 of the canonical serialization."""
    return hashlib.sha256(canonical_json(config_data).encode('utf-8')).hexdigest()


def convert_to_base_types(o):
    """
    Convert the given container into a standard dict or list (recursively).
    This is useful if you need to pass your config to a function that is
    hard-coded to check for dicts or lists rather than Mapping or Sequence.
    """
    if isinstance(o, Mapping):
        return {k: convert_to_base_types(v) for k, v in o.items()}
    if not isinstance(o, (str, bytes)) and isinstance(o, Sequence):
        return [convert_to_base_types(i) for i in o]
    return o


@dataclass(frozen=True)
class TrainerConfig:
    """
    Every hyperparameter of a run, read from a validated config dict.

    Constructed directly (all fields have defaults) in library code and
    tests, or via :py:meth:`from_dict` from the output of :py:func:`load_config`.
    """
    eps_clip: float = 0.2
    beta: float = 0.0
    group_size: int = 8
    eps_std: float = 1e-8
    max_response_tokens: int = 8
    loss_aggregation: str = "token"
    updates_per_step: int = 1

    vocab_size: int = 16
    max_len: int = 8
    init_scale: float = 0.0

    adam: AdamHyper = field(default_factory=AdamHyper)

    steps: int = 200
    tasks_per_step: int = 32
    reward_mode: str = "binary"

    pool: PoolSpec = field(default_factory=PoolSpec)
    stage_plan: StagePlan = field(default_factory=StagePlan)
    resampling_enabled: bool = True
    readmit_dropped: bool = False
    rewards: RewardConstants = field(default_factory=RewardConstants)
    thresholds: DifficultyThresholds = field(default_factory=DifficultyThresholds)
    executor: ExecutorConfig = field(default_factory=ExecutorConfig)
    templates: dict = field(
        default_factory=lambda: emit_defaults(TRAINER_CONFIG_SCHEMA)["templates"])

    seed: int = 0
    workers: int = 1
    preset: str = "toy"

    def __post_init__(self):
        if self.group_size < 2:
            raise ConfigError("group_size must be at least 2")
        if not 0 < self.eps_clip < 1:
            raise ConfigError("eps_clip must lie in (0, 1)")
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")
        if self.eps_std <= 0:
            raise ConfigError("eps_std must be positive")
        if self.max_response_tokens <= 0:
            raise ConfigError("max_response_tokens must be positive")
        if self.loss_aggregation not in ("token", "sequence"):
            raise ConfigError(f"unknown loss_aggregation {self.loss_aggregation!r}")
        if self.reward_mode not in ("binary", "shaped"):
            raise ConfigError(f"unknown reward_mode {self.reward_mode!r}")

    @classmethod
    def from_dict(cls, config):
        """Build from a config dict that has been through :py:func:`load_config`."""
        grpo = config["grpo"]
        policy = config["policy"]
        opt = config["optimizer"]
        training = config["training"]
        return cls(
            eps_clip=grpo["eps_clip"],
            beta=grpo["beta"],
            group_size=grpo["group_size"],
            eps_std=grpo["eps_std"],
            max_response_tokens=grpo["max_response_tokens"],
            loss_aggregation=grpo["loss_aggregation"],
            updates_per_step=grpo["updates_per_step"],
            vocab_size=policy["vocab_size"],
            max_len=policy["max_len"],
            init_scale=policy["init_scale"],
            adam=AdamHyper(lr=opt["lr"], beta1=opt["betas"][0], beta2=opt["betas"][1],
                           eps=opt["eps"], weight_decay=opt["weight_decay"]),
            steps=training["steps"],
            tasks_per_step=training["tasks_per_step"],
            reward_mode=training["reward_mode"],
            pool=PoolSpec(**config["pool"]),
            stage_plan=StagePlan(**config["stage_plan"]),
            resampling_enabled=config["resampling"]["enabled"],
            readmit_dropped=config["resampling"]["readmit_dropped"],
            rewards=RewardConstants(**config["rewards"]),
            thresholds=DifficultyThresholds(**config["difficulty"]),
            executor=ExecutorConfig(**config["executor"]),
            templates=dict(config["templates"]),
            seed=config["seed"],
            workers=config["workers"],
            preset=config["preset"],
        )

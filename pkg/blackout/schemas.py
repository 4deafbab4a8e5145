"""
Defines all schemas used in blackout
"""


from typing import Dict, Optional, Set

import yaml
from marshmallow import RAISE, Schema, ValidationError, fields, post_load, validate

import blackout.config as config
from blackout.exceptions import DomainError
from blackout.pipeline import GenConfig, Sampler, TrainConfig
from blackout.schedule import LOG2, Schedule, make_schedule


class NoDatesSafeLoader(yaml.SafeLoader):
    @classmethod
    def remove_implicit_resolver(cls, tag_to_remove):
        """
        Remove implicit resolvers for a particular tag

        Takes care not to modify resolvers in super classes.
        """
        if "yaml_implicit_resolvers" not in cls.__dict__:
            cls.yaml_implicit_resolvers = cls.yaml_implicit_resolvers.copy()

        for first_letter, mappings in cls.yaml_implicit_resolvers.items():
            cls.yaml_implicit_resolvers[first_letter] = [
                (tag, regexp) for tag, regexp in mappings if tag != tag_to_remove
            ]


NoDatesSafeLoader.remove_implicit_resolver("tag:yaml.org,2002:timestamp")


class YamlRender:
    @staticmethod
    def loads(data):
        return yaml.load(data, Loader=NoDatesSafeLoader)


_T_FIELD = dict(load_default=1000, dump_default=1000, validate=validate.Range(min=2))
_HORIZON_FIELD = dict(
    load_default=15.0,
    dump_default=15.0,
    validate=validate.Range(min=LOG2, min_inclusive=False),
)


class ScheduleSchema(Schema):
    """The schema of the observation-time schedule"""

    class Meta:
        render_module = YamlRender
        unknown = RAISE

    T = fields.Int(**_T_FIELD)
    horizon = fields.Float(**_HORIZON_FIELD)

    @post_load
    def make_schedule(self, data: Dict, **kwargs) -> Schedule:
        return make_schedule(data["T"], data["horizon"])


class TrainConfigSchema(Schema):
    """The schema of a training run"""

    class Meta:
        render_module = YamlRender
        unknown = RAISE

    seed = fields.Int(required=True)
    loss = fields.Str(load_default="inst", dump_default="inst", validate=validate.OneOf(["inst", "finite"]))
    batch_size = fields.Int(load_default=64, dump_default=64, validate=validate.Range(min=1))
    iterations = fields.Int(load_default=1000, dump_default=1000, validate=validate.Range(min=0))
    learning_rate = fields.Float(
        load_default=0.05, dump_default=0.05, validate=validate.Range(min=0, min_inclusive=False)
    )
    momentum = fields.Float(
        load_default=0.0, dump_default=0.0, validate=validate.Range(min=0, max=1, max_inclusive=False)
    )
    T = fields.Int(**_T_FIELD)
    horizon = fields.Float(**_HORIZON_FIELD)
    hidden = fields.List(
        fields.Int(validate=validate.Range(min=1)), load_default=lambda: [32], dump_default=[32]
    )
    init_scale = fields.Float(
        load_default=0.1, dump_default=0.1, validate=validate.Range(min=0, min_inclusive=False)
    )
    log_every = fields.Int(load_default=100, dump_default=100, validate=validate.Range(min=1))

    @post_load
    def make_config(self, data: Dict, **kwargs) -> TrainConfig:
        return TrainConfig(**data)


class GenConfigSchema(Schema):
    """The schema of a generation run"""

    class Meta:
        render_module = YamlRender
        unknown = RAISE

    seed = fields.Int(required=True)
    sampler = fields.Str(
        load_default="bridge",
        dump_default="bridge",
        validate=validate.OneOf([s.value for s in Sampler]),
    )
    count = fields.Int(load_default=1, dump_default=1, validate=validate.Range(min=1))
    poisson_dt = fields.Bool(load_default=True, dump_default=True)
    block_size = fields.Int(load_default=256, dump_default=256, validate=validate.Range(min=1))
    threads = fields.Int(load_default=1, dump_default=1, validate=validate.Range(min=1))

    @post_load
    def make_config(self, data: Dict, **kwargs):
        return GenConfig(**data)


def settings_keys() -> Set[str]:
    """Every key a settings file may hold; one file is shared by all
    subcommands.
    """
    res: Set[str] = set()
    for schema_cls in (ScheduleSchema, TrainConfigSchema, GenConfigSchema):
        res.update(schema_cls().fields)
    return res


def load_settings(schema: Schema, file_text: Optional[str], cli_overrides: Optional[Dict]):
    """Load ``schema`` from the merged settings: schema defaults, then the
    YAML ``file_text`` (if any), then the CLI values that are not None.

    Keys of the file that belong to other subcommands are ignored; keys
    no subcommand knows are rejected.
    """
    file_overrides = None
    if file_text is not None:
        try:
            file_overrides = YamlRender.loads(file_text)
        except yaml.YAMLError as e:
            raise DomainError(f"config file is not valid YAML: {e}")
        if file_overrides is not None and not isinstance(file_overrides, dict):
            raise DomainError("config file must contain a mapping")

    if file_overrides:
        unknown = sorted(str(key) for key in set(file_overrides) - settings_keys())
        if unknown:
            raise DomainError(
                "invalid settings: " + "; ".join(f"{key}: Unknown field." for key in unknown)
            )
        file_overrides = {key: val for key, val in file_overrides.items() if key in schema.fields}

    settings = config.get_settings_with_precedence({}, file_overrides, cli_overrides)
    try:
        return schema.load(settings)
    except ValidationError as e:
        raise DomainError(f"invalid settings: {_format_messages(e.messages)}")


def _format_messages(messages) -> str:
    if isinstance(messages, dict):
        return "; ".join(f"{key}: {_format_messages(val)}" for key, val in sorted(messages.items()))
    if isinstance(messages, list):
        return ", ".join(str(m) for m in messages)
    return str(messages)

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Reading experiment configurations.

A configuration is a flat text file of ``key = value`` lines grouped by
``[section]`` headers::

    # a recovery run
    [experiment]
    rounds = 40
    aggregator = "pfpt"

    [partition]
    scheme = dirichlet
    alpha = 0.5

Sections are experiment, partition, clients, truth and aggregation. Values are
read as JSON when they parse (numbers, true/false, null, lists, quoted
strings) and as bare strings otherwise. Lines starting with # or ; are
comments. Any problem is reported as a ConfigError with its line number.
"""
import hashlib
import json
import logging
from dataclasses import fields

from .aggregation import AggregationConfig
from .clients import ClientTemplate, TruthSpec
from .model import ConfigError, DomainError
from .partition import PartitionSpec
from .runner import ExperimentConfig

logger = logging.getLogger(__name__)

SECTIONS = {
    "experiment": ExperimentConfig,
    "partition": PartitionSpec,
    "clients": ClientTemplate,
    "truth": TruthSpec,
    "aggregation": AggregationConfig,
}

# keys that change how a run executes, not what it produces
EXECUTION_KEYS = ("workers", "progress", "out_dir")


def parse_value(text):
    text = text.strip()
    try:
        return json.loads(text)
    except ValueError:
        return text


def _field_types(section):
    cls = SECTIONS[section]
    return {f.name: (f.type, f.default) for f in fields(cls)
            if section != "experiment" or f.name not in cls.SECTIONS}


def coerce(section, key, value):
    """
    Check a parsed value against the type of section.key.

    :raise ConfigError: Unknown key or wrong type (without line number)
    """
    types = _field_types(section)
    if key not in types:
        raise ConfigError("unknown key %r in section [%s]" % (key, section))
    kind, default = types[key]
    if value is None and default is None:
        return None
    if kind is bool and isinstance(value, bool):
        return value
    if kind is int and not isinstance(value, bool):
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
    if kind is float and isinstance(value, (int, float)) and \
            not isinstance(value, bool):
        return float(value)
    if kind is str and isinstance(value, str):
        return value
    if kind is tuple and isinstance(value, list) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value):
        return tuple(value)
    raise ConfigError("%s.%s expects %s, got %r"
                      % (section, key, kind.__name__, value))


def parse_config_text(text, path=None):
    """
    Parse configuration text into {section: {key: (value, line number)}}.
    """
    entries = {name: {} for name in SECTIONS}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("malformed section header %r" % line,
                                  lineno, path)
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError("unknown section [%s]" % section, lineno,
                                  path)
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value', got %r" % line, lineno,
                              path)
        if section is None:
            raise ConfigError("key outside of a section: %r" % line, lineno,
                              path)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in entries[section]:
            raise ConfigError("duplicate key %r in section [%s]"
                              % (key, section), lineno, path)
        try:
            entries[section][key] = (coerce(section, key, parse_value(value)),
                                     lineno)
        except ConfigError as err:
            raise ConfigError(err.message, lineno, path) from None
    return entries


def _locate(message, entries):
    for section, items in entries.items():
        for key, (_, lineno) in items.items():
            if "%s.%s " % (section, key) in message:
                return lineno
    return None


def build_config(entries, path=None):
    """ExperimentConfig from parsed entries, validated."""
    values = {name: {key: v for key, (v, _) in items.items()}
              for name, items in entries.items()}
    cfg = ExperimentConfig(
        partition=PartitionSpec(**values["partition"]),
        clients=ClientTemplate(**values["clients"]),
        truth=TruthSpec(**values["truth"]),
        aggregation=AggregationConfig(**values["aggregation"]),
        **values["experiment"])
    try:
        return cfg.validate()
    except (ConfigError, DomainError) as err:
        message = err.message if isinstance(err, ConfigError) else str(err)
        raise ConfigError(message, _locate(message, entries), path) from None


def read_config(path, overrides=(), seed=None):
    """
    Load, override and validate a configuration file.

    :param path: Config file, or None for all defaults
    :param overrides: Strings "section.key=value"
    :param seed: Replaces experiment.seed when given
    :return: ExperimentConfig
    """
    text = ""
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as err:
            raise ConfigError("could not read config: %s" % err.strerror,
                              path=path) from None
    entries = parse_config_text(text, path)
    for item in overrides:
        section, key, value = split_override(item)
        entries[section][key] = (coerce(section, key, parse_value(value)),
                                 None)
    if seed is not None:
        entries["experiment"]["seed"] = (int(seed), None)
    return build_config(entries, path)


def split_override(item):
    if "=" not in item or "." not in item.split("=", 1)[0]:
        raise ConfigError("override %r is not of the form section.key=value"
                          % item)
    name, value = item.split("=", 1)
    section, key = name.strip().split(".", 1)
    if section not in SECTIONS:
        raise ConfigError("override %r names unknown section [%s]"
                          % (item, section))
    return section, key.strip(), value


def config_hash(cfg):
    """
    SHA-256 of the canonical JSON of a resolved configuration, leaving out
    the keys that only affect execution.
    """
    resolved = cfg.as_dict()
    for key in EXECUTION_KEYS:
        resolved.pop(key, None)
    resolved["aggregation"].pop("workers", None)
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

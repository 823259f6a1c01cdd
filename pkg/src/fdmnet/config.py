"""``key=value`` text configs mapped onto the config dataclasses.

Keys are either ``section.field`` (sections: model, train, loss, lowpass) or
a bare field name when that name is unique across sections. ``seed`` is
shared: a bare ``seed`` sets both the model-init and the sampling seed.
"""

import dataclasses


class ConfigError(ValueError):
    pass


def _sections():
    from .losses import LossWeights
    from .lowpass import LowpassConfig
    from .maformer import ModelConfig
    from .training import TrainConfig

    return {"model": ModelConfig, "train": TrainConfig, "loss": LossWeights,
            "lowpass": LowpassConfig}


def _fmt(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_text(sections):
    lines = []
    for name, obj in sections.items():
        for f in dataclasses.fields(obj):
            lines.append(f"{name}.{f.name}={_fmt(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def parse_kv(text):
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs.append((key, value))
    return pairs


def read_config(path):
    with open(path) as fh:
        return parse_kv(fh.read())


def _coerce(value, default, key):
    try:
        if isinstance(default, bool):
            low = value.lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(value)
            return low in ("1", "true", "yes")
        if isinstance(default, tuple):
            return tuple(int(v) for v in value.split(",") if v.strip())
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return value


def _route(key, sections):
    if "." in key:
        sec, field = key.split(".", 1)
        if sec not in sections or field not in {f.name for f in dataclasses.fields(sections[sec])}:
            raise ConfigError(f"unknown config key {key!r}")
        return [(sec, field)]
    hits = [(sec, key) for sec, cls in sections.items()
            if key in {f.name for f in dataclasses.fields(cls)}]
    if not hits:
        raise ConfigError(f"unknown config key {key!r}")
    if len(hits) > 1 and key != "seed":
        raise ConfigError(f"ambiguous key {key!r}; qualify it as one of "
                          f"{', '.join(s + '.' + key for s, _ in hits)}")
    return hits


def build_configs(pairs=(), base=None):
    """Return {section: dataclass instance} with ``pairs`` applied over ``base``."""
    classes = _sections()
    current = {name: (base or {}).get(name) or cls() for name, cls in classes.items()}
    updates = {name: {} for name in classes}
    for key, value in pairs:
        for sec, field in _route(key, classes):
            updates[sec][field] = _coerce(value, getattr(current[sec], field), key)
    out = {}
    for name, obj in current.items():
        try:
            out[name] = dataclasses.replace(obj, **updates[name]) if updates[name] else obj
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {name} config: {exc}") from None
    return out

import pytest

from dataclasses import dataclass

from fdmnet.config import ConfigError, _route, build_configs, config_text, parse_kv


def test_round_trip_through_text():
    cfgs = build_configs([("width", "8"), ("depths", "1,1,1,1"), ("train.lr", "0.001"),
                          ("literal_l1s", "yes"), ("lowpass.mode", "lanczos")])
    assert cfgs["model"].width == 8 and cfgs["model"].depths == (1, 1, 1, 1)
    assert cfgs["train"].lr == 0.001
    assert cfgs["loss"].literal_l1s is True
    back = build_configs(parse_kv(config_text(cfgs)))
    assert back == cfgs


def test_seed_sets_both_sections():
    cfgs = build_configs([("seed", "9")])
    assert cfgs["model"].seed == 9 and cfgs["train"].seed == 9


def test_comments_and_errors():
    assert parse_kv("# c\n\nsteps = 5  # five\n") == [("steps", "5")]
    with pytest.raises(ConfigError):
        parse_kv("nonsense")
    with pytest.raises(ConfigError, match="unknown"):
        build_configs([("colour", "red")])
    with pytest.raises(ConfigError, match="cannot parse"):
        build_configs([("steps", "many")])
    with pytest.raises(ConfigError, match="invalid"):
        build_configs([("train.lr", "-1")])


def test_shared_bare_key_is_ambiguous():
    @dataclass
    class A:
        size: int = 1

    @dataclass
    class B:
        size: int = 2

    with pytest.raises(ConfigError, match="a.size, b.size"):
        _route("size", {"a": A, "b": B})
    assert _route("b.size", {"a": A, "b": B}) == [("b", "size")]

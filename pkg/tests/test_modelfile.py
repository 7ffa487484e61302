from __future__ import annotations

import pytest

from ellgen.geom import GeometryError, KawamataError, ManifoldModel, OrbifoldDatum
from ellgen.modelfile import (
    FanSpec,
    ModelFileError,
    parse_model,
    parse_model_text,
    serialize_model,
    write_model,
)
from ellgen.suite import fixture_names, fixture_path


def test_p2_fixture(load) -> None:
    m = load("p2")
    assert isinstance(m, ManifoldModel)
    assert m.dim == 2
    assert m.euler in (None, 3)


def test_kinds(load) -> None:
    assert isinstance(load("mckay_lhs"), OrbifoldDatum)
    assert isinstance(load("fan_index3"), FanSpec)
    assert load("fan_index3_wrong").expect == "fail"


def test_negative_delta_names_divisor_and_line(local_fixture) -> None:
    path = local_fixture("bad_delta.toml")
    with pytest.raises(KawamataError) as info:
        parse_model(path)
    assert "'L'" in str(info.value)
    assert info.value.line == 14
    assert "bad_delta.toml:14" in str(info.value)


def test_character_out_of_range(local_fixture) -> None:
    with pytest.raises(GeometryError) as info:
        parse_model(local_fixture("bad_character.toml"))
    assert info.value.line == 51
    assert "3/2" in str(info.value)


@pytest.mark.parametrize("name,line", [("bad_syntax.toml", 5), ("unknown_key.toml", 6)])
def test_located_errors(local_fixture, name: str, line: int) -> None:
    with pytest.raises(ModelFileError) as info:
        parse_model(local_fixture(name))
    assert info.value.line == line
    assert f"{name}:{line}:" in str(info.value)


def test_unknown_key_lists_allowed(local_fixture) -> None:
    with pytest.raises(ModelFileError, match="colour"):
        parse_model(local_fixture("unknown_key.toml"))


def test_fan_with_gap_is_rejected(local_fixture) -> None:
    with pytest.raises(ValueError):
        parse_model(local_fixture("bad_fan.toml"))


def test_missing_file(tmp_path) -> None:
    with pytest.raises(ModelFileError):
        parse_model(tmp_path / "nope.toml")


def test_bad_kind() -> None:
    with pytest.raises(ModelFileError, match="kind"):
        parse_model_text('kind = "sheaf"\n')


@pytest.mark.parametrize("name", fixture_names())
def test_round_trip(name: str) -> None:
    obj = parse_model(fixture_path(name))
    again = parse_model_text(serialize_model(obj))
    assert again == obj
    assert serialize_model(again) == serialize_model(obj)


def test_write_model(tmp_path, load) -> None:
    m = load("k3")
    out = tmp_path / "k3.toml"
    write_model(m, out)
    assert parse_model(out) == m

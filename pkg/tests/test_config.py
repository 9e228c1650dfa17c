from __future__ import annotations

import pytest

from dyadsense.config import SCHEMA, ConfigError, EngineConfig, load_config, parse_config_text
from dyadsense.policy import A2, A3, A4, A5


def test_defaults():
    cfg = EngineConfig.from_flat()
    assert cfg["signals.jva_window_s"] == 30.0 and cfg["jme.window"] == 12
    assert cfg.ms("forecast.horizon_s") == 30_000
    pol = cfg.policy
    assert pol.cooldown_s == {A2: 120.0, A3: 60.0, A4: 90.0, A5: 300.0}
    assert pol.priority == (A3, A4, A2, A5) and pol.a5_sustain_s == 60.0


def test_file_with_comments_and_overrides(tmp_path):
    path = tmp_path / "engine.conf"
    path.write_text("# tuned\npolicy.cooldown_a3_s = 30  # shorter\n\njme.radius=0\n")
    cfg = load_config(path, {"jme.radius": "2"})
    assert cfg["policy.cooldown_a3_s"] == 30.0 and cfg["jme.radius"] == 2


def test_dumps_round_trip_and_hash():
    cfg = EngineConfig.from_flat({"policy.priority": "A4,A3,A2,A5"})
    again = EngineConfig.from_flat(parse_config_text(cfg.dumps()))
    assert again == cfg and again.hash == cfg.hash
    assert cfg.hash != EngineConfig.from_flat().hash
    assert set(cfg.to_flat()) == set(SCHEMA)


@pytest.mark.parametrize("overrides,key", [
    ({"nope.key": 1}, "nope.key"),
    ({"jme.window": "1.5"}, "jme.window"),
    ({"forecast.learning_rate": 0}, "forecast.learning_rate"),
    ({"policy.cooldown_a2_s": -1}, "policy.cooldown_a2_s"),
    ({"policy.priority": "A3,A4,A2"}, "policy.priority"),
    ({"signals.jva_stride_s": 7}, "signals.jva_stride_s"),
    ({"forecast.horizon_s": 25}, "forecast.horizon_s"),
])
def test_invalid_values_name_the_key(overrides, key):
    with pytest.raises(ConfigError) as exc:
        EngineConfig.from_flat(overrides)
    assert exc.value.key == key and key in str(exc.value)


def test_malformed_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("jme.radius=1\njust words\n")

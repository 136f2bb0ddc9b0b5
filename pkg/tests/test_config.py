import math
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kvnlab.harness.config import (ConfigError, ExperimentConfig, default_config, parse_config,
                                   parse_config_text, serialize_config)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_minimal_verify_defaults():
    cfg = parse_config_text("[run]\nexperiment = verify\n")
    assert cfg.experiment == "verify"
    assert (cfg.physics.hbar, cfg.physics.m, cfg.physics.omega) == (1.0, 1.0, 1.0)
    assert (cfg.grid.nq, cfg.grid.np) == (256, 256)
    assert (cfg.grid.q_min, cfg.grid.q_max, cfg.grid.p_min, cfg.grid.p_max) == (-8, 8, -8, 8)
    assert cfg.resolved_dt() == pytest.approx(2 * math.pi / 2000)


def test_echo_has_every_effective_value():
    echo = default_config("kvn").echo()
    assert echo["run"]["dt"] == pytest.approx(2 * math.pi / 2000)
    assert echo["run"]["t_final"] == pytest.approx(2 * math.pi)
    for section in ("physics", "grid", "state", "measurement", "perturbation", "io"):
        assert echo[section]
    # infinities are echoed as strings so the report stays valid JSON
    assert echo["perturbation"]["lambda"] == "inf"


def test_nq_not_power_of_two():
    with pytest.raises(ConfigError, match="nq must be a power of two") as info:
        parse_config_text("[run]\nexperiment = kvn\n[grid]\nnq = 100\n")
    assert info.value.line == 4
    assert info.value.key == "grid.nq"


@pytest.mark.parametrize("text,key", [
    ("[run]\nexperiment = kvn\nbogus = 1\n", "run.bogus"),
    ("[run]\nexperiment = kvn\n[physics]\nm = heavy\n", "physics.m"),
    ("[run]\nexperiment = kvn\n[physics]\nomega = 0\n", "physics.omega"),
    ("[run]\nexperiment = kvn\nexperiment = gaussian\n", "run.experiment"),
    ("[run]\nexperiment = \n", "run.experiment"),
    ("[run]\nexperiment = nonsense\n", "run.experiment"),
    ("[run]\nexperiment = kvn\n[grid]\nq_min = 3\nq_max = 1\n", "grid.q_max"),
    ("[run]\nexperiment = kvn\ndt = 0.3\nt_final = 1.0\n", "run.t_final"),
    ("[run]\nexperiment = stabilizer\n[state]\nalpha1 = 3\nn_trunc = 12\n", "state.alpha1"),
    ("[run]\nexperiment = stabilizer\n[state]\nalpha2 = 0\n", "state.alpha2"),
    ("[run]\nexperiment = doubled\n[perturbation]\nkind = quartic_stabilizer\n",
     "perturbation.kind"),
    ("[run]\nexperiment = kvn\n[io]\nformats = csv, xml\n", "io.formats"),
    ("[run]\nexperiment = kvn\n[physics]\nhbar = nan\n", "physics.hbar"),
])
def test_rejections_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.key == key
    assert key in str(info.value)


def test_missing_experiment_rejected():
    with pytest.raises(ConfigError, match="experiment"):
        parse_config_text("[physics]\nm = 2\n")


def test_unknown_section_and_stray_key():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config_text("[nope]\n")
    with pytest.raises(ConfigError, match="outside"):
        parse_config_text("experiment = kvn\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "absent.cfg")


def test_comments_and_inf():
    cfg = parse_config_text("# header\n[run]\nexperiment = stabilizer  # trailing\n"
                            "[perturbation]\nlambda = inf\nlambda_list = 5, 10, inf\n")
    assert cfg.perturbation.lam == math.inf
    assert cfg.perturbation.lambda_list == (5.0, 10.0, math.inf)


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.cfg")))
def test_repo_configs_roundtrip(name):
    cfg = parse_config(CONFIGS / name)
    again = parse_config_text(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.sampled_from([8, 64, 256, 512]),
       st.integers(0, 2**31))
def test_roundtrip_property(m, omega, n, seed):
    text = (f"[run]\nexperiment = gaussian\nseed = {seed}\n[physics]\nm = {m!r}\n"
            f"omega = {omega!r}\n[grid]\nnq = {n}\n")
    cfg = parse_config_text(text)
    assert parse_config_text(serialize_config(cfg)) == cfg


def test_default_config_is_plain_dataclass():
    assert isinstance(default_config(), ExperimentConfig)
    assert default_config().experiment == "verify"

import pytest

from twobsde.config import ConfigError, RunConfig, dump_config, load_config, parse_config


def test_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.dt == pytest.approx(0.02)


def test_sections_and_dt():
    cfg = parse_config("[model]\nmodel = f2\nb = 0.04\ndt = 0.01\n[fd]\nalign_x0 = no\n[sweep]\ndt_list = 0.1, 0.05\nschemes = fd tree\n")
    assert cfg.model.model == "f2" and cfg.model.b == 0.04
    assert cfg.n == 100
    assert cfg.lattice.align_x0 is False
    assert cfg.sweep.dt_list == (0.1, 0.05) and cfg.sweep.schemes == ("fd", "tree")


@pytest.mark.parametrize(
    "text",
    [
        "[nonsense]\nx = 1\n",
        "[model]\ncolour = red\n",
        "[model]\nT = soon\n",
        "[model]\nn = 10\ndt = 0.1\n",
        "[model]\ndt = 0.03\n",
        "[model]\nn = 0\n",
        "[fd]\nalign_x0 = maybe\n",
        "[model]\na_lo = 0.1\na_hi = 0.05\n",
        "no section header\n",
    ],
)
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_dump_roundtrip():
    cfg = parse_config("[model]\nmodel = f2\nb = 0.04\nz_max = 1.0\nn = 40\n[proba]\nseed = 9\n[sweep]\nseeds = 1 2\n")
    assert parse_config(dump_config(cfg)) == cfg
    assert parse_config(dump_config(RunConfig())) == RunConfig()


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
    assert load_config(None) == RunConfig()


@pytest.mark.parametrize("name", ["f1.ini", "f2.ini", "tree_small.ini"])
def test_shipped_configs_parse(name):
    from pathlib import Path

    load_config(Path(__file__).resolve().parents[1] / "configs" / name)

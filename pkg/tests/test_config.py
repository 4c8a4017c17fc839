import pytest

from blockgcn.config import build_config, load_config, parse_assignments, preset_config
from blockgcn.errors import ConfigError, UnknownPresetError
from blockgcn.model import desk_config, paper_config, tiny_config


def test_presets():
    assert preset_config("tiny").model == tiny_config()
    assert preset_config("desk").model == desk_config()
    assert preset_config("paper").model == paper_config()
    assert preset_config("paper").train.total_epochs == 140
    with pytest.raises(UnknownPresetError):
        preset_config("huge")


def test_file_and_overrides(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# comment\npreset = tiny\ngroups = 4\nchannels = 8, 16  # widths\nstrides=1,1\n"
                 "base_lr = 0.05\nnesterov = false\nbranches = conv:3:1, none\n")
    cfg = load_config(f, {"groups": "2", "decay_epochs": "6,8"})
    assert cfg.model.groups == 2 and cfg.model.channels == (8, 16) and cfg.model.skeleton == "tiny5"
    assert cfg.train.base_lr == 0.05 and cfg.train.nesterov is False and cfg.train.decay_epochs == (6, 8)
    assert [b.kind for b in cfg.model.branches] == ["conv", "none"]


def test_dump_round_trip():
    cfg = build_config({"preset": "tiny", "use_stat": "0", "decay_epochs": "5,8"})
    again = build_config(parse_assignments(cfg.dumps().splitlines()))
    assert again == cfg


@pytest.mark.parametrize("assignments", [{"bogus": "1"}, {"groups": "two"}, {"nesterov": "maybe"},
                                         {"groups": "3"}])
def test_errors(assignments):
    with pytest.raises(ConfigError):
        build_config(assignments)


def test_bad_lines_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_assignments(["groups 4"])
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")

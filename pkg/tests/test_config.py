import pytest

from waveguide.config import ConfigError, config_to_text, parse_config, write_config


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, "[geometry]\nkind = constant\nr0 = 0.01\n"))
    assert cfg.physics == {"c": 343.0, "rho": 1.2, "alpha": 0.0, "g_damp": 0.0}
    assert cfg.discretization["n_elems"] == 200
    assert cfg.geometry["n_samples"] == 201
    assert cfg.input["kind"] == "gaussian" and cfg.input["initial"] == "zero"
    assert cfg.verify["seed"] == 42 and cfg.verify["rtol"] == 1e-10
    assert cfg.output["directory"] == tmp_path


@pytest.mark.parametrize(
    "text, key",
    [
        ("[geometry]\nkind = constant\nr0 = 0.01\n[physics]\nalpha = -1\n", "physics.alpha"),
        ("[geometry]\nr0 = 0.01\n", "geometry.kind"),
        ("[geometry]\nkind = constant\n", "geometry.r0"),
        ("[geometry]\nkind = cone\nr0 = 0.01\n", "geometry.r1"),
        ("[geometry]\nkind = constant\nr0 = 0.01\n[physics]\nkappa = 3\n", "physics.kappa"),
        ("[geometry]\nkind = constant\nr0 = 0.01\n[discretization]\nns = many\n", "discretization.ns"),
        ("[geometry]\nkind = spiral\nr0 = 0.01\n", "geometry.kind"),
        ("[geometry]\nkind = table\n", "geometry.table"),
        ("[geometry]\nkind = table\ntable = nope.csv\n", "geometry.table"),
        ("[geometry]\nkind = constant\nr0 = 0.01\n[input]\nkind = table\n", "input.file"),
        ("[geometry]\nkind = constant\nr0 = 0.01\n[physics]\ng_damp = 2\n", "physics.g_damp"),
        ("[geometry]\nkind = constant\nr0 = 0.01\n[extras]\nx = 1\n", "extras"),
    ],
)
def test_errors_name_the_key(tmp_path, text, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(write(tmp_path, text))


def test_alpha_message_states_the_range(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config(write(tmp_path, "[geometry]\nkind = constant\nr0 = 0.01\n[physics]\nalpha = -1\n"))
    assert str(exc.value) == "physics.alpha: value '-1' out of range, must be >= 0"


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "absent.ini")
    with pytest.raises(ConfigError, match="malformed"):
        parse_config(write(tmp_path, "kind = constant\n"))


def test_relative_paths_resolve_against_config_dir(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    (sub / "u.csv").write_text("0,0\n1,1\n")
    cfg = parse_config(write(sub, "[geometry]\nkind = constant\nr0 = 0.01\n[input]\nkind = table\nfile = u.csv\n[output]\ndirectory = out\n"))
    assert cfg.input["file"] == sub / "u.csv"
    assert cfg.output["directory"] == sub / "out"


def test_round_trip_is_exact(tmp_path):
    cfg = parse_config(
        write(tmp_path, "[geometry]\nkind = cone\nr0 = 0.01\nr1 = 0.0123456789012345\n[physics]\nalpha = 0.1\n[discretization]\ndt = 3.3e-5\n")
    )
    path = tmp_path / "again.ini"
    write_config(cfg, path)
    again = parse_config(path)
    for name in ("geometry", "physics", "discretization", "input", "output", "verify"):
        assert again.section(name) == cfg.section(name)
    assert config_to_text(again) == config_to_text(cfg)


def test_overrides_leave_original_untouched(tmp_path):
    cfg = parse_config(write(tmp_path, "[geometry]\nkind = constant\nr0 = 0.01\n"))
    other = cfg.with_overrides(verify={"seed": 7})
    assert other.verify["seed"] == 7 and cfg.verify["seed"] == 42
    assert other.verify["rtol"] == cfg.verify["rtol"]

import pytest

from freshcrawl.config import (
    SCHEMA,
    SEED_ENV,
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config,
    parse_int_list,
)


def test_defaults_cover_schema():
    cfg = ExperimentConfig().validate()
    assert set(cfg.values) == set(SCHEMA)
    assert cfg.seeds == [0]


def test_parses_typed_values():
    cfg = parse_config(
        """
        # desk-scale sweep
        seeds = 0-3, 9
        sim.machines = 1,2,4
        sim.model = hash
        sim.hash_weight = 0.7
        sim.hash_warm_start = yes
        population.active_only = true
        quota.calls_per_window = 10
        """,
        env={},
    )
    assert cfg.seeds == [0, 1, 2, 3, 9]
    assert cfg["sim.machines"] == [1, 2, 4]
    assert cfg["sim.model"] == "hash" and cfg["sim.hash_weight"] == 0.7
    assert cfg["sim.hash_warm_start"] is True and cfg["population.active_only"] is True
    assert cfg["quota.calls_per_window"] == 10


@pytest.mark.parametrize(
    "text,key",
    [
        ("sim.colour = red", "sim.colour"),
        ("seeds = ", "seeds"),
        ("seeds = 5-2", "seeds"),
        ("sim.machines = 0,1", "sim.machines"),
        ("sim.model = magic", "sim.model"),
        ("sim.hash_weight = 1.0", "sim.hash_weight"),
        ("quota.window = 0", "quota.window"),
        ("sim.rr_budget = -1", "sim.rr_budget"),
        ("population.active_only = maybe", "population.active_only"),
        ("partition.epsilon = 0", "partition.epsilon"),
        ("sim.duration = 3\nsim.duration = 4", "sim.duration"),
    ],
)
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as e:
        parse_config(text, env={})
    assert e.value.key == key
    assert str(e.value).startswith(key)


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("seeds = 1\n\nbogus = 2\n", env={})


def test_missing_equals():
    with pytest.raises(ConfigError, match="key = value"):
        parse_config("seeds 1", env={})


def test_set_rejects_unknown():
    with pytest.raises(ConfigError):
        ExperimentConfig().set("nope", 1)


def test_env_seed_overrides():
    cfg = parse_config("seeds = 1,2", env={SEED_ENV: "7-9"})
    assert cfg.seeds == [7, 8, 9]
    assert parse_config("seeds = 1,2", env={SEED_ENV: " "}).seeds == [1, 2]
    with pytest.raises(ConfigError, match=SEED_ENV):
        parse_config("", env={SEED_ENV: "x"})


class TestPaths:
    def test_writable(self, tmp_path):
        cfg = parse_config(f"output.runs = {tmp_path / 'runs.csv'}", env={})
        assert cfg["output.runs"].endswith("runs.csv")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ConfigError, match="output.summary"):
            parse_config(f"output.summary = {tmp_path / 'nope' / 's.md'}", env={})

    def test_directory_is_not_a_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not writable"):
            parse_config(f"output.trace = {tmp_path}", env={})

    def test_parent_is_a_file(self, tmp_path):
        (tmp_path / "f").write_text("")
        with pytest.raises(ConfigError, match="not writable"):
            parse_config(f"output.runs = {tmp_path / 'f' / 'r.csv'}", env={})


def test_load_config(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("seeds = 3\nsim.architecture = distributed\n")
    cfg = load_config(str(p), env={})
    assert cfg.source == str(p) and cfg["sim.architecture"] == "distributed"
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "absent.cfg"), env={})


def test_int_list():
    assert parse_int_list("1, 2-4,8") == [1, 2, 3, 4, 8]
    assert parse_int_list("") == []
    with pytest.raises(ValueError):
        parse_int_list("a")

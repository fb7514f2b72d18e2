import dataclasses
from pathlib import Path

import pytest

from mimopred.channel import SimConfig
from mimopred.config import (DatasetSettings, DipSettings, ExperimentConfig,
                             MlpSettings, RunManifest, SweepSettings, config_hash,
                             desk_config, full_config, load_config, load_manifest)
from mimopred.errors import ConfigurationError

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def write_ini(tmp_path, text):
    path = tmp_path / "exp.ini"
    path.write_text(text)
    return path


# ---- presets ----

def test_desk_preset_is_valid_and_small():
    cfg = desk_config()
    assert cfg.sim.n_antennas == 16 and cfg.sim.n_ue == 12
    assert cfg.dataset.n_source_ue + cfg.dataset.n_target_ue == cfg.sim.n_ue
    assert cfg.meta.first_order is False
    assert cfg.dip.enabled is False


def test_full_preset_is_valid():
    cfg = full_config()
    assert cfg.sim.n_antennas == 64 and cfg.mlp.hidden_width == 512
    assert cfg.meta.adapt_steps == 10 and cfg.meta.first_order is True
    assert cfg.dip.enabled and cfg.dip.n_iter == 2000


def test_shipped_desk_config_matches_preset():
    cfg = load_config(CONFIG_DIR / "desk.ini")
    assert cfg.output_dir == "runs/desk"
    assert dataclasses.replace(cfg, output_dir=".") == desk_config()


def test_shipped_full_config():
    cfg = load_config(CONFIG_DIR / "full.ini")
    assert cfg.output_dir == "runs/full"
    assert cfg.sweep.variable == "n_adapt"
    assert cfg.sweep.values == (5, 10, 20, 50)
    assert cfg.sweep.n_seeds == 3
    base = dataclasses.replace(cfg, output_dir=".", sweep=SweepSettings())
    assert base == full_config()


# ---- file parsing ----

def test_overrides_and_derived_user_count(tmp_path):
    path = write_ini(tmp_path, """
[base]
preset = desk
[sim]
n_antennas = 4
snr_db = 5
[dataset]
n_source_ue = 2
n_target_ue = 2
[mlp]
hidden_width = 8
[meta]
first_order = yes
[output]
dir = out
""")
    cfg = load_config(path)
    assert cfg.sim.n_antennas == 4 and cfg.sim.snr_db == 5.0
    assert cfg.sim.n_ue == 4  # derived, never read from the file
    assert cfg.mlp.hidden_width == 8
    assert cfg.meta.first_order is True
    assert cfg.output_dir == "out"
    # untouched fields keep the preset values
    assert cfg.meta.outer_lr == desk_config().meta.outer_lr


def test_sweep_value_casting(tmp_path):
    cfg = load_config(write_ini(tmp_path, """
[sweep]
variable = snr_db
values = 0, 10.5
"""))
    assert cfg.sweep.values == (0.0, 10.5)
    assert all(isinstance(v, float) for v in cfg.sweep.values)
    cfg = load_config(write_ini(tmp_path, """
[sweep]
variable = n_adapt
values = 5, 10
n_seeds = 2
"""))
    assert cfg.sweep.values == (5, 10)
    assert all(isinstance(v, int) for v in cfg.sweep.values)
    with pytest.raises(ConfigurationError, match="values"):
        load_config(write_ini(tmp_path, "[sweep]\nvariable = n_adapt\nvalues = 5, x\n"))


@pytest.mark.parametrize("text,fragment", [
    ("[base]\npreset = galaxy\n", "unknown preset"),
    ("[base]\ncolour = red\n", "unknown key"),
    ("[rocket]\nfuel = 3\n", "unknown config section"),
    ("[sim]\nwarp = 9\n", "unknown key"),
    ("[sim]\nn_antennas = pony\n", "cannot parse"),
    ("[meta]\nfirst_order = maybe\n", "cannot parse"),
])
def test_rejects_malformed_files(tmp_path, text, fragment):
    with pytest.raises(ConfigurationError, match=fragment):
        load_config(write_ini(tmp_path, text))


def test_missing_file():
    with pytest.raises(ConfigurationError, match="not found"):
        load_config("/nonexistent/exp.ini")


# ---- validation ----

def test_settings_validators():
    with pytest.raises(ConfigurationError):
        DatasetSettings(n_adapt=-1)
    assert DatasetSettings(n_adapt=0).n_adapt == 0
    with pytest.raises(ConfigurationError):
        MlpSettings(hidden_layers=0)
    with pytest.raises(ConfigurationError):
        DipSettings(lr=0.0)
    with pytest.raises(ConfigurationError):
        SweepSettings(variable="warp", values=(1,))
    with pytest.raises(ConfigurationError):
        SweepSettings(variable="n_adapt", values=())
    with pytest.raises(ConfigurationError):
        SweepSettings(values=(1, 2))
    with pytest.raises(ConfigurationError):
        SweepSettings(n_seeds=0)


def test_experiment_config_cross_checks():
    base = desk_config()
    with pytest.raises(ConfigurationError, match="n_ue"):
        ExperimentConfig(sim=dataclasses.replace(base.sim, n_ue=5), dataset=base.dataset,
                         mlp=base.mlp, meta=base.meta)
    with pytest.raises(ConfigurationError, match="multiple"):
        ExperimentConfig(sim=base.sim, dataset=base.dataset,
                         mlp=MlpSettings(hidden_width=10), meta=base.meta)
    with pytest.raises(ConfigurationError, match="n_slots"):
        ExperimentConfig(sim=dataclasses.replace(base.sim, n_slots=100),
                         dataset=base.dataset, mlp=base.mlp, meta=base.meta)


# ---- hashing and manifests ----

def test_config_hash_ignores_seeds():
    cfg = desk_config()
    reseeded = dataclasses.replace(
        cfg,
        sim=dataclasses.replace(cfg.sim, seed=5),
        meta=dataclasses.replace(cfg.meta, seed=9),
    )
    assert config_hash(reseeded) == config_hash(cfg)
    changed = dataclasses.replace(cfg, sim=dataclasses.replace(cfg.sim, snr_db=7.0))
    assert config_hash(changed) != config_hash(cfg)
    assert len(config_hash(cfg)) == 64


def test_manifest_round_trip(tmp_path):
    manifest = RunManifest(config_hash="ab" * 32, seed=3,
                           artifacts={"results": "results.csv"}, version="1.0")
    path = tmp_path / "manifest.json"
    manifest.write(path)
    loaded = load_manifest(path)
    assert loaded == manifest

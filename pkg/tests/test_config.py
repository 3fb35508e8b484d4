import json

import pandas as pd
import pytest

from config.run_config import RunConfig, load_run_config, nest_keys, parse_run_config
from experiments.manifest import MANIFEST_NAME, RunRecorder, read_manifest
from noise.perturb import NoiseKind
from training.config import ObjectiveKind
from utils.errors import ConfigError
from utils.reports import file_sha256, read_csv, report_header, write_csv


def test_parse_nested_keys():
    config = parse_run_config(
        "data.count=5\n"
        "noise.kind=CGN\n"
        "noise.sigma=1.5\n"
        "finetune.objective=noisy_nodes\n"
        "experiment.settings=0:0.04,1:0.04\n"
        "experiment.probe_sigmas=0.1\n"
    )
    assert config.data.count == 5
    assert config.noise.kind == NoiseKind.CGN
    assert config.train.noise.sigma == 1.5
    assert config.finetune.objective == ObjectiveKind.NOISY_NODES
    assert config.experiment.settings == [(0.0, 0.04), (1.0, 0.04)]
    assert config.experiment.probe_sigmas == [0.1]


def test_nest_keys():
    assert nest_keys({"a.b.c": "1", "a.d": "x,y"}) == {"a": {"b": {"c": "1"}, "d": ["x", "y"]}}
    with pytest.raises(ConfigError, match="section prefix"):
        nest_keys({"count": "5"})
    with pytest.raises(ConfigError, match="noise section"):
        nest_keys({"train.noise.sigma": "1"})
    with pytest.raises(ConfigError, match="scalar"):
        nest_keys({"data.count": "1", "data.count.extra": "2"})


@pytest.mark.parametrize("text", ["data.bogus=1\n", "data.count=-1\n", "noise.kind=XX\n", "bogus.count=1\n"])
def test_invalid_config_is_a_config_error(text):
    with pytest.raises(ConfigError):
        parse_run_config(text)


def test_seed_override_and_hash():
    config = RunConfig()
    seeded = config.with_seed(7)
    assert seeded.seed == 7
    assert (seeded.data.seed, seeded.train.seed, seeded.finetune.seed) == (7, 7, 7)
    assert config.config_hash() == RunConfig().config_hash()
    assert seeded.config_hash() != config.config_hash()


def test_load_from_file_and_manifest(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("data.count=2\nmodel.features=8\n")
    config = load_run_config(path, seed=3)
    assert config.data.count == 2 and config.seed == 3

    recorder = RunRecorder("gen-data", config, tmp_path)
    manifest_path = recorder.write()
    reloaded = load_run_config(manifest_path)
    assert reloaded.config_hash() == config.config_hash()


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "missing.env")
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(ConfigError):
        load_run_config(broken)
    bare = tmp_path / "bare.json"
    bare.write_text(json.dumps({"subcommand": "x"}))
    with pytest.raises(ConfigError, match="no resolved config"):
        load_run_config(bare)


def test_csv_reports_carry_the_config_hash(tmp_path):
    frame = pd.DataFrame([{"b": 2.0, "a": 1.0}])
    path = write_csv(frame, tmp_path / "out" / "report.csv", "deadbeef", columns=("a", "b"))
    lines = path.read_text().splitlines()
    assert lines[0] == report_header("deadbeef")
    assert lines[1] == "a,b"
    assert not (tmp_path / "out" / "report.csv.tmp").exists()
    assert read_csv(path).to_dict("records") == [{"a": 1.0, "b": 2.0}]


def test_manifest_lists_outputs_with_hashes(tmp_path):
    config = RunConfig()
    recorder = RunRecorder("perturb", config, tmp_path)
    source = tmp_path / "input.xyz"
    source.write_text("1\n\nC 0 0 0\n")
    recorder.add_input(source)
    recorder.add_input(tmp_path / "absent.xyz")
    written = recorder.add_output(tmp_path / "x_fin.xyz")
    written.write_text("data")
    recorder.add_output(tmp_path / "never-written.xyz")

    manifest = read_manifest(recorder.write())
    assert (tmp_path / MANIFEST_NAME).exists()
    assert manifest.subcommand == "perturb"
    assert manifest.config_hash == config.config_hash()
    assert manifest.inputs == {str(source): file_sha256(source)}
    assert manifest.outputs == ["x_fin.xyz"]
    assert manifest.output_hashes == {"x_fin.xyz": file_sha256(written)}
    assert manifest.wall_clock >= 0.0

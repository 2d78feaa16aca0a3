import json
import subprocess
import sys
from pathlib import Path

import pytest

from prunex.aig import read_aiger
from prunex.cli import main
from prunex.config import DATA_DIR_ENV, ConfigError, config_from_dict, load_config
from prunex.resub import run_operator

REPO = Path(__file__).resolve().parents[1]

# 12 circuits; one held out (leave-one-out), small model for speed
LOOP_TOML = """
[[bench]]
family = "adder"
size = 4

[[bench]]
family = "adder"
size = 6

[[bench]]
family = "multiplier"
size = 4

[[bench]]
family = "multiplier"
size = 5

[[bench]]
family = "comparator"
size = 6

[[bench]]
family = "random_control"
size = 250
seed = 1
count = 4

[[bench]]
family = "random_dag"
size = 200
seed = 5
count = 3

[split]
test = ["random_control250_s4"]

[aggregate]
policy = "size_balanced_odd_even"
M = 2

[model]
kind = "cog"
embed_dim = 16
trunk = [32, 32]

[train]
lr = 1e-3
batch_size = 256
epochs = 8

[prune]
k = 0.5
scorer = "model"
repeats = 2

[eval]
k_values = [0.3, 0.5]
random_seeds = [0, 1]
"""

STAGES = (["gen"], ["collect"], ["aggregate"], ["train"], ["eval-offline"], ["prune-run"], ["report"])


def write_config(tmp_path, text=LOOP_TOML, name="pipeline.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run_loop(cfg, data, *extra):
    for stage in STAGES:
        code = main([*stage, "--config", str(cfg), "--data-dir", str(data), *extra])
        assert code == 0, stage
    return data


@pytest.fixture(scope="module")
def loop(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("loop")
    return run_loop(write_config(tmp), tmp / "data")


def test_example_config_parses():
    cfg = load_config(REPO / "configs" / "pipeline.toml")
    assert cfg.train.lr == 1e-4 and cfg.model.embed_dim == 128
    assert cfg.model.trunk == [1024, 1024, 1024]
    assert cfg.prune.k == 0.5 and len(cfg.bench) == 4


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"train": {"learning_rate": 1}})
    with pytest.raises(ConfigError, match="section"):
        config_from_dict({"optimizer": {}})
    with pytest.raises(ConfigError):
        config_from_dict({"prune": {"k": 0.0}})
    with pytest.raises(ConfigError):
        config_from_dict({"model": {"kind": "svm"}})


def test_data_dir_resolution(monkeypatch):
    cfg = config_from_dict({"data_dir": "from-config"})
    monkeypatch.delenv(DATA_DIR_ENV, raising=False)
    assert str(cfg.resolve_data_dir()) == "from-config"
    monkeypatch.setenv(DATA_DIR_ENV, "from-env")
    assert str(cfg.resolve_data_dir()) == "from-env"
    assert str(cfg.resolve_data_dir("flag")) == "flag"


def test_full_loop_outputs(loop):
    manifest = json.loads((loop / "circuits" / "manifest.json").read_text())
    assert len(manifest["circuits"]) == 12
    assert [e["name"] for e in manifest["circuits"] if e["split"] == "test"] == ["random_control250_s4"]
    domains = json.loads((loop / "domains.json").read_text())
    members = [m for d in domains["domains"] for m in d["members"]]
    assert len(members) == 11 and "random_control250_s4" not in members
    offline = json.loads((loop / "reports" / "offline" / "report.json").read_text())
    assert {r["circuit"] for r in offline} == {"random_control250_s4"}
    online = json.loads((loop / "reports" / "online" / "report.json").read_text())
    assert online[0]["equivalence_verdict"].startswith("equivalent")
    assert online[0]["default_size"] <= online[0]["final_size"] <= online[0]["input_size"]
    assert (loop / "reports" / "summary" / "report.csv").exists()
    assert (loop / "reports" / "online" / "random_control250_s4.model.aig").exists()


def test_oracle_prune_run_reproduces_unfiltered(loop, tmp_path):
    cfg = write_config(tmp_path)
    for name in ("random_control250_s4", "multiplier5"):
        code = main(["prune-run", "--config", str(cfg), "--data-dir", str(loop), "--scorer", "oracle", "--k", "0.5", "--circuit", name])
        assert code == 0
        rep = json.loads((loop / "reports" / "online" / "report.json").read_text())[0]
        assert rep["final_size"] == rep["default_size"]
        aig = read_aiger(loop / "circuits" / f"{name}.aig")
        assert read_aiger(loop / "reports" / "online" / f"{name}.oracle.aig").num_ands == run_operator(aig).aig.num_ands


def test_deterministic_runs_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    a = run_loop(cfg, tmp_path / "a", "--deterministic", "--seed", "3")
    b = run_loop(cfg, tmp_path / "b", "--deterministic", "--seed", "3")
    files = ["model.json", "domains.json"] + [
        f"reports/{phase}/report.{ext}" for phase in ("offline", "online", "summary") for ext in ("json", "csv")
    ]
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    assert (a / "reports" / "online" / "timings.json").exists()


def test_exit_codes(tmp_path, capsys):
    cfg = write_config(tmp_path)
    empty = tmp_path / "empty"
    assert main(["train", "--config", str(cfg), "--data-dir", str(empty)]) == 2
    assert main(["gen", "--config", str(tmp_path / "missing.toml")]) == 1
    bad = write_config(tmp_path, "[train]\nnope = 1\n", "bad.toml")
    assert main(["gen", "--config", str(bad)]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1
    # a corrupt manifest is a data error
    (empty / "circuits").mkdir(parents=True)
    (empty / "circuits" / "manifest.json").write_text('{"schema": "prunex.manifest/0"}')
    assert main(["collect", "--config", str(cfg), "--data-dir", str(empty)]) == 2
    assert "data error" in capsys.readouterr().err


def test_env_var_sets_data_dir(tmp_path, monkeypatch):
    small = write_config(tmp_path, '[[bench]]\nfamily = "adder"\nsize = 3\n', "small.toml")
    monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path / "envdata"))
    assert main(["gen", "--config", str(small)]) == 0
    assert (tmp_path / "envdata" / "circuits" / "adder3.aig").exists()


def test_console_entry_point(tmp_path):
    small = write_config(tmp_path, '[[bench]]\nfamily = "comparator"\nsize = 3\n', "small.toml")
    proc = subprocess.run(
        [sys.executable, "-m", "prunex.cli", "gen", "--config", str(small), "--data-dir", str(tmp_path / "d")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "generated 1 circuits" in proc.stderr

import csv

import yaml
from click.testing import CliRunner

from vecoffload import __version__
from vecoffload.cli import _parse_seeds, main


def invoke(*args, env=None):
    return CliRunner().invoke(main, [str(a) for a in args], env=env)


def write_spec(path, **data):
    path.write_text(yaml.safe_dump({"name": "cli", "evaluation_steps": 10, **data}))
    return path


def test_version():
    result = invoke("--version")
    assert result.exit_code == 0 and __version__ in result.output


def test_parse_seeds():
    assert _parse_seeds("0-2,7") == (0, 1, 2, 7)
    assert _parse_seeds("") is None


def test_evaluate_then_compare(tmp_path):
    spec = write_spec(tmp_path / "exp.yaml", policies=["AL", "RD"], seeds=[0, 1], evaluation_episodes=1)
    out = tmp_path / "out"
    result = invoke("evaluate", "--config", spec, "--out", out)
    assert result.exit_code == 0, result.output
    assert "4/4 runs succeeded" in result.output
    result = invoke("compare", "--out", out, "--policy", "AL")
    assert result.exit_code == 0, result.output
    with open(out / "comparison_vs_RD.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["policy"] for r in rows] == ["AL"]


def test_compare_missing_reference(tmp_path):
    spec = write_spec(tmp_path / "exp.yaml", policies=["AL"], seeds=[0], evaluation_episodes=1)
    invoke("evaluate", "--config", spec, "--out", tmp_path / "out")
    result = invoke("compare", "--out", tmp_path / "out")
    assert result.exit_code == 1
    assert "RD" in result.output


def test_failures_give_nonzero_exit(tmp_path):
    spec = write_spec(tmp_path / "exp.yaml", policies=["LEARNED"], seeds=[0], evaluation_episodes=1,
                      checkpoint=str(tmp_path / "none.npz"))
    result = invoke("evaluate", "--config", spec, "--out", tmp_path / "out")
    assert result.exit_code == 1
    assert "FAILED" in result.output


def test_bad_config_is_a_usage_error(tmp_path):
    spec = write_spec(tmp_path / "exp.yaml", policies=["AL"], environment={"number_of_cars": 3})
    result = invoke("evaluate", "--config", spec)
    assert result.exit_code == 1
    assert "number_of_cars" in result.output


def test_output_root_from_environment(tmp_path):
    spec = write_spec(tmp_path / "exp.yaml", policies=["AL"], seeds=[0], evaluation_episodes=1)
    result = invoke("evaluate", "--config", spec, env={"VECOFFLOAD_OUTPUT_ROOT": str(tmp_path / "root")})
    assert result.exit_code == 0, result.output
    assert (tmp_path / "root" / "cli" / "summary.csv").exists()


def test_train_command(tmp_path):
    spec = write_spec(
        tmp_path / "exp.yaml",
        seeds=[0],
        evaluation_episodes=1,
        environment={"number_of_vehicles": 2},
        trainer={"episodes": 50, "steps_per_episode": 4, "hidden_sizes": [8], "batch_size": 4},
    )
    result = invoke("train", "--config", spec, "--out", tmp_path / "out", "--episodes", 2, "--policy", "al")
    assert result.exit_code == 0, result.output
    assert (tmp_path / "out" / "checkpoints" / "K2_v30-80" / "seed0" / "checkpoint_final.npz").exists()
    with open(tmp_path / "out" / "reward_ma.csv", newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 2


def test_oracle_check():
    result = invoke("oracle-check", "--instances", 10)
    assert result.exit_code == 0, result.output
    assert "dominance violations: 0" in result.output


def test_policy_option_fills_in_for_the_config(tmp_path):
    spec = write_spec(tmp_path / "exp.yaml", seeds=[0], evaluation_episodes=1)
    result = invoke("evaluate", "--config", spec, "--out", tmp_path / "out", "--policy", "edg")
    assert result.exit_code == 0, result.output
    assert (tmp_path / "out" / "raw" / "K5_v30-80" / "EDG" / "seed0.csv").exists()

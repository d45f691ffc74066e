import json
import os
from types import SimpleNamespace

import pytest
import questionary

from libreparam import cli
from tests.conftest import does_not_raise


@pytest.mark.parametrize(
    "text,expected,raises",
    [
        ("0.5", [0.5], does_not_raise()),
        ("0.1, 1.0,", [0.1, 1.0], does_not_raise()),
        ("", [], does_not_raise()),
        ("0.1, 0", None, pytest.raises(ValueError)),
        ("fast", None, pytest.raises(ValueError)),
    ],
)
def test_parse_step_sizes(text, expected, raises):
    # Act & Assert
    with raises:
        assert cli.parse_step_sizes(text) == expected


@pytest.mark.parametrize(
    "validator,text,raises",
    [
        (cli.IntegerValidator, "12", does_not_raise()),
        (cli.IntegerValidator, "-1", pytest.raises(questionary.ValidationError)),
        (cli.IntegerValidator, "1.5", pytest.raises(questionary.ValidationError)),
        (cli.StepSizeValidator, "0.1,0.5", does_not_raise()),
        (cli.StepSizeValidator, " ", pytest.raises(questionary.ValidationError)),
        (cli.StepSizeValidator, "-0.1", pytest.raises(questionary.ValidationError)),
    ],
)
def test_validators(validator, text, raises):
    # Act & Assert
    with raises:
        validator().validate(SimpleNamespace(text=text))


def test_answers_to_config():
    # Arrange
    answers = {
        "model": "beta-gamma-mf",
        "estimator": "score-cv",
        "n_samples": "2",
        "eta": "0.1, 1",
        "iterations": "50",
        "seed": "4",
        "synthetic": False,
        "data_path": "bits.csv",
        "data_format": "dense",
        "output_dir": "out",
    }

    # Act
    document = cli.answers_to_config(answers)

    # Assert
    assert document == {
        "model": "beta-gamma-mf",
        "estimator": {"kind": "score-cv", "n_samples": 2},
        "eta": [0.1, 1.0],
        "iterations": 50,
        "seed": 4,
        "output_dir": "out",
        "data": {"path": "bits.csv", "format": "dense"},
    }


def test_build_parser():
    # Act
    args = cli.build_parser().parse_args(["train", "--config", "run.json", "--seed", "7", "-vv"])

    # Assert
    assert args.command == "train"
    assert args.config == "run.json"
    assert args.seed == 7
    assert args.out is None
    assert args.verbose == 2


def test_build_parser_requires_config():
    # Act & Assert
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["train"])


def test_version(capsys):
    # Act
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["--version"])

    # Assert
    assert excinfo.value.code == 0
    assert "libreparam" in capsys.readouterr().out


def test_main_invalid_config(create_config_json, capsys):
    # Arrange
    path = create_config_json({"model": "gamma-poisson-toy", "iterations": -1, "colour": 1})

    # Act
    code = cli.main(["train", "--config", path])

    # Assert
    assert code == cli.EXIT_CONFIG
    error = capsys.readouterr().err
    assert "iterations" in error
    assert "colour" in error


def test_main_invalid_override(create_config_json):
    # Arrange
    path = create_config_json({"model": "gamma-poisson-toy"})

    # Act
    code = cli.main(["synth", "--config", path, "--seed", "-1"])

    # Assert
    assert code == cli.EXIT_CONFIG


def test_main_eval_without_params(create_config_json, output_dir):
    # Arrange
    path = create_config_json({"model": "gamma-poisson-toy", "output_dir": output_dir})

    # Act
    code = cli.main(["eval", "--config", path])

    # Assert
    assert code == cli.EXIT_CONFIG


def test_main_unreadable_dataset(create_config_json, create_data_file, output_dir, capsys):
    # Arrange
    data = create_data_file("1\nx\n")
    path = create_config_json({"model": "gamma-poisson-toy", "data": {"path": data}, "output_dir": output_dir})

    # Act
    code = cli.main(["train", "--config", path])

    # Assert
    assert code == cli.EXIT_FAILURE
    assert "libreparam train" in capsys.readouterr().err


def test_main_synth(create_config_json, output_dir):
    # Arrange
    path = create_config_json({"model": "beta-bernoulli-toy", "model_config": {"n_obs": 8}})

    # Act
    code = cli.main(["synth", "--config", path, "--out", output_dir])

    # Assert
    assert code == cli.EXIT_OK
    assert sorted(os.listdir(output_dir)) == ["data.csv", "latents.json"]


def test_main_train_without_iterations(create_config_json, output_dir):
    # Arrange
    path = create_config_json({"model": "gamma-poisson-toy", "iterations": 0, "output_dir": output_dir})

    # Act
    code = cli.main(["train", "--config", path])

    # Assert
    assert code == cli.EXIT_OK
    with open(os.path.join(output_dir, "summary.json")) as summary_file:
        assert json.load(summary_file)["best_eta"] == 0.5


def test_main_gradcheck(create_config_json, output_dir):
    # Arrange
    document = {"model": "gamma-poisson-toy", "gradcheck": {"points": 1}, "output_dir": output_dir}
    path = create_config_json(document)

    # Act
    code = cli.main(["gradcheck", "--config", path])

    # Assert
    assert code == cli.EXIT_OK
    assert os.path.isfile(os.path.join(output_dir, "gradcheck.csv"))


def test_configure_cancelled(monkeypatch, capsys):
    # Arrange
    monkeypatch.setattr(cli.questionary, "prompt", lambda questions: {})

    # Act
    code = cli.main(["configure"])

    # Assert
    assert code == cli.EXIT_FAILURE
    assert "Nothing was configured." in capsys.readouterr().out


def test_configure(monkeypatch, tmp_path):
    # Arrange
    answers = {
        "model": "gamma-poisson-toy",
        "estimator": "grep",
        "n_samples": "1",
        "eta": "0.5",
        "iterations": "10",
        "seed": "0",
        "synthetic": True,
        "output_dir": "output",
    }
    target = str(tmp_path / "config.json")
    monkeypatch.setattr(cli.questionary, "prompt", lambda questions: answers)
    monkeypatch.setattr(cli.configure_target_question, "ask", lambda: target)

    # Act
    code = cli.main(["configure"])

    # Assert
    assert code == cli.EXIT_OK
    with open(target) as config_file:
        written = json.load(config_file)
    assert written["iterations"] == 10
    assert written["estimator"]["kind"] == "grep"

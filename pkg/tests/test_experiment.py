import csv
import json
import os

import numpy as np
import pytest

from libreparam import Experiment, eta_label
from libreparam.enums import EstimatorKinds, ExportTypes, ImportTypes, ModelKinds
from libreparam.exceptions import ConfigError


def _experiment(document: dict) -> Experiment:
    experiment = Experiment()
    experiment.importconfig(ImportTypes.STRING, json.dumps(document))
    return experiment


def _read(path: str) -> str:
    with open(path) as text_file:
        return text_file.read()


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as binary_file:
        return binary_file.read()


def test_config_before_import():
    # Arrange
    experiment = Experiment()

    # Act & Assert
    with pytest.raises(ValueError):
        experiment.config


def test_importconfig_file(create_config_json):
    # Arrange
    path = create_config_json({"model": "beta-bernoulli-toy"})
    experiment = Experiment()

    # Act
    experiment.importconfig(ImportTypes.FILE, path)

    # Assert
    assert experiment.configjson == {"model": "beta-bernoulli-toy"}
    assert experiment.config.model is ModelKinds.BETA_BERNOULLI_TOY


@pytest.mark.parametrize(
    "import_type,source,error",
    [
        (ImportTypes.STRING, "{model: 1", ConfigError),
        (ImportTypes.FILE, "/nonexistent/config.json", ConfigError),
        (ImportTypes.STRING, "{}", ConfigError),
        (100, "", ValueError),
    ],
)
def test_importconfig_errors(import_type, source, error):
    # Arrange
    experiment = Experiment()

    # Act & Assert
    with pytest.raises(error):
        experiment.importconfig(import_type, source)


def test_exportconfig_string():
    # Arrange
    experiment = _experiment({"model": "gamma-poisson-toy", "iterations": 3})

    # Act
    exported = json.loads(experiment.exportconfig(ExportTypes.STRING, sort_keys=True))

    # Assert
    assert exported["iterations"] == 3
    assert exported["estimator"]["kind"] == "grep"
    assert exported["seed"] == 0


def test_exportconfig_file(tmp_path):
    # Arrange
    experiment = _experiment({"model": "sparse-gamma-def", "model_config": {"layers": [3, 2]}})
    target = str(tmp_path / "exported.json")

    # Act
    experiment.exportconfig(ExportTypes.FILE, target, indent=2)

    # Assert
    again = Experiment()
    again.importconfig(ImportTypes.FILE, target)
    assert again.exportconfig(ExportTypes.STRING) == experiment.exportconfig(ExportTypes.STRING)


@pytest.mark.parametrize(
    "export_type,target,sort_keys,indent,error",
    [
        (ExportTypes.FILE, "", False, None, ValueError),
        (ExportTypes.STRING, 1, False, None, TypeError),
        (ExportTypes.STRING, "", "yes", None, TypeError),
        (ExportTypes.STRING, "", False, "2", TypeError),
        (100, "", False, None, ValueError),
    ],
)
def test_exportconfig_errors(export_type, target, sort_keys, indent, error):
    # Arrange
    experiment = _experiment({"model": "gamma-poisson-toy"})

    # Act & Assert
    with pytest.raises(error):
        experiment.exportconfig(export_type, target, sort_keys, indent)


def test_override(output_dir):
    # Arrange
    experiment = _experiment({"model": "gamma-poisson-toy"})

    # Act
    experiment.override(seed=9, output_dir=output_dir)

    # Assert
    assert experiment.config.seed == 9
    assert experiment.config.output_dir == output_dir
    with pytest.raises(ConfigError) as excinfo:
        experiment.override(seed=-1, output_dir="")
    assert len(excinfo.value.errors) == 2


def test_eta_label():
    # Act & Assert
    assert eta_label(0.5) == "0.5"
    assert eta_label(1.0) == "1"
    assert eta_label(1e-5) == "1e-05"


def test_synth_is_deterministic(tmp_path):
    # Arrange
    first = _experiment({"model": "gamma-poisson-toy", "seed": 5, "output_dir": str(tmp_path / "a")})
    second = _experiment({"model": "gamma-poisson-toy", "seed": 5, "output_dir": str(tmp_path / "b")})

    # Act
    first_paths = first.synth()
    second_paths = second.synth()

    # Assert
    assert [_read(path) for path in first_paths] == [_read(path) for path in second_paths]
    assert len(_read(first_paths[0]).splitlines()) == 20
    assert set(json.loads(_read(first_paths[1]))) == {"z"}


def test_prepare_sparse_gamma_def(output_dir):
    # Arrange
    experiment = _experiment(
        {
            "model": "sparse-gamma-def",
            "model_config": {"layers": [3, 2]},
            "data": {"synthetic": [6, 9], "heldout_fraction": 0.3},
            "output_dir": output_dir,
        }
    )

    # Act
    prepared = experiment.prepare()

    # Assert
    np.testing.assert_array_equal(prepared.model.data + prepared.heldout, prepared.values)
    assert prepared.values.shape == (6, 9)
    assert prepared.heldout_mask is None


def test_prepare_beta_gamma_mf():
    # Arrange
    experiment = _experiment(
        {"model": "beta-gamma-mf", "model_config": {"latent_dim": 2}, "data": {"synthetic": [10, 8]}}
    )

    # Act
    prepared = experiment.prepare()

    # Assert
    assert prepared.heldout_mask.shape == (10, 8)
    np.testing.assert_array_equal(prepared.model.mask, ~prepared.heldout_mask)
    assert prepared.heldout is None


def test_prepare_reads_data(create_data_file):
    # Arrange
    path = create_data_file("1\n0\n3\n")
    experiment = _experiment({"model": "gamma-poisson-toy", "data": {"path": path}})

    # Act
    prepared = experiment.prepare()

    # Assert
    np.testing.assert_array_equal(prepared.values, [1.0, 0.0, 3.0])


def test_train_without_iterations(output_dir):
    # Arrange
    experiment = _experiment(
        {"model": "beta-bernoulli-toy", "iterations": 0, "eta": [0.1, 1.0], "output_dir": output_dir}
    )

    # Act
    summary = experiment.train()

    # Assert
    assert summary["best_eta"] == 0.1
    assert [run["tail_mean_elbo"] for run in summary["runs"]] == [None, None]
    assert sorted(os.listdir(output_dir)) == [
        "params-eta-0.1.json",
        "params-eta-1.json",
        "summary.json",
        "trace-eta-0.1.csv",
        "trace-eta-1.csv",
    ]
    assert json.loads(_read(os.path.join(output_dir, "summary.json"))) == summary


def test_train_then_evaluate(output_dir):
    # Arrange
    experiment = _experiment(
        {"model": "gamma-poisson-toy", "iterations": 200, "eval": {"n_posterior_samples": 50}, "output_dir": output_dir}
    )

    # Act
    summary = experiment.train()
    experiment.config.params_path = os.path.join(output_dir, summary["runs"][0]["params"])
    report = experiment.evaluate()

    # Assert
    assert summary["runs"][0]["tail_mean_elbo"] is not None
    assert len(_read(os.path.join(output_dir, "trace-eta-%s.csv" % eta_label(0.5))).splitlines()) == 201
    assert report.metric == "predictive_log_likelihood"
    assert report.n_samples == 50
    assert report.value < 0.0
    assert json.loads(_read(os.path.join(output_dir, "eval.json")))["value"] == report.value


def test_evaluate_sparse_gamma_def_reports_both_metrics(create_data_file, output_dir):
    # Arrange
    path = create_data_file("\n".join(["3,1,0,2,5,1,0,4,2", "0,2,6,1,1,3,2,0,4"] * 3) + "\n")
    experiment = _experiment(
        {
            "model": "sparse-gamma-def",
            "model_config": {"layers": [2]},
            "data": {"path": path},
            "iterations": 0,
            "eval": {"n_posterior_samples": 10},
            "output_dir": output_dir,
        }
    )
    summary = experiment.train()
    experiment.config.params_path = os.path.join(output_dir, summary["runs"][0]["params"])

    # Act
    report = experiment.evaluate()

    # Assert
    predictive = report.notes["predictive_log_likelihood"]
    assert report.metric == "perplexity"
    assert report.value >= 1.0
    assert predictive["metric"] == "predictive_log_likelihood"
    assert predictive["n_samples"] == 10
    assert predictive["value"] < 0.0
    assert predictive["notes"]["rate_scale"] == pytest.approx(1.0 / 3.0)
    assert json.loads(_read(os.path.join(output_dir, "eval.json"))) == report.encode()


def test_evaluate_requires_params(output_dir):
    # Arrange
    experiment = _experiment({"model": "gamma-poisson-toy", "output_dir": output_dir})

    # Act & Assert
    with pytest.raises(ConfigError):
        experiment.evaluate()


@pytest.mark.parametrize(
    "content",
    [
        "{not json",
        json.dumps({"w": {"family": "gamma", "transform": "gamma-std", "params": {"shape": 1.0, "rate": 1.0}}}),
        json.dumps({"z": {"family": "gamma", "transform": "gamma-std", "params": {"shape": 1.0}}}),
    ],
)
def test_evaluate_rejects_foreign_params(create_data_file, output_dir, content):
    # Arrange
    params_path = create_data_file(content, "params.json")
    experiment = _experiment({"model": "gamma-poisson-toy", "params_path": params_path, "output_dir": output_dir})

    # Act & Assert
    with pytest.raises(ConfigError):
        experiment.evaluate()


def test_variance(output_dir):
    # Arrange
    experiment = _experiment(
        {
            "model": "gamma-poisson-toy",
            "variance": {"kinds": ["grep", "score"], "sample_counts": [1, 2], "trials": 100},
            "output_dir": output_dir,
        }
    )

    # Act
    reports = experiment.variance()

    # Assert
    assert [(report.estimator, report.n_samples) for report in reports] == [
        (EstimatorKinds.GREP, 1),
        (EstimatorKinds.GREP, 2),
        (EstimatorKinds.SCORE_FUNCTION, 1),
        (EstimatorKinds.SCORE_FUNCTION, 2),
    ]
    assert reports[0].mean_variance < reports[2].mean_variance
    with open(os.path.join(output_dir, "variance.csv"), newline="") as csv_file:
        assert len(list(csv.DictReader(csv_file))) > 0


def test_gradcheck(output_dir):
    # Arrange
    experiment = _experiment({"model": "beta-bernoulli-toy", "gradcheck": {"points": 1}, "output_dir": output_dir})

    # Act
    results = experiment.gradcheck()

    # Assert
    assert all(result.passed for result in results)
    assert os.path.isfile(os.path.join(output_dir, "gradcheck.csv"))


def test_rerun_writes_identical_files(tmp_path):
    # Arrange
    document = {
        "model": "gamma-poisson-toy",
        "iterations": 20,
        "seed": 13,
        "variance": {"kinds": ["grep", "score"], "sample_counts": [1, 2], "trials": 100},
        "gradcheck": {"points": 1},
    }
    filenames = ["trace-eta-0.5.csv", "params-eta-0.5.json", "summary.json", "variance.csv", "gradcheck.csv"]
    runs = []

    # Act
    for name in ("first", "second"):
        experiment = _experiment(dict(document, output_dir=str(tmp_path / name)))
        experiment.train()
        experiment.variance()
        experiment.gradcheck()
        runs.append(str(tmp_path / name))

    # Assert
    for filename in filenames:
        first, second = (_read_bytes(os.path.join(run, filename)) for run in runs)
        assert first == second, filename


@pytest.mark.slow
@pytest.mark.parametrize(
    "document,metric",
    [
        ({"model": "sparse-gamma-def", "model_config": {"layers": [10, 5, 3]}}, "perplexity"),
        ({"model": "beta-gamma-mf", "model_config": {"latent_dim": 5}}, "predictive_log_likelihood"),
    ],
)
def test_full_pipeline(output_dir, document, metric):
    # Arrange
    data_dir = os.path.join(output_dir, "synthetic")
    synth = _experiment(dict(document, output_dir=data_dir, seed=11))
    data_path = synth.synth()[0]
    experiment = _experiment(
        dict(document, iterations=2000, seed=11, output_dir=output_dir, data={"path": data_path})
    )

    # Act
    summary = experiment.train()
    experiment.config.params_path = os.path.join(output_dir, summary["runs"][0]["params"])
    report = experiment.evaluate()

    # Assert
    with open(os.path.join(output_dir, summary["runs"][0]["trace"]), newline="") as csv_file:
        elbo = [float(row["elbo"]) for row in csv.DictReader(csv_file)]
    assert np.mean(elbo[-100:]) > np.mean(elbo[:100])
    assert report.metric == metric
    assert np.isfinite(report.value)

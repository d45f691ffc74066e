"""
Generalized reparameterization gradients for variational inference with gamma, beta, log-normal and Dirichlet
families. The library additionally ships a CLI which runs experiments described by a JSON run configuration.
"""

import json
import logging
import os
from typing import Dict, List, Optional, Union

import numpy as np

from libreparam.datasets import entry_split, load_dataset, token_split, write_dataset
from libreparam.enums import ExportTypes, ImportTypes, ModelKinds
from libreparam.estimators import EstimatorConfig, VarianceReport, estimator_variance, write_variance_csv
from libreparam.exceptions import ConfigError, TrainingAborted
from libreparam.gradcheck import GradcheckResult, run_gradcheck, write_gradcheck_csv
from libreparam.metrics import EvalReport, heldout_count_log_likelihood, perplexity, predictive_log_likelihood
from libreparam.models import (
    BetaBernoulliToy,
    BetaGammaMF,
    GammaPoissonToy,
    SparseGammaDEF,
    beta_bernoulli_toy,
    beta_gamma_mf,
    gamma_poisson_toy,
    sparse_gamma_def,
)
from libreparam.randkit import RngState
from libreparam.runconfig import RunConfig
from libreparam.trainer import decode_factors, encode_factors, fit

__version__ = "0.1.0"

_logger = logging.getLogger(__name__)

_TOYS = (ModelKinds.GAMMA_POISSON_TOY, ModelKinds.BETA_BERNOULLI_TOY)


def eta_label(eta: float) -> str:
    """
    How a step size appears in file names: ``0.5`` gives ``trace-eta-0.5.csv``.
    """
    return format(eta, "g")


class PreparedData:
    """
    The model conditioned on the training part of the data together with what was held out.

    :param model: The model to fit.
    :param values: The full observations.
    :param heldout: Held-out word counts of a count model, otherwise ``None``.
    :param heldout_mask: Held-out entries of a binary model, otherwise ``None``.
    """

    def __init__(self, model, values: np.ndarray, heldout=None, heldout_mask=None):
        self.model = model
        self.values = values
        self.heldout = heldout
        self.heldout_mask = heldout_mask


class Experiment:
    """
    This is the entry point of the library. An instance holds one run configuration and runs the subcommands on it.
    Nothing is written to disk except by the subcommands and :meth:`exportconfig`.
    """

    def __init__(self):
        """
        Create an experiment without a configuration. Use :meth:`importconfig` to load one.
        """
        self._configjson: dict = {}
        self._config: Optional[RunConfig] = None

    @property
    def configjson(self) -> dict:
        """
        The last document handed to :meth:`importconfig`.

        :raises ConfigError: If invalid JSON is given.
        """
        return self._configjson

    @configjson.setter
    def configjson(self, value: str):
        if value is None:
            return
        try:
            self._configjson = json.loads(value)
        except json.JSONDecodeError as error:
            raise ConfigError(["The configuration is not valid JSON: %s" % error]) from error

    @property
    def config(self) -> RunConfig:
        """
        The validated run configuration.

        :raises ValueError: In case no configuration was imported yet.
        """
        if self._config is None:
            raise ValueError("Please import a configuration first!")
        return self._config

    @config.setter
    def config(self, value: RunConfig):
        if not isinstance(value, RunConfig):
            raise TypeError("config needs to be of type RunConfig!")
        self._config = value

    def importconfig(self, import_type: ImportTypes, source: str):
        """
        Import and validate a run configuration.

        :param import_type: One of the values from the :class:`ImportTypes`.
        :param source: A path or the JSON document itself.
        :raises ConfigError: With every problem of the document.
        :raises ValueError: In case the import type is not known.
        """
        if import_type == ImportTypes.FILE:
            if not os.path.isfile(source):
                raise ConfigError(["The configuration file %s does not exist." % source])
            with open(source, "r") as config_file:
                self.configjson = config_file.read()
        elif import_type == ImportTypes.STRING:
            self.configjson = source
        else:
            raise ValueError("Please use one of the two given options for the source!")
        config = RunConfig()
        config.decode(self.configjson)
        self.config = config

    def __prepare_export_output(self, sort_keys: bool = False, indent: Union[None, int] = None) -> str:
        return json.dumps(self.config.encode(), sort_keys=sort_keys, indent=indent)

    def exportconfig(
        self,
        export_type: ExportTypes,
        target: str = "",
        sort_keys: bool = False,
        indent: Union[None, int] = None,
    ):
        """
        Export the current configuration with every default filled in.

        :param export_type: One of the values from the :class:`ExportTypes`.
        :param target: This is only required when using this for a file based export.
        :param sort_keys: If the keys of the dictionary should be sorted.
        :param indent: If this is something other then ``None`` then the JSON will be pretty printed.
        :raises ValueError: When the :class:`ExportTypes` is not known.
        :raises TypeError: When one of the arguments has the wrong type.
        """
        if not isinstance(target, str):
            raise TypeError("target needs to be of type str!")
        if not isinstance(sort_keys, bool):
            raise TypeError("sort_keys needs to be of type bool!")
        if not (indent is None or isinstance(indent, int)):
            raise TypeError("indent needs to be of type integer or None!")

        if export_type == ExportTypes.FILE:
            if not target:
                raise ValueError("Please provide a path if your want to export to a file!")
            with open(target, "w") as config_file:
                config_file.write(self.__prepare_export_output(sort_keys, indent))
        elif export_type == ExportTypes.STRING:
            return self.__prepare_export_output(sort_keys, indent)
        else:
            raise ValueError("Please use one of the two given options for the export type!")

    def override(self, seed: Optional[int] = None, output_dir: Optional[str] = None):
        """
        Replace the seed or the output directory of the imported configuration, as the ``--seed`` and ``--out`` flags
        do.

        :raises ConfigError: In case a value is invalid.
        """
        errors = []
        for name, value in (("seed", seed), ("output_dir", output_dir)):
            if value is None:
                continue
            try:
                setattr(self.config, name, value)
            except (TypeError, ValueError) as error:
                errors.append("--%s: %s" % ("out" if name == "output_dir" else name, error))
        if errors:
            raise ConfigError(errors)

    def _stream(self, name: str) -> RngState:
        return RngState.from_seed(self.config.seed).substream(name)

    def _output(self, filename: str) -> str:
        os.makedirs(self.config.output_dir, exist_ok=True)
        return os.path.join(self.config.output_dir, filename)

    def simulate(self, rng: RngState):
        """
        Draw a dataset and the latents behind it from the configured model.
        """
        config = self.config
        model_config = config.build_model_config()
        if config.model is ModelKinds.GAMMA_POISSON_TOY:
            return GammaPoissonToy.simulate(model_config, config.n_obs, rng)
        if config.model is ModelKinds.BETA_BERNOULLI_TOY:
            return BetaBernoulliToy.simulate(model_config, config.n_obs, rng)
        if config.model is ModelKinds.SPARSE_GAMMA_DEF:
            return SparseGammaDEF.simulate(model_config, config.synthetic_shape(), rng)
        return BetaGammaMF.simulate(model_config, config.synthetic_shape(), rng)

    def prepare(self) -> PreparedData:
        """
        Load or simulate the data, split off the held-out part and condition the model on the rest. Uses the
        ``data`` substream, so every subcommand sees the same split.
        """
        config = self.config
        rng = self._stream("data")
        if config.data.path is not None:
            values = load_dataset(config.data.path, config.data.data_format).values
        else:
            values, _ = self.simulate(rng)
        model_config = config.build_model_config()
        if config.model is ModelKinds.GAMMA_POISSON_TOY:
            return PreparedData(gamma_poisson_toy(np.ravel(values), model_config), np.ravel(values))
        if config.model is ModelKinds.BETA_BERNOULLI_TOY:
            return PreparedData(beta_bernoulli_toy(np.ravel(values), model_config), np.ravel(values))
        if config.model is ModelKinds.SPARSE_GAMMA_DEF:
            train, heldout = token_split(values, config.data.heldout_fraction, rng)
            return PreparedData(sparse_gamma_def(model_config, train), values, heldout=heldout)
        heldout_mask = entry_split(np.shape(values), config.data.heldout_fraction, rng)
        model = beta_gamma_mf(model_config, values, mask=~heldout_mask)
        return PreparedData(model, values, heldout_mask=heldout_mask)

    def _initial_factors(self, model):
        return model.initial_factors(self.config.families or None)

    def _load_factors(self, model):
        """
        Read fitted factors and make sure they belong to ``model``.

        :raises ConfigError: In case the file does not describe the model's latent blocks.
        """
        with open(self.config.params_path, "r") as params_file:
            try:
                data = json.load(params_file)
            except json.JSONDecodeError as error:
                raise ConfigError(["params_path: not valid JSON: %s" % error]) from error
        try:
            factors = decode_factors(data)
        except (KeyError, TypeError, ValueError) as error:
            raise ConfigError(["params_path: %s" % error]) from error
        names = [factor.name for factor in factors]
        if sorted(names) != sorted(model.layout.names):
            raise ConfigError(["params_path: expected the blocks %s, found %s." % (model.layout.names, names)])
        for factor in factors:
            expected = tuple(model.layout[factor.name].shape)
            found = np.shape(next(iter(factor.params.as_dict().values())))
            if found[: len(expected)] != expected:
                raise ConfigError(["params_path: block %s has shape %s, expected %s." % (factor.name, found, expected)])
        order = {name: position for position, name in enumerate(model.layout.names)}
        return sorted(factors, key=lambda factor: order[factor.name])

    def train(self) -> dict:
        """
        Fit the model once per configured step size. Writes ``trace-eta-<eta>.csv``, ``params-eta-<eta>.json`` and
        ``summary.json``; the summary names the step size with the best mean ELBO over the last tenth of the
        iterations.

        :raises TrainingAborted: After writing the partial trace of the failing step size.
        """
        config = self.config
        _logger.info("Training %s with eta %s.", config.model.value, ", ".join(eta_label(eta) for eta in config.etas))
        prepared = self.prepare()
        factors = self._initial_factors(prepared.model)
        streams = self._stream("training").split(len(config.etas))
        runs = []
        for eta, stream in zip(config.etas, streams):
            label = eta_label(eta)
            trace_path = self._output("trace-eta-%s.csv" % label)
            try:
                result = fit(
                    prepared.model,
                    factors,
                    config.estimator,
                    config.iterations,
                    stream,
                    eta=eta,
                    elbo_samples=config.elbo_samples,
                    min_shape=config.min_shape,
                    log_every=config.log_every,
                    wall_clock=config.wall_clock,
                )
            except TrainingAborted as error:
                if error.trace is not None:
                    error.trace.to_csv(trace_path)
                    _logger.info("Wrote the partial trace to %s.", trace_path)
                raise
            result.trace.to_csv(trace_path)
            params_path = self._output("params-eta-%s.json" % label)
            with open(params_path, "w") as params_file:
                json.dump(encode_factors(result.factors), params_file, sort_keys=True, indent=2)
            tail = result.trace.tail_mean() if len(result.trace) else None
            runs.append(
                {
                    "eta": eta,
                    "tail_mean_elbo": tail,
                    "trace": os.path.basename(trace_path),
                    "params": os.path.basename(params_path),
                }
            )
            _logger.info("Wrote %s and %s.", trace_path, params_path)
        scored = [run for run in runs if run["tail_mean_elbo"] is not None]
        best = max(scored, key=lambda run: run["tail_mean_elbo"]) if scored else runs[0]
        summary = {
            "model": config.model.value,
            "seed": config.seed,
            "iterations": config.iterations,
            "best_eta": best["eta"],
            "runs": runs,
        }
        with open(self._output("summary.json"), "w") as summary_file:
            json.dump(summary, summary_file, sort_keys=True, indent=2)
        _logger.info("Training finished, best eta %s.", eta_label(best["eta"]))
        return summary

    def gradcheck(self) -> List[GradcheckResult]:
        """
        Run every finite-difference check and write ``gradcheck.csv``.
        """
        config = self.config
        points, step = config.gradcheck
        _logger.info("Running gradient checks on %s.", config.model.value)
        prepared = self.prepare()
        results = run_gradcheck(prepared.model, self._stream("eval"), points, step)
        path = self._output("gradcheck.csv")
        write_gradcheck_csv(results, path)
        _logger.info("Wrote %s.", path)
        return results

    def variance(self) -> List[VarianceReport]:
        """
        Estimate the per-component variance of every configured estimator and sample count at the initial factors,
        or at the fitted ones when ``params_path`` is set. Writes ``variance.csv``.
        """
        config = self.config
        settings = config.variance
        prepared = self.prepare()
        if config.params_path is not None:
            factors = self._load_factors(prepared.model)
        else:
            factors = self._initial_factors(prepared.model)
        combinations = [(kind, count) for kind in settings.kinds for count in settings.sample_counts]
        streams = self._stream("training").split(len(combinations))
        reports = []
        for (kind, count), stream in zip(combinations, streams):
            estimator = EstimatorConfig(
                kind=kind, n_samples=count, cv_samples=config.estimator.cv_samples, entropy=config.estimator.entropy
            )
            reports.append(estimator_variance(prepared.model, factors, estimator, settings.trials, stream))
        by_key: Dict[tuple, VarianceReport] = {(report.estimator, report.n_samples): report for report in reports}
        for (kind, count), report in by_key.items():
            reference = by_key.get((settings.kinds[0], count))
            if reference is not None and reference is not report and report.mean_variance > 0:
                _logger.info(
                    "%d sample(s): %s / %s variance ratio %.3g.",
                    count,
                    settings.kinds[0].value,
                    kind.value,
                    reference.mean_variance / report.mean_variance,
                )
        path = self._output("variance.csv")
        write_variance_csv(reports, path)
        _logger.info("Wrote %s.", path)
        return reports

    def evaluate(self) -> EvalReport:
        """
        Evaluate fitted factors on the held-out data and write ``eval.json``: perplexity for the sparse gamma DEF
        with the predictive log-likelihood of the held-out counts in its notes, the predictive log-likelihood of the
        held-out entries for the factorization and of the observations for the toys.

        :raises ConfigError: In case ``params_path`` is missing or does not fit the model.
        """
        config = self.config
        if config.params_path is None:
            raise ConfigError(["eval needs params_path."])
        prepared = self.prepare()
        factors = self._load_factors(prepared.model)
        rng = self._stream("eval")
        if config.model is ModelKinds.SPARSE_GAMMA_DEF:
            report = perplexity(prepared.model, factors, prepared.heldout, rng)
            predictive = heldout_count_log_likelihood(
                prepared.model,
                factors,
                prepared.heldout,
                config.data.heldout_fraction,
                config.evaluation,
                self._stream("eval-predictive"),
            )
            report.notes["predictive_log_likelihood"] = predictive.encode()
        elif config.model is ModelKinds.BETA_GAMMA_MF:
            report = predictive_log_likelihood(
                prepared.model, factors, prepared.values, config.evaluation, rng, prepared.heldout_mask
            )
        else:
            report = predictive_log_likelihood(prepared.model, factors, prepared.values, config.evaluation, rng)
        path = self._output("eval.json")
        with open(path, "w") as report_file:
            report_file.write(report.dumps())
        _logger.info("Wrote %s: %s = %.6g.", path, report.metric, report.value)
        return report

    def synth(self) -> List[str]:
        """
        Draw a dataset from the model and write it as ``data.csv`` in the configured format together with the true
        latents in ``latents.json``. Toy observations are written as one column.
        """
        config = self.config
        values, latents = self.simulate(self._stream("data"))
        if config.model in _TOYS:
            values = np.reshape(values, (-1, 1))
        data_path = self._output("data.csv")
        write_dataset(data_path, values, config.data.data_format)
        latents_path = self._output("latents.json")
        with open(latents_path, "w") as latents_file:
            encoded = {name: np.asarray(value).tolist() for name, value in latents.items()}
            json.dump(encoded, latents_file, sort_keys=True)
        _logger.info("Wrote %s and %s.", data_path, latents_path)
        return [data_path, latents_path]

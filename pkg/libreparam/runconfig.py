"""
Module for the run configuration. A run configuration is a single JSON document; the keys it may hold are the
properties of ``libreparam/data/v1/schema.json``.
"""

import json
import os
from dataclasses import dataclass
from importlib import resources
from numbers import Integral, Real
from typing import Dict, List, Optional, Tuple

from libreparam import utils
from libreparam.dists import BetaParams, GammaParams
from libreparam.enums import DataFormats, EstimatorKinds, Families, ModelKinds, TransformKinds
from libreparam.estimators import ENTROPY_MODES, EstimatorConfig
from libreparam.exceptions import ConfigError, DomainError
from libreparam.models import BetaGammaMFConfig, SparseGammaDEFConfig
from libreparam.models.layout import family_support
from libreparam.transforms import DEFAULT_TRANSFORMS, compatible

SCHEMA_VERSION = "v1"
DEFAULT_SAMPLE_COUNTS = (1, 2, 5, 10, 20)
DEFAULT_HELDOUT_FRACTION = 0.25
DEFAULT_SYNTHETIC_SHAPES = {
    ModelKinds.SPARSE_GAMMA_DEF: (20, 30),
    ModelKinds.BETA_GAMMA_MF: (30, 20),
}

_TOY_PRIOR_DEFAULT = (1.0, 1.0)
_TOY_N_OBS_DEFAULT = 20
_MODEL_CONFIG_KEYS = {
    ModelKinds.GAMMA_POISSON_TOY: {"prior", "n_obs"},
    ModelKinds.BETA_BERNOULLI_TOY: {"prior", "n_obs"},
    ModelKinds.SPARSE_GAMMA_DEF: {"layers", "alpha_z", "weight_prior", "top_prior"},
    ModelKinds.BETA_GAMMA_MF: {"latent_dim", "weight_prior"},
}
# JSON key -> property name; the model comes first because later checks depend on it.
_KEYS = (
    ("model", "model"),
    ("model_config", "model_config"),
    ("families", "families"),
    ("estimator", "estimator"),
    ("eta", "etas"),
    ("iterations", "iterations"),
    ("elbo_samples", "elbo_samples"),
    ("log_every", "log_every"),
    ("min_shape", "min_shape"),
    ("seed", "seed"),
    ("data", "data"),
    ("params_path", "params_path"),
    ("variance", "variance"),
    ("eval", "evaluation"),
    ("gradcheck", "gradcheck"),
    ("wall_clock", "wall_clock"),
    ("output_dir", "output_dir"),
)


def load_schema() -> dict:
    """
    The JSON schema of the run configuration which ships with the package.
    """
    schema = resources.files("libreparam.data").joinpath(SCHEMA_VERSION).joinpath("schema.json")
    return json.loads(schema.read_text(encoding="utf-8"))


def accepted_keys() -> List[str]:
    """
    The top-level keys a run configuration may hold.
    """
    return sorted(load_schema()["properties"])


def _require_int(value, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise TypeError("%s must be an integer." % name)
    if value < minimum:
        raise ValueError("%s must be at least %d." % (name, minimum))
    return int(value)


def _require_positive(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, Real):
        raise TypeError("%s must be a number." % name)
    if not 0.0 < float(value) < float("inf"):
        raise ValueError("%s must be a positive finite number." % name)
    return float(value)


def _require_object(value, name: str, keys) -> dict:
    if not isinstance(value, dict):
        raise TypeError("%s must be an object." % name)
    unknown = sorted(set(value) - set(keys))
    if unknown:
        raise ValueError("%s: unknown key(s) %s." % (name, ", ".join(unknown)))
    return value


def _require_pair(value, name: str) -> Tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise TypeError("%s must be a list of two numbers." % name)
    return _require_positive(value[0], name), _require_positive(value[1], name)


@dataclass(frozen=True)
class DataSource:
    """
    Where the observations come from: a file, or a synthetic dataset drawn from the model itself.

    :param path: The dataset file; ``None`` means synthetic data.
    :param data_format: The on-disk format of ``path``.
    :param heldout_fraction: Share of the data held out for evaluation.
    :param synthetic: ``(rows, cols)`` of the synthetic dataset; ``None`` uses the model default.
    """

    path: Optional[str] = None
    data_format: DataFormats = DataFormats.DENSE
    heldout_fraction: float = DEFAULT_HELDOUT_FRACTION
    synthetic: Optional[Tuple[int, int]] = None

    @classmethod
    def decode(cls, data: dict) -> "DataSource":
        data = _require_object(data, "data", ("path", "format", "heldout_fraction", "synthetic"))
        if "path" in data and "synthetic" in data:
            raise ValueError("data: give either a path or a synthetic shape, not both.")
        path = data.get("path")
        if path is not None and not isinstance(path, str):
            raise TypeError("data.path must be a string.")
        fraction = _require_positive(data.get("heldout_fraction", DEFAULT_HELDOUT_FRACTION), "data.heldout_fraction")
        if fraction >= 1.0:
            raise ValueError("data.heldout_fraction must lie in (0, 1).")
        synthetic = data.get("synthetic")
        if synthetic is not None:
            if not isinstance(synthetic, list) or len(synthetic) != 2:
                raise TypeError("data.synthetic must be a list [rows, cols].")
            synthetic = tuple(_require_int(size, "data.synthetic", 1) for size in synthetic)
        return cls(path, DataFormats(data.get("format", DataFormats.DENSE.value)), fraction, synthetic)

    def encode(self) -> dict:
        result = {"format": self.data_format.value, "heldout_fraction": self.heldout_fraction}
        if self.path is not None:
            result["path"] = self.path
        if self.synthetic is not None:
            result["synthetic"] = list(self.synthetic)
        return result


@dataclass(frozen=True)
class VarianceSettings:
    """
    The estimators and sample counts the ``variance`` subcommand compares.
    """

    kinds: Tuple[EstimatorKinds, ...] = (EstimatorKinds.GREP, EstimatorKinds.SCORE_FUNCTION)
    sample_counts: Tuple[int, ...] = DEFAULT_SAMPLE_COUNTS
    trials: int = 1000

    @classmethod
    def decode(cls, data: dict) -> "VarianceSettings":
        data = _require_object(data, "variance", ("kinds", "sample_counts", "trials"))
        kinds = data.get("kinds", [kind.value for kind in cls.kinds])
        counts = data.get("sample_counts", list(cls.sample_counts))
        if not isinstance(kinds, list) or not kinds:
            raise TypeError("variance.kinds must be a non-empty list.")
        if not isinstance(counts, list) or not counts:
            raise TypeError("variance.sample_counts must be a non-empty list.")
        return cls(
            tuple(EstimatorKinds(kind) for kind in kinds),
            tuple(_require_int(count, "variance.sample_counts", 1) for count in counts),
            _require_int(data.get("trials", cls.trials), "variance.trials", 100),
        )

    def encode(self) -> dict:
        return {
            "kinds": [kind.value for kind in self.kinds],
            "sample_counts": list(self.sample_counts),
            "trials": self.trials,
        }


class RunConfig:
    """
    A validated run configuration. Every property checks its value on assignment; :meth:`decode` collects all problems
    of a document before raising.
    """

    def __init__(self):
        """
        Creates default values for everything but the model.
        """
        self._model: Optional[ModelKinds] = None
        self._model_config: dict = {}
        self._families: Dict[str, Tuple[Families, TransformKinds]] = {}
        self._estimator = EstimatorConfig()
        self._etas: List[float] = [0.5]
        self._iterations = 1000
        self._elbo_samples = 1
        self._log_every = 100
        self._min_shape = 1e-2
        self._seed = 0
        self._data = DataSource()
        self._params_path: Optional[str] = None
        self._variance = VarianceSettings()
        self._evaluation = 100
        self._gradcheck: Tuple[int, float] = (5, 1e-5)
        self._wall_clock = False
        self._output_dir = "output"

    @property
    def model(self) -> Optional[ModelKinds]:
        """
        The model to fit.

        :setter: Accepts a :class:`ModelKinds` member or its string value.
        :raises ValueError: In case the name is not a known model.
        """
        return self._model

    @model.setter
    def model(self, value):
        self._model = ModelKinds(value)

    @property
    def model_config(self) -> dict:
        """
        Hyperparameters of the model as given in the document. :meth:`build_model_config` turns them into the model's
        configuration object.
        """
        return self._model_config

    @model_config.setter
    def model_config(self, value: dict):
        if not isinstance(value, dict):
            raise TypeError("model_config must be an object.")
        self._model_config = dict(value)

    @model_config.deleter
    def model_config(self):
        self._model_config = {}

    @property
    def families(self) -> Dict[str, Tuple[Families, TransformKinds]]:
        """
        Variational family and standardization per latent block. Blocks which are not listed keep the model default.

        :setter: Accepts ``{block: {"family": ..., "transform": ...}}``. A missing transform defaults to the family's
                 standard one.
        :raises ValueError: In case a family is unknown or the transform does not fit it.
        """
        return self._families

    @families.setter
    def families(self, value: dict):
        if not isinstance(value, dict):
            raise TypeError("families must be an object.")
        families = {}
        for block, entry in value.items():
            entry = _require_object(entry, "families.%s" % block, ("family", "transform"))
            if "family" not in entry:
                raise ValueError("families.%s: the family is required." % block)
            family = Families(entry["family"])
            transform = TransformKinds(entry.get("transform", DEFAULT_TRANSFORMS[family].value))
            if not compatible(transform, family):
                raise ValueError(
                    "families.%s: %s cannot standardize the %s family." % (block, transform.value, family.value)
                )
            families[block] = (family, transform)
        self._families = families

    @families.deleter
    def families(self):
        self._families = {}

    @property
    def estimator(self) -> EstimatorConfig:
        """
        The gradient estimator and its sample counts.
        """
        return self._estimator

    @estimator.setter
    def estimator(self, value):
        if isinstance(value, EstimatorConfig):
            self._estimator = value
            return
        value = _require_object(value, "estimator", ("kind", "n_samples", "cv_samples", "entropy"))
        entropy = value.get("entropy", "analytic")
        if entropy not in ENTROPY_MODES:
            raise ValueError("estimator.entropy must be one of %s." % ", ".join(ENTROPY_MODES))
        self._estimator = EstimatorConfig(
            kind=EstimatorKinds(value.get("kind", EstimatorKinds.GREP.value)),
            n_samples=_require_int(value.get("n_samples", 1), "estimator.n_samples", 1),
            cv_samples=_require_int(value.get("cv_samples", 30), "estimator.cv_samples", 2),
            entropy=entropy,
        )

    @property
    def etas(self) -> List[float]:
        """
        The base step sizes. More than one runs a sweep.

        :setter: Accepts a single number or a non-empty list.
        """
        return self._etas

    @etas.setter
    def etas(self, value):
        if isinstance(value, list):
            if not value:
                raise ValueError("eta must not be an empty list.")
            self._etas = [_require_positive(eta, "eta") for eta in value]
        else:
            self._etas = [_require_positive(value, "eta")]

    @property
    def iterations(self) -> int:
        """
        Optimization steps per step size. Zero echoes the initial parameters.
        """
        return self._iterations

    @iterations.setter
    def iterations(self, value: int):
        self._iterations = _require_int(value, "iterations")

    @property
    def elbo_samples(self) -> int:
        return self._elbo_samples

    @elbo_samples.setter
    def elbo_samples(self, value: int):
        self._elbo_samples = _require_int(value, "elbo_samples", 1)

    @property
    def log_every(self) -> int:
        """
        Debug log interval of the optimizer. Zero disables the log.
        """
        return self._log_every

    @log_every.setter
    def log_every(self, value: int):
        self._log_every = _require_int(value, "log_every")

    @property
    def min_shape(self) -> float:
        return self._min_shape

    @min_shape.setter
    def min_shape(self, value: float):
        self._min_shape = _require_positive(value, "min_shape")

    @property
    def seed(self) -> int:
        """
        The unsigned 64-bit seed every random stream derives from.
        """
        return self._seed

    @seed.setter
    def seed(self, value: int):
        value = _require_int(value, "seed")
        if value >= 2**64:
            raise DomainError("seed must fit into 64 bits.")
        self._seed = value

    @property
    def data(self) -> DataSource:
        return self._data

    @data.setter
    def data(self, value):
        self._data = value if isinstance(value, DataSource) else DataSource.decode(value)

    @data.deleter
    def data(self):
        self._data = DataSource()

    @property
    def params_path(self) -> Optional[str]:
        """
        Fitted parameters as written by ``train``. Used by ``eval`` and, when present, by ``variance``.
        """
        return self._params_path

    @params_path.setter
    def params_path(self, value: Optional[str]):
        if value is not None and not isinstance(value, str):
            raise TypeError("params_path must be a string.")
        self._params_path = value

    @params_path.deleter
    def params_path(self):
        self._params_path = None

    @property
    def variance(self) -> VarianceSettings:
        return self._variance

    @variance.setter
    def variance(self, value):
        self._variance = value if isinstance(value, VarianceSettings) else VarianceSettings.decode(value)

    @property
    def evaluation(self) -> int:
        """
        Posterior samples drawn by ``eval``. Stored under the key ``eval``.
        """
        return self._evaluation

    @evaluation.setter
    def evaluation(self, value):
        if isinstance(value, dict):
            value = _require_object(value, "eval", ("n_posterior_samples",)).get("n_posterior_samples", 100)
        self._evaluation = _require_int(value, "eval.n_posterior_samples", 1)

    @property
    def gradcheck(self) -> Tuple[int, float]:
        """
        Number of random points and the relative finite-difference step of ``gradcheck``.
        """
        return self._gradcheck

    @gradcheck.setter
    def gradcheck(self, value):
        if isinstance(value, dict):
            value = _require_object(value, "gradcheck", ("points", "step"))
            value = (value.get("points", 5), value.get("step", 1e-5))
        points, step = value
        self._gradcheck = (_require_int(points, "gradcheck.points", 1), _require_positive(step, "gradcheck.step"))

    @property
    def wall_clock(self) -> bool:
        """
        Record elapsed seconds in the traces. Off by default so traces are reproducible.
        """
        return self._wall_clock

    @wall_clock.setter
    def wall_clock(self, value: bool):
        if not isinstance(value, bool):
            raise TypeError("wall_clock must be a bool.")
        self._wall_clock = value

    @property
    def output_dir(self) -> str:
        return self._output_dir

    @output_dir.setter
    def output_dir(self, value: str):
        if not isinstance(value, str) or not value:
            raise TypeError("output_dir must be a non-empty string.")
        self._output_dir = value

    def build_model_config(self):
        """
        The model's configuration object: the prior parameters for the toys, a config dataclass otherwise.

        :raises ValueError: In case a key does not belong to the model or a value is out of range.
        """
        if self.model is None:
            raise ValueError("No model selected.")
        settings = _require_object(self.model_config, "model_config", _MODEL_CONFIG_KEYS[self.model])
        if self.model is ModelKinds.GAMMA_POISSON_TOY:
            shape, rate = _require_pair(settings.get("prior", _TOY_PRIOR_DEFAULT), "model_config.prior")
            return GammaParams(shape=shape, rate=rate)
        if self.model is ModelKinds.BETA_BERNOULLI_TOY:
            alpha, beta = _require_pair(settings.get("prior", _TOY_PRIOR_DEFAULT), "model_config.prior")
            return BetaParams(alpha=alpha, beta=beta)
        if self.model is ModelKinds.SPARSE_GAMMA_DEF:
            defaults = SparseGammaDEFConfig()
            layers = settings.get("layers", list(defaults.layers))
            if not isinstance(layers, list) or not layers:
                raise TypeError("model_config.layers must be a non-empty list.")
            return SparseGammaDEFConfig(
                layers=tuple(_require_int(size, "model_config.layers", 1) for size in layers),
                alpha_z=_require_positive(settings.get("alpha_z", defaults.alpha_z), "model_config.alpha_z"),
                weight_prior=_require_pair(settings.get("weight_prior", defaults.weight_prior), "weight_prior"),
                top_prior=_require_pair(settings.get("top_prior", defaults.top_prior), "top_prior"),
            )
        defaults = BetaGammaMFConfig()
        return BetaGammaMFConfig(
            latent_dim=_require_int(settings.get("latent_dim", defaults.latent_dim), "model_config.latent_dim", 1),
            weight_prior=_require_pair(settings.get("weight_prior", defaults.weight_prior), "weight_prior"),
        )

    @property
    def n_obs(self) -> int:
        """
        Number of synthetic observations of a toy model.
        """
        return _require_int(self.model_config.get("n_obs", _TOY_N_OBS_DEFAULT), "model_config.n_obs", 1)

    def synthetic_shape(self) -> Tuple[int, ...]:
        """
        Shape of the dataset ``synth`` draws: ``(n_obs,)`` for the toys.
        """
        if self.model in (ModelKinds.GAMMA_POISSON_TOY, ModelKinds.BETA_BERNOULLI_TOY):
            return (self.n_obs,)
        return self.data.synthetic or DEFAULT_SYNTHETIC_SHAPES[self.model]

    def block_names(self) -> List[str]:
        """
        The latent block names of the selected model.
        """
        if self.model is ModelKinds.SPARSE_GAMMA_DEF:
            depth = len(self.build_model_config().layers)
            return ["z%d" % (layer + 1) for layer in range(depth)] + ["w%d" % layer for layer in range(depth)]
        if self.model is ModelKinds.BETA_GAMMA_MF:
            return ["z", "w"]
        return ["z"]

    def _block_families(self) -> Dict[str, Families]:
        if self.model is ModelKinds.GAMMA_POISSON_TOY or self.model is ModelKinds.SPARSE_GAMMA_DEF:
            return {name: Families.GAMMA for name in self.block_names()}
        if self.model is ModelKinds.BETA_BERNOULLI_TOY:
            return {"z": Families.BETA}
        return {"z": Families.BETA, "w": Families.GAMMA}

    def _cross_check(self) -> List[str]:
        """
        Checks which involve more than one key or the file system.
        """
        errors = []
        try:
            self.build_model_config()
            self.synthetic_shape()
        except (TypeError, ValueError) as error:
            errors.append("model_config: %s" % error)
            return errors
        defaults = self._block_families()
        for block, (family, _) in sorted(self.families.items()):
            if block not in defaults:
                errors.append("families: %s is not a latent block of %s." % (block, self.model.value))
            elif family_support(family) is not family_support(defaults[block]):
                errors.append("families.%s: the %s family does not fit the block's support." % (block, family.value))
        if self.data.path is not None and not os.path.isfile(self.data.path):
            errors.append("data.path: the file %s does not exist." % self.data.path)
        if self.params_path is not None and not os.path.isfile(self.params_path):
            errors.append("params_path: the file %s does not exist." % self.params_path)
        return errors

    def encode(self) -> dict:
        """
        Encodes the configuration into a JSON-ready dictionary. Decoding the result gives an equal configuration.

        :return: The dictionary with the data.
        """
        result = {
            "model": None if self.model is None else self.model.value,
            "model_config": self.model_config,
            "families": {
                block: {"family": family.value, "transform": transform.value}
                for block, (family, transform) in self.families.items()
            },
            "estimator": {
                "kind": self.estimator.kind.value,
                "n_samples": self.estimator.n_samples,
                "cv_samples": self.estimator.cv_samples,
                "entropy": self.estimator.entropy,
            },
            "eta": self.etas[0] if len(self.etas) == 1 else list(self.etas),
            "iterations": self.iterations,
            "elbo_samples": self.elbo_samples,
            "log_every": self.log_every,
            "min_shape": self.min_shape,
            "seed": self.seed,
            "data": self.data.encode(),
            "variance": self.variance.encode(),
            "eval": {"n_posterior_samples": self.evaluation},
            "gradcheck": {"points": self.gradcheck[0], "step": self.gradcheck[1]},
            "wall_clock": self.wall_clock,
            "output_dir": self.output_dir,
        }
        if self.params_path is not None:
            result["params_path"] = self.params_path
        return result

    def decode(self, data: dict):
        """
        Decodes a configuration document. Nothing is kept unless the whole document is valid.

        :param data: The parsed JSON document.
        :raises ConfigError: With one message per problem found.
        """
        if not isinstance(data, dict):
            raise ConfigError(["The configuration must be a JSON object."])
        errors = ['Unknown key "%s".' % key for key in sorted(set(data) - set(accepted_keys()))]
        if "model" not in data:
            errors.append('The key "model" is required.')
        candidate = RunConfig()
        for key, attribute in _KEYS:
            if key not in data:
                continue
            value = data[key]
            if key in ("model_config", "families"):
                value = utils.none_to_empty(value, dict)
            try:
                setattr(candidate, attribute, value)
            except (TypeError, ValueError) as error:
                errors.append("%s: %s" % (key, error))
        if not errors:
            errors.extend(candidate._cross_check())
        if errors:
            raise ConfigError(errors)
        self.__dict__.update(candidate.__dict__)

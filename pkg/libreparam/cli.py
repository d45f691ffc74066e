"""
The CLI. Every subcommand but ``configure`` reads a run configuration and writes its results to the output directory.
``configure`` is interactive and writes a run configuration; it may not be used in scripts.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

import questionary

from libreparam import Experiment, __version__
from libreparam.enums import DataFormats, EstimatorKinds, ExportTypes, ImportTypes, ModelKinds
from libreparam.exceptions import ConfigError, LibReparamError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

_LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


class IntegerValidator(questionary.Validator):
    """
    Validator class which checks if the input is a non-negative integer.
    """

    def validate(self, document):
        """
        Validation function which does raise a ValidationError or does not return a value.

        :param document: The user input. Handed over by questionary.
        :raises ValidationError: In case the text could not be parsed to a non-negative integer.
        """
        try:
            value = int(document.text)
        except ValueError:
            raise questionary.ValidationError(message="Please enter an integer!")
        if value < 0:
            raise questionary.ValidationError(message="Please enter a non-negative integer!")


class StepSizeValidator(questionary.Validator):
    """
    Validator class which checks if the input is a comma separated list of positive numbers.
    """

    def validate(self, document):
        try:
            values = parse_step_sizes(document.text)
        except ValueError:
            raise questionary.ValidationError(message="Please enter positive numbers separated by commas!")
        if not values:
            raise questionary.ValidationError(message="Please enter at least one step size!")


# questions

configure_questions = [
    {
        "type": "select",
        "name": "model",
        "message": "Which model do you want to fit?",
        "choices": [kind.value for kind in ModelKinds],
    },
    {
        "type": "select",
        "name": "estimator",
        "message": "Which gradient estimator shall be used?",
        "choices": [kind.value for kind in EstimatorKinds],
    },
    {
        "type": "text",
        "name": "n_samples",
        "message": "How many samples per gradient estimate?",
        "default": "1",
        "validate": IntegerValidator,
    },
    {
        "type": "text",
        "name": "eta",
        "message": "Which step size(s)? (Separate several with commas to run a sweep)",
        "default": "0.5",
        "validate": StepSizeValidator,
    },
    {
        "type": "text",
        "name": "iterations",
        "message": "How many iterations per step size?",
        "default": "1000",
        "validate": IntegerValidator,
    },
    {
        "type": "text",
        "name": "seed",
        "message": "Which seed?",
        "default": "0",
        "validate": IntegerValidator,
    },
    {
        "type": "confirm",
        "name": "synthetic",
        "message": "Should the data be drawn from the model itself?",
        "default": True,
    },
    {
        "type": "path",
        "name": "data_path",
        "message": "Where is the dataset?",
        "when": lambda x: not x["synthetic"],
    },
    {
        "type": "select",
        "name": "data_format",
        "message": "In which format is the dataset?",
        "choices": [data_format.value for data_format in DataFormats],
        "when": lambda x: not x["synthetic"],
    },
    {
        "type": "text",
        "name": "output_dir",
        "message": "Where shall the results be written?",
        "default": "output",
    },
]

configure_target_question = questionary.path("Where shall the configuration be saved?", default="config.json")


# definitions


def parse_step_sizes(text: str) -> List[float]:
    """
    Parse ``"0.1, 0.5"`` into ``[0.1, 0.5]``.

    :raises ValueError: In case an entry is not a positive number.
    """
    values = [float(part) for part in text.split(",") if part.strip()]
    if any(not value > 0 for value in values):
        raise ValueError("Step sizes must be positive.")
    return values


def answers_to_config(answers: dict) -> dict:
    """
    Turn the answers of the configure wizard into a run configuration document.

    :param answers: The answers as returned by ``questionary.prompt``.
    """
    etas = parse_step_sizes(answers["eta"])
    document = {
        "model": answers["model"],
        "estimator": {"kind": answers["estimator"], "n_samples": int(answers["n_samples"])},
        "eta": etas[0] if len(etas) == 1 else etas,
        "iterations": int(answers["iterations"]),
        "seed": int(answers["seed"]),
        "output_dir": answers["output_dir"],
    }
    if not answers["synthetic"]:
        document["data"] = {"path": answers["data_path"], "format": answers["data_format"]}
    return document


def configure() -> int:
    """
    Ask for the essentials of a run configuration, validate it and save it with every default filled in.
    """
    answers = questionary.prompt(configure_questions)
    if not answers:
        print("Nothing was configured.")
        return EXIT_FAILURE
    experiment = Experiment()
    experiment.importconfig(ImportTypes.STRING, json.dumps(answers_to_config(answers)))
    target = configure_target_question.ask()
    if not target:
        print("Target path for the file was not entered correctly.")
        return EXIT_FAILURE
    experiment.exportconfig(ExportTypes.FILE, target, sort_keys=True, indent=2)
    print("Wrote %s." % target)
    return EXIT_OK


def run_train(experiment: Experiment) -> int:
    experiment.train()
    return EXIT_OK


def run_gradcheck(experiment: Experiment) -> int:
    failed = [result.check for result in experiment.gradcheck() if not result.passed]
    if failed:
        print("Failed gradient checks: %s" % ", ".join(failed), file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def run_variance(experiment: Experiment) -> int:
    experiment.variance()
    return EXIT_OK


def run_eval(experiment: Experiment) -> int:
    print(experiment.evaluate().dumps())
    return EXIT_OK


def run_synth(experiment: Experiment) -> int:
    experiment.synth()
    return EXIT_OK


COMMANDS = {
    "train": (run_train, "Fit the model once per step size and write traces, parameters and a summary."),
    "gradcheck": (run_gradcheck, "Compare every analytic derivative with finite differences."),
    "variance": (run_variance, "Estimate the variance of the gradient estimators."),
    "eval": (run_eval, "Evaluate fitted parameters on the held-out data."),
    "synth": (run_synth, "Draw a synthetic dataset and its latents from the model."),
}


def build_parser() -> argparse.ArgumentParser:
    verbosity = argparse.ArgumentParser(add_help=False)
    verbosity.add_argument(
        "-v", "--verbose", action="count", default=0, help="Log progress; repeat for per-iteration details."
    )
    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--config", required=True, help="The run configuration (JSON).")
    run.add_argument("--seed", type=int, help="Overrides the seed of the configuration.")
    run.add_argument("--out", help="Overrides the output directory of the configuration.")

    parser = argparse.ArgumentParser(prog="libreparam", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    subcommands = parser.add_subparsers(dest="command", required=True)
    for name, (_, description) in COMMANDS.items():
        subcommands.add_parser(name, parents=[verbosity, run], help=description, description=description)
    subcommands.add_parser("configure", parents=[verbosity], help="Write a run configuration interactively.")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    The main entrypoint for the CLI.

    :return: ``0`` on success, ``2`` for an invalid configuration and ``1`` for any other error.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=_LOG_LEVELS[min(args.verbose, len(_LOG_LEVELS) - 1)],
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "configure":
            return configure()
        experiment = Experiment()
        experiment.importconfig(ImportTypes.FILE, args.config)
        experiment.override(seed=args.seed, output_dir=args.out)
        return COMMANDS[args.command][0](experiment)
    except ConfigError as error:
        print(error, file=sys.stderr)
        return EXIT_CONFIG
    except (LibReparamError, ValueError, OSError) as error:
        print("libreparam %s: %s" % (args.command, error), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

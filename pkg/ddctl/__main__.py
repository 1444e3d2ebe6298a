import argparse
import logging
import sys

from ddctl import ARTIFACT_VERSION, __version__
from ddctl import scripts as ddctl_scripts
from ddctl.config import config_hash, load_default_settings, read_config, validate_config
from ddctl.core.artifacts import write_csv, write_json
from ddctl.core.errors import EXIT_OK, DdctlError, error_payload, exit_code_for
from ddctl.core.initialization import LOG_FORMATS, RunSummary, setup_logging

DEFAULT_LOG_LEVEL = logging.INFO

logger = logging.getLogger("ddctl")


def _build_parser():
    parser = argparse.ArgumentParser(description="Data-driven LQR Command-Line Interface")
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(
        title="subcommands",
        description="Main ddctl commands",
        dest="subcommand",
        help="Choose and run with --help",
    )
    subparsers.required = True

    for command in ddctl_scripts.COMMANDS:
        subparser = subparsers.add_parser(command)
        subparser.set_defaults(which=command)

        subparser.add_argument(
            "--config", help="Experiment configuration (JSON)", dest="config_file", default=None
        )
        subparser.add_argument("--seed", type=int, help="Master random seed", default=None)
        subparser.add_argument(
            "--out", help="Result file (default: standard output)", default=None
        )
        subparser.add_argument("--csv", help="Per-iteration trace file", default=None)
        subparser.add_argument(
            "--log-format", choices=LOG_FORMATS, default="text", dest="log_format"
        )

        subparser.add_argument(
            "-q",
            "--quiet",
            action="store_const",
            const=logging.CRITICAL,
            dest="verbosity",
            help="Show only critical errors.",
        )

        subparser.add_argument(
            "-v",
            "--debug",
            action="store_const",
            const=logging.DEBUG,
            dest="verbosity",
            help="Show all messages, including debug messages.",
        )

        if command == "gen":
            subparser.add_argument("--n", type=int, help="State dimension", default=None)
            subparser.add_argument("--m", type=int, help="Input dimension", default=None)
            subparser.add_argument(
                "--stable",
                action="store_true",
                help="Rescale A below the spectral radius cap",
                default=False,
            )
            subparser.add_argument(
                "--cap", type=float, help="Spectral radius cap of A", default=None
            )
    return parser


def _apply_generator_flags(document, parsed_args):
    flags = {
        "n": parsed_args.get("n"),
        "m": parsed_args.get("m"),
        "cap": parsed_args.get("cap"),
    }
    if parsed_args.get("stable"):
        flags["stable"] = True
    flags = {k: v for k, v in flags.items() if v is not None}
    if flags:
        document = {**document, "generator": {**document.get("generator", {}), **flags}}
    return document


def run(argv=None):
    """Run one subcommand and return the process exit code."""
    if argv is None:
        argv = sys.argv[1:]

    parsed_args = vars(_build_parser().parse_args(argv))
    which_command = parsed_args["which"]

    settings = load_default_settings()
    level = parsed_args.get("verbosity") or DEFAULT_LOG_LEVEL
    setup_logging(settings, level=level, log_format=parsed_args["log_format"])

    summary = RunSummary(command=which_command)
    meta = {"command": which_command, "version": ARTIFACT_VERSION}
    out = parsed_args["out"]
    try:
        document = read_config(parsed_args["config_file"])
        if which_command == "gen":
            document = _apply_generator_flags(document, parsed_args)
        config = validate_config(document, which_command)

        seed = parsed_args["seed"]
        if seed is None:
            seed = config.get("seed", 0)
        meta.update(seed=seed, config_hash=config_hash(config))
        summary.bind(seed=seed, config_hash=meta["config_hash"])
        if level == logging.DEBUG:
            summary.bind(config=config)

        outcome = ddctl_scripts.COMMANDS[which_command](config, seed, settings)
        if outcome.context:
            summary.bind(**outcome.context)
        write_json(out, {**outcome.payload, "meta": meta})
        if parsed_args["csv"] and outcome.has_trace:
            write_csv(parsed_args["csv"], outcome.header, outcome.rows)
        summary.bind(status="ok")
        code = EXIT_OK

    except DdctlError as e:
        payload = error_payload(e)
        partial = getattr(e, "partial", None)
        if hasattr(partial, "to_record"):
            payload["partial"] = partial.to_record()
        logger.error(f"{which_command} failed: {e.message}")
        write_json(out, {**payload, "meta": meta})
        summary.bind(status=payload["status"], errno=payload["errno"])
        code = exit_code_for(e)

    summary.emit()
    return code


def main(args=None):
    """The main routine."""
    return run(args)


if __name__ == "__main__":
    sys.exit(main())

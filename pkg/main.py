# main.py
import argparse
import sys
import traceback
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from commands import analyze, dice, report, simulate
from models.schemas import CIMethod, Command, RunConfig
from utils.config_utils import get_default_alpha, get_default_ci_method
from utils.errors import InputValidationError

# Load environment variables
load_dotenv()

COMMANDS = {
    Command.SIMULATE: simulate,
    Command.ANALYZE: analyze,
    Command.DICE: dice,
    Command.REPORT: report,
}

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID_INPUT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cardioprec",
        description="Scan-rescan precision of cardiac biomarkers from segmentation samples",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in COMMANDS.values():
        module.register(subparsers)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """RunConfig from parsed flags; environment defaults fill what the flags leave open"""
    values = {k: v for k, v in vars(args).items() if v is not None}
    if "input" in values:
        values["input_csv"] = values.pop("input")
    if values.get("command") == Command.ANALYZE.value:
        values["ci_method"] = CIMethod.parse(values.get("ci_method") or get_default_ci_method())
        values.setdefault("alpha", get_default_alpha())
    return RunConfig.model_validate(values)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ValidationError, ValueError) as e:
        print(f"❌ Invalid arguments: {e}")
        return EXIT_INVALID_INPUT

    print(f"🚀 cardioprec {cfg.command.value}")
    try:
        return COMMANDS[cfg.command].run(cfg)
    except (InputValidationError, ValidationError) as e:
        print(f"❌ {type(e).__name__}: {e}")
        return EXIT_INVALID_INPUT
    except Exception as e:
        print(f"❌ Internal error: {e}")
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

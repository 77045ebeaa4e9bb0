"""The ``madf`` console script: ``madf gen-data|train|eval|report|run-experiments [options]``."""

from __future__ import annotations

import os
import sys

COMMANDS = {
    "gen-data": "gen_data",
    "train": "train",
    "eval": "eval",
    "report": "report",
    "run-experiments": "run_experiments",
}


def main(argv: list[str] | None = None) -> None:
    """Map a madf subcommand onto its management command and run it."""
    argv = list(sys.argv if argv is None else argv)
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings.dev")
    from django.core.management import execute_from_command_line

    if len(argv) < 2 or argv[1] not in COMMANDS:
        sys.stderr.write(f"usage: madf {{{'|'.join(COMMANDS)}}} [options]\n")
        sys.exit(2)
    execute_from_command_line([argv[0], COMMANDS[argv[1]], *argv[2:]])


if __name__ == "__main__":
    main()

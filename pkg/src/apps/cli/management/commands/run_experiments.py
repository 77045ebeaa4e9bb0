"""Train and evaluate every system over several seeds and record the outcome."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

from django.conf import settings
from django.core.management.base import BaseCommand, CommandParser

from apps.cli.experiments import assess, experiments_path, results_document, run_seed, write_results
from apps.cli.support import command_errors, load_config

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


class Command(BaseCommand):
    help = "Seeded runs of sl, rl-1q1a, rl-1q3a and rl-3q1a, checked against the expected outcome."

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--config", help="KEY=VALUE run configuration file (defaults when omitted)")
        parser.add_argument("--seeds", type=int, nargs="+", default=list(DEFAULT_SEEDS), help="Seeds to run")
        parser.add_argument("--out", help="Results file (default: MADF_RUN_DIR/experiments/<RUN_ID>/experiments.json)")

    def handle(self, *args: Any, **options: Any) -> None:
        with command_errors():
            config = load_config(options["config"])
            out = Path(options["out"]) if options["out"] else experiments_path(config.run_id)
            outcomes = []
            for seed in options["seeds"]:
                logger.info("Seed %d of %s", seed, options["seeds"])
                outcomes.append(run_seed(config, seed, workers=settings.MADF_EVAL_WORKERS))
            criteria = assess(outcomes)
            write_results(out, results_document(config, outcomes, criteria))

        for criterion in criteria:
            verdict = self.style.SUCCESS("pass") if criterion.passed else self.style.ERROR("fail")
            self.stdout.write(f"{criterion.name:<24} {verdict}")
        self.stdout.write(f"Wrote {out}")

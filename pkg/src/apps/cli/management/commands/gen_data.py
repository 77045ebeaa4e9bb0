"""Generate the synthetic scene dataset of a run."""

from __future__ import annotations

import logging
from typing import Any

from django.core.management.base import BaseCommand, CommandParser

from apps.cli.artifacts import dataset_hash, write_dataset
from apps.cli.errors import ArtifactError
from apps.cli.runs import CONFIG_NAME, MANIFEST_NAME, RunLock, RunManifest, dataset_dir
from apps.cli.support import clear_directory, command_errors, load_config
from apps.world.scenes import generate_dataset

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Generate train/val/test scenes, the mixing matrix and a manifest under MADF_RUN_DIR/<RUN_ID>/."

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--config", help="KEY=VALUE run configuration file (defaults when omitted)")
        parser.add_argument("--seed", type=int, help="Override SEED")
        parser.add_argument("--force", action="store_true", help="Overwrite an existing dataset with this RUN_ID")

    def handle(self, *args: Any, **options: Any) -> None:
        with command_errors():
            config = load_config(options["config"], seed=options["seed"])
            directory = dataset_dir(config.run_id)
            if (directory / MANIFEST_NAME).exists() and not options["force"]:
                raise ArtifactError(f"dataset {config.run_id!r} already exists in {directory}; pass --force")

            with RunLock(directory):
                clear_directory(directory)
                dataset = generate_dataset(
                    config.build_schema(),
                    config.seed,
                    config.n_train,
                    config.n_val,
                    config.n_test,
                    orthonormal=config.mixing == "orthonormal",
                )
                write_dataset(directory, dataset, config.rounds)
                (directory / CONFIG_NAME).write_text(config.snapshot(), encoding="utf-8")
                manifest = RunManifest(
                    run_id=config.run_id,
                    config=config.snapshot(),
                    config_hash=config.config_hash,
                    seeds={"seed": config.seed},
                    dataset_hash=dataset_hash(directory),
                    phases={"data": "complete"},
                )
                manifest.write(directory)

        logger.info("Dataset %s written to %s", config.run_id, directory)
        self.stdout.write(
            self.style.SUCCESS(
                f"Wrote {len(dataset.train)}/{len(dataset.val)}/{len(dataset.test)} scenes to {directory} "
                f"(hash {manifest.dataset_hash[:12]})"
            )
        )

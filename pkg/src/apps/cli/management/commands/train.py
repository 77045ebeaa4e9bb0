"""Train one system on a generated dataset, resuming from its newest checkpoint."""

from __future__ import annotations

import logging
from typing import Any

from django.core.management.base import BaseCommand, CommandParser

from apps.cli.artifacts import dataset_hash, latest_checkpoint, read_checkpoint, read_dataset
from apps.cli.errors import ArtifactError
from apps.cli.runs import CONFIG_NAME, JsonlRunSink, RunLock, RunManifest, dataset_dir, training_dir
from apps.cli.support import clear_directory, command_errors, load_config
from apps.training.config import SYSTEMS
from apps.training.loop import ResumePoint, train

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Supervised pretraining then curriculum self-play for sl, rl-1q1a, rl-1q3a or rl-3q1a."

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--config", help="KEY=VALUE run configuration file (defaults when omitted)")
        parser.add_argument("--system", choices=SYSTEMS, default="sl", help="Pool sizes and phases to train")
        parser.add_argument("--seed", type=int, help="Override SEED")
        parser.add_argument("--rounds", type=int, help="Override ROUNDS")
        parser.add_argument("--force", action="store_true", help="Discard earlier checkpoints and logs of this run")

    def handle(self, *args: Any, **options: Any) -> None:
        system = options["system"]
        with command_errors():
            config = load_config(options["config"], seed=options["seed"], rounds=options["rounds"]).for_system(system)
            data_dir = dataset_dir(config.run_id)
            data_manifest = RunManifest.read(data_dir)
            data_hash = dataset_hash(data_dir)
            if data_hash != data_manifest.dataset_hash:
                raise ArtifactError(f"dataset in {data_dir} changed since gen-data; regenerate it")
            dataset = read_dataset(data_dir, data_manifest.seeds.get("seed", config.seed))

            directory = training_dir(config.run_id, system)
            with RunLock(directory):
                if options["force"]:
                    clear_directory(directory)
                config_path = directory / CONFIG_NAME
                if config_path.exists() and config_path.read_text(encoding="utf-8") != config.snapshot():
                    raise ArtifactError(f"{directory} was trained with a different configuration; pass --force")
                config_path.write_text(config.snapshot(), encoding="utf-8")

                sink = JsonlRunSink(directory, config.run_id, config.config_hash)
                resume = self._resume_point(sink, config.config_hash)
                manifest = RunManifest(
                    run_id=config.run_id,
                    config=config.snapshot(),
                    config_hash=config.config_hash,
                    seeds={"seed": config.seed, "dataset_seed": dataset.seed},
                    dataset_hash=data_hash,
                )
                manifest.write(directory)

                train(config, dataset, sink, resume)

                manifest.phases = {"sl": "complete"}
                if config.rl_epochs:
                    manifest.phases["rl"] = "complete"
                manifest.write(directory)

        logger.info("Training of %s.%s finished", config.run_id, system)
        self.stdout.write(self.style.SUCCESS(f"Trained {system} in {directory}"))

    def _resume_point(self, sink: JsonlRunSink, config_hash: str) -> ResumePoint | None:
        path = latest_checkpoint(sink.checkpoint_dir)
        if path is None:
            sink.truncate_after("sl", -1)
            return None
        header, state = read_checkpoint(path)
        if header.config_hash != config_hash or header.run_id != sink.run_id:
            raise ArtifactError(f"checkpoint {path} belongs to a different run configuration; pass --force")
        sink.truncate_after(header.phase, header.epoch)
        logger.info("Resuming from %s", path.name)
        return ResumePoint(header.phase, header.epoch, state)

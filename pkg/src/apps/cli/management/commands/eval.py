"""Evaluate a checkpoint on the test split and write the metrics report."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from pathlib import Path
from typing import Any

from django.conf import settings
from django.core.management.base import BaseCommand, CommandParser

from apps.agents.bots import ABot, QBot
from apps.cli.artifacts import dataset_hash, read_checkpoint, read_dataset
from apps.cli.errors import ArtifactError
from apps.cli.runs import CONFIG_NAME, RunLock, RunManifest, dataset_dir
from apps.cli.support import command_errors
from apps.evaluation.runner import EvalSettings, EvaluationResult, evaluate
from apps.training.config import RunConfig
from apps.training.loop import TrainingState
from apps.world.scenes import World

logger = logging.getLogger(__name__)


def _load_state(config: RunConfig, world: World, path: Path) -> TrainingState:
    header, body = read_checkpoint(path)
    state = TrainingState(config, world)
    if header.phase == "rl":
        state.start_rl()
    state.load_state_dict(body)
    return state


def _write_outputs(out: Path, result: EvaluationResult, world: World, transcripts: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    report = result.report
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with (out / "percentile_curve.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["round", "mean", "std", "n"])
        for t, (mean, std, n) in enumerate(
            zip(report.percentile_by_round, report.percentile_std, report.percentile_n, strict=True)
        ):
            writer.writerow([t, repr(mean), repr(std), n])
    with (out / "transcripts.jsonl").open("w", encoding="utf-8") as handle:
        for transcript in result.transcripts[:transcripts]:
            handle.write(json.dumps(transcript.render(world.vocab)) + "\n")


class Command(BaseCommand):
    help = "Answer retrieval, per-round image retrieval and language quality of a trained checkpoint."

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("checkpoint", help="Checkpoint file inside a training run directory")
        parser.add_argument("--dataset", help="Dataset directory (default: MADF_RUN_DIR/<RUN_ID>)")
        parser.add_argument("--out", help="Output directory (default: <run dir>/eval/<checkpoint name>)")
        parser.add_argument("--qbot", type=int, default=0, help="Q-Bot pool member to evaluate")
        parser.add_argument("--abot", type=int, default=0, help="A-Bot pool member to evaluate")
        parser.add_argument("--context", choices=("oracle", "generated"), help="Override EVAL_CONTEXT")

    def handle(self, *args: Any, **options: Any) -> None:
        with command_errors():
            checkpoint = Path(options["checkpoint"])
            if not checkpoint.is_file():
                raise ArtifactError(f"no checkpoint at {checkpoint}")
            run_dir = checkpoint.resolve().parent.parent
            header, _ = read_checkpoint(checkpoint)
            try:
                config = RunConfig.from_text((run_dir / CONFIG_NAME).read_text(encoding="utf-8"))
            except OSError as e:
                raise ArtifactError(f"no run configuration next to {checkpoint}") from e
            if config.config_hash != header.config_hash:
                raise ArtifactError(f"{checkpoint} was not written under {run_dir / CONFIG_NAME}")

            data_dir = Path(options["dataset"]) if options["dataset"] else dataset_dir(header.run_id)
            if dataset_hash(data_dir) != RunManifest.read(run_dir).dataset_hash:
                raise ArtifactError(f"dataset in {data_dir} is not the one {run_dir.name} was trained on")
            dataset = read_dataset(data_dir, config.seed)
            world = dataset.world

            with RunLock(run_dir):
                state = _load_state(config, world, checkpoint)
                qbot: QBot = state.qbots[options["qbot"]]
                abot: ABot = state.abots[options["abot"]]
                reference = None
                sl_final = run_dir / "checkpoints" / f"sl_{config.sl_epochs - 1}.ckpt"
                if sl_final.is_file():
                    sl_state = _load_state(config, world, sl_final)
                    reference = (sl_state.qbots[0], sl_state.abots[0])
                else:
                    logger.warning("No final supervised checkpoint in %s; drift perplexity left empty", run_dir)

                eval_settings = EvalSettings.from_config(config)
                if options["context"]:
                    eval_settings = dataclasses.replace(eval_settings, context=options["context"])
                system = run_dir.name.partition(".")[2] or header.phase
                result = evaluate(
                    qbot,
                    abot,
                    world,
                    dataset.test,
                    eval_settings,
                    system=system,
                    reference=reference,
                    workers=settings.MADF_EVAL_WORKERS,
                )
                out = Path(options["out"]) if options["out"] else run_dir / "eval" / header.name
                _write_outputs(out, result, world, config.transcripts)

        report = result.report
        self.stdout.write(
            self.style.SUCCESS(
                f"{system} {header.name}: MRR {report.mrr:.4f}, mean rank {report.mean_rank:.2f}, "
                f"R@{report.k} {report.recall_at_k:.2f}, final percentile {report.percentile_by_round[-1]:.2f} "
                f"-> {out}"
            )
        )

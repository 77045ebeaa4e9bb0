"""Compare evaluated systems side by side and test their per-scene samples pairwise."""

from __future__ import annotations

import csv
import io
import itertools
import json
from pathlib import Path
from typing import Any

from django.core.management.base import BaseCommand, CommandError, CommandParser

from apps.cli.errors import ArtifactError
from apps.cli.support import EXIT_CONFIG, command_errors
from apps.evaluation.errors import EvaluationError
from apps.evaluation.runner import MetricsReport
from apps.evaluation.stats import mann_whitney_u

COLUMNS = (
    "mrr",
    "mean_rank",
    "recall_at_k",
    "final_percentile",
    "grammar_rate_q",
    "grammar_rate_a",
    "relevance_rate_q",
    "consistency_rate_a",
    "drift_perplexity",
    "distinct_1",
    "distinct_2",
)


def metric_value(report: MetricsReport, column: str) -> float | None:
    if column == "final_percentile":
        return report.percentile_by_round[-1]
    return getattr(report, column)


def _labels(reports: list[MetricsReport], paths: list[Path]) -> list[str]:
    systems = [report.system for report in reports]
    return [
        system if systems.count(system) == 1 else f"{system}:{path.parent.name}"
        for system, path in zip(systems, paths, strict=True)
    ]


def _cell(value: float | None) -> str:
    return "-" if value is None else f"{value:.4f}"


def comparison_rows(reports: list[MetricsReport], labels: list[str]) -> list[list[str]]:
    """One row per system: metric values, then deltas against the first system."""
    base = reports[0]
    rows = [["system", *COLUMNS, *(f"delta_{column}" for column in COLUMNS)]]
    for label, report in zip(labels, reports, strict=True):
        values = [metric_value(report, column) for column in COLUMNS]
        deltas = []
        for column, value in zip(COLUMNS, values, strict=True):
            reference = metric_value(base, column)
            deltas.append(None if value is None or reference is None else value - reference)
        rows.append([label, *map(_cell, values), *map(_cell, deltas)])
    return rows


def pairwise_rows(reports: list[MetricsReport], labels: list[str]) -> list[list[str]]:
    """Mann-Whitney U on every shared per-scene sample for every pair of systems."""
    rows = [["system_a", "system_b", "sample", "u", "p_value", "exact"]]
    for (label_a, a), (label_b, b) in itertools.combinations(zip(labels, reports, strict=True), 2):
        for sample in sorted(set(a.samples) & set(b.samples)):
            xs, ys = a.samples[sample], b.samples[sample]
            if not xs or not ys:
                continue
            result = mann_whitney_u(xs, ys)
            rows.append([label_a, label_b, sample, f"{result.u:.1f}", f"{result.p_value:.6g}", str(result.exact)])
    return rows


def _aligned(rows: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(width) for cell, width in zip(row, widths, strict=True)) for row in rows)


def _csv(rows: list[list[str]]) -> str:
    buffer = io.StringIO()
    csv.writer(buffer, lineterminator="\n").writerows(rows)
    return buffer.getvalue()


class Command(BaseCommand):
    help = "Tabulate two or more metrics.json reports and run pairwise Mann-Whitney U tests."

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("reports", nargs="+", help="metrics.json files written by eval")
        parser.add_argument("--out", help="Directory for comparison.csv and tests.csv")

    def handle(self, *args: Any, **options: Any) -> None:
        paths = [Path(path) for path in options["reports"]]
        if len(paths) < 2:
            raise CommandError("report needs at least two metrics files", returncode=EXIT_CONFIG)
        with command_errors():
            reports = []
            for path in paths:
                try:
                    reports.append(MetricsReport.from_dict(json.loads(path.read_text(encoding="utf-8"))))
                except (OSError, ValueError, EvaluationError) as e:
                    raise ArtifactError(f"cannot read report {path}: {e}") from e
            labels = _labels(reports, paths)
            comparison = comparison_rows(reports, labels)
            tests = pairwise_rows(reports, labels)

            if options["out"]:
                out = Path(options["out"])
                out.mkdir(parents=True, exist_ok=True)
                (out / "comparison.csv").write_text(_csv(comparison), encoding="utf-8")
                (out / "tests.csv").write_text(_csv(tests), encoding="utf-8")

        width = len(COLUMNS) + 1
        self.stdout.write(_aligned([row[:width] for row in comparison]))
        self.stdout.write("")
        self.stdout.write(_aligned([[row[0], *row[width:]] for row in comparison]))
        self.stdout.write("")
        self.stdout.write(_aligned(tests))

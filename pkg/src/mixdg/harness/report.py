"""Result files: per-row CSV, round-trippable JSONL, a per-target markdown table, and the diagnostic log."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..selection import CheckpointRecord, SelectionOutcome
from .runner import RunResult, TrialResult

FORMATS = ("csv", "jsonl", "md-table")
FILES = {"csv": "results.csv", "jsonl": "results.jsonl", "md-table": "report.md"}
CSV_COLUMNS = ("seed", "target", "variant", "policy", "chosen_iter", "target_acc", "regret")


def _as_list(results) -> list[RunResult]:
    results = [results] if isinstance(results, RunResult) else list(results)
    if not results or not any(r.trials for r in results):
        raise ValueError("nothing to report: results are empty")
    return results


def row_label(result: RunResult) -> str:
    return f"{result.trials[0].variant}/{result.config['selection']}"


@dataclass
class ReportTable:
    """Rows are method variants, columns are target domains followed by AVG."""

    targets: list[str]
    labels: list[str]
    values: np.ndarray  # (rows, targets + 1), accuracies in [0, 1]

    @property
    def header(self) -> list[str]:
        return ["method", *self.targets, "AVG"]

    def to_markdown(self, digits: int = 2) -> str:
        lines = ["| " + " | ".join(self.header) + " |", "|" + "---|" * len(self.header)]
        for label, row in zip(self.labels, self.values):
            cells = ["" if np.isnan(v) else f"{100 * v:.{digits}f}" for v in row]
            lines.append("| " + " | ".join([label, *cells]) + " |")
        return "\n".join(lines) + "\n"


def report_table(results: RunResult | Sequence[RunResult], policy: str | None = None) -> ReportTable:
    """Mean-over-seeds target accuracy of each run under its configured (or the given) policy."""
    results = _as_list(results)
    targets: list[str] = []
    for r in results:
        for t in r.trials:
            if t.target not in targets:
                targets.append(t.target)
    values = np.full((len(results), len(targets) + 1), np.nan)
    for k, r in enumerate(results):
        pol = policy or r.config["selection"]
        for c, name in enumerate(targets):
            accs = [t.outcomes[pol].chosen_target_acc for t in r.trials if t.target == name]
            if accs:
                values[k, c] = float(np.mean(accs))
        values[k, -1] = float(np.mean(values[k, :-1]))
    return ReportTable(targets, [row_label(r) for r in results], values)


def write_csv(results: Iterable[RunResult], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in results:
            for row in r.rows():
                w.writerow({k: "" if row[k] is None else repr(row[k]) if isinstance(row[k], float) else row[k]
                            for k in CSV_COLUMNS})


def trial_to_dict(t: TrialResult) -> dict:
    return {"seed": t.seed, "target": t.target, "variant": t.variant,
            "outcomes": {k: asdict(o) for k, o in t.outcomes.items()},
            "records": [asdict(r) for r in t.records], "loss_curves": t.loss_curves,
            "pareto": t.pareto, "aborted": t.aborted}


def trial_from_dict(d: dict) -> TrialResult:
    return TrialResult(d["seed"], d["target"], d["variant"],
                       {k: SelectionOutcome(**o) for k, o in d["outcomes"].items()},
                       [CheckpointRecord(**r) for r in d["records"]], d["loss_curves"], d["pareto"], d["aborted"])


def dumps_jsonl(results: Iterable[RunResult]) -> str:
    lines = []
    for run, r in enumerate(results):
        lines.append(json.dumps({"kind": "config", "run": run, "config": r.config}, sort_keys=True))
        for t in r.trials:
            lines.append(json.dumps({"kind": "trial", "run": run, **trial_to_dict(t)}, sort_keys=True))
    return "\n".join(lines) + "\n"


def read_jsonl(path) -> list[RunResult]:
    runs: dict[int, RunResult] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        run = d.pop("run")
        if d.pop("kind") == "config":
            runs[run] = RunResult(d["config"], [])
        else:
            runs[run].trials.append(trial_from_dict(d))
    return [runs[k] for k in sorted(runs)]


def emit_report(results: RunResult | Sequence[RunResult], out_dir, formats: Sequence[str] = FORMATS,
                diag: bool | None = None) -> dict[str, Path]:
    """Write the requested formats into ``out_dir``; returns ``{format: path}``.

    ``diag.jsonl`` is written when ``diag`` is true (default: any run has ``diag`` set).
    Wall-clock goes to ``timing.json`` so the result files stay byte-for-byte reproducible.
    """
    results = _as_list(results)
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ValueError(f"unknown report formats {bad}; choose from {FORMATS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for fmt in formats:
        path = out / FILES[fmt]
        if fmt == "csv":
            write_csv(results, path)
        elif fmt == "jsonl":
            path.write_text(dumps_jsonl(results))
        else:
            path.write_text(report_table(results).to_markdown())
        written[fmt] = path
    if diag if diag is not None else any(r.config.get("diag") for r in results):
        path = out / "diag.jsonl"
        path.write_text("".join(json.dumps(e, sort_keys=True) + "\n"
                                for r in results for t in r.trials for e in t.diag))
        written["diag"] = path
    (out / "timing.json").write_text(json.dumps({row_label(r): r.wall_clock for r in results}, indent=2))
    return written

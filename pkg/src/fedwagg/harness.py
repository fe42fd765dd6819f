"""Experiment harness: dataset ingestion, experiment runs, report emission.

Runs the protocol on CSV data (numeric feature columns, final binary label
column), collects per-step wall time and exact per-step byte counts from
the transcript, and emits reports shaped like the benchmark table: one row
per step (Init, ComE, PoKE, PoKM, WAgg) plus totals, as JSON, CSV or a
markdown table.  A mask-only baseline (verification off, unweighted) can be
run on the same seed for overhead ratios.
"""

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ._rng import HashDrbg
from .bus import ROUND_STEPS, SERVER_ID, MessageBus, StepTag, Transcript
from .protocol import (
    Metrics,
    ProtocolAbort,
    ProtocolConfig,
    ProtocolRunner,
    RoundState,
)

REPORT_STEP_KEYS = ("Init", "ComE", "PoKE", "PoKM", "WAgg")
_STEP_BY_KEY = dict(zip(REPORT_STEP_KEYS, ROUND_STEPS))


class DatasetError(ValueError):
    """CSV ingestion failure; the message names the offending line."""


@dataclass
class ExperimentSpec:
    config: ProtocolConfig
    dataset_path: str
    per_client: int
    benchmark_size: int = 500
    output_path: str | None = None
    output_format: str = "json"
    compare_baseline: bool = False


@dataclass
class StepMetrics:
    user_seconds: float = 0.0
    user_bytes: float = 0.0
    server_seconds: float = 0.0
    server_bytes: int = 0

    def as_dict(self) -> dict:
        return {
            "user_seconds": self.user_seconds,
            "user_bytes": self.user_bytes,
            "server_seconds": self.server_seconds,
            "server_bytes": self.server_bytes,
        }


@dataclass
class MetricsReport:
    """Per-step costs plus round outcomes.

    user columns: average over participating clients (own compute, own
    sent+received bytes).  server columns: whole-step wall time and total
    step traffic (the server relays every message).
    """

    config: dict
    steps: dict[str, StepMetrics]
    totals: StepMetrics
    setup_bytes: int = 0
    setup_seconds: float = 0.0
    realized_r1: float = 0.0
    realized_r2: float = 0.0
    excluded_users: tuple[int, ...] = ()
    weight_records: list[dict] = field(default_factory=list)
    final_model: list[float] | None = None
    aborted: str | None = None
    baseline_ratios: dict | None = None
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "steps": {k: v.as_dict() for k, v in self.steps.items()},
            "totals": self.totals.as_dict(),
            "setup_bytes": self.setup_bytes,
            "setup_seconds": self.setup_seconds,
            "realized_r1": self.realized_r1,
            "realized_r2": self.realized_r2,
            "excluded_users": list(self.excluded_users),
            "weight_records": self.weight_records,
            "final_model": self.final_model,
            "aborted": self.aborted,
            "baseline_ratios": self.baseline_ratios,
            "wall_seconds": self.wall_seconds,
        }

    def deterministic_view(self) -> dict:
        """The report without wall-clock fields (those vary run to run)."""
        out = self.to_dict()
        out.pop("wall_seconds")
        out.pop("setup_seconds")
        for step in out["steps"].values():
            step.pop("user_seconds")
            step.pop("server_seconds")
        out["totals"].pop("user_seconds")
        out["totals"].pop("server_seconds")
        return out


# --- dataset ingestion --------------------------------------------------------

def _parse_csv_rows(path: str) -> list[list[float]]:
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                if lineno == 1:
                    continue  # header row permitted
                raise DatasetError(f"line {lineno}: non-numeric value in {row!r}")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DatasetError(
                    f"line {lineno}: expected {width} columns, found {len(values)}"
                )
            if values[-1] not in (0.0, 1.0):
                raise DatasetError(
                    f"line {lineno}: label {values[-1]!r} is not binary"
                )
            rows.append(values)
    if width is not None and width < 2:
        raise DatasetError("need at least one feature column plus the label")
    return rows


def load_dataset(path: str, per_client: int, n_clients: int, benchmark: int,
                 rng: HashDrbg):
    """Split a CSV into per-client datasets and a disjoint benchmark.

    Features are min-max normalized to [0, 1] per column.  The benchmark is
    a random subset without replacement; each client draws per_client
    samples with replacement from the remainder.
    """
    rows = _parse_csv_rows(path)
    if len(rows) < benchmark + 1:
        raise DatasetError(
            f"{len(rows)} data rows cannot supply a benchmark of {benchmark} "
            "plus at least one client sample"
        )
    data = np.asarray(rows, dtype=float)
    features, labels = data[:, :-1], data[:, -1].astype(int)
    mins = features.min(axis=0)
    maxs = features.max(axis=0)
    span = np.where(maxs > mins, maxs - mins, 1.0)
    features = np.where(maxs > mins, (features - mins) / span, 0.0)

    order = list(range(len(rows)))
    bench_idx = rng.choice_subset(order, benchmark)
    bench_set = set(bench_idx)
    pool = [i for i in order if i not in bench_set]
    bench = (features[bench_idx], labels[bench_idx])

    clients = []
    for _ in range(n_clients):
        picks = [pool[rng.randbelow(len(pool))] for _ in range(per_client)]
        clients.append((features[picks], labels[picks]))
    return clients, bench


def write_synthetic_csv(path: str, rows: int, features: int, seed: int = 0,
                        header: bool = True) -> None:
    """Linearly separable-ish synthetic data in the ingestion format."""
    rng = np.random.default_rng(seed)
    scales = rng.uniform(0.5, 20.0, features)
    x = rng.uniform(0.0, 1.0, (rows, features)) * scales
    w = rng.normal(0.0, 1.0, features)
    noise = rng.normal(0.0, 0.25, rows)
    scores = (x / scales) @ w + noise
    y = (scores > np.median(scores)).astype(int)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        if header:
            writer.writerow([f"x{i}" for i in range(features)] + ["label"])
        for i in range(rows):
            writer.writerow([f"{v:.6f}" for v in x[i]] + [int(y[i])])


# --- experiment execution ------------------------------------------------------

def _client_ids_in_step(transcript: Transcript, step: StepTag) -> set[int]:
    ids = set()
    for r in transcript.records:
        if r.step != step:
            continue
        for party in (r.sender, r.receiver):
            if party != SERVER_ID:
                ids.add(party)
    return ids


def build_report(config: ProtocolConfig, metrics: Metrics,
                 transcript: Transcript, states: list[RoundState],
                 aborted: str | None, wall_seconds: float) -> MetricsReport:
    steps: dict[str, StepMetrics] = {}
    for key, tag in _STEP_BY_KEY.items():
        clients = sorted(_client_ids_in_step(transcript, tag))
        per_client = [transcript.bytes_for(step=tag, party=uid) for uid in clients]
        steps[key] = StepMetrics(
            user_seconds=metrics.mean_user_seconds(tag),
            user_bytes=sum(per_client) / len(per_client) if per_client else 0.0,
            server_seconds=metrics.server_seconds.get(tag, 0.0),
            server_bytes=transcript.bytes_for(step=tag),
        )
    totals = StepMetrics(
        user_seconds=sum(s.user_seconds for s in steps.values()),
        user_bytes=sum(s.user_bytes for s in steps.values()),
        server_seconds=sum(s.server_seconds for s in steps.values()),
        server_bytes=sum(s.server_bytes for s in steps.values()),
    )
    last = states[-1] if states else None
    return MetricsReport(
        config={
            "n_clients": config.n_clients,
            "threshold": config.resolved_threshold,
            "paillier_bits": config.paillier_bits,
            "kappa": config.kappa,
            "alpha": config.alpha,
            "fraction_bits": config.fraction_bits,
            "integer_bits": config.integer_bits,
            "seed": config.seed,
            "rounds": config.rounds,
            "baseline": config.baseline,
            "dropout_phase1": config.dropout.phase1_fraction,
            "dropout_phase2": config.dropout.phase2_fraction,
            "adversaries": [
                {"behavior": a.behavior, "target": a.target, "round": a.trigger_round}
                for a in config.adversaries
            ],
        },
        steps=steps,
        totals=totals,
        setup_bytes=transcript.bytes_for(step=StepTag.SETUP),
        setup_seconds=metrics.server_seconds.get(StepTag.SETUP, 0.0),
        realized_r1=last.realized_r1 if last else 0.0,
        realized_r2=last.realized_r2 if last else 0.0,
        excluded_users=last.excluded if last else (),
        weight_records=[r.as_dict() for r in last.weight_records] if last else [],
        final_model=last.final_model if last else None,
        aborted=aborted,
        wall_seconds=wall_seconds,
    )


def execute(config: ProtocolConfig, client_datasets, benchmark):
    """Run the protocol on in-memory data; aborts become report rows."""
    bus = MessageBus(Transcript())
    metrics = Metrics()
    start = time.perf_counter()
    aborted = None
    runner = ProtocolRunner(config, client_datasets, benchmark, bus=bus,
                            metrics=metrics)
    try:
        runner.run()
    except ProtocolAbort as exc:
        aborted = str(exc)
    report = build_report(config, metrics, bus.transcript, runner.rounds,
                          aborted, time.perf_counter() - start)
    return report, bus.transcript, runner


def aggregation_phase_bytes(report: MetricsReport) -> int:
    """Bytes of the masking/aggregation phase (Init + PoKM + WAgg)."""
    return (report.steps["Init"].server_bytes
            + report.steps["PoKM"].server_bytes
            + report.steps["WAgg"].server_bytes)


def compare_to_baseline(full: MetricsReport, baseline: MetricsReport) -> dict:
    """Overhead ratios of the full scheme over the mask-only baseline."""
    ratios = {}
    for key in REPORT_STEP_KEYS:
        base = baseline.steps[key].server_bytes
        ratios[f"{key}_bytes"] = (full.steps[key].server_bytes / base
                                  if base else math.inf)
    agg_base = aggregation_phase_bytes(baseline)
    ratios["aggregation_phase_bytes"] = (aggregation_phase_bytes(full) / agg_base
                                         if agg_base else math.inf)
    base_total = baseline.totals.server_bytes
    ratios["total_bytes"] = (full.totals.server_bytes / base_total
                             if base_total else math.inf)
    return ratios


def run_experiment(spec: ExperimentSpec):
    """Load data, run the configured experiment, optionally diff a baseline."""
    rng = HashDrbg(spec.config.seed, "dataset-split")
    clients, bench = load_dataset(spec.dataset_path, spec.per_client,
                                  spec.config.n_clients, spec.benchmark_size, rng)
    report, transcript, _ = execute(spec.config, clients, bench)
    if spec.compare_baseline and not spec.config.baseline:
        base_config = ProtocolConfig(
            n_clients=spec.config.n_clients, threshold=spec.config.threshold,
            paillier_bits=spec.config.paillier_bits, kappa=spec.config.kappa,
            alpha=spec.config.alpha, fraction_bits=spec.config.fraction_bits,
            integer_bits=spec.config.integer_bits, seed=spec.config.seed,
            rounds=spec.config.rounds, epochs=spec.config.epochs,
            learning_rate=spec.config.learning_rate, baseline=True,
            dropout=spec.config.dropout,
        )
        base_report, _, _ = execute(base_config, clients, bench)
        report.baseline_ratios = compare_to_baseline(report, base_report)
    return report, transcript


def disparity_bytes_per_client(transcript: Transcript, uid: int) -> int:
    """Communication of one client during the disparity phase (ComE + PoKE)."""
    return (transcript.bytes_for(step=StepTag.COMPE, party=uid)
            + transcript.bytes_for(step=StepTag.POKE, party=uid))


# --- report emission ------------------------------------------------------------

def _format_cell(seconds: float, byte_count: float) -> str:
    return f"{seconds:.3f}/{byte_count / 1e6:.4f}"


def emit_report(report: MetricsReport, fmt: str, path: str) -> str:
    """Serialize the report; markdown mirrors the benchmark table shape."""
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["step", "user_seconds", "user_bytes",
                         "server_seconds", "server_bytes"])
        for key in REPORT_STEP_KEYS:
            s = report.steps[key]
            writer.writerow([key, f"{s.user_seconds:.6f}", f"{s.user_bytes:.1f}",
                             f"{s.server_seconds:.6f}", s.server_bytes])
        t = report.totals
        writer.writerow(["Total", f"{t.user_seconds:.6f}", f"{t.user_bytes:.1f}",
                         f"{t.server_seconds:.6f}", t.server_bytes])
        text = buf.getvalue()
    elif fmt in ("markdown", "markdown-table", "md"):
        r1 = f"{report.realized_r1 * 100:.0f}%"
        r2 = f"{report.realized_r2 * 100:.0f}%"
        header = "| party | R1 | R2 | " + " | ".join(REPORT_STEP_KEYS) + " | Total |"
        rule = "|" + "---|" * (len(REPORT_STEP_KEYS) + 4)
        user_cells = [_format_cell(report.steps[k].user_seconds,
                                   report.steps[k].user_bytes)
                      for k in REPORT_STEP_KEYS]
        server_cells = [_format_cell(report.steps[k].server_seconds,
                                     report.steps[k].server_bytes)
                        for k in REPORT_STEP_KEYS]
        lines = [
            "Run time (s) / communication (MB) per step",
            "",
            header,
            rule,
            "| user | " + r1 + " | " + r2 + " | " + " | ".join(user_cells)
            + " | " + _format_cell(report.totals.user_seconds,
                                   report.totals.user_bytes) + " |",
            "| server | " + r1 + " | " + r2 + " | " + " | ".join(server_cells)
            + " | " + _format_cell(report.totals.server_seconds,
                                   report.totals.server_bytes) + " |",
        ]
        if report.aborted:
            lines.append("")
            lines.append(f"Aborted: {report.aborted}")
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w") as handle:
        handle.write(text)
    return path

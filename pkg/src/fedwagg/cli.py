"""Command-line interface.

Subcommands:

* ``run``: one experiment from a CSV dataset; writes the report in the
  chosen format and renders the step figures next to it.
* ``sweep``: repeats an experiment over a grid of per-client dataset sizes
  and writes the disparity-cost scaling data (CSV + line figure).
* ``gen-data``: synthetic CSV in the ingestion format.
"""

import argparse
import csv
import os
import sys

from .harness import (
    ExperimentSpec,
    disparity_bytes_per_client,
    emit_report,
    run_experiment,
    write_synthetic_csv,
)
from .protocol import ADVERSARY_BEHAVIORS, AdversaryScript, DropoutSchedule, ProtocolConfig


def _parse_adversary(text: str) -> AdversaryScript:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(
            f"adversary spec {text!r}; expected behavior:target[:round]"
        )
    behavior, target = parts[0], parts[1]
    if behavior not in ADVERSARY_BEHAVIORS:
        raise argparse.ArgumentTypeError(
            f"unknown behavior {behavior!r}; choose from {', '.join(ADVERSARY_BEHAVIORS)}"
        )
    round_no = int(parts[2]) if len(parts) == 3 else 0
    return AdversaryScript(behavior=behavior, target=int(target),
                           trigger_round=round_no)


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--clients", type=int, default=8)
    parser.add_argument("--threshold", type=int, default=None,
                        help="default: floor(2n/3)+1")
    parser.add_argument("--key-bits", type=int, default=512)
    parser.add_argument("--kappa", type=int, default=80)
    parser.add_argument("--alpha", type=float, default=1.0)
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--per-client", type=int, default=20)
    parser.add_argument("--benchmark-size", type=int, default=500)
    parser.add_argument("--dropout-phase1", type=float, default=0.0)
    parser.add_argument("--dropout-phase2", type=float, default=0.0)
    parser.add_argument("--adversary", action="append", type=_parse_adversary,
                        default=[], metavar="BEHAVIOR:TARGET[:ROUND]")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--rounds", type=int, default=1)
    parser.add_argument("--baseline", action="store_true",
                        help="mask-only run: no disparity, no verification")
    parser.add_argument("--compare-baseline", action="store_true",
                        help="also run the baseline on the same seed and report ratios")
    parser.add_argument("--fraction-bits", type=int, default=27)
    parser.add_argument("--integer-bits", type=int, default=17)
    parser.add_argument("--epochs", type=int, default=40)
    parser.add_argument("--learning-rate", type=float, default=0.25)
    parser.add_argument("--binary-cross-entropy", action="store_true")
    parser.add_argument("--out", default="report")
    parser.add_argument("--format", default="json",
                        choices=["json", "csv", "markdown"])
    parser.add_argument("--no-figures", action="store_true")


def _config_from_args(args, per_client_override=None, baseline=None) -> ProtocolConfig:
    return ProtocolConfig(
        n_clients=args.clients,
        threshold=args.threshold,
        paillier_bits=args.key_bits,
        kappa=args.kappa,
        alpha=args.alpha,
        fraction_bits=args.fraction_bits,
        integer_bits=args.integer_bits,
        seed=args.seed,
        rounds=args.rounds,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        binary_cross_entropy=args.binary_cross_entropy,
        baseline=args.baseline if baseline is None else baseline,
        dropout=DropoutSchedule(phase1_fraction=args.dropout_phase1,
                                phase2_fraction=args.dropout_phase2),
        adversaries=tuple(args.adversary),
    )


def _extension(fmt: str) -> str:
    return {"json": "json", "csv": "csv", "markdown": "md"}[fmt]


def _cmd_run(args) -> int:
    spec = ExperimentSpec(
        config=_config_from_args(args),
        dataset_path=args.dataset,
        per_client=args.per_client,
        benchmark_size=args.benchmark_size,
        compare_baseline=args.compare_baseline,
    )
    report, _ = run_experiment(spec)
    out_path = f"{args.out}.{_extension(args.format)}"
    emit_report(report, args.format, out_path)
    written = [out_path]
    if not args.no_figures:
        from .figures import render_report_figures

        outdir = os.path.dirname(out_path) or "."
        stem = os.path.splitext(os.path.basename(out_path))[0]
        written.extend(render_report_figures(report, outdir, stem))
    for path in written:
        print(path)
    if report.aborted:
        print(f"aborted: {report.aborted}", file=sys.stderr)
        return 2
    return 0


def _cmd_sweep(args) -> int:
    sizes = [int(s) for s in args.per_client_grid.split(",") if s.strip()]
    rows = []
    for size in sizes:
        spec = ExperimentSpec(
            config=_config_from_args(args),
            dataset_path=args.dataset,
            per_client=size,
            benchmark_size=args.benchmark_size,
        )
        report, transcript = run_experiment(spec)
        uids = range(1, args.clients + 1)
        per_client = [disparity_bytes_per_client(transcript, uid) for uid in uids]
        rows.append((size, sum(per_client) / len(per_client),
                     report.totals.server_bytes))
    out_csv = f"{args.out}_sweep.csv"
    with open(out_csv, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["per_client", "disparity_bytes_per_client", "total_bytes"])
        writer.writerows(rows)
    written = [out_csv]
    if not args.no_figures:
        from .figures import render_scaling_figure

        fig_path = f"{args.out}_sweep.png"
        render_scaling_figure([r[0] for r in rows], [r[1] for r in rows], fig_path)
        written.append(fig_path)
    for path in written:
        print(path)
    return 0


def _cmd_gen_data(args) -> int:
    write_synthetic_csv(args.out, rows=args.rows, features=args.features,
                        seed=args.seed)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedwagg",
        description="Secure weighted aggregation benchmark for federated learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run one experiment")
    _add_run_arguments(run_parser)
    run_parser.set_defaults(fn=_cmd_run)

    sweep_parser = sub.add_parser("sweep", help="sweep per-client dataset sizes")
    _add_run_arguments(sweep_parser)
    sweep_parser.add_argument("--per-client-grid", default="5,10,15,20",
                              help="comma-separated sample counts")
    sweep_parser.set_defaults(fn=_cmd_sweep)

    gen_parser = sub.add_parser("gen-data", help="write a synthetic CSV dataset")
    gen_parser.add_argument("--out", required=True)
    gen_parser.add_argument("--rows", type=int, default=1000)
    gen_parser.add_argument("--features", type=int, default=8)
    gen_parser.add_argument("--seed", type=int, default=0)
    gen_parser.set_defaults(fn=_cmd_gen_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

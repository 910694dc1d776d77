import argparse
import csv
import logging
import os
import sys
import time

import numpy as np

import utils
from constant import EXIT_DECLINED, EXIT_ERROR, EXIT_OK, REPORT_CSV_COLUMNS, TABLE_COLUMNS
from data.dataset_utils import load_poses, load_ranges, load_truth, write_poses, write_ranges, write_truth
from eval.check import check_run_report
from eval.eval import format_row
from sim.mc import SWEEP_COLUMNS, anchor_id, run_mc, run_prefix_sweep, simulate_inputs
from UWBInit import __version__
from UWBInit.errors import DivergedError
from UWBInit.initializer import AnchorManager, EventKind, Phase

logger = logging.getLogger("uwb_init")


def _csv_value(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_value(row[c]) for c in columns])


def _write_json(path, obj):
    with open(path, "w") as f:
        f.write(utils.canonical_json(obj))


def cmd_simulate(cfg: utils.ToolConfig, out_dir: str):
    """Writes poses.csv, ranges.csv and truth.csv for one simulated run."""
    mc = utils.mc_config(cfg)
    poses, anchors, streams = simulate_inputs(mc, 0)
    messages = sorted(
        ((float(t), k, float(d)) for k, stream in enumerate(streams) for t, d in zip(stream.t, stream.d)),
        key=lambda m: (m[0], m[1]),
    )
    os.makedirs(out_dir, exist_ok=True)
    write_poses(os.path.join(out_dir, "poses.csv"), poses)
    write_ranges(os.path.join(out_dir, "ranges.csv"), [(t, anchor_id(k), d) for t, k, d in messages])
    write_truth(os.path.join(out_dir, "truth.csv"),
                {anchor_id(k): (anchor, mc.noise.bias) for k, anchor in enumerate(anchors)})
    n_outliers = sum(int(stream.is_outlier.sum()) for stream in streams)
    print(f"simulated {mc.trajectory.kind}: {len(poses)} poses, {len(anchors)} anchors, "
          f"{len(messages)} ranges ({n_outliers} outliers) -> {out_dir}")
    return EXIT_OK


def _anchor_record(session, truth):
    estimate = session.estimate
    initialized = session.phase == Phase.INITIALIZED
    record = {
        "anchor_id": session.anchor_id,
        "phase": session.phase.value,
        "t_init": session.t_init,
        "pdop_at_init": session.pdop_at_init,
        "final_pdop": session.current_pdop,
        "position": estimate.position if initialized else None,
        "bias": estimate.bias if initialized else None,
        "converged": estimate.converged if initialized else None,
        "alpha_final": estimate.alpha_final if initialized else None,
        "residual_rms": estimate.residual_rms if initialized else None,
        "n_samples_used": session.n_used,
        "n_accepted": session.filter_state.accepted,
        "n_rejected": session.filter_state.rejected,
        "n_dropped": session.n_dropped,
        "n_attempts": session.n_attempts,
        "max_gap": session.filter_state.max_gap,
    }
    if truth is not None:
        record["error_vs_truth"] = None
        if initialized and session.anchor_id in truth:
            record["error_vs_truth"] = estimate.error_to(truth[session.anchor_id][0])
    return record


def cmd_run(cfg: utils.ToolConfig, poses_path: str, ranges_path: str, out_dir: str, truth_path: str = None):
    """Replays recorded streams through the anchor manager and writes report.json and report.csv."""
    poses = load_poses(poses_path)
    messages = load_ranges(ranges_path)
    truth = load_truth(truth_path) if truth_path is not None else None
    pipeline = utils.pipeline_config(cfg)

    manager = AnchorManager(poses, pipeline)
    counts = {kind.value: 0 for kind in EventKind}
    initializations = []
    start = time.perf_counter()
    for t, aid, d in messages:
        for event in manager.ingest(t, aid, d):
            counts[event.kind.value] += 1
            if event.kind == EventKind.INITIALIZED:
                initializations.append(event.to_dict())
    sessions = manager.finish()
    elapsed = time.perf_counter() - start
    # wall-clock figures stay out of the report so reruns are byte-identical
    logger.info(f"replayed {len(messages)} ranges in {elapsed:.2f} s ({len(messages) / max(elapsed, 1e-9):.0f} samples/s)")

    anchors = [_anchor_record(sessions[aid], truth) for aid in sorted(sessions)]
    checksums = {"poses": utils.sha256_file(poses_path), "ranges": utils.sha256_file(ranges_path)}
    if truth_path is not None:
        checksums["truth"] = utils.sha256_file(truth_path)
    report = {
        "version": __version__,
        "config": utils.config_echo(cfg),
        "checksums": checksums,
        "anchors": anchors,
        "initializations": initializations,
        "event_counts": counts,
    }
    report["warnings"] = check_run_report(report, cfg.pdop_threshold)

    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "report.json"), report)
    csv_rows = []
    for record in anchors:
        position = record["position"] if record["position"] is not None else [None] * 3
        row = dict(record, x=position[0], y=position[1], z=position[2])
        row.setdefault("error_vs_truth", None)
        csv_rows.append(row)
    _write_csv(os.path.join(out_dir, "report.csv"), REPORT_CSV_COLUMNS, csv_rows)

    n_init = sum(1 for record in anchors if record["phase"] == Phase.INITIALIZED.value)
    print(f"{n_init}/{len(anchors)} anchors initialized from {len(messages)} ranges -> {out_dir}")
    for record in anchors:
        if record["phase"] == Phase.INITIALIZED.value:
            error = record.get("error_vs_truth")
            suffix = f", error {error:.3f} m" if error is not None else ""
            print(f"  {record['anchor_id']}: t_init {record['t_init']:.2f} s, PDOP {record['pdop_at_init']:.3f}{suffix}")
        else:
            print(f"  {record['anchor_id']}: {record['phase']}, PDOP {record['final_pdop']:.3f}")
    return EXIT_OK if n_init == len(anchors) else EXIT_DECLINED


def cmd_evaluate(cfg: utils.ToolConfig, out_dir: str):
    """Monte Carlo comparison per scenario, one table_<scenario>.csv each plus evaluate.json."""
    os.makedirs(out_dir, exist_ok=True)
    reports = []
    for scenario in utils.scenario_names(cfg):
        report = run_mc(utils.mc_config(cfg, scenario))
        reports.append(report.to_dict())
        _write_csv(os.path.join(out_dir, f"table_{report.scenario}.csv"), TABLE_COLUMNS, report.rows)
        print(f"scenario {report.scenario} ({report.runs} runs)")
        for row in report.rows:
            print("  " + format_row(row))
    _write_json(os.path.join(out_dir, "evaluate.json"),
                {"version": __version__, "config": utils.config_echo(cfg), "scenarios": reports})
    return EXIT_OK


def cmd_sweep(cfg: utils.ToolConfig, out_dir: str):
    """PDOP estimators and initialization error over growing data prefixes."""
    rows = run_prefix_sweep(utils.mc_config(cfg), cfg.sweep_anchor, cfg.sweep_step, cfg.sweep_min_n)
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "sweep.csv"), SWEEP_COLUMNS, rows)
    print(f"{len(rows)} sweep rows -> {out_dir}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(description="Online initialization of unknown UWB anchors")
    parser.add_argument("--log-level", default="INFO", help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="flat `key = value` file overriding configs/config.yaml")
        p.add_argument("--seed", type=int, default=None, help="base seed, overrides the config")
        p.add_argument("--out", default="results", help="output directory")

    common(sub.add_parser("simulate", help="write a synthetic poses/ranges/truth dataset"))
    run = sub.add_parser("run", help="replay recorded poses and ranges through the initializer")
    common(run)
    run.add_argument("--poses", required=True, help="CSV with header t,x,y,z")
    run.add_argument("--ranges", required=True, help="CSV with header t,anchor_id,range")
    run.add_argument("--truth", default=None, help="optional CSV with header anchor_id,x,y,z,bias")
    common(sub.add_parser("evaluate", help="Monte Carlo comparison of initialization strategies"))
    common(sub.add_parser("sweep", help="PDOP estimators over growing data prefixes"))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = utils.resolve_config(args.config, args.seed)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "run":
            return cmd_run(cfg, args.poses, args.ranges, args.out, args.truth)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.out)
        return cmd_sweep(cfg, args.out)
    except (ValueError, OSError, DivergedError) as exc:
        logger.error(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())

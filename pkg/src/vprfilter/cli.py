"""Command-line pipeline: synth, calibrate, match, eval, pool.

Exit codes: 0 success, 1 usage error, 2 data error.  Result files are
byte-reproducible for a fixed seed; wall-clock timings go to a separate
report file so they never perturb result bytes.  Each subcommand accepts
``--config FILE`` (YAML mapping of flag names to values); explicit flags
take precedence over the config file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .evaluation import EvalConfig, GroundTruth, PRCurve, pr_sweep, timing_report
from .filtering import (
    CalibConfig,
    build_triplets,
    load_filter_result,
    run_calibration,
    save_filter_result,
)
from .matching import TemplateMatcher
from .pooling import pyramid_pool, flatten
from .synth import SynthParams, choose_signal_channels, generate, write_dataset
from .tensor_io import load_traverse, read_tensor

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

log = logging.getLogger("vprfilter")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config file must be a YAML mapping")
    return doc


def _resolve(args, config: dict, name: str, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _load_correspondences(path) -> list[int]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if isinstance(doc, dict):
        doc = doc.get("correspondences")
    if not isinstance(doc, list) or not all(isinstance(c, int) for c in doc):
        raise ValueError(f"{path}: expected a YAML list of reference indices")
    return [int(c) for c in doc]


def _check_inputs_exist(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(f"input path does not exist: {p}")


# ---------------------------------------------------------------------------
# calibrate


def cmd_calibrate(args) -> int:
    config_file = _load_config_file(args.config)
    threshold = float(_resolve(args, config_file, "threshold", 0.1))
    num_calib = int(_resolve(args, config_file, "num_calib", 50))
    seed = int(_resolve(args, config_file, "seed", 0))
    radius = int(_resolve(args, config_file, "exclusion_radius", 20))
    _check_inputs_exist(args.ref_manifest, args.calib_manifest, args.correspondences)

    ref_manifest, ref_tensors = load_traverse(args.ref_manifest)
    calib_manifest, calib_tensors = load_traverse(args.calib_manifest)
    correspondences = _load_correspondences(args.correspondences)

    if len(calib_tensors) < num_calib:
        log.warning(
            "calibration traverse has %d images, fewer than the requested %d; using all",
            len(calib_tensors),
            num_calib,
        )
    used = correspondences[: min(num_calib, len(calib_tensors))]
    if used and ref_manifest.entries and np.mean(used) > 0.5 * len(ref_manifest.entries):
        log.warning(
            "calibration matches center on the latter half of the reference "
            "traverse; calibration images conventionally precede the query traverse"
        )

    calib_config = CalibConfig(
        num_calibration_images=num_calib,
        gradient_cutoff=threshold,
        rng_seed=seed,
        negative_exclusion_radius=radius,
    )
    ref_pooled = [pyramid_pool(t) for t in ref_tensors]
    calib_pooled = [pyramid_pool(t) for t in calib_tensors]
    triplets = build_triplets(calib_pooled, ref_pooled, correspondences, calib_config)
    result, _ = run_calibration(triplets, calib_config)

    layer = calib_manifest.layer_name or ref_manifest.layer_name
    save_filter_result(result, args.out, layer_name=layer, config=calib_config)
    print(
        f"calibrated on {len(triplets)} triplets: "
        f"kept {result.kept_count} of {result.channels} channels -> {args.out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# match


def _write_match_table(path, outcomes, channels: int, kept_count: int, window: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# match table\n")
        fh.write(f"# channels: {channels}\n")
        fh.write(f"# kept_count: {kept_count}\n")
        fh.write(f"# exclusion_window: {window}\n")
        fh.write("# columns: query_id\tbest_index\tquality\tbest_distance\n")
        for o in outcomes:
            fh.write(f"{o.query_id}\t{o.best_index}\t{o.quality!r}\t{o.best_distance!r}\n")


def read_match_table(path) -> tuple[list, dict]:
    """Parse a match table back into lightweight outcome rows plus metadata."""
    from .matching import MatchOutcome

    rows, meta = [], {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, _, value = body.partition(":")
                    meta[key.strip()] = value.strip()
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}: malformed match-table row: {line!r}")
            rows.append(
                MatchOutcome(
                    query_id=parts[0],
                    best_index=int(parts[1]),
                    quality=float(parts[2]),
                    best_distance=float(parts[3]),
                )
            )
    if not rows:
        raise ValueError(f"{path}: match table holds no rows")
    return rows, meta


def cmd_match(args) -> int:
    config_file = _load_config_file(args.config)
    window = int(_resolve(args, config_file, "window", 10))
    _check_inputs_exist(args.query_manifest, args.ref_manifest)

    query_manifest, query_tensors = load_traverse(args.query_manifest)
    _, ref_tensors = load_traverse(args.ref_manifest)
    channels = ref_tensors[0].channels

    if args.no_filter:
        kept = list(range(channels))
    else:
        _check_inputs_exist(args.filter)
        result = load_filter_result(args.filter)
        if result.channels != channels:
            raise ValueError(
                f"filter file covers {result.channels} channels, tensors have {channels}"
            )
        kept = [int(c) for c in result.kept_set]

    query_pooled = [pyramid_pool(t) for t in query_tensors]
    ref_pooled = [pyramid_pool(t) for t in ref_tensors]
    matcher = TemplateMatcher(exclusion_window=window)
    matcher.fit(ref_pooled, kept=kept)
    outcomes, times = matcher.timed_match(query_pooled, ids=query_manifest.ids())

    _write_match_table(args.out, outcomes, channels, len(kept), window)
    timing_path = args.timing_out or f"{args.out}.timing.yaml"
    with open(timing_path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(
            {
                "n_queries": len(times),
                "channels": channels,
                "kept_count": len(kept),
                "mean_seconds": float(np.mean(times)),
                "total_seconds": float(np.sum(times)),
                "per_query_seconds": [float(t) for t in times],
            },
            fh,
            sort_keys=False,
        )
    print(f"matched {len(outcomes)} queries against {len(ref_pooled)} templates -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _truths_for_table(rows, args, config: EvalConfig) -> list[GroundTruth]:
    if config.gt_mode == "frame":
        if args.correspondences:
            truth_indices = _load_correspondences(args.correspondences)
            if len(truth_indices) != len(rows):
                raise ValueError(
                    f"correspondences hold {len(truth_indices)} indices, "
                    f"match table has {len(rows)} rows"
                )
        else:
            truth_indices = list(range(len(rows)))  # aligned traverses
        return [GroundTruth(true_index=i) for i in truth_indices]

    if not args.query_manifest or not args.ref_manifest:
        raise ValueError("metric gt_mode needs --query-manifest and --ref-manifest")
    from .tensor_io import load_manifest

    query_manifest = load_manifest(args.query_manifest)
    ref_manifest = load_manifest(args.ref_manifest)
    ref_positions = ref_manifest.positions()
    by_id = {e.id: e.position for e in query_manifest.entries}
    truths = []
    for row in rows:
        if row.query_id not in by_id or by_id[row.query_id] is None:
            raise ValueError(f"no position for query id {row.query_id!r}")
        truths.append(
            GroundTruth(query_position=by_id[row.query_id], ref_positions=ref_positions)
        )
    return truths


def _sweep_table(path, args, config: EvalConfig) -> tuple[PRCurve, int]:
    rows, _ = read_match_table(path)
    truths = _truths_for_table(rows, args, config)
    return pr_sweep(rows, truths, config), len(rows)


def _write_pr_curve(path, curve: PRCurve) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("threshold,precision,recall,f1\n")
        for p in curve.points:
            fh.write(f"{p.threshold!r},{p.precision!r},{p.recall!r},{p.f1!r}\n")


def cmd_eval(args) -> int:
    config_file = _load_config_file(args.config)
    gt_mode = _resolve(args, config_file, "gt_mode", "frame")
    tolerance = float(_resolve(args, config_file, "tolerance", 0.0))
    _check_inputs_exist(args.match_table, args.compare, args.correspondences)

    config = EvalConfig(gt_mode=gt_mode, tolerance=tolerance)
    curve, n_queries = _sweep_table(args.match_table, args, config)
    _write_pr_curve(args.out, curve)

    summary = {
        "gt_mode": gt_mode,
        "tolerance": tolerance,
        "n_queries": n_queries,
        "max_f1": float(curve.max_f1),
        "best_threshold": float(curve.best_threshold),
    }
    if args.compare:
        baseline, _ = _sweep_table(args.compare, args, config)
        _write_pr_curve(f"{args.out}.baseline.csv", baseline)
        summary["baseline_max_f1"] = float(baseline.max_f1)
        summary["f1_gain"] = float(curve.max_f1 - baseline.max_f1)
    if args.timing and args.compare_timing:
        # wall-clock numbers go to their own file so the summary stays reproducible
        with open(args.timing, "r", encoding="utf-8") as fh:
            timing_main = yaml.safe_load(fh)
        with open(args.compare_timing, "r", encoding="utf-8") as fh:
            timing_base = yaml.safe_load(fh)
        report = timing_report(
            kept=range(int(timing_main["kept_count"])),
            channels=int(timing_main["channels"]),
            filtered_times=timing_main["per_query_seconds"],
            unfiltered_times=timing_base["per_query_seconds"],
        )
        with open(f"{args.out}.timing.yaml", "w", encoding="utf-8") as fh:
            yaml.safe_dump(
                {
                    "mean_filtered_seconds": report.mean_filtered,
                    "mean_unfiltered_seconds": report.mean_unfiltered,
                    "time_ratio": report.ratio,
                    "dimensional_reduction": report.dimensional_reduction,
                },
                fh,
                sort_keys=False,
            )

    summary_path = args.summary_out or f"{args.out}.summary.yaml"
    with open(summary_path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(summary, fh, sort_keys=False)
    print(f"max F1 {curve.max_f1:.4f} over {len(curve.points)} thresholds -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    config_file = _load_config_file(args.config)
    places = int(_resolve(args, config_file, "places", 300))
    channels = int(_resolve(args, config_file, "channels", 64))
    width = int(_resolve(args, config_file, "width", 8))
    height = int(_resolve(args, config_file, "height", 8))
    signal_count = int(_resolve(args, config_file, "signal_count", 16))
    noise_scale = float(_resolve(args, config_file, "noise_scale", 1.2))
    shift = float(_resolve(args, config_file, "appearance_shift", 1.5))
    seed = int(_resolve(args, config_file, "seed", 0))
    num_calib = int(_resolve(args, config_file, "num_calib", 50))
    num_queries = _resolve(args, config_file, "num_queries", None)

    params = SynthParams(
        num_places=places,
        channels=channels,
        width=width,
        height=height,
        signal_channels=choose_signal_channels(channels, signal_count, seed),
        condition_noise_scale=noise_scale,
        appearance_shift=shift,
        seed=seed,
    )
    dataset = generate(params)
    summary = write_dataset(
        dataset,
        args.out,
        num_calibration=num_calib,
        num_queries=None if num_queries is None else int(num_queries),
    )
    print(
        f"wrote {summary['num_places']} reference places, "
        f"{summary['num_calibration']} calibration and {summary['num_queries']} "
        f"query images under {args.out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# pool


def cmd_pool(args) -> int:
    _check_inputs_exist(args.tensor)
    tensor = read_tensor(args.tensor)
    pooled = pyramid_pool(tensor)
    if args.kept:
        kept = [int(c) for c in args.kept.split(",") if c.strip() != ""]
    else:
        kept = list(range(pooled.channels))
    flat = flatten(pooled, kept)  # validates the kept set
    slots = pooled.per_map_dim
    lines = []
    for row, channel in enumerate(sorted(set(kept))):
        values = ", ".join(f"{v:g}" for v in flat[row * slots : (row + 1) * slots])
        lines.append(f"{channel}: [{values}]")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="vprfilter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", help="learn the kept-channel set from triplets")
    cal.add_argument("--ref-manifest", required=True)
    cal.add_argument("--calib-manifest", required=True)
    cal.add_argument("--correspondences", required=True)
    cal.add_argument("--out", required=True)
    cal.add_argument("--threshold", type=float, help="gradient cut-off (default 0.1)")
    cal.add_argument("--num-calib", type=int, help="calibration images to use (default 50)")
    cal.add_argument("--seed", type=int, help="negative-sampling seed (default 0)")
    cal.add_argument("--exclusion-radius", type=int, help="negative exclusion radius (default 20)")
    cal.add_argument("--config")
    cal.set_defaults(func=cmd_calibrate)

    mat = sub.add_parser("match", help="match a query traverse against references")
    mat.add_argument("--query-manifest", required=True)
    mat.add_argument("--ref-manifest", required=True)
    group = mat.add_mutually_exclusive_group(required=True)
    group.add_argument("--filter", help="filter-result file from 'calibrate'")
    group.add_argument("--no-filter", action="store_true", help="use all channels")
    mat.add_argument("--out", required=True)
    mat.add_argument("--window", type=int, help="quality exclusion half-width (default 10)")
    mat.add_argument("--timing-out", help="timing report path (default OUT.timing.yaml)")
    mat.add_argument("--config")
    mat.set_defaults(func=cmd_match)

    ev = sub.add_parser("eval", help="precision/recall sweep over a match table")
    ev.add_argument("--match-table", required=True)
    ev.add_argument("--out", required=True, help="PR-curve CSV path")
    ev.add_argument("--gt-mode", choices=("frame", "metric"))
    ev.add_argument("--tolerance", type=float, help="frames or meters (default 0)")
    ev.add_argument("--correspondences", help="true reference indices, YAML list")
    ev.add_argument("--query-manifest", help="needed for metric gt_mode")
    ev.add_argument("--ref-manifest", help="needed for metric gt_mode")
    ev.add_argument("--summary-out", help="summary path (default OUT.summary.yaml)")
    ev.add_argument("--compare", help="baseline match table for a side-by-side summary")
    ev.add_argument("--timing", help="timing report of the main run")
    ev.add_argument("--compare-timing", help="timing report of the baseline run")
    ev.add_argument("--config")
    ev.set_defaults(func=cmd_eval)

    syn = sub.add_parser("synth", help="generate a synthetic two-condition dataset")
    syn.add_argument("--out", required=True)
    syn.add_argument("--places", type=int)
    syn.add_argument("--channels", type=int)
    syn.add_argument("--width", type=int)
    syn.add_argument("--height", type=int)
    syn.add_argument("--signal-count", type=int)
    syn.add_argument("--noise-scale", type=float)
    syn.add_argument("--appearance-shift", type=float)
    syn.add_argument("--seed", type=int)
    syn.add_argument("--num-calib", type=int)
    syn.add_argument("--num-queries", type=int)
    syn.add_argument("--config")
    syn.set_defaults(func=cmd_synth)

    pool = sub.add_parser("pool", help="pool one tensor and dump the descriptors")
    pool.add_argument("--tensor", required=True)
    pool.add_argument("--kept", help="comma-separated channel indices (default all)")
    pool.add_argument("--out")
    pool.set_defaults(func=cmd_pool)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyError as exc:
        print(f"vprfilter {args.command}: error: missing field {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OSError, yaml.YAMLError) as exc:
        print(f"vprfilter {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

"""Command-line pipeline: phantom generation, tracking, filtering, metrics,
architecture, and method comparison.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numeric or
degenerate error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import architecture as arch_mod
from . import formats, metrics as metrics_mod, stats
from .errors import ArityError, DataError, FrameMismatchError, MuscleTractError, NumericError
from .phantom import SHAPES, PhantomSpec, make_phantom
from .sampling import FSSConfig, SeedSet, fss_filter, seeds_2d, seeds_3d
from .streamline import StreamlineSet
from .tracking import TrackingConfig, reconstruct

METRIC_COLUMNS = ("sc", "sdcv", "fl_median", "ml", "fl_ml_ratio", "pa_median", "pcsa")

ARCH_HEADER = [
    "name", "mv_mm3", "fl_median_mm", "ml_mm", "fl_ml_ratio", "pa_median_deg",
    "pcsa_mm2", "loa_x", "loa_y", "loa_z", "r2", "loa_source", "arch_type",
]


def _parse_dims(text: str) -> tuple[float, float, float]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"dims must look like 20x20x60, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _load_config(args) -> formats.RunConfig:
    if getattr(args, "config", None):
        return formats.load_run_config(args.config)
    return formats.RunConfig()


def _pick(flag_value, config_value):
    return config_value if flag_value is None else flag_value


def _tracking_config(args, cfg: formats.RunConfig) -> TrackingConfig:
    return TrackingConfig(
        step_mm=_pick(getattr(args, "step", None), cfg.step_mm),
        max_angle_deg=_pick(getattr(args, "max_angle", None), cfg.max_angle_deg),
        fa_min=_pick(getattr(args, "fa_min", None), cfg.fa_min),
        min_length_mm=_pick(getattr(args, "min_length", None), cfg.min_length_mm),
        max_extrap_fraction=_pick(getattr(args, "max_extrap", None), cfg.max_extrap_fraction),
    )


def _check_frame(sset: StreamlineSet, mask) -> None:
    """STRL files carry no grid header; reject sets that lie entirely outside
    the mask grid's bounding box."""
    if len(sset) == 0:
        return
    lo = mask.origin
    hi = mask.origin + mask.world_extent
    for s in sset:
        inside = ((s.points >= lo) & (s.points <= hi)).all(axis=1)
        if inside.any():
            return
    raise FrameMismatchError("no streamline point falls inside the mask grid")


def _subsample_exact(sset: StreamlineSet, k: int, mask) -> StreamlineSet:
    n = len(sset)
    if n < k:
        raise ArityError(f"only {n} streamlines available, need {k}")
    picks = (np.arange(k) * n) // k
    return StreamlineSet([sset.streamlines[i] for i in picks], mask=mask)


def _make_seeds(strategy: str, mask, spacing: float, n_slices: int) -> SeedSet:
    if strategy == "3ds":
        return seeds_3d(mask, spacing)
    return seeds_2d(mask, n_slices)


def cmd_phantom(args) -> int:
    spec = PhantomSpec(
        shape=args.shape,
        pennation_deg=args.pennation,
        dims_mm=args.dims,
        voxel_mm=args.voxel,
        arc_radius_mm=args.arc_radius,
        arc_sweep_deg=args.arc_sweep,
        arc_thickness_mm=args.arc_thickness,
        jitter_deg=args.jitter,
        seed=args.seed,
    )
    mask, field, gt = make_phantom(spec)
    formats.save_mask(args.out_mask, mask)
    formats.save_field(args.out_field, field)
    loa = ",".join(formats.fmt_float(float(c)) for c in gt.line_of_action)
    Path(args.out_truth).write_text(
        "\n".join(
            [
                f"shape={spec.shape}",
                f"pennation_deg={formats.fmt_float(spec.pennation_deg)}",
                f"jitter_deg={formats.fmt_float(spec.jitter_deg)}",
                f"seed={spec.seed}",
                f"fiber_length_mm={formats.fmt_float(gt.fiber_length_mm)}",
                f"pa_deg={formats.fmt_float(gt.pennation_deg)}",
                f"line_of_action={loa}",
                f"volume_mm3={formats.fmt_float(gt.volume_mm3)}",
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"phantom: wrote {args.out_mask}, {args.out_field}, {args.out_truth}")
    return 0


def cmd_track(args) -> int:
    cfg = _load_config(args)
    mask = formats.load_mask(args.mask)
    field = formats.load_field(args.field)
    tracking = _tracking_config(args, cfg)
    spacing = _pick(args.spacing, cfg.spacing_mm)
    n_slices = _pick(args.n_slices, cfg.n_slices)
    target = _pick(args.target_candidates, cfg.n_candidates)

    seeds = _make_seeds(args.strategy, mask, spacing, n_slices)
    if len(seeds) > target:
        picks = (np.arange(target) * len(seeds)) // target
        seeds = SeedSet(seeds.points[picks], seeds.strategy)
    sset = reconstruct(field, mask, seeds, tracking)
    formats.save_streamlines(args.out, sset)
    print(f"track: {len(seeds)} seeds -> {len(sset)} streamlines -> {args.out}")
    return 0


def cmd_filter(args) -> int:
    cfg = _load_config(args)
    mask = formats.load_mask(args.mask)
    k = _pick(args.k, cfg.k)

    if args.method == "fss":
        if not args.candidates:
            raise DataError("--candidates is required for method fss")
        candidates = formats.load_streamlines(args.candidates)
        _check_frame(candidates, mask)
        candidates.mask = mask
        fss_cfg = FSSConfig(
            n_candidates=max(len(candidates), k),
            k=k,
            m=_pick(args.m, cfg.m),
            init_rule=_pick(args.init_rule, cfg.init_rule),
        )
        out, trace = fss_filter(candidates, fss_cfg)
        if args.trace:
            formats.write_csv(
                args.trace,
                ["step", "id", "selection_distance_mm"],
                [
                    [i, int(sid), float(d)]
                    for i, (sid, d) in enumerate(zip(trace.selected_ids, trace.selection_distance))
                ],
            )
    else:
        if not args.field:
            raise DataError(f"--field is required for method {args.method}")
        field = formats.load_field(args.field)
        tracking = _tracking_config(args, cfg)
        seeds = _make_seeds(
            args.method, mask, _pick(args.spacing, cfg.spacing_mm), _pick(args.n_slices, cfg.n_slices)
        )
        tracked = reconstruct(field, mask, seeds, tracking)
        out = _subsample_exact(tracked, k, mask)

    formats.save_streamlines(args.out, out)
    print(f"filter[{args.method}]: {len(out)} streamlines -> {args.out}")
    return 0


def cmd_metrics(args) -> int:
    cfg = _load_config(args)
    mask = formats.load_mask(args.mask)
    sset = formats.load_streamlines(args.streamlines)
    _check_frame(sset, mask)
    support = _pick(args.sdcv_support, cfg.sdcv_support)
    dmap, tm = metrics_mod.density(sset, mask, sdcv_support=support)
    formats.write_csv(
        args.out_csv,
        ["sc", "sd_mean", "sdcv", "sdcv_defined"],
        [[tm.sc, tm.sd_mean, tm.sdcv, int(tm.sdcv_defined)]],
    )
    if args.out_density:
        formats.save_density(args.out_density, dmap, normalized=args.normalized)
    print(f"metrics: sc={tm.sc:.4f} sd_mean={tm.sd_mean:.4f} sdcv={tm.sdcv:.4f}")
    return 0


def cmd_arch(args) -> int:
    cfg = _load_config(args)
    mask = formats.load_mask(args.mask)
    sset = formats.load_streamlines(args.streamlines)
    _check_frame(sset, mask)
    loa = arch_mod.line_of_action(sset, r2_threshold=_pick(args.r2_threshold, cfg.r2_threshold))
    arch = arch_mod.summarize(mask, sset, loa)
    name = args.name or Path(args.streamlines).stem
    formats.write_csv(
        args.out,
        ARCH_HEADER,
        [[
            name, arch.mv, arch.fl_median, arch.ml, arch.fl_ml_ratio, arch.pa_median,
            arch.pcsa, float(loa.direction[0]), float(loa.direction[1]),
            float(loa.direction[2]), loa.r2, loa.source, arch.arch_type,
        ]],
    )
    print(
        f"arch[{name}]: fl={arch.fl_median:.2f}mm pa={arch.pa_median:.2f}deg "
        f"pcsa={arch.pcsa:.2f}mm2 type={arch.arch_type}"
    )
    return 0


def _load_run(path: Path) -> dict[str, float]:
    header, rows = formats.read_csv(path / "metrics.csv")
    m = dict(zip(header, rows[0]))
    header, rows = formats.read_csv(path / "arch.csv")
    a = dict(zip(header, rows[0]))
    return {
        "sc": float(m["sc"]),
        "sdcv": float(m["sdcv"]),
        "fl_median": float(a["fl_median_mm"]),
        "ml": float(a["ml_mm"]),
        "fl_ml_ratio": float(a["fl_ml_ratio"]),
        "pa_median": float(a["pa_median_deg"]),
        "pcsa": float(a["pcsa_mm2"]),
    }


def cmd_compare(args) -> int:
    runs: dict[str, dict[int, dict[str, float]]] = {}
    masks: dict[int, bytes] = {}
    for spec in args.runs:
        parts = spec.split(":", 2)
        if len(parts) != 3:
            raise DataError(f"run spec must be label:instance:dir, got {spec!r}")
        label, instance, path = parts[0], int(parts[1]), Path(parts[2])
        runs.setdefault(label, {})[instance] = _load_run(path)
        mask_path = path / "mask.mskv"
        if mask_path.exists():
            header = mask_path.read_bytes()[:44]
            if instance in masks and masks[instance] != header:
                raise FrameMismatchError(f"instance {instance}: runs use different phantom frames")
            masks[instance] = header

    if len(runs) < 2:
        raise DataError("compare needs runs from at least 2 methods")

    header = ["row", "method", "instance", *METRIC_COLUMNS]
    rows: list[list] = []
    for label in sorted(runs):
        for instance in sorted(runs[label]):
            vals = runs[label][instance]
            rows.append(["run", label, instance, *[vals[c] for c in METRIC_COLUMNS]])
    for label in sorted(runs):
        per = runs[label]
        rows.append([
            "mean", label, "",
            *[float(np.mean([per[i][c] for i in sorted(per)])) for c in METRIC_COLUMNS],
        ])

    labels = sorted(runs)
    for i, la in enumerate(labels):
        for lb in labels[i + 1 :]:
            shared = sorted(set(runs[la]) & set(runs[lb]))
            if not shared:
                continue
            pair = f"{la}-vs-{lb}"
            a = {c: np.array([runs[la][i][c] for i in shared]) for c in METRIC_COLUMNS}
            b = {c: np.array([runs[lb][i][c] for i in shared]) for c in METRIC_COLUMNS}
            rows.append(["pct_diff", pair, "", *[stats.percent_diff(a[c], b[c]) for c in METRIC_COLUMNS]])
            if len(shared) >= 2:
                tres = {c: stats.t_paired(a[c], b[c]) for c in METRIC_COLUMNS}
                ba = {c: stats.bland_altman(a[c], b[c]) for c in METRIC_COLUMNS}
                rows.append(["t_stat", pair, "", *[tres[c].t for c in METRIC_COLUMNS]])
                rows.append([
                    "p_value", pair, "",
                    *[tres[c].p if tres[c].p is not None else float("nan") for c in METRIC_COLUMNS],
                ])
                rows.append(["ba_mean_diff", pair, "", *[ba[c].mean_diff for c in METRIC_COLUMNS]])
                rows.append(["ba_loa_low", pair, "", *[ba[c].loa_low for c in METRIC_COLUMNS]])
                rows.append(["ba_loa_high", pair, "", *[ba[c].loa_high for c in METRIC_COLUMNS]])

    formats.write_csv(args.out, header, rows)
    print(f"compare: {sum(len(v) for v in runs.values())} runs -> {args.out}")
    return 0


def cmd_fractions(args) -> int:
    group_of: dict[str, str] = {}
    for lineno, line in enumerate(Path(args.groups).read_text(encoding="utf-8").splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise DataError(f"{args.groups}:{lineno}: expected muscle=group")
        name, group = (p.strip() for p in text.split("=", 1))
        group_of[name] = group

    records = []
    for csv_path in args.arch_csvs:
        header, rows = formats.read_csv(csv_path)
        for row in rows:
            rec = dict(zip(header, row))
            name = rec["name"]
            if name not in group_of:
                raise DataError(f"{csv_path}: muscle {name!r} missing from the group table")
            arch = arch_mod.MuscleArchitecture(
                mv=float(rec["mv_mm3"]),
                fl_median=float(rec["fl_median_mm"]),
                ml=float(rec["ml_mm"]),
                fl_ml_ratio=float(rec["fl_ml_ratio"]),
                pa_median=float(rec["pa_median_deg"]),
                pcsa=float(rec["pcsa_mm2"]),
                loa=arch_mod.LineOfAction(
                    np.zeros(3),
                    np.array([float(rec["loa_x"]), float(rec["loa_y"]), float(rec["loa_z"])]),
                    float(rec["r2"]),
                    rec["loa_source"],
                ),
                arch_type=rec["arch_type"],
            )
            records.append((group_of[name], name, arch))

    fr = arch_mod.group_fractions([(g, a) for g, _, a in records])
    rows = [["volume_fraction", g, "", v] for g, v in sorted(fr.volume_fraction.items())]
    rows += [
        ["pcsa_fraction", g, name, frac]
        for (g, name, _), frac in zip(records, fr.pcsa_fraction)
    ]
    formats.write_csv(args.out, ["kind", "group", "name", "value"], rows)
    print(f"fractions: {len(records)} muscles -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="muscletract", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic phantom")
    p.add_argument("--shape", choices=["box", "fusiform", "arc"], default="box")
    p.add_argument("--pennation", type=float, default=10.0)
    p.add_argument("--dims", type=_parse_dims, default=(20.0, 12.0, 60.0))
    p.add_argument("--voxel", type=float, default=1.0)
    p.add_argument("--arc-radius", type=float, default=30.0)
    p.add_argument("--arc-sweep", type=float, default=90.0)
    p.add_argument("--arc-thickness", type=float, default=10.0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-mask", required=True)
    p.add_argument("--out-field", required=True)
    p.add_argument("--out-truth", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("track", help="track candidate streamlines")
    p.add_argument("--field", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--strategy", choices=["2ds", "3ds"], default="3ds")
    p.add_argument("--spacing", type=float)
    p.add_argument("--n-slices", type=int)
    p.add_argument("--target-candidates", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--max-angle", type=float)
    p.add_argument("--fa-min", type=float)
    p.add_argument("--min-length", type=float)
    p.add_argument("--max-extrap", type=float)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("filter", help="sample k streamlines (fss filters, 2ds/3ds re-track)")
    p.add_argument("--method", choices=["fss", "2ds", "3ds"], required=True)
    p.add_argument("-k", type=int)
    p.add_argument("--candidates")
    p.add_argument("--mask", required=True)
    p.add_argument("--field")
    p.add_argument("--m", type=int)
    p.add_argument("--init-rule", choices=["longest", "index"])
    p.add_argument("--spacing", type=float)
    p.add_argument("--n-slices", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--max-angle", type=float)
    p.add_argument("--fa-min", type=float)
    p.add_argument("--min-length", type=float)
    p.add_argument("--max-extrap", type=float)
    p.add_argument("--trace")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("metrics", help="coverage / density metrics")
    p.add_argument("--streamlines", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--sdcv-support", choices=["all", "nonzero"])
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-density")
    p.add_argument("--config")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("arch", help="muscle architecture record")
    p.add_argument("--streamlines", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--r2-threshold", type=float)
    p.add_argument("--name")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_arch)

    p = sub.add_parser("compare", help="compare completed runs (label:instance:dir)")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fractions", help="volume / PCSA fractions by functional group")
    p.add_argument("arch_csvs", nargs="+")
    p.add_argument("--groups", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fractions)

    return parser


_SHAPE_ALIASES = {"box": "box_unipennate", "fusiform": "fusiform", "arc": "curved_arc"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "shape", None) in _SHAPE_ALIASES:
        args.shape = _SHAPE_ALIASES[args.shape]
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except MuscleTractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

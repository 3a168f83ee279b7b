"""``thermforge`` command-line entry point.

Exit status: 0 success, 1 input or configuration error, 2 completed with
failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import re
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import formats
from .config import PipelineConfig, load_config
from .enhance import UnalignedPairError, align_guide, guided_upsample
from .imaging import (
    PnmError,
    RgbFrame,
    ThermalFrame,
    load_pgm16,
    load_ppm,
    resize_bilinear,
    save_pgm16,
    save_ppm,
    upsample_bilinear,
)
from .matching import best_match, derive_crops
from .metrics import evaluate
from .optimize import (
    CalibrationError,
    CsvFormatError,
    SimplexConfig,
    calibrate,
    read_reference_csv,
    write_report,
    write_reference_csv,
)
from .radiometry import (
    FACTORY_PARAMS,
    RadiometricParams,
    TemperatureMap,
    convert_frame,
    load_params,
    save_params,
    temperatures,
)
from .synth import SynthConfig, make_scene, make_water_bath

log = logging.getLogger("thermforge")

EXIT_OK, EXIT_INPUT, EXIT_PARTIAL = 0, 1, 2

_TIMESTAMP = re.compile(r"^(\d+(?:\.\d+)?)$")


class InputError(Exception):
    """Bad input files or configuration; maps to exit status 1."""


def _fail(message: str) -> int:
    print(f"thermforge: error: {message}", file=sys.stderr)
    return EXIT_INPUT


def _read_params(path) -> RadiometricParams:
    try:
        return load_params(path)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: cannot read radiometric params: {exc}") from None


def _map_threads(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


# -- calibrate -----------------------------------------------------------------

def cmd_calibrate(log_csv, initial_params_json, out_report_json,
                  config: PipelineConfig = PipelineConfig(),
                  simplex: SimplexConfig = SimplexConfig()) -> int:
    try:
        pairs = read_reference_csv(log_csv)
        initial = _read_params(initial_params_json)
    except CsvFormatError as exc:
        return _fail(str(exc))
    except OSError as exc:
        return _fail(f"{log_csv}: {exc.strerror}")
    except InputError as exc:
        return _fail(str(exc))
    try:
        report = calibrate(pairs, initial, simplex)
    except CalibrationError as exc:
        return _fail(f"{log_csv}: ill-posed calibration: {exc}")
    write_report(report, out_report_json)
    log.info("calibrated r1=%.4f o=%.4f rmse %.3f -> %.3f degC",
             report.params_after.r1, report.params_after.o, report.rmse_before, report.rmse_after)
    return EXIT_OK if report.converged else EXIT_PARTIAL


# -- convert -------------------------------------------------------------------

def cmd_convert(frame_pgm, params_json, out_pgm, out_sidecar_json,
                config: PipelineConfig = PipelineConfig()) -> int:
    try:
        frame = load_pgm16(frame_pgm)
        params = _read_params(params_json)
    except PnmError as exc:
        return _fail(f"{frame_pgm}: {exc}")
    except OSError as exc:
        return _fail(f"{frame_pgm}: {exc.strerror}")
    except InputError as exc:
        return _fail(str(exc))

    _, in_domain = temperatures(frame.dn, params)
    tmap = convert_frame(frame, params, config.range)
    extra = {
        "source": str(frame_pgm),
        "params": params.to_dict(),
        "domain_violations": int(np.count_nonzero(~in_domain)),
        "out_of_range": int(np.count_nonzero(in_domain & ~tmap.valid)),
        "all_invalid": bool(tmap.all_invalid),
    }
    formats.save_temperature_map(tmap, out_pgm, config.range, extra, sidecar=out_sidecar_json)
    return EXIT_OK


# -- pair ------------------------------------------------------------------------

def _timestamped(directory: Path, suffix: str):
    if directory is None or not directory.is_dir():
        return []
    out = []
    for p in sorted(directory.glob(f"*{suffix}")):
        m = _TIMESTAMP.match(p.name[:-len(suffix)])
        if m:
            out.append((float(m.group(1)), p))
    return out


def _nearest(ts: float, candidates, window: float):
    best = None
    for t, p in candidates:
        d = abs(t - ts)
        if d <= window and (best is None or d < best[0] or (d == best[0] and t < best[1])):
            best = (d, t, p)
    return None if best is None else best[2]


def _pair_one(lo_path: Path, hi_path: Path, rgb_path: Optional[Path], config: PipelineConfig,
              out_dir: Path) -> dict:
    lo = load_pgm16(lo_path)
    hi = load_pgm16(hi_path)
    match = best_match(lo.dn, hi.dn, config.scales, config.ncc_threshold)
    record = {"lo": lo_path.name, "hi": hi_path.name,
              "rgb": rgb_path.name if rgb_path else None, "match": match.to_dict()}
    if not match.accepted:
        return record

    rgb = load_ppm(rgb_path) if rgb_path else None
    crops = derive_crops(match, (lo.width, lo.height), (hi.width, hi.height),
                         (rgb.width, rgb.height) if rgb else None, config.padding)
    record["crops"] = crops.to_dict()
    pair_dir = out_dir / lo_path.stem
    pair_dir.mkdir(parents=True, exist_ok=True)
    save_pgm16(ThermalFrame(lo.dn[crops.rect_lo.slice()]), pair_dir / "lo.pgm")
    save_pgm16(ThermalFrame(hi.dn[crops.rect_hi.slice()]), pair_dir / "hi.pgm")
    hi_sidecar = formats.sidecar_path(hi_path)
    if hi_sidecar.exists():
        shutil.copyfile(hi_sidecar, pair_dir / "hi.json")
    if rgb is not None:
        save_ppm(RgbFrame(rgb.rgb[crops.rect_rgb.slice()]), pair_dir / "rgb.ppm")
    formats.write_json(record, pair_dir / "match.json")
    return record


def cmd_pair(lo_dir, hi_dir, rgb_dir, config: PipelineConfig, out_dir, threads: int = 1) -> int:
    lo_dir, hi_dir, out_dir = Path(lo_dir), Path(hi_dir), Path(out_dir)
    rgb_dir = Path(rgb_dir) if rgb_dir else None
    los = _timestamped(lo_dir, ".pgm")
    his = _timestamped(hi_dir, ".pgm")
    if not los:
        return _fail(f"{lo_dir}: no timestamp-named .pgm frames")
    if not his:
        return _fail(f"{hi_dir}: no timestamp-named .pgm frames")
    rgbs = _timestamped(rgb_dir, ".ppm")
    if not rgbs:
        log.warning("no RGB frames found; pairs are produced without RGB crops")
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs, unpaired = [], []
    for ts, lo_path in los:
        hi_path = _nearest(ts, his, config.pair_window_s)
        if hi_path is None:
            unpaired.append(lo_path.name)
            continue
        jobs.append((lo_path, hi_path, _nearest(ts, rgbs, config.pair_window_s)))

    failures = []

    def run(job):
        try:
            return _pair_one(*job, config, out_dir)
        except (PnmError, OSError, ValueError) as exc:
            failures.append({"lo": job[0].name, "error": str(exc)})
            return None

    records = [r for r in _map_threads(run, jobs, threads) if r is not None]
    accepted = [r for r in records if r["match"]["accepted"]]
    rejected = [{"lo": r["lo"], "hi": r["hi"], "score": r["match"]["score"]}
                for r in records if not r["match"]["accepted"]]
    summary = {
        "threshold": config.ncc_threshold,
        "scales": [float(s) for s in config.scales],
        "candidates": len(jobs),
        "accepted": [{"pair": Path(r["lo"]).stem, **r} for r in accepted],
        "rejected": rejected,
        "unpaired": unpaired,
        "failed": sorted(failures, key=lambda f: f["lo"]),
        "acceptance_rate": len(accepted) / len(jobs) if jobs else 0.0,
    }
    formats.write_json(summary, out_dir / "summary.json")
    return EXIT_PARTIAL if failures else EXIT_OK


# -- enhance ---------------------------------------------------------------------

def _find_pairs(pair_dir: Path):
    found = {p.parent for p in pair_dir.glob("*/lo.pgm")}
    found |= {p.parent for p in pair_dir.glob("pairs/*/lo.pgm")}
    return sorted(found)


def _params_for(pair: Path, root: Path, config: PipelineConfig) -> RadiometricParams:
    for candidate in (pair / "params.json", root / "params.json", root.parent / "params.json"):
        if candidate.exists():
            return _read_params(candidate)
    if config.params_path:
        return _read_params(config.params_path)
    raise InputError(f"{pair}: no params.json and no params_path in config")


def _resize_rgb(rgb: RgbFrame, height: int, width: int) -> RgbFrame:
    if (rgb.height, rgb.width) == (height, width):
        return rgb
    chans = [resize_bilinear(rgb.rgb[..., c].astype(np.float64), height, width) for c in range(3)]
    return RgbFrame(np.clip(np.round(np.stack(chans, axis=-1)), 0, 255), rgb.capture_id)


def _save_output(img, kind, name, config, out_dir):
    (out_dir / kind).mkdir(exist_ok=True)
    formats.save_temperature_map(TemperatureMap.from_celsius(img), out_dir / kind / f"{name}.pgm",
                                 config.range, {"pair": name, "method": kind})


def _enhance_one(pair: Path, root: Path, config: PipelineConfig, out_dir: Path) -> dict:
    name = pair.name
    params = _params_for(pair, root, config)
    lo = load_pgm16(pair / "lo.pgm")
    tmap = convert_frame(lo, params, config.range)
    if tmap.all_invalid:
        return {"pair": name, "skipped": "no valid thermal pixels"}
    thermal = np.where(tmap.valid, tmap.celsius, np.nanmean(tmap.celsius))
    factor = config.sr.factor
    base = upsample_bilinear(thermal, factor)
    out = {"pair": name, "invalid_lo_pixels": int(np.count_nonzero(~tmap.valid))}
    _save_output(base, "bilinear", name, config, out_dir)

    rgb_path = pair / "rgb.ppm"
    if not rgb_path.exists():
        return {**out, "skipped": "no RGB guide"}
    guide = _resize_rgb(load_ppm(rgb_path), thermal.shape[0] * factor, thermal.shape[1] * factor)
    try:
        aligned = align_guide(guide, thermal, config.search_radius, config.ncc_threshold)
    except UnalignedPairError as exc:
        return {**out, "skipped": "unaligned guide", "best_score": exc.best_score}
    guided = guided_upsample(thermal, aligned, config.sr)
    out["alignment"] = {"offset": list(aligned.offset), "score": aligned.score,
                        "degenerate": aligned.degenerate}

    _save_output(guided, "guided", name, config, out_dir)

    truth_path = pair / "truth.pgm"
    if truth_path.exists():
        truth = formats.load_temperature_map(truth_path)
        (out_dir / "truth").mkdir(exist_ok=True)
        shutil.copyfile(truth_path, out_dir / "truth" / f"{name}.pgm")
        shutil.copyfile(formats.sidecar_path(truth_path), out_dir / "truth" / f"{name}.json")
        if truth.celsius.shape == base.shape:
            peak = config.range.span
            out["metrics"] = {
                kind: evaluate(TemperatureMap.from_celsius(img), truth, peak).to_dict()
                for kind, img in (("bilinear", base), ("guided", guided))
            }
        else:
            out["metrics_error"] = f"truth shape {truth.celsius.shape} != output shape {base.shape}"
    (out_dir / "metrics").mkdir(exist_ok=True)
    formats.write_json(out, out_dir / "metrics" / f"{name}.json")
    return out


def cmd_enhance(pair_dir, config: PipelineConfig, out_dir, threads: int = 1) -> int:
    pair_dir, out_dir = Path(pair_dir), Path(out_dir)
    pairs = _find_pairs(pair_dir)
    if not pairs:
        return _fail(f"{pair_dir}: no pair directories containing lo.pgm")
    out_dir.mkdir(parents=True, exist_ok=True)

    def run(pair):
        try:
            return _enhance_one(pair, pair_dir, config, out_dir)
        except InputError as exc:
            return {"pair": pair.name, "skipped": str(exc)}
        except (PnmError, OSError, ValueError) as exc:
            return {"pair": pair.name, "skipped": f"error: {exc}"}

    results = _map_threads(run, pairs, threads)
    done = [r for r in results if "skipped" not in r]
    summary = {"processed": len(done), "skipped": [r for r in results if "skipped" in r],
               "sr": config.sr.to_dict(), "pairs": results}
    formats.write_json(summary, out_dir / "summary.json")
    return EXIT_OK if done else EXIT_PARTIAL


# -- evaluate ----------------------------------------------------------------------

METRIC_COLUMNS = ["rmse_c", "r2", "psnr_db", "ssim", "gradient_energy_ratio", "n_pixels"]


def cmd_evaluate(candidate_dir, truth_dir, out_csv, config: PipelineConfig = PipelineConfig()) -> int:
    candidate_dir, truth_dir = Path(candidate_dir), Path(truth_dir)
    candidates = sorted(candidate_dir.glob("*.pgm"))
    if not candidates:
        return _fail(f"{candidate_dir}: no candidate .pgm maps")
    peak = config.range.span
    rows, failures = [], 0
    for cand in candidates:
        row = {"name": cand.stem}
        truth_path = truth_dir / cand.name
        try:
            if not truth_path.exists():
                raise ValueError(f"no ground truth {truth_path.name}")
            a = formats.load_temperature_map(cand)
            b = formats.load_temperature_map(truth_path)
            if a.celsius.shape != b.celsius.shape:
                raise ValueError(f"dimension mismatch {a.width}x{a.height} vs {b.width}x{b.height}")
            report = evaluate(a, b, peak)
            row.update({k: getattr(report, k) for k in METRIC_COLUMNS})
            row["error"] = ""
        except (ValueError, OSError, PnmError) as exc:
            failures += 1
            row.update({k: "" for k in METRIC_COLUMNS})
            row["error"] = str(exc)
        rows.append(row)

    good = [r for r in rows if not r["error"]]
    mean = {"name": "MEAN", "error": ""}
    for k in METRIC_COLUMNS:
        vals = [float(r[k]) for r in good]
        mean[k] = float(np.mean(vals)) if vals else ""
    rows.append(mean)

    with open(out_csv, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["name"] + METRIC_COLUMNS + ["error", "psnr_peak"])
        w.writeheader()
        for r in rows:
            w.writerow({**{k: _fmt(v) for k, v in r.items()}, "psnr_peak": repr(peak)})
    return EXIT_PARTIAL if failures else EXIT_OK


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) and v > 0 else repr(v)
    return v


# -- synth -------------------------------------------------------------------------

SYNTH_T0 = 1_656_000_000.0


def _ts_name(ts: float, suffix: str) -> str:
    return f"{ts:.3f}{suffix}"


def _write_hi(celsius, path, config):
    formats.save_temperature_map(TemperatureMap.from_celsius(celsius), path, config.range)


def cmd_synth(config: PipelineConfig, out_dir, count: int, decoys: int = 0,
              synth: SynthConfig = SynthConfig()) -> int:
    out_dir = Path(out_dir)
    if count < 0 or decoys < 0:
        return _fail("count and decoys must be non-negative")
    for sub in ("lo", "hi", "rgb", "pairs"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    save_params(synth.params, out_dir / "params.json")
    save_params(FACTORY_PARAMS, out_dir / "factory_params.json")
    write_reference_csv(make_water_bath(config.seed, params=synth.params), out_dir / "water_bath.csv")

    manifest = {"seed": config.seed, "count": count, "decoys": decoys,
                "synth": {k: v for k, v in vars(synth).items() if k != "params"},
                "params": synth.params.to_dict(), "scenes": [], "decoy_frames": []}
    for i in range(count):
        scene = make_scene(config.seed, i, synth)
        ts = SYNTH_T0 + 10.0 * i
        save_pgm16(scene.thermal_lo, out_dir / "lo" / _ts_name(ts, ".pgm"))
        save_ppm(scene.rgb, out_dir / "rgb" / _ts_name(ts, ".ppm"))
        _write_hi(scene.hi_celsius, out_dir / "hi" / _ts_name(ts + 0.1, ".pgm"), config)

        pair = out_dir / "pairs" / f"scene{i:04d}"
        pair.mkdir(exist_ok=True)
        save_pgm16(scene.thermal_lo, pair / "lo.pgm")
        save_ppm(scene.rgb, pair / "rgb.ppm")
        formats.save_temperature_map(scene.truth_hi, pair / "truth.pgm", config.range)
        formats.write_json(scene.provenance, pair / "scene.json")
        manifest["scenes"].append({"id": f"scene{i:04d}", "lo": _ts_name(ts, ".pgm"),
                                   "hi": _ts_name(ts + 0.1, ".pgm"), **scene.provenance})

    # decoys: lo and hi frames from two independent scenes sharing a timestamp
    for k in range(decoys):
        lo_scene = make_scene(config.seed, count + 2 * k, synth)
        hi_scene = make_scene(config.seed, count + 2 * k + 1, synth)
        ts = SYNTH_T0 + 10.0 * (count + k)
        save_pgm16(lo_scene.thermal_lo, out_dir / "lo" / _ts_name(ts, ".pgm"))
        _write_hi(hi_scene.hi_celsius, out_dir / "hi" / _ts_name(ts + 0.1, ".pgm"), config)
        manifest["decoy_frames"].append({"lo": _ts_name(ts, ".pgm"), "hi": _ts_name(ts + 0.1, ".pgm")})

    formats.write_json(manifest, out_dir / "manifest.json")
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="pipeline JSON config")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="unsigned 64-bit seed")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="thermforge", parents=[common],
                                     description="Radiometric calibration, pairing and guided upsampling "
                                                 "for low-cost thermal cameras.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common], help="refit R1 and O against a reference log")
    p.add_argument("--log", required=True, help="CSV with header timestamp,dn,t_ref_c")
    p.add_argument("--params", required=True, help="initial radiometric params JSON")
    p.add_argument("--out", required=True, help="calibration report JSON")
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--max-iterations", type=int, default=2000)

    p = sub.add_parser("convert", parents=[common], help="convert a raw DN frame to temperature")
    p.add_argument("--frame", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True, help="affine-encoded 16-bit PGM")
    p.add_argument("--sidecar", help="sidecar JSON (default: OUT with .json suffix)")

    p = sub.add_parser("pair", parents=[common], help="match low-res frames against high-res templates")
    p.add_argument("--lo", required=True)
    p.add_argument("--hi", required=True)
    p.add_argument("--rgb")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, help="NCC acceptance threshold (default 0.75)")
    p.add_argument("--padding", type=int)

    p = sub.add_parser("enhance", parents=[common], help="bilinear and RGB-guided upsampling of pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="RMSE/R2/PSNR/SSIM table against ground truth")
    p.add_argument("--candidates", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True, help="CSV output")

    p = sub.add_parser("synth", parents=[common], help="generate a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--decoys", type=int, default=0)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that status means "partial" here
        if exc.code not in (0, None):
            return EXIT_INPUT
        raise
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        config = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
        if getattr(args, "seed", None) is not None:
            config = replace(config, seed=args.seed)
        if getattr(args, "threshold", None) is not None:
            config = replace(config, ncc_threshold=args.threshold)
        if getattr(args, "padding", None) is not None:
            config = replace(config, padding=args.padding)
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        return _fail(f"config: {exc}")
    threads = max(1, getattr(args, "threads", 1))

    if args.command == "calibrate":
        try:
            simplex = SimplexConfig(tolerance=args.tolerance, max_iterations=args.max_iterations)
        except ValueError as exc:
            return _fail(str(exc))
        return cmd_calibrate(args.log, args.params, args.out, config, simplex)
    if args.command == "convert":
        sidecar = args.sidecar or formats.sidecar_path(args.out)
        return cmd_convert(args.frame, args.params, args.out, sidecar, config)
    if args.command == "pair":
        return cmd_pair(args.lo, args.hi, args.rgb, config, args.out, threads)
    if args.command == "enhance":
        return cmd_enhance(args.pairs, config, args.out, threads)
    if args.command == "evaluate":
        return cmd_evaluate(args.candidates, args.truth, args.out, config)
    if args.command == "synth":
        return cmd_synth(config, args.out, args.count, args.decoys)
    return _fail(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())

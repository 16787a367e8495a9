"""Command line interface.

Exit status: 0 on success, 1 on a processing error, 2 on a usage error.
Options may also come from a JSON file passed with ``--config``; keys are
option names with dashes replaced by underscores, and command line flags
take precedence.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PvcError
from .io import load_mask, load_volume, read_header, write_dicom_series, write_raw
from .material import (
    DEFAULT_E_MAX,
    SPECIMEN_LAWS,
    CalibrationCurve,
    DensityModulusLaw,
    map_volume,
    material_table,
)
from .phantom import STANDARD_SUITE, load_suite, results_csv, run_case
from .pvc import PvcParams, correct

# Applied after the config file so that "not given" can be told apart from
# an explicit default.
DEFAULTS = {
    "power": 2.0,
    "workers": None,
    "e_max": DEFAULT_E_MAX,
    "calibration_intercept": 0.0,
    "clip_negative_density": False,
}


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _add_common(p):
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--workers", type=int, help="worker threads (default: CPU count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvcorrect",
        description="Partial volume correction of cortical bone in CT volumes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("correct", help="correct a CT volume given a bone mask")
    p.add_argument("--input", "-i", help="CT volume: raw file or DICOM series directory")
    p.add_argument("--mask", "-m", help="segmentation: raw file or DICOM series directory")
    p.add_argument("--output", "-o", help="output raw file or DICOM directory")
    p.add_argument("--power", type=float, help="inverse distance exponent (default 2)")
    p.add_argument("--jsonl", help="also append the run record to this JSON-lines file")
    _add_common(p)

    p = sub.add_parser("phantom", help="run the synthetic phantom suite")
    p.add_argument("--suite", help="phantom suite INI file (default: built-in standard suite)")
    p.add_argument("--output", "-o", help="CSV results file (default: stdout)")
    p.add_argument("--power", type=float, help="inverse distance exponent (default 2)")
    _add_common(p)

    p = sub.add_parser("material", help="bin elastic moduli for FE material assignment")
    p.add_argument("--input", "-i", help="CT volume (raw file or DICOM directory)")
    p.add_argument("--mask", "-m", help="bone segmentation")
    p.add_argument("--output", "-o", help="material table file (default: stdout)")
    p.add_argument("--calibration-slope", type=float, help="density per HU (g/cm^3/HU)")
    p.add_argument("--calibration-intercept", type=float, help="density at 0 HU (g/cm^3)")
    p.add_argument("--law-a", type=float, help="power law coefficient A (MPa)")
    p.add_argument("--law-b", type=float, help="power law exponent B")
    p.add_argument("--specimen", type=int, choices=sorted(SPECIMEN_LAWS),
                   help="use a built-in porcine specimen law instead of --law-a/--law-b")
    p.add_argument("--e-max", type=float, help="modulus cap in MPa (default 20000)")
    p.add_argument("--threshold-density", type=float,
                   help="cortical/trabecular split density (g/cm^3)")
    p.add_argument("--clip-negative-density", action="store_true", default=None,
                   help="treat negative calibrated densities as zero instead of failing")
    _add_common(p)

    p = sub.add_parser("info", help="print volume geometry and header")
    p.add_argument("--input", "-i", help="raw file or DICOM directory")
    _add_common(p)
    return parser


def _merge_config(parser, args):
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(config, dict):
            parser.error("config file must hold a JSON object")
        for key, value in config.items():
            key = key.replace("-", "_")
            if key in ("command", "config") or not hasattr(args, key):
                parser.error(f"unknown config key {key!r} for {args.command}")
            if getattr(args, key) is None:
                setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)


def _require(parser, args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        parser.error(f"{args.command}: missing required option(s) {', '.join(missing)}")


def _require_exists(parser, *paths):
    for p in paths:
        if not Path(p).exists():
            parser.error(f"no such file or directory: {p}")


def cmd_correct(args, parser) -> int:
    _require(parser, args, "input", "mask", "output")
    _require_exists(parser, args.input, args.mask)
    volume = load_volume(args.input)
    mask = load_mask(args.mask)
    corrected, report = correct(volume, mask, PvcParams(args.power), workers=args.workers)

    if Path(args.input).is_dir():
        write_dicom_series(corrected, args.input, args.output)
    else:
        element = read_header(Path(args.input).read_bytes())[0]["element_type"]
        write_raw(corrected, args.output, element)

    print(report.summary())
    record = {"command": "correct", "input": str(args.input), "mask": str(args.mask),
              "output": str(args.output), "power": args.power, **report.to_dict()}
    line = json.dumps(record, sort_keys=True)
    print(line)
    if args.jsonl:
        with open(args.jsonl, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
    return 0


def cmd_phantom(args, parser) -> int:
    suite = args.suite or STANDARD_SUITE
    _require_exists(parser, suite)
    specs = load_suite(suite)
    if not specs:
        raise PvcError(f"phantom suite {suite} has no cases")
    results = []
    for spec in specs:
        res = run_case(spec, PvcParams(args.power), workers=args.workers)
        if res.undefined:
            _warn(f"{spec.name}: no partial volume error to correct; "
                  "improvement reported as 1.0 by convention")
        results.append(res)
    text = results_csv(results)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    failed = [r.name for r in results if not r.improvement_fraction > 0]
    if failed:
        print(f"error: no improvement for: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_material(args, parser) -> int:
    if args.specimen is not None and (args.law_a is None or args.law_b is None):
        a, b = SPECIMEN_LAWS[args.specimen]
        args.law_a = a if args.law_a is None else args.law_a
        args.law_b = b if args.law_b is None else args.law_b
    _require(parser, args, "input", "mask", "calibration_slope", "law_a", "law_b",
             "threshold_density")
    _require_exists(parser, args.input, args.mask)
    volume = load_volume(args.input)
    mask = load_mask(args.mask)
    mask.require_aligned(volume)
    if mask.count == 0:
        raise PvcError("mask is empty; nothing to map")
    curve = CalibrationCurve(args.calibration_slope, args.calibration_intercept)
    law = DensityModulusLaw(args.law_a, args.law_b, args.e_max)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        bins = map_volume(volume.values[mask.bits], curve, law, args.threshold_density,
                          clip_negative=bool(args.clip_negative_density))
    for w in caught:
        _warn(str(w.message))
    text = material_table(bins)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_info(args, parser) -> int:
    _require(parser, args, "input")
    _require_exists(parser, args.input)
    path = Path(args.input)
    if path.is_dir():
        v = load_volume(path)
        print("format:      DICOM series")
        print(f"slices:      {v.geometry.dims[2]}")
        fields = {"kind": "volume", "dims": v.geometry.dims, "spacing": v.geometry.spacing,
                  "origin": v.geometry.origin, "orientation": v.geometry.orientation,
                  "rescale": v.rescale}
        hu = v.values
    else:
        fields, _ = read_header(path.read_bytes())
        print(f"format:      raw v{fields['version']} ({fields['element_type']})")
        obj = load_volume(path) if fields["kind"] == "volume" else None
        hu = obj.values if obj is not None else None
    for key in ("kind", "dims", "spacing", "origin", "orientation", "rescale"):
        print(f"{key + ':':<12} {fields[key]}")
    if hu is not None:
        print(f"HU range:    {float(np.min(hu)):.3f} .. {float(np.max(hu)):.3f}")
    return 0


COMMANDS = {
    "correct": cmd_correct,
    "phantom": cmd_phantom,
    "material": cmd_material,
    "info": cmd_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _merge_config(parser, args)
    if args.workers is not None and args.workers < 1:
        parser.error("--workers must be at least 1")
    try:
        return COMMANDS[args.command](args, parser)
    except (PvcError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

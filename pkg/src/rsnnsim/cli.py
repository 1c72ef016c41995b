"""Command-line surface.

Subcommands: infer, evaluate, sweep-t, sweep-units, oracle, calibrate,
plan-buffers.  Reports go to stdout or --report FILE in json, csv or
text form; --figure FILE additionally renders a matplotlib PNG for the
same report.  Exit codes: 0 success, 2 configuration or validation
error, 3 unit-capacity error, 4 data-format error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import controller, oracle
from .dataset import ingest_idx
from .errors import ConfigError, SimulatorError
from .figures import render_figure
from .memsys import plan_buffers
from .netmodel import (
    load_params,
    network_to_text,
    parse_network,
    random_params,
    save_params,
)
from .report import render_report


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--net", required=True, help="network description file")
    p.add_argument("--config", help="accelerator configuration file")
    p.add_argument("--report", help="write the report to this file instead of stdout")
    p.add_argument("--format", choices=["json", "csv", "text"], default="text")
    p.add_argument("--figure", help="also render a PNG figure of the report")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for randomized parameters/inputs (recorded in the report)")


def _add_params(p: argparse.ArgumentParser):
    p.add_argument("--params", help="RSNN parameter file")
    p.add_argument("--random-params", action="store_true",
                   help="generate random weights from --seed")
    p.add_argument("--weight-bits", type=int, default=3,
                   help="bit width for --random-params (default 3)")
    p.add_argument("--save-params", help="persist generated parameters to this file")


def _add_input(p: argparse.ArgumentParser):
    p.add_argument("--idx-images", help="IDX image file")
    p.add_argument("--idx-labels", help="IDX label file")
    p.add_argument("--index", type=int, default=0, help="dataset item to run")
    p.add_argument("--pad-to-32", action="store_true",
                   help="zero-pad dataset images to 32x32")
    p.add_argument("--random-input", action="store_true",
                   help="use a random input image from --seed")


def _load_spec(args):
    return parse_network(Path(args.net).read_text())


def _load_accel(args):
    if args.config:
        return controller.load_accelerator_config(args.config)
    return controller.AcceleratorConfig()


def _resolve_params(args, spec, rng):
    if args.params:
        return load_params(args.params, spec)
    if args.random_params:
        params = random_params(spec, args.weight_bits, rng)
        if args.save_params:
            save_params(params, args.save_params)
        return params
    raise ConfigError("no parameters given; use --params FILE or --random-params")


def _resolve_image(args, spec, rng):
    if args.idx_images or args.idx_labels:
        if not (args.idx_images and args.idx_labels):
            raise ConfigError("--idx-images and --idx-labels must be given together")
        ds = ingest_idx(args.idx_images, args.idx_labels, pad_to_32=args.pad_to_32)
        if not 0 <= args.index < len(ds):
            raise ConfigError(f"--index {args.index} outside dataset of {len(ds)} items")
        return ds.images[args.index], int(ds.labels[args.index])
    if args.random_input:
        h, w, c = spec.input_hwc
        shape = (h, w) if c == 1 else (h, w, c)
        return rng.random(shape), None
    raise ConfigError("no input given; use --idx-images/--idx-labels or --random-input")


def _emit(args, report: dict):
    text = render_report(report, args.format)
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    if args.figure:
        render_figure(report, args.figure)


def _base_report(kind, args, accel):
    return {
        "kind": kind,
        "network": Path(args.net).name,
        "seed": args.seed,
        "time_steps": accel.encoding.T,
        "conv_units": accel.conv_units,
        "memory_mode": accel.memory.kind,
    }


def cmd_infer(args) -> int:
    spec = _load_spec(args)
    accel = _load_accel(args)
    rng = np.random.default_rng(args.seed)
    params = _resolve_params(args, spec, rng)
    image, label = _resolve_image(args, spec, rng)
    result = controller.run_inference(spec, params, image, accel)
    report = _base_report("inference", args, accel)
    report["predicted"] = result.predicted
    if label is not None:
        report["label"] = label
    report["logits"] = [int(v) for v in result.logits]
    report["cycle_report"] = result.report.to_dict()
    _emit(args, report)
    return 0


def cmd_oracle(args) -> int:
    spec = _load_spec(args)
    accel = _load_accel(args)
    rng = np.random.default_rng(args.seed)
    params = _resolve_params(args, spec, rng)
    image, label = _resolve_image(args, spec, rng)
    levels = controller.image_to_levels(image, spec, accel.encoding)
    logits, _ = oracle.ref_forward(spec, params, levels, accel.encoding)
    report = _base_report("oracle", args, accel)
    report["predicted"] = int(np.argmax(logits))
    if label is not None:
        report["label"] = label
    report["logits"] = [int(v) for v in logits]
    _emit(args, report)
    return 0


def cmd_evaluate(args) -> int:
    spec = _load_spec(args)
    accel = _load_accel(args)
    rng = np.random.default_rng(args.seed)
    params = _resolve_params(args, spec, rng)
    if not (args.idx_images and args.idx_labels):
        raise ConfigError("evaluate needs --idx-images and --idx-labels")
    ds = ingest_idx(args.idx_images, args.idx_labels, pad_to_32=args.pad_to_32)
    result = controller.evaluate(spec, params, ds.images, ds.labels, accel,
                                 limit=args.limit)
    report = _base_report("evaluate", args, accel)
    report.update(result)
    _emit(args, report)
    return 0


def _parse_int_list(raw: str, what: str) -> list[int]:
    try:
        return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad {what} list {raw!r}") from None


def cmd_sweep_t(args) -> int:
    spec = _load_spec(args)
    accel = _load_accel(args)
    rng = np.random.default_rng(args.seed)
    params = _resolve_params(args, spec, rng)
    image, _ = _resolve_image(args, spec, rng)
    result = controller.sweep_time_steps(spec, params, image, accel,
                                         _parse_int_list(args.t_list, "time step"))
    report = _base_report("sweep_t", args, accel)
    del report["time_steps"]
    report.update(result)
    _emit(args, report)
    return 0


def cmd_sweep_units(args) -> int:
    spec = _load_spec(args)
    accel = _load_accel(args)
    rng = np.random.default_rng(args.seed)
    params = _resolve_params(args, spec, rng)
    image, _ = _resolve_image(args, spec, rng)
    result = controller.sweep_conv_units(spec, params, image, accel,
                                         _parse_int_list(args.u_list, "unit count"))
    report = _base_report("sweep_units", args, accel)
    del report["conv_units"]
    report.update(result)
    _emit(args, report)
    return 0


def cmd_calibrate(args) -> int:
    spec = _load_spec(args)
    accel = _load_accel(args)
    rng = np.random.default_rng(args.seed)
    params = _resolve_params(args, spec, rng)
    if args.idx_images and args.idx_labels:
        ds = ingest_idx(args.idx_images, args.idx_labels, pad_to_32=args.pad_to_32)
        samples = [ds.images[i] for i in range(min(args.samples, len(ds)))]
    elif args.random_input:
        h, w, c = spec.input_hwc
        shape = (h, w) if c == 1 else (h, w, c)
        samples = [rng.random(shape) for _ in range(args.samples)]
    else:
        raise ConfigError("calibrate needs --idx-images/--idx-labels or --random-input")
    shifts = controller.calibrate_requant(spec, params, samples, accel.encoding)
    report = _base_report("calibrate", args, accel)
    report["samples"] = len(samples)
    report["rows"] = [
        {"layer": idx, "kind": spec.layers[idx].kind, "requant_shift": shifts[idx]}
        for idx in sorted(shifts)
    ]
    if args.out_net:
        updated = controller.apply_requant_shifts(spec, shifts)
        Path(args.out_net).write_text(network_to_text(updated))
    _emit(args, report)
    return 0


def cmd_plan_buffers(args) -> int:
    spec = _load_spec(args)
    accel = _load_accel(args)
    plan = plan_buffers(spec, accel.encoding)
    report = {
        "kind": "buffer_plan",
        "network": Path(args.net).name,
        "time_steps": accel.encoding.T,
        "plan": plan.to_dict(),
    }
    _emit(args, report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsnnsim",
        description="Simulator for a radix-encoded spiking CNN accelerator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="run one image through the accelerator model")
    _add_common(p)
    _add_params(p)
    _add_input(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("oracle", help="run one image through the integer reference")
    _add_common(p)
    _add_params(p)
    _add_input(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("evaluate", help="accuracy and latency over a dataset")
    _add_common(p)
    _add_params(p)
    p.add_argument("--idx-images", help="IDX image file")
    p.add_argument("--idx-labels", help="IDX label file")
    p.add_argument("--pad-to-32", action="store_true")
    p.add_argument("--limit", type=int, default=None, help="evaluate only the first N items")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-t", help="latency trend over spike-train lengths")
    _add_common(p)
    _add_params(p)
    _add_input(p)
    p.add_argument("--t-list", default="3,4,5,6", help="comma-separated T values")
    p.set_defaults(func=cmd_sweep_t)

    p = sub.add_parser("sweep-units", help="latency trend over convolution-unit counts")
    _add_common(p)
    _add_params(p)
    _add_input(p)
    p.add_argument("--u-list", default="1,2,4,8", help="comma-separated unit counts")
    p.set_defaults(func=cmd_sweep_units)

    p = sub.add_parser("calibrate", help="derive per-layer requantization shifts")
    _add_common(p)
    _add_params(p)
    _add_input(p)
    p.add_argument("--samples", type=int, default=8, help="number of calibration inputs")
    p.add_argument("--out-net", help="write the network with calibrated shifts here")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("plan-buffers", help="size the ping-pong activation buffers")
    _add_common(p)
    p.set_defaults(func=cmd_plan_buffers)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimulatorError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()

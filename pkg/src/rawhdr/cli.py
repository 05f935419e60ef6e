"""Command-line entry point.

Every failure ends with a single JSON line on stderr,
``{"error": <kind>, "message": <text>}``; usage errors exit with 2, all
other failures with 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like HxW, got {text!r}") from None
    return h, w


def _evs(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"EV list must be comma-separated numbers, got {text!r}") from None


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    return path


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, default=float))


# ------------------------------------------------------------------ commands


def cmd_synth(args):
    from .camera_sim import CameraProfile
    from .dataset import synthesize
    from .formats import read_json

    profile = CameraProfile.from_dict(read_json(_require(args.profile))) if args.profile else CameraProfile()
    path = synthesize(args.out, args.scenes, args.size, args.seed, profile,
                      dynamic_range_bits=args.dynamic_range_bits, workers=args.workers)
    _print({"manifest": str(path), "scenes": args.scenes})


def cmd_merge(args):
    from .camera_sim import ExposureStack
    from .formats import read_raw, write_hdr
    from .hdr_merge import coverage_report, merge

    mosaics = [read_raw(_require(p)) for p in args.stack]
    evs = args.evs if args.evs is not None else [m.exposure_ev for m in mosaics]
    if len(evs) != len(mosaics):
        raise UsageError(f"{len(mosaics)} frames but {len(evs)} EVs")
    order = np.argsort(evs)
    stack = ExposureStack([mosaics[i] for i in order], [evs[i] for i in order])
    write_hdr(args.out, merge(stack))
    _print({"out": str(args.out), "coverage": coverage_report(stack)})


def cmd_init(args):
    from .formats import read_json
    from .net import NetConfig
    from .training import init_model, save_model

    config = NetConfig.from_dict(read_json(_require(args.net_config))) if args.net_config else NetConfig()
    save_model(args.out, init_model(config, args.seed))
    _print({"checkpoint": str(args.out)})


def cmd_train(args):
    from .dataset import load_pairs, read_manifest
    from .formats import read_json
    from .net import NetConfig
    from .training import TrainConfig, train

    pairs = load_pairs(read_manifest(_require(args.manifest)))
    net_cfg = NetConfig.from_dict(read_json(_require(args.net_config))) if args.net_config else NetConfig()
    train_cfg = TrainConfig.from_dict(read_json(_require(args.train_config))) if args.train_config else TrainConfig()
    holdout = load_pairs(read_manifest(_require(args.holdout))) if args.holdout else None
    _, history = train(pairs, net_cfg, train_cfg, holdout=holdout, out_dir=args.out,
                       resume=args.resume, max_steps=args.max_steps)
    _print({"checkpoint": str(Path(args.out) / "model.rhnp"), "epochs": len(history),
            "final": history[-1] if history else None})


def cmd_infer(args):
    from .formats import read_raw, write_hdr
    from .net import forward
    from .training import load_model

    model = load_model(_require(args.checkpoint))
    hdr = forward(read_raw(_require(args.raw)), model)
    write_hdr(args.out, hdr)
    _print({"out": str(args.out), "shape": list(hdr.shape)})


def cmd_eval(args):
    from .dataset import load_pairs, read_manifest
    from .formats import write_json
    from .metrics import cap_for_table, evaluate
    from .net import forward
    from .training import load_model

    manifest = read_manifest(_require(args.manifest))
    model = load_model(_require(args.checkpoint))
    records = []
    for entry, (raw, hdr) in zip(manifest.entries, load_pairs(manifest)):
        rec = evaluate(forward(raw, model), hdr, args.mu, entry.scene_id)
        rec["psnr"], rec["psnr_mu"] = cap_for_table(rec["psnr"]), cap_for_table(rec["psnr_mu"])
        records.append(rec)
    keys = ("psnr", "psnr_mu", "ssim", "ms_ssim")
    mean = {k: (float(np.mean([r[k] for r in records])) if all(r[k] is not None for r in records) else None)
            for k in keys}
    report = {"records": records, "mean": mean, "mu": args.mu}
    write_json(args.report, report)
    _print({"report": str(args.report), "mean": mean})


def cmd_analyze(args):
    from .dataset import analyze_channels, read_manifest

    report = analyze_channels(read_manifest(_require(args.manifest)), args.out)
    _print({"ordering": report["ordering"], "channel_means": report["channel_means"],
            "report": str(Path(args.out) / "channel_report.json")})


def cmd_grad_check(args):
    from .gradcheck import OPS, grad_check

    if args.op not in OPS:
        raise UsageError(f"unknown op {args.op!r}; choose from {', '.join(sorted(OPS))}")
    result = grad_check(args.op, args.seed)
    ok = result.max_rel_err <= args.tol
    _print({"op": result.op, "max_rel_err": result.max_rel_err, "tol": args.tol, "pass": ok})
    return 0 if ok else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rawhdr", description="Single-Raw-image HDR reconstruction toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="render, bracket and merge synthetic scenes")
    s.add_argument("--scenes", type=int, required=True)
    s.add_argument("--size", type=_size, required=True, help="Raw size as HxW")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--profile", help="camera profile JSON")
    s.add_argument("--dynamic-range-bits", type=int, default=20)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("merge", help="merge a bracketed stack of Raw files into HDR")
    s.add_argument("--stack", nargs="+", required=True)
    s.add_argument("--evs", type=_evs, help="comma-separated EVs (default: from sidecars)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_merge)

    s = sub.add_parser("init", help="write an untrained checkpoint")
    s.add_argument("--net-config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("train", help="train on a dataset manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--net-config")
    s.add_argument("--train-config")
    s.add_argument("--holdout", help="manifest evaluated during training")
    s.add_argument("--max-steps", type=int)
    s.add_argument("--resume", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="reconstruct HDR from one Raw file")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--raw", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--mu", type=float, default=5000.0)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("analyze-channels", help="channel means and dominant-channel maps")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("grad-check", help="finite-difference gradient verification")
    s.add_argument("--op", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-4)
    s.set_defaults(func=cmd_grad_check)
    return p


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except (FileNotFoundError, TypeError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_USAGE)
    except Exception as exc:  # noqa: BLE001 - surfaced as a machine-readable line
        return _fail(type(exc).__name__, str(exc), EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())

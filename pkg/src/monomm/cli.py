"""Command-line entry point: ``monomm {train-toy,infer,eval,verify,scan-bench}``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .data.dataset import export_frames, load_frames
from .data.kitti import KittiFormatError, write_kitti_result
from .eval.report import evaluate_dirs

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SCAN_BENCH_TOL = 1e-6

log = logging.getLogger("monomm")


def _config(args, **overrides) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    updates = {k: v for k, v in overrides.items() if v is not None}
    try:
        return cfg.replace(**updates) if updates else cfg
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_train_toy(args) -> int:
    from .train import make_scenes, save_checkpoint, train, write_loss_curve

    cfg = _config(args, seed=args.seed, scenes=args.scenes, steps=args.steps, precision=args.precision)
    if args.steps is not None:
        cfg = cfg.replace(epochs=0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames = make_scenes(cfg)
    export_frames(frames, out / "scenes")
    (out / "config.txt").write_text(cfg.to_text())
    steps = cfg.total_steps()
    t0 = time.perf_counter()

    def report(rec):
        if rec["step"] % max(steps // 20, 1) == 0 or rec["step"] == steps - 1:
            print(f"step {rec['step']:4d}  lr {rec['lr']:.2e}  total {rec['total']:.4f}  cls {rec['cls']:.4f}  "
                  f"reg {rec['reg']:.4f}  dep {rec['dep']:.4f}  ({time.perf_counter() - t0:.0f}s)", flush=True)

    result = train(cfg, frames, callback=report)
    save_checkpoint(result.model, cfg, out / "checkpoint.zip")
    write_loss_curve(result.history, out / "loss_curve.csv")
    if result.history:
        first, last = result.history[0]["total"], result.history[-1]["total"]
        print(f"total loss {first:.4f} -> {last:.4f} ({last / first:.1%} of initial)")
    print(f"wrote {out / 'checkpoint.zip'} and {out / 'loss_curve.csv'}")
    return EXIT_OK


def cmd_infer(args) -> int:
    from .train import load_checkpoint, predict_frame

    expect = load_config(args.config) if args.config else None
    model, cfg = load_checkpoint(args.checkpoint, expect)
    if args.precision is not None:
        cfg = cfg.replace(precision=args.precision)
    frames = load_frames(args.input, with_labels=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    total = 0
    for frame in frames:
        dets = predict_frame(model, frame, cfg)
        total += len(dets)
        write_kitti_result(dets, out / f"{frame.name}.txt")
    print(f"wrote {len(frames)} result file(s) with {total} detection(s) to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .eval.ap import EvalConfig

    cfg = _config(args)
    report = evaluate_dirs(args.results, args.gt, EvalConfig(), classes=cfg.classes)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    text = report.table() + "\n" + report.key_values()
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.txt").write_text(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_suite

    results = run_suite(args.suite, seed=args.seed or 0)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        # timings are left out so the file is reproducible
        (out / f"verify_{args.suite}.txt").write_text(
            "".join(f"{'PASS' if r.passed else 'FAIL'} {r.suite}/{r.name}: {r.detail}\n" for r in results)
        )
    return EXIT_FAIL if failed else EXIT_OK


def cmd_scan_bench(args) -> int:
    from .verify import scan_bench

    lengths = tuple(int(t) for t in args.lengths.split(","))
    dtype = np.float64 if args.precision == 64 else np.float32
    rows = scan_bench(lengths, args.dim, args.state, args.repeats, args.seed or 0, dtype)
    print(f"{'T':>6} {'sequential ms':>14} {'blocked ms':>11} {'speedup':>8} {'max rel diff':>13}")
    ok = True
    for r in rows:
        equal = r.max_rel_diff <= SCAN_BENCH_TOL
        ok &= equal
        print(f"{r.T:6d} {r.sequential * 1e3:14.3f} {r.blocked * 1e3:11.3f} {r.speedup:8.2f} {r.max_rel_diff:13.2e}"
              + ("" if equal else "  MISMATCH"))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        # only the equivalence results go to disk; wall times vary run to run
        lines = ["T,E,N,max_rel_diff,equal\n"] + [
            f"{r.T},{args.dim},{args.state},{r.max_rel_diff!r},{str(r.max_rel_diff <= SCAN_BENCH_TOL).lower()}\n"
            for r in rows
        ]
        (out / "scan_bench.csv").write_text("".join(lines))
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="monomm", description="Desk-scale monocular 3-D detection toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", metavar="PATH", help="flat key=value run configuration")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--precision", type=int, choices=(32, 64))
        p.add_argument("--out", metavar="DIR", required=out_required)

    p = sub.add_parser("train-toy", help="train on synthetic scenes")
    common(p, out_required=True)
    p.add_argument("--scenes", type=int, metavar="N")
    p.add_argument("--steps", type=int, metavar="N")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("infer", help="write KITTI result files for a frame directory")
    common(p, out_required=True)
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--input", required=True, metavar="DIR", help="directory with image_2/ and calib/")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="AP|40 report for result files against labels")
    common(p)
    p.add_argument("--results", required=True, metavar="DIR")
    p.add_argument("--gt", required=True, metavar="DIR")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run oracle suites")
    common(p)
    p.add_argument("--suite", default="all", choices=("gradcheck", "scan", "iou", "ap", "all"))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("scan-bench", help="time sequential vs blocked selective scan")
    common(p)
    p.add_argument("--lengths", default="1,64,256,1024", metavar="T1,T2,...")
    p.add_argument("--dim", type=int, default=64, metavar="E")
    p.add_argument("--state", type=int, default=16, metavar="N")
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_scan_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    for name in ("scenes", "steps"):
        if getattr(args, name, None) is not None and getattr(args, name) < (1 if name == "scenes" else 0):
            parser.error(f"--{name} must be {'positive' if name == 'scenes' else 'non-negative'}")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, KittiFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

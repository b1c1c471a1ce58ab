"""``so3fm`` command line: verify, train, eval, viz."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("so3fm")


def blob_hash(data: bytes) -> str:
    """Content hash in git's blob format: ``sha1("blob <len>\\0" + data)``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def cmd_verify(args) -> int:
    from .verify import format_table, run_checks

    checks = run_checks(seed=args.seed, fast=args.fast)
    print(format_table(checks))
    return 0 if all(c.passed for c in checks) else 1


def _load_config(path):
    from .training import TrainConfig

    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise SystemExit(f"error: {path}: invalid JSON ({e})")
    if not isinstance(doc, dict):
        raise SystemExit(f"error: {path}: expected a JSON object")
    try:
        return TrainConfig.from_dict(doc), raw
    except (TypeError, ValueError) as e:
        raise SystemExit(f"error: {path}: {e}")


def write_metrics_csv(history, path) -> None:
    from .training import CSV_HEADER

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in history:
            w.writerow([row["step"]] + [repr(float(row[k])) for k in CSV_HEADER[1:]])


def cmd_train(args) -> int:
    from .training import run
    from .viz import plot_history

    cfg, raw = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run(cfg)
    write_metrics_csv(result.ssl.history, out / "metrics.csv")
    result.ssl.student.save(out / "model.bin")
    plot_history(result.ssl.history, out / "training.png")
    manifest = {
        "tool": f"so3fm {__version__}",
        "config": cfg.to_dict(),
        "inputs": {str(args.config): blob_hash(raw)},
        "tau": result.ssl.tau,
        "outputs": {
            name: blob_hash((out / name).read_bytes())
            for name in ("metrics.csv", "model.bin", "model.bin.json")
        },
        "report": result.report.to_dict(),
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(json.dumps(result.report.to_dict(), indent=2))
    return 0


def cmd_eval(args) -> int:
    from .network import HEADS, Regressor
    from .training import evaluate, make_splits

    cfg, _ = _load_config(args.config)
    try:
        model = Regressor.load(args.model)
    except (OSError, ValueError, KeyError) as e:
        raise SystemExit(f"error: cannot load model {args.model}: {e}")
    if model.n_out != HEADS[cfg.head].n_out:
        raise SystemExit(f"error: model has {model.n_out} outputs, head {cfg.head!r} needs "
                         f"{HEADS[cfg.head].n_out}")
    splits = make_splits(cfg)
    if model.n_in != splits.test.features.shape[1]:
        raise SystemExit("error: model input size does not match the configured task")
    print(json.dumps(evaluate(model, splits.test, cfg).to_dict(), indent=2))
    return 0


def _parse_matrix(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("--A expects nine comma-separated numbers")
    if len(vals) != 9 or not np.all(np.isfinite(vals)):
        raise argparse.ArgumentTypeError("--A expects nine finite comma-separated numbers")
    return np.array(vals).reshape(3, 3)


def cmd_viz(args) -> int:
    from .fisher import FisherParams, QuadratureConfig
    from .viz import plot_marginals, render_all, write_ppms

    try:
        f = FisherParams(args.A, QuadratureConfig(s_max=args.s_max))
    except ValueError as e:
        raise SystemExit(f"error: {e}")
    images = render_all(f, width=args.width, height=args.height, ring_samples=args.ring_samples)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    for p in write_ppms(images, args.out):
        print(p)
    if args.png:
        print(plot_marginals(images, f"{args.out}.png", title="A = " + np.array2string(args.A.ravel(), precision=3)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="so3fm", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="analytic vs oracle check table")
    v.add_argument("--fast", action="store_true", help="1e5 Monte-Carlo samples instead of 1e6")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(fn=cmd_verify)

    t = sub.add_parser("train", help="pretrain + semi-supervised stage")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default="run")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved model on the configured test set")
    e.add_argument("--model", required=True)
    e.add_argument("--config", required=True)
    e.set_defaults(fn=cmd_eval)

    z = sub.add_parser("viz", help="per-axis marginal images of a matrix Fisher distribution")
    z.add_argument("--A", required=True, type=_parse_matrix, help="a11,a12,...,a33 (row-major)")
    z.add_argument("--out", required=True, help="output prefix; writes <prefix>_x.ppm etc.")
    z.add_argument("--width", type=int, default=256)
    z.add_argument("--height", type=int, default=128)
    z.add_argument("--ring-samples", type=int, default=64)
    z.add_argument("--s-max", type=float, default=500.0)
    z.add_argument("--png", action="store_true", help="also write <prefix>.png with all three")
    z.set_defaults(fn=cmd_viz)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

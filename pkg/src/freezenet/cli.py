"""Command line entry point: ``freezenet <verb> --config cfg.json --out dir``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .data_io import save_trialset
from .errors import ConfigError, FormatError, NumericalError, ParseError, RangeError, ShapeError, DomainError
from .experiment import config as config_mod
from .experiment import report as report_mod
from .experiment import runner
from .experiment.metrics import MetricsReport

log = logging.getLogger("freezenet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def _parse_thresholds(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freezenet", description="Weight-Freezing training experiments")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="parallel runs for sweeps (env FREEZENET_THREADS)")
        p.add_argument("--quiet", action="store_true")
        return p

    common(sub.add_parser("generate", help="write the configured synthetic train/test sets as .frz files"))
    common(sub.add_parser("preprocess", help="filter, epoch, normalize and align; write .frz files"))
    common(sub.add_parser("train", help="run one experiment and write its report"))
    p = common(sub.add_parser("sweep", help="threshold sweep"))
    p.add_argument("--thresholds", type=_parse_thresholds, default=list(config_mod.DEFAULT_THRESHOLDS))
    p = common(sub.add_parser("compare", help="baseline vs Weight-Freezing at one threshold"))
    p.add_argument("--t", type=float, default=None, help="threshold (default: config classifier.threshold_t)")
    p = common(sub.add_parser("report", help="re-render outputs from a saved report.json"), needs_config=False)
    p.add_argument("--input", required=True, help="report.json written by 'train'")
    p.add_argument("--config", default=None, help="optional config (adds smoothed curve)")
    sub.add_parser("schema", help="print the config JSON schema")
    return parser


def _cmd_generate(args, cfg):
    source = cfg["data"]
    if "synthetic" not in source:
        raise ConfigError("generate needs a data.synthetic section")
    train, test = runner.load_source(source)
    os.makedirs(args.out, exist_ok=True)
    save_trialset(train, os.path.join(args.out, "train.frz"))
    save_trialset(test, os.path.join(args.out, "test.frz"))
    log.info("wrote %d train and %d test trials to %s", len(train), len(test), args.out)


def _cmd_preprocess(args, cfg):
    from .trials import Trial, TrialSet

    data = runner.prepare_data(cfg)
    names = [f"class_{k}" for k in range(data.n_classes)]
    os.makedirs(args.out, exist_ok=True)
    for split, X, y in (("train", data.train_X, data.train_y), ("test", data.test_X, data.test_y)):
        ts = TrialSet([Trial(x, int(lab), "S01", split) for x, lab in zip(X, y)], data.fs, names)
        save_trialset(ts, os.path.join(args.out, f"{split}.frz"))
    log.info("wrote preprocessed splits to %s", args.out)


def _progress(args, total):
    if args.quiet:
        return None

    def on_epoch(trainer):
        rec = trainer.history[-1]
        if rec.epoch == 1 or rec.epoch % 10 == 0 or rec.epoch == total:
            log.info("epoch %d/%d  loss %.4f  test acc %.4f", rec.epoch, total, rec.train_loss, rec.test_accuracy)

    return on_epoch


def _cmd_train(args, cfg):
    report = runner.run_experiment(cfg, on_epoch=_progress(args, cfg["epochs"]))
    report_mod.emit_report(report, args.out, cfg)
    log.info("max test accuracy %.4f (epoch %d)", report.max_test_accuracy, report.max_test_epoch)


def _cmd_sweep(args, cfg):
    rows = runner.threshold_sweep(cfg, args.thresholds, threads=args.threads)
    report_mod.emit_sweep(rows, args.out, cfg)
    for r in rows:
        if r.status == "ok":
            log.info("t=%.2f  max %.4f  median %s", r.threshold_t, r.max_test_accuracy, r.median_test_accuracy_window)
        else:
            log.warning("t=%.2f  FAILED: %s", r.threshold_t, r.error)


def _cmd_compare(args, cfg):
    t = cfg["classifier"]["threshold_t"] if args.t is None else args.t
    comp = runner.compare_before_after(cfg, t)
    report_mod.emit_comparison(comp, args.out, cfg)
    log.info("median-window difference (WF - baseline): %s", comp.median_difference)


def _cmd_report(args, cfg):
    with open(args.input) as fh:
        report = MetricsReport.from_dict(json.load(fh))
    report_mod.emit_report(report, args.out, cfg)


COMMANDS = {
    "generate": _cmd_generate,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "schema":
        print(json.dumps(config_mod.CONFIG_SCHEMA, indent=2))
        return EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = None if args.config is None else config_mod.load_config(args.config, seed=args.seed)
        COMMANDS[args.verb](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, ParseError, RangeError, ShapeError, DomainError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

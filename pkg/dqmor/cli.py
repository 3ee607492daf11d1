"""
Command-line entry point: train, evaluate, predict, synth, gradcheck, benchmark.

Exit codes: 0 success, 1 runtime/domain error, 2 usage error. All randomness
flows from --seed; environment variables are not consulted.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .aggregation import predict_bags, write_bag_predictions
from .config import HYPERPARAMETER_TYPES, MODEL_KINDS, QmrConfig, load_preset
from .dataio import load_checkpoint, load_csv, save_checkpoint, save_csv, split_bags, synth_generate
from .errors import DqmorError, InvalidArgumentError
from .evaluation import compute_metrics, summarize_trials, variance_by_error
from .models import predict_patch_posteriors
from .rff_encoder import sample_encoder
from .training import gradient_check, random_problem, train

logger = logging.getLogger("dqmor")

DEFAULT_GRADE_BASE = 6


# =============================================================================
# PARSER
# =============================================================================

def _add_hyperparameters(parser, names=None):
    """Add flags declared in HYPERPARAMETER_TYPES; defaults stay None so presets can fill them."""
    for name, (kind, options) in HYPERPARAMETER_TYPES.items():
        if names is not None and name not in names:
            continue
        kwargs = {"dest": name, "default": None, "help": options.get("help")}
        if isinstance(kind, list):
            kwargs["choices"] = kind
        else:
            kwargs["type"] = int if kind == "INT" else float
        parser.add_argument(options["flag"], **kwargs)


def _config_from_args(args, kind: str) -> QmrConfig:
    values = load_preset(args.preset) if getattr(args, "preset", None) else {}
    for name in HYPERPARAMETER_TYPES:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            values[name] = flag_value
    try:
        return QmrConfig.for_model(kind, **values)
    except InvalidArgumentError as e:
        args.subparser.error(str(e))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dqmor", description="Density-matrix ordinal regression over precomputed features")
    parser.add_argument("--quiet", action="store_true", help="only print warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a QMR or DMKDC model")
    p.add_argument("--model", choices=MODEL_KINDS, default="qmr")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--out", required=True, help="checkpoint JSON to write")
    p.add_argument("--report", help="TrainReport JSON (default: <out>.report.json)")
    p.add_argument("--preset", help="hyperparameter preset name")
    p.add_argument("--stamp", action="store_true", help="record a creation timestamp in the checkpoint")
    _add_hyperparameters(p)
    p.set_defaults(handler=cmd_train, subparser=p)

    p = sub.add_parser("evaluate", help="patch and bag metrics for a labeled dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="metrics JSON to write")
    p.add_argument("--variance-csv", help="abs_error,variance table (default: <out>.variance.csv)")
    p.add_argument("--grade-base", type=int, default=DEFAULT_GRADE_BASE, help="display offset for grades (Gleason 6)")
    p.set_defaults(handler=cmd_evaluate, subparser=p)

    p = sub.add_parser("predict", help="bag predictions for a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="bag prediction CSV to write")
    p.add_argument("--method", choices=["MV", "PV", "both"], default="both")
    p.add_argument("--per-patch", help="also write per-patch posteriors to this CSV")
    p.set_defaults(handler=cmd_predict, subparser=p)

    p = sub.add_parser("synth", help="generate a synthetic ordinal dataset")
    p.add_argument("--bags", type=int, required=True)
    p.add_argument("--patches", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--grades", type=int, default=5)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--margin", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth, subparser=p)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--model", choices=MODEL_KINDS, default="qmr")
    p.add_argument("--dim", type=int, default=8, help="state dimension D")
    p.add_argument("--grades", type=int, default=5)
    p.add_argument("--eig", type=int, default=4)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(handler=cmd_gradcheck, subparser=p)

    p = sub.add_parser("benchmark", help="repeated QMR vs DMKDC trials on a bag-level split")
    p.add_argument("--data", required=True)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--split", default="0.6,0.2,0.2", help="train,validation,test fractions by bag; the best epoch is picked on validation loss")
    _add_hyperparameters(p, names={"rff_dim", "num_grades", "num_components", "gamma", "alpha",
                                   "learning_rate", "epochs", "batch_size", "seed", "init"})
    p.set_defaults(handler=cmd_benchmark, subparser=p, preset=None)
    return parser


# =============================================================================
# SUBCOMMANDS
# =============================================================================

def cmd_train(args) -> int:
    config = _config_from_args(args, args.model)
    dataset = load_csv(args.data, config.num_grades)
    encoder = sample_encoder(dataset.input_dim, config.rff_dim, config.gamma, config.seed)
    model, report = train(args.model, dataset, encoder, config)

    save_checkpoint(model, encoder, args.out, config=config, created=True if args.stamp else None)
    report_path = args.report or str(Path(args.out).with_suffix(".report.json"))
    report.save(report_path)
    logger.info("[DQMOR Train] Wrote %s (best epoch %d, loss %.6g) and %s",
                args.out, report.best_epoch, report.best_loss, report_path)
    return 0


def _bag_level(dataset, probs, method):
    predictions = predict_bags(dataset, probs, method)
    truth = dataset.bag_labels()
    y_true = [truth[p.bag_id] for p in predictions]
    return predictions, y_true


def cmd_evaluate(args) -> int:
    model, encoder, _ = load_checkpoint(args.checkpoint)
    N = model.num_grades
    dataset = load_csv(args.data, N)
    probs = predict_patch_posteriors(model, encoder, dataset.features)

    reports = [compute_metrics(dataset.labels, _argmax_rows(probs), N, level="patch", method="argmax")]
    pv_predictions, pv_truth = None, None
    for method in ("MV", "PV"):
        predictions, y_true = _bag_level(dataset, probs, method)
        y_pred = [p.predicted_grade for p in predictions]
        reports.append(compute_metrics(y_true, y_pred, N, level="bag", method=method))
        if method == "PV":
            pv_predictions, pv_truth = predictions, y_true

    groups = variance_by_error(pv_predictions, pv_truth)
    variance_csv = args.variance_csv or str(Path(args.out).with_suffix(".variance.csv"))
    groups.write_csv(variance_csv)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump({
            "reports": [r.to_dict() for r in reports],
            "variance_by_error": {str(k): v for k, v in groups.summary.items()},
        }, f, indent=2)
        f.write("\n")

    print(_metrics_table(reports))
    print(_grade_table(pv_predictions, pv_truth, N, args.grade_base))
    return 0


def _argmax_rows(probs: np.ndarray) -> np.ndarray:
    """Row-wise argmax with ties toward the higher grade."""
    return probs.shape[1] - 1 - np.argmax(probs[:, ::-1], axis=1)


def _metrics_table(reports) -> str:
    lines = [f"{'level':<12}{'method':<14}{'accuracy':>10}{'macro_f1':>10}{'mae':>10}{'n':>8}"]
    for r in reports:
        lines.append(f"{'level=' + r.level:<12}{'method=' + r.method:<14}"
                     f"{r.accuracy:>10.3f}{r.macro_f1:>10.3f}{r.mae:>10.3f}{r.num_samples:>8d}")
    return "\n".join(lines)


def _grade_table(predictions, y_true, num_grades: int, grade_base: int) -> str:
    predicted = np.bincount([p.predicted_grade for p in predictions], minlength=num_grades)
    actual = np.bincount(np.asarray(y_true, dtype=np.int64), minlength=num_grades)
    lines = ["PV bag predictions by grade", f"{'grade':<12}{'true':>8}{'predicted':>12}"]
    for r in range(num_grades):
        lines.append(f"{'Gleason ' + str(r + grade_base):<12}{actual[r]:>8d}{predicted[r]:>12d}")
    return "\n".join(lines)


def cmd_predict(args) -> int:
    model, encoder, _ = load_checkpoint(args.checkpoint)
    N = model.num_grades
    dataset = load_csv(args.data, N, require_labels=False)
    probs = predict_patch_posteriors(model, encoder, dataset.features)

    methods = ("MV", "PV") if args.method == "both" else (args.method,)
    predictions = []
    for method in methods:
        predictions.extend(predict_bags(dataset, probs, method))
    write_bag_predictions(predictions, N, args.out)

    if args.per_patch:
        frame = pd.DataFrame(probs, columns=[f"p{r}" for r in range(N)])
        frame.insert(0, "patch_id", list(dataset.patch_ids))
        frame.insert(0, "bag_id", list(dataset.bag_ids))
        frame.to_csv(args.per_patch, index=False, lineterminator="\n")
    logger.info("[DQMOR Predict] Wrote %d bag prediction(s) to %s", len(predictions), args.out)
    return 0


def cmd_synth(args) -> int:
    dataset = synth_generate(args.bags, args.patches, args.dim, args.grades, args.sigma, args.seed, margin=args.margin)
    save_csv(dataset, args.out)
    logger.info("[DQMOR Data] Wrote %d patches in %d bags to %s", len(dataset), args.bags, args.out)
    return 0


def cmd_gradcheck(args) -> int:
    model, batch = random_problem(args.model, args.dim, args.grades, args.eig, args.batch, args.seed)
    report = gradient_check(model, batch, h=args.h, alpha=args.alpha, corrupt=args.corrupt)
    print(json.dumps(report.to_dict(), indent=2))
    return 0 if report.passed() else 1


def _parse_split(text: str):
    try:
        fractions = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise DqmorError(f"--split must be comma-separated fractions, got {text!r}")
    if len(fractions) != 3:
        raise DqmorError(f"--split needs train,validation,test fractions, got {text!r}")
    return fractions


def cmd_benchmark(args) -> int:
    base = _config_from_args(args, "qmr")
    dataset = load_csv(args.data, base.num_grades)
    train_set, val_set, test_set = split_bags(dataset, _parse_split(args.split), seed=base.seed)
    if len(train_set) == 0 or len(test_set) == 0:
        raise DqmorError("split left the train or test partition empty")

    rows = []
    for kind in MODEL_KINDS:
        by_setting = {"patch": [], "MV": [], "PV": []}
        for trial in range(args.trials):
            config = _config_from_args(args, kind).with_overrides(seed=base.seed + trial)
            encoder = sample_encoder(dataset.input_dim, config.rff_dim, config.gamma, config.seed)
            # best epoch by validation loss when the split leaves one
            model, _ = train(kind, train_set, encoder, config, validation=val_set if len(val_set) else None)
            probs = predict_patch_posteriors(model, encoder, test_set.features)
            N = config.num_grades
            by_setting["patch"].append(compute_metrics(test_set.labels, _argmax_rows(probs), N, "patch", "argmax"))
            for method in ("MV", "PV"):
                predictions, y_true = _bag_level(test_set, probs, method)
                y_pred = [p.predicted_grade for p in predictions]
                by_setting[method].append(compute_metrics(y_true, y_pred, N, "bag", method))
        for setting, reports in by_setting.items():
            rows.append((kind, setting, summarize_trials(reports)))

    print(f"{'model':<8}{'setting':<8}{'accuracy':>18}{'macro_f1':>18}{'mae':>18}")
    for kind, setting, s in rows:
        cells = "".join(f"{s[m]['mean']:>10.3f} ± {s[m]['std']:.3f}" for m in ("accuracy", "macro_f1", "mae"))
        print(f"{kind:<8}{setting:<8}{cells}")
    return 0


# =============================================================================
# ENTRY POINT
# =============================================================================

def _configure_logging(quiet: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(logging.WARNING if quiet else logging.INFO)
    logger.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.quiet)
    try:
        return args.handler(args)
    except DqmorError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface binding the toolkit into reproducible experiments.

Exit codes: 0 success, 1 usage error, 2 failed success criteria in attest.
All randomness flows from --seed.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import dataio
from .dataio import SplitSpec, gen_synthetic, load_model, save_csv, save_model, split
from .defence import detection_scores, prune_forest, prune_rep, roc_auc
from .embed_blackbox import embed_forest_blackbox, embed_tree_blackbox
from .embed_whitebox import embed_forest_whitebox, embed_tree_whitebox
from .errors import TamperwoodError, UsageError
from .evaluate import evaluate_criteria, repeated_trial, timed, trial_rows_csv, TrialConfig
from .extract import extract_knowledge, suspected_paths
from .forest import Forest, accuracy, train_forest
from .knowledge import parse_knowledge
from .tree import TrainParams, Tree, train_tree


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the CLI contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _emit(rows, fmt, header=None):
    if fmt == "csv":
        if header:
            print(",".join(header))
        for row in rows:
            print(",".join(str(v) for v in row))
    else:
        width = max((len(str(r[0])) for r in rows), default=0)
        for row in rows:
            print(f"{str(row[0]).ljust(width)}  " + "  ".join(str(v) for v in row[1:]))


def _split_fracs(text):
    try:
        a, b, c = (float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--split expects three comma-separated fractions, got {text!r}")
    return a, b, c


def _load_data(args, attr="data"):
    return dataio.load_csv(getattr(args, attr), _column(args.label_column),
                           normalize=getattr(args, "normalize", False))


def _column(text):
    try:
        return int(text)
    except ValueError:
        return text


def _params(args):
    return TrainParams(criterion=args.criterion, max_depth=args.max_depth,
                       min_samples_leaf=args.min_samples_leaf, seed=args.seed)


def _load_knowledge(args, n_classes):
    with open(args.knowledge) as fh:
        return parse_knowledge(fh.read(), n_classes=n_classes)


def _train_model(train_set, args):
    params = _params(args)
    if args.kind == "forest":
        return train_forest(train_set, args.trees, params)
    return train_tree(train_set, params)


def _add_data_flags(p):
    p.add_argument("--data", required=True, help="dataset CSV with header row")
    p.add_argument("--label-column", default="label", help="label column name or index")
    p.add_argument("--normalize", action="store_true", help="min-max scale features to [0,1]")
    p.add_argument("--split", default="0.6,0.2,0.2", help="train,val,test fractions")


def _add_model_flags(p):
    p.add_argument("--kind", choices=("tree", "forest"), default="forest")
    p.add_argument("--trees", type=int, default=20, help="forest size")
    p.add_argument("--criterion", choices=("gini", "entropy"), default="gini")
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--min-samples-leaf", type=int, default=1)


def _embed(train_set, k, args):
    params = _params(args)
    if args.mode == "blackbox":
        if args.kind == "forest":
            return embed_forest_blackbox(train_set, k, args.trees, params, args.tmax)
        return embed_tree_blackbox(train_set, k, params, args.tmax)
    base = _train_model(train_set, args)
    if args.kind == "forest":
        return embed_forest_whitebox(base, k)
    return embed_tree_whitebox(base, k)


def cmd_gen_data(args):
    d = gen_synthetic(args.rows, args.features, args.classes, args.seed)
    save_csv(d, args.out)
    print(f"wrote {d.n_rows} rows x {d.n_features} features, {d.n_classes} classes -> {args.out}")
    return 0


def cmd_train(args):
    d = _load_data(args)
    spec = SplitSpec(*_split_fracs(args.split), seed=args.seed)
    train_set, _, test_set = split(d, spec)
    model = _train_model(train_set, args)
    save_model(model, args.out, normalized=d.normalized)
    rows = [
        ("kind", args.kind),
        ("train_rows", train_set.n_rows),
        ("train_acc", f"{accuracy(model, train_set):.6f}"),
        ("test_acc", f"{accuracy(model, test_set):.6f}"),
    ]
    if d.label_names:
        rows.append(("label_mapping", ";".join(f"{n}={i}" for i, n in enumerate(d.label_names))))
    _emit(rows, args.format)
    return 0


def cmd_embed(args):
    d = _load_data(args)
    spec = SplitSpec(*_split_fracs(args.split), seed=args.seed)
    train_set, _, test_set = split(d, spec)
    k = _load_knowledge(args, d.n_classes)
    if args.original_out:
        save_model(_train_model(train_set, args), args.original_out, normalized=d.normalized)
    (model, report), secs = timed(_embed, train_set, k, args)
    save_model(model, args.out, normalized=d.normalized)
    rows = [("mode", args.mode), ("kind", args.kind), ("embed_runtime_sec", f"{secs:.4f}"),
            ("clean_test_acc", f"{accuracy(model, test_set):.6f}")]
    if args.mode == "blackbox":
        rows += [("ke_samples_added", report.ke_samples_added),
                 ("iterations", report.iterations),
                 ("converged", str(report.converged).lower())]
    else:
        rows += [("modified_paths", report.modified_paths),
                 ("depth_before", report.depth_before),
                 ("depth_after", report.depth_after),
                 ("failed_paths", len(report.failed_paths))]
    _emit(rows, args.format)
    return 0


def cmd_attest(args):
    d = _load_data(args)
    spec = SplitSpec(*_split_fracs(args.split), seed=args.seed)
    train_set, _, test_set = split(d, spec)
    k = _load_knowledge(args, d.n_classes)
    original = _train_model(train_set, args)
    (embedded, _), secs = timed(_embed, train_set, k, args)
    report = evaluate_criteria(original, embedded, test_set, k, alpha_p=args.alpha_p)
    report.embed_runtime = secs
    report.seeds = {"seed": args.seed}
    _emit(report.rows(), args.format)
    return 0 if (report.p_rule_pass and report.v_rule_pass) else 2


def cmd_extract(args):
    model = load_model(args.model)
    if isinstance(model, Tree):
        raise UsageError("extraction operates on forests; got a single tree")
    train_set = dataio.load_csv(args.train, _column(args.label_column))
    probe = dataio.load_csv(args.probe, _column(args.label_column))
    m_start, m_max = args.m_range
    sp_by_label = suspected_paths(model, probe, train_set, args.eps2)
    if not sp_by_label:
        print("no suspected joint paths (no probe input was flagged)")
        return 0
    rows = []
    for label in sorted(sp_by_label):
        sp = sp_by_label[label]
        (result, secs) = timed(extract_knowledge, model, train_set, sp, args.ck,
                               m_start, m_max)
        if result is None:
            rows.append((f"label_{label}", "no rule above threshold",
                         f"paths={len(sp.paths)}", f"runtime={secs:.3f}s"))
        else:
            rows.append((
                f"label_{label}",
                result.knowledge.describe(train_set.feature_names),
                f"support={result.support:.3f}",
                f"m={result.m_used}",
                f"witnesses={len(result.witnesses)}",
                f"paths={len(sp.paths)}",
                f"runtime={secs:.3f}s",
            ))
    _emit(rows, args.format)
    return 0


def cmd_detect(args):
    model = load_model(args.model)
    if isinstance(model, Tree):
        raise UsageError("detection operates on forests; got a single tree")
    ref = dataio.load_csv(args.ref, _column(args.label_column))
    inputs = dataio.load_csv(args.inputs, _column(args.label_column))
    threshold = args.eps1 if args.method == "loss" else args.eps2
    scores = detection_scores(model, inputs.features, args.method, ref, threshold)
    _emit([(i, f"{s.score:.6f}", int(inputs.labels[i])) for i, s in enumerate(scores)],
          args.format, header=("index", "score", "flag"))
    if args.roc:
        curve = roc_auc([(s.score, bool(inputs.labels[i])) for i, s in enumerate(scores)])
        lines = ["threshold,fpr,tpr"]
        for thr, (fpr, tpr) in zip(curve.thresholds, curve.points):
            lines.append(f"{thr},{fpr:.6f},{tpr:.6f}")
        text = "\n".join(lines) + "\n"
        if args.roc_out:
            with open(args.roc_out, "w") as fh:
                fh.write(text)
        else:
            print(text, end="")
        print(f"AUC,{curve.auc:.6f}")
    return 0


def cmd_prune(args):
    model = load_model(args.model)
    d = _load_data(args)
    spec = SplitSpec(*_split_fracs(args.split), seed=args.seed)
    _, val_set, test_set = split(d, spec)
    before = accuracy(model, test_set)
    pruned = prune_forest(model, val_set) if isinstance(model, Forest) else prune_rep(model, val_set)
    save_model(pruned, args.out)
    _emit([
        ("test_acc_before", f"{before:.6f}"),
        ("test_acc_after", f"{accuracy(pruned, test_set):.6f}"),
    ], args.format)
    return 0


def cmd_eval(args):
    d = _load_data(args)
    k = _load_knowledge(args, d.n_classes)
    config = TrialConfig(
        data=d,
        knowledge=k,
        mode=args.mode,
        params=_params(args),
        n_trees=args.trees,
        split=SplitSpec(*_split_fracs(args.split), seed=args.seed),
        t_max=args.tmax,
    )
    rows, summary = repeated_trial(config, args.seeds)
    lines = trial_rows_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    for kind in ("tree", "forest"):
        print(f"{kind}_delta_mean,{summary[kind]['mean']:.6f}")
        print(f"{kind}_delta_variance,{summary[kind]['variance']:.8f}")
    return 0


def build_parser():
    parser = _Parser(prog="tamperwood",
                     description="Tree-ensemble rule embedding, extraction, and defences.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--format", choices=("text", "csv"), default="text")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p.add_argument("--rows", type=int, default=1000)
    p.add_argument("--features", type=int, default=8)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a tree or forest on the train split")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="model file to write")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("embed", help="embed a rule (blackbox poisoning or whitebox expansion)")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--knowledge", required=True, help="rule JSON file")
    p.add_argument("--mode", choices=("blackbox", "whitebox"), required=True)
    p.add_argument("--tmax", type=int, default=20, help="blackbox retraining budget")
    p.add_argument("--out", required=True)
    p.add_argument("--original-out", default=None, help="also save the unembedded model")
    common(p)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("attest", help="embed and check the success criteria (exit 2 on failure)")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--knowledge", required=True)
    p.add_argument("--mode", choices=("blackbox", "whitebox"), required=True)
    p.add_argument("--tmax", type=int, default=20)
    p.add_argument("--alpha-p", type=float, default=0.05)
    common(p)
    p.set_defaults(fn=cmd_attest)

    p = sub.add_parser("extract", help="recover an embedded rule from a forest")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True, help="training dataset CSV")
    p.add_argument("--probe", required=True, help="mixed clean/suspect probe CSV")
    p.add_argument("--label-column", default="label")
    p.add_argument("--ck", type=float, default=0.2, help="support threshold")
    p.add_argument("--m", dest="m_range", type=_parse_m_range, default=(1, 3),
                   help="edit budget, e.g. 2 or 1..3")
    p.add_argument("--eps2", type=float, default=0.5, help="activation-similarity cutoff")
    common(p)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("detect", help="score inputs for rule-triggering behaviour")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=("loss", "activation"), required=True)
    p.add_argument("--ref", required=True, help="reference dataset CSV (clean)")
    p.add_argument("--inputs", required=True, help="inputs CSV; label column doubles as KE flag")
    p.add_argument("--label-column", default="label")
    p.add_argument("--eps1", type=float, default=None)
    p.add_argument("--eps2", type=float, default=None)
    p.add_argument("--roc", action="store_true", help="emit ROC curve (labels are KE flags)")
    p.add_argument("--roc-out", default=None)
    common(p)
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("prune", help="reduced-error pruning against the validation split")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(fn=cmd_prune)

    p = sub.add_parser("eval", help="repeated embedding trials: tree vs forest deltas")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--knowledge", required=True)
    p.add_argument("--mode", choices=("blackbox", "whitebox"), required=True)
    p.add_argument("--tmax", type=int, default=20)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--out", default=None, help="per-seed CSV path (stdout when omitted)")
    common(p)
    p.set_defaults(fn=cmd_eval)

    return parser


def _parse_m_range(text):
    if ".." in text:
        lo, hi = text.split("..", 1)
        return int(lo), int(hi)
    v = int(text)
    return v, v


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit as e:
        return int(e.code or 0)
    except TamperwoodError as e:
        sys.stderr.write(f"tamperwood: error: {e}\n")
        return 1
    except FileNotFoundError as e:
        sys.stderr.write(f"tamperwood: error: {e}\n")
        return 1


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""Command-line driver: ``glmpath <command> ...``.

Exit codes: 0 success, 2 input/format error, 3 divergence, 4 precondition.
"""
import argparse
import dataclasses
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import core, debug, oracle
from .data import (Standardizer, TargetVector, load_matrix, load_model, load_targets,
                   save_matrix, save_model)
from .errors import DivergenceError, FormatError, GlmPathError, PreconditionError
from .path import (PathEntry, RegularizationPath, feature_ordering, fit_path, read_summary_csv,
                   select_model, write_summary_csv)
from .saga import SolverConfig

log = logging.getLogger("glmpath")

FORMAT_VERSION = 1
EXIT_FORMAT, EXIT_DIVERGENCE, EXIT_PRECONDITION = 2, 3, 4


@dataclasses.dataclass
class RunConfig:
    family: str = "multinomial"
    alpha: float = 0.99
    K: int = 100
    epsilon: float = 1e-3
    eps_tol: float = 1e-4
    lookbehind_T: int = 5
    stop_rule: str = "gradient"
    batch_size: int = 512
    learning_rate: float = 0.1
    max_epochs: int = 500
    val_fraction: float = 0.10
    select_tolerance: float = 0.05
    min_nnz: int = 1
    seed: int = 0

    def solver_config(self):
        return SolverConfig(batch_size=self.batch_size, learning_rate=self.learning_rate,
                            stop_rule=self.stop_rule, eps_tol=self.eps_tol,
                            lookbehind_T=self.lookbehind_T, max_epochs=self.max_epochs,
                            rng_seed=self.seed)


def _config_from_args(args):
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    return RunConfig(**{k: v for k, v in vars(args).items() if k in fields and v is not None})


def _report(config, **body):
    out = {"format_version": FORMAT_VERSION}
    out.update(body)
    if config is not None:
        out["config"] = dataclasses.asdict(config)
    return out


def _emit(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=False) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def split_validation(y, fraction, seed, stratify):
    """Seeded train/validation index split; stratified by class when asked."""
    n = len(y)
    rng = np.random.default_rng(seed)
    if fraction <= 0:
        idx = np.arange(n)
        return idx, idx
    if stratify:
        val = []
        for c in np.unique(y):
            members = np.flatnonzero(y == c)
            rng.shuffle(members)
            val.extend(members[:int(round(fraction * len(members)))])
        val = np.sort(np.array(val, dtype=np.int64))
    else:
        val = np.sort(rng.permutation(n)[:int(round(fraction * n))])
    train = np.setdiff1d(np.arange(n), val)
    if len(val) == 0 or len(train) == 0:
        raise PreconditionError(f"val_fraction={fraction} leaves an empty split for n={n}")
    return train, val


def _load_xy(args, family):
    X = load_matrix(args.features)
    y = load_targets(args.targets, family, getattr(args, "classes", None))
    if len(y) != X.shape[0]:
        raise FormatError(f"{len(y)} targets for {X.shape[0]} feature rows")
    return X, y


def _standardizer_for(args):
    if getattr(args, "standardizer", None):
        return Standardizer.from_matrix(load_matrix(args.standardizer))
    return None


# --- commands ---------------------------------------------------------------

def cmd_fit(args):
    config = _config_from_args(args)
    X, y = _load_xy(args, config.family)
    train, val = split_validation(y.values, config.val_fraction, config.seed,
                                  stratify=y.kind == "classification")
    scaler = Standardizer.fit(X[train])
    Xtr, Xva = scaler.transform(X[train]), scaler.transform(X[val])
    ytr = dataclasses.replace(y, values=y.values[train])
    yva = dataclasses.replace(y, values=y.values[val])

    out = Path(args.out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    save_matrix(out / "standardizer.glmx", scaler.to_matrix())

    def save_entry(t, entry):
        save_model(out / "models" / f"entry_{t:03d}.glmm", entry.model)
        print(f"[{t + 1}/{config.K}] lambda={entry.lam:.6g} nnz={entry.nnz_total} "
              f"val={entry.val_metric:.6g}", file=sys.stderr)

    path = fit_path(Xtr, ytr, Xva, yva, config.family, config.alpha, config.K, config.epsilon,
                    config.solver_config(), k=y.k if config.family == "multinomial" else None,
                    on_entry=save_entry)

    extra = {}
    if args.oracle:
        kkt, gap = [], []
        for e in path.entries:
            params = core.ElasticNetParams(e.lam, config.alpha)
            ref = oracle.ista_fit(Xtr, ytr, config.family, params, k=e.model.k)
            rep = oracle.kkt_check(Xtr, ytr, e.model, params, reference=ref)
            kkt.append(rep.max_kkt_violation)
            gap.append(rep.coordinate_gap)
        extra = {"kkt_violation": kkt, "oracle_coordinate_gap": gap}
    with open(out / "path.csv", "w") as fh:
        write_summary_csv(path, fh, extra)
    with open(out / "frontier.csv", "w") as fh:
        fh.write("nnz_total,val_metric\n")
        for nnz, metric in debug.path_sparsity_frontier(path):
            fh.write(f"{nnz},{metric!r}\n")
    _emit(_report(config, entries=len(path), lambda_max=path.lambdas[0] if len(path) else None,
                  n_train=len(train), n_val=len(val), error=path.error), out / "run.json")
    if path.error:
        print(f"error: {path.error}", file=sys.stderr)
        return EXIT_DIVERGENCE
    return 0


def _load_path_dir(path_dir):
    path_dir = Path(path_dir)
    summary = path_dir / "path.csv"
    if not summary.exists():
        raise FormatError(f"{path_dir}: no path.csv (run `glmpath fit` first)")
    with open(summary) as fh:
        rows = read_summary_csv(fh)
    if not rows:
        raise PreconditionError(f"{path_dir}: path is empty")
    run = json.loads((path_dir / "run.json").read_text())
    return rows, run


def _light_path(rows, run):
    cfg = run.get("config", {})
    entries = [PathEntry(r["lambda"], None, r["train_loss"], r["val_metric"], r["nnz_total"],
                         r["converged"]) for r in rows]
    return RegularizationPath(entries, cfg.get("alpha"), cfg.get("K"), cfg.get("epsilon"),
                              cfg.get("family", "multinomial"))


def cmd_select(args):
    rows, run = _load_path_dir(args.path_dir)
    path = _light_path(rows, run)
    config = RunConfig(**run["config"])
    config.select_tolerance = args.select_tol if args.select_tol is not None else config.select_tolerance
    config.min_nnz = args.min_nnz if args.min_nnz is not None else config.min_nnz
    i = select_model(path, config.select_tolerance, config.min_nnz)
    src = Path(args.path_dir) / "models" / f"entry_{i:03d}.glmm"
    dest = Path(args.out or Path(args.path_dir) / "selected.glmm")
    shutil.copyfile(src, dest)
    metrics = [e.val_metric for e in path.entries]
    best = max(metrics) if path.higher_is_better else min(metrics)
    threshold = (best - config.select_tolerance if path.higher_is_better
                 else best + config.select_tolerance)
    e = path.entries[i]
    _emit(_report(config, best_metric=best, threshold=threshold,
                  selected={"index": i, "lambda": e.lam, "nnz_total": e.nnz_total,
                            "val_metric": e.val_metric, "model_file": str(dest)}),
          Path(args.path_dir) / "selection.json" if args.report is None else args.report)
    return 0


def _eval_data(args, model):
    X = load_matrix(args.features)
    scaler = _standardizer_for(args)
    if scaler is not None:
        X = scaler.transform(X)
    y = load_matrix(args.targets)[:, 0].astype(np.int64)
    if X.shape[0] != len(y):
        raise FormatError(f"{len(y)} targets for {X.shape[0]} feature rows")
    if X.shape[1] != model.d:
        raise FormatError(f"model has {model.d} features, data has {X.shape[1]}")
    return X, y


def cmd_ablate(args):
    models = {name: load_model(p) for name, p in (("sparse", args.sparse), ("dense", args.dense))
              if p}
    if not models:
        raise PreconditionError("pass --sparse and/or --dense")
    ds = {m.d for m in models.values()}
    if len(ds) != 1:
        raise FormatError(f"models disagree on feature count: {sorted(ds)}")
    body = {"k": args.k}
    for name, model in models.items():
        X, y = _eval_data(args, model)
        W, b = debug.decision_layer(model)
        rep = debug.topk_ablation(W, b, X, y, args.k)
        body["k"] = rep.k
        body[name] = rep.as_dict()
    _emit(_report(None, **body), args.out)
    return 0


def cmd_order(args):
    path_dir = Path(args.path_dir)
    rows, run = _load_path_dir(path_dir)
    path = _light_path(rows, run)
    for t, e in enumerate(path.entries):
        e.model = load_model(path_dir / "models" / f"entry_{t:03d}.glmm")
    fo = feature_ordering(path)
    entry = [None if np.isinf(v) else int(v) for v in fo.entry_index]
    ordering = [int(j) for j in fo.order if not np.isinf(fo.entry_index[j])]
    _emit(_report(None, entry_index=entry, ordering=ordering), args.out)
    return 0


def cmd_attribute(args):
    model = load_model(args.model)
    X, y = _eval_data(args, model)
    W, b = debug.decision_layer(model)
    pred = np.argmax(X @ W.T + b, axis=1)
    ids = args.examples if args.examples else np.flatnonzero(pred != y).tolist()
    records = []
    for i in ids:
        if pred[i] == y[i]:
            raise PreconditionError(f"example {i} is not misclassified")
        a = debug.attribute_misclassification(W, b, X[i], int(y[i]), int(pred[i]))
        records.append({"example_id": int(i), "l": a.label, "p": a.predicted,
                        "top_feature": a.top_feature, "gamma": float(a.gamma[a.top_feature]),
                        "flipped": a.flipped})
    _emit(_report(None, attributions=records), args.out)
    return 0


def cmd_overlap(args):
    model = load_model(args.model)
    W, _ = debug.decision_layer(model)
    C = load_matrix(args.confusion)
    rep = debug.confusion_overlap(W, C, args.threshold)
    pairs = [{"i": i, "j": j, "shared_count": s, "confusion": c} for i, j, s, c in rep.pairs]
    skipped = [{"i": i, "j": j, "note": note} for i, j, note in rep.skipped]
    _emit(_report(None, threshold=args.threshold, pairs=pairs, spearman=rep.spearman,
                  pearson=rep.pearson, skipped=skipped), args.out)
    return 0


def cmd_wordcloud(args):
    spec = json.loads(Path(args.input).read_text())
    corpus = spec["corpus"]
    vocab = spec.get("vocab")
    clouds = []
    for fid in sorted(spec["weights"], key=int):
        wc = debug.aggregate_wordcloud(spec["weights"][fid], corpus, vocab, int(fid), args.cap)
        clouds.append(wc.as_dict())
    _emit(_report(None, wordclouds=clouds), args.out)
    return 0


def cmd_counterfactual(args):
    model = load_model(args.model)
    W, b = debug.decision_layer(model)
    raw = json.loads(Path(args.clouds).read_text())
    raw = raw["wordclouds"] if isinstance(raw, dict) else raw
    by_id = {int(c["feature_id"]): debug.WordCloud.from_dict(c) for c in raw}
    clouds = [by_id.get(i, debug.WordCloud(i, {}, {})) for i in range(W.shape[1])]
    sentences = json.loads(Path(args.sentences).read_text())
    results = []
    for idx, s in enumerate(sentences):
        cf = debug.generate_counterfactual(s["tokens"], clouds, W, b, rng_seed=[args.seed, idx],
                                           features=s.get("features"),
                                           prediction=s.get("prediction"))
        if cf is None:
            results.append({"result": None, "reason": "no candidates"})
        else:
            results.append({"result": cf.as_dict()})
    _emit(_report(None, seed=args.seed, counterfactuals=results), args.out)
    return 0


# --- argument parsing -------------------------------------------------------

def _add_fit_flags(p):
    p.add_argument("--features", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--family", choices=["gaussian", "binomial", "multinomial"], required=True)
    p.add_argument("--classes", type=int, help="class count (default: max label + 1)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--k-values", dest="K", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--stop", dest="stop_rule", choices=["gradient", "lookbehind"])
    p.add_argument("--eps-tol", type=float)
    p.add_argument("--lookbehind-T", dest="lookbehind_T", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--select-tol", dest="select_tolerance", type=float)
    p.add_argument("--min-nnz", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--oracle", action="store_true",
                   help="verify every path entry against the reference solver (slow)")
    p.add_argument("--out-dir", required=True)


def _add_eval_flags(p):
    p.add_argument("--features", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--standardizer", help="standardizer.glmx written by `fit`")


def build_parser():
    parser = argparse.ArgumentParser(prog="glmpath", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int,
                        help="BLAS threads (default: $GLMPATH_THREADS, else all cores)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a regularization path")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="pick the sparsest model within tolerance of the best")
    p.add_argument("path_dir")
    p.add_argument("--select-tol", type=float)
    p.add_argument("--min-nnz", type=int)
    p.add_argument("--out", help="selected model file (default: PATH_DIR/selected.glmm)")
    p.add_argument("--report", help="JSON rationale (default: PATH_DIR/selection.json)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("ablate", help="top-k feature ablation accuracies")
    p.add_argument("--sparse")
    p.add_argument("--dense")
    _add_eval_flags(p)
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("order", help="order in which features enter the path")
    p.add_argument("path_dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("attribute", help="attribute misclassifications to features")
    p.add_argument("--model", required=True)
    _add_eval_flags(p)
    p.add_argument("--examples", type=int, nargs="*")
    p.add_argument("--out")
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("overlap", help="shared features vs. class confusion")
    p.add_argument("--model", required=True)
    p.add_argument("--confusion", required=True, help="k x k confusion matrix (CSV or binary)")
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("wordcloud", help="aggregate per-sentence word weights into clouds")
    p.add_argument("--input", required=True)
    p.add_argument("--cap", type=int, default=debug.WORDCLOUD_CAP)
    p.add_argument("--out")
    p.set_defaults(func=cmd_wordcloud)

    p = sub.add_parser("counterfactual", help="word-substitution counterfactuals")
    p.add_argument("--model", required=True)
    p.add_argument("--clouds", required=True)
    p.add_argument("--sentences", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_counterfactual)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads
    if threads is None and os.environ.get("GLMPATH_THREADS"):
        threads = int(os.environ["GLMPATH_THREADS"])
    try:
        with threadpool_limits(limits=threads):
            return args.func(args)
    except (FormatError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (PreconditionError, GlmPathError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())

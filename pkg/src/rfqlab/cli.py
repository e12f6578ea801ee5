"""Command-line surface: simulate, featurize, train, cv, evaluate, curve,
boundary, quote, compete, report.

Every subcommand is deterministic given its inputs and --seed, and every
artifact is CSV or JSON written atomically.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io as rio
from . import pipeline
from .bnt import BntHyperparams
from .evaluation import classification_report, expand_grid, grid_search_cv, time_series_folds
from .features import (
    CATEGORICAL_FEATURES,
    CONTINUOUS_FEATURES,
    apply_standardization,
    compute_features,
    feature_matrix,
    fill_rate_curve,
)
from .market_sim import DEFAULT_SEED, SimConfig, gen_rfq_dataset


def _float_repr(v: float) -> str:
    return repr(float(v))


def _read_config(args) -> dict[str, str]:
    if getattr(args, "config", None):
        return rio.parse_config(args.config)
    return {}


def _sim_config(args) -> SimConfig:
    config = SimConfig()
    rio.apply_config(config, _read_config(args))
    if args.seed is not None:
        config.seed = args.seed
    config.validate()
    return config


def _bnt_hyperparams(args, stiffness: float | None = None) -> BntHyperparams:
    hp = BntHyperparams()
    rio.apply_config(hp, _read_config(args))
    if getattr(args, "n_iter", None) is not None:
        hp.n_iter = args.n_iter
    if stiffness is not None:
        hp.initial_relative_stiffness = stiffness
    elif getattr(args, "stiffness", None) is not None:
        hp.initial_relative_stiffness = args.stiffness
    if args.seed is not None:
        hp.seed = args.seed
    hp.validate()
    return hp


def _pipeline_options(args) -> dict:
    return rio.pipeline_options(_read_config(args))


def _load_tables(args, test_fraction: float):
    records = rio.read_dataset(args.data)
    table = compute_features(records)
    usable = pipeline.usable_rows(table)
    train, test = pipeline.chronological_split(usable, test_fraction)
    return records, table, train, test


def _load_fill_and_next_mid(model_paths: list[str]):
    fill_model = None
    next_mid = None
    for path in model_paths:
        loaded = rio.load_model(path)
        if isinstance(loaded, pipeline.FittedClassifier) or isinstance(loaded, pipeline.FittedEnsemble):
            fill_model = loaded
        else:
            next_mid = loaded
    if fill_model is None:
        raise rio.DataFormatError("no fill-probability model among --models")
    if next_mid is None:
        raise rio.DataFormatError("no next-mid model among --models")
    return fill_model, next_mid


# ------------------------------------------------------------- subcommands

def cmd_simulate(args) -> int:
    config = _sim_config(args)
    records = gen_rfq_dataset(config)
    rio.write_dataset(args.out, records)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def cmd_featurize(args) -> int:
    records = rio.read_dataset(args.data)
    table = compute_features(records)
    header = ["Time", "Bond"] + list(CONTINUOUS_FEATURES) + list(CATEGORICAL_FEATURES) \
        + ["history_valid", "Status", "Live"]
    lines = [",".join(header)]
    for i in range(len(table)):
        cells = [str(int(table.time[i])), str(int(table.bond[i]))]
        cells += [_float_repr(table.column(name)[i]) for name in CONTINUOUS_FEATURES]
        cells += [str(int(table.column(name)[i])) for name in CATEGORICAL_FEATURES]
        cells += [str(int(table.history_valid[i])), str(int(table.status[i])), str(int(table.live[i]))]
        lines.append(",".join(cells))
    rio.write_atomic(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(table)} feature rows to {args.out}")
    return 0


def _write_training_log(path: Path, model) -> None:
    lines = ["iteration,bound,n_leaves"]
    for entry in model.training_log:
        lines.append(f"{entry['iteration']},{_float_repr(entry['bound'])},{entry['n_leaves']}")
    rio.write_atomic(path, "\n".join(lines) + "\n")


def cmd_train(args) -> int:
    opts = _pipeline_options(args)
    test_fraction = opts.get("test_fraction", 0.3)
    one_hot = opts.get("one_hot", False)

    if args.model == "ensemble":
        members = args.members.split(",") if args.members else []
        if len(members) < 2:
            raise rio.DataFormatError("--members must list at least 2 model files")
        for member in members:
            rio.load_model(member if Path(member).is_absolute()
                           else Path(args.out).parent / member)
        rio.save_ensemble(args.out, members, vote_mode=args.vote)
        print(f"wrote ensemble manifest with {len(members)} members to {args.out}")
        return 0

    if args.data is None:
        raise rio.DataFormatError("--data is required to train this model")
    _, _, train, _ = _load_tables(args, test_fraction)
    if args.model == "bnt":
        hp = _bnt_hyperparams(args)
        fitted = pipeline.fit_bnt_classifier(train, hp, one_hot=one_hot)
        rio.save_model(args.out, fitted)
        _write_training_log(Path(str(args.out) + ".log.csv"), fitted.model)
        print(f"trained bnt (stiffness={hp.initial_relative_stiffness}, n_iter={hp.n_iter}, "
              f"leaves={len(fitted.model.leaves())}) -> {args.out}")
    elif args.model == "lasso":
        lam = args.lam if args.lam is not None else opts.get("lam", 0.001)
        fitted = pipeline.fit_lasso_classifier(train, lam=lam, one_hot=one_hot)
        rio.save_model(args.out, fitted)
        print(f"trained lasso (lam={lam}) -> {args.out}")
    elif args.model == "nextmid":
        model = pipeline.fit_next_mid_model(train)
        rio.save_model(args.out, model)
        print(f"trained next-mid model (validation adj R2={model.adj_r2:.4f}) -> {args.out}")
    else:
        raise rio.DataFormatError(f"unknown model kind {args.model!r}")
    return 0


def cmd_cv(args) -> int:
    opts = _pipeline_options(args)
    _, _, train, _ = _load_tables(args, opts.get("test_fraction", 0.3))
    raw, names = feature_matrix(train, one_hot=opts.get("one_hot", False))
    from .features import fit_standardization
    stats = fit_standardization(raw, names)
    x = apply_standardization(raw, names, stats)
    y = train.status
    folds = time_series_folds(len(y), args.folds)

    if args.model == "lasso":
        from .linear_models import fit_lasso_logistic
        grid = [{"lam": lam} for lam in np.logspace(-4, 0, 9)]
        result = grid_search_cv(
            lambda xt, yt, params: fit_lasso_logistic(xt, yt, params["lam"]),
            grid, x, y, folds,
            complexity_key=lambda params: -params["lam"],
        )
    elif args.model == "bnt":
        from . import bnt as bnt_mod
        base = _bnt_hyperparams(args)
        grid = expand_grid({
            "initial_relative_stiffness": [2.0, 6.0],
            "pruning_factor": [1.0, 1.05],
        })

        def fit_point(xt, yt, params):
            hp = BntHyperparams(**{**base.to_dict(), **params})
            return bnt_mod.fit(xt, yt, hp)

        result = grid_search_cv(
            fit_point, grid, x, y, folds,
            complexity_key=lambda p: (p["initial_relative_stiffness"],),
        )
    else:
        raise rio.DataFormatError(f"cv does not support model {args.model!r}")

    payload = {
        "model": args.model,
        "best_params": result.best_params,
        "best_mean_val_log_loss": result.best_score,
        "summary": result.summary,
    }
    rio.write_atomic(args.out, json.dumps(payload, indent=2) + "\n")
    table_path = Path(str(args.out) + ".table.csv")
    lines = ["grid_index,fold,params,n_train,n_val,val_log_loss,status"]
    for row in result.table:
        ll = "" if row["val_log_loss"] is None else _float_repr(row["val_log_loss"])
        lines.append(f"{row['grid_index']},{row['fold']},\"{row['params']}\","
                     f"{row['n_train']},{row['n_val']},{ll},{row['status']}")
    rio.write_atomic(table_path, "\n".join(lines) + "\n")
    print(f"best {args.model} params: {result.best_params} "
          f"(mean val log-loss {result.best_score:.6f}) -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    opts = _pipeline_options(args)
    _, _, _, test = _load_tables(args, opts.get("test_fraction", 0.3))
    reports = []
    for path in args.models.split(","):
        model = rio.load_model(path)
        if isinstance(model, pipeline.FittedClassifier | pipeline.FittedEnsemble):
            probs = model.predict_table(test)
        else:
            raise rio.DataFormatError(f"{path} is not a fill-probability model")
        rep = classification_report(test.status, probs)
        reports.append({"model": path, **rep.to_dict()})
    rio.write_atomic(args.out, json.dumps({"reports": reports}, indent=2) + "\n")
    csv_path = Path(str(args.out) + ".csv")
    lines = ["model,n,log_loss,accuracy,f1,tp,fp,tn,fn"]
    for rep in reports:
        c = rep["confusion"]
        lines.append(f"{rep['model']},{rep['n']},{_float_repr(rep['log_loss'])},"
                     f"{_float_repr(rep['accuracy'])},{_float_repr(rep['f1'])},"
                     f"{c['tp']},{c['fp']},{c['tn']},{c['fn']}")
    rio.write_atomic(csv_path, "\n".join(lines) + "\n")
    for rep in reports:
        print(f"{rep['model']}: log_loss={rep['log_loss']:.4f} "
              f"accuracy={rep['accuracy']:.4f} f1={rep['f1']:.4f}")
    return 0


def cmd_curve(args) -> int:
    records = rio.read_dataset(args.data)
    table = compute_features(records)
    usable = pipeline.usable_rows(table)
    feature_names = (list(CONTINUOUS_FEATURES) + list(CATEGORICAL_FEATURES)
                     if args.feature == "all" else [args.feature])
    lines = ["feature,bin_center,raw_rate,smooth_rate,count"]
    for name in feature_names:
        curve = fill_rate_curve(usable.column(name), usable.status,
                                n_bins=args.bins, feature=name)
        for center, raw, smooth, count in zip(curve.centers, curve.raw, curve.smooth, curve.counts):
            lines.append(f"{name},{_float_repr(center)},{_float_repr(raw)},"
                         f"{_float_repr(smooth)},{count}")
    rio.write_atomic(args.out, "\n".join(lines) + "\n")
    print(f"wrote fill-rate curves for {len(feature_names)} feature(s) to {args.out}")
    return 0


def cmd_boundary(args) -> int:
    model = rio.load_model(args.model)
    if not isinstance(model, pipeline.FittedClassifier) or model.kind != "bnt":
        raise rio.DataFormatError("boundary requires a bnt model file")
    name_i, name_j = (s.strip() for s in args.features.split(","))
    records = rio.read_dataset(args.data)
    table = compute_features(records)
    usable = pipeline.usable_rows(table)
    raw, names = feature_matrix(usable, one_hot=model.one_hot)
    x = apply_standardization(raw, names, model.stats)
    idx_i = model.stats.index_of(name_i)
    idx_j = model.stats.index_of(name_j)
    baseline = np.median(x, axis=0)
    grid_i = np.linspace(x[:, idx_i].min(), x[:, idx_i].max(), args.grid)
    grid_j = np.linspace(x[:, idx_j].min(), x[:, idx_j].max(), args.grid)
    rows = model.model.decision_boundary_grid(idx_i, idx_j, grid_i, grid_j, baseline)
    lines = [f"{name_i},{name_j},probability"]
    for vi, vj, prob in rows:
        lines.append(f"{_float_repr(vi)},{_float_repr(vj)},{_float_repr(prob)}")
    rio.write_atomic(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(rows)} boundary grid rows to {args.out}")
    return 0


def _quote_decisions(args):
    opts = _pipeline_options(args)
    records, table, train, test = _load_tables(args, opts.get("test_fraction", 0.3))
    fill_model, next_mid = _load_fill_and_next_mid(args.models.split(","))
    curves = pipeline.build_exceed_curves(test, next_mid)
    curves.update(pipeline.build_exceed_curves(test, next_mid, per_bond=False))
    decisions = pipeline.quote_live_rfqs(records, table, fill_model, next_mid, curves)
    return records, decisions


def cmd_quote(args) -> int:
    _, decisions = _quote_decisions(args)
    lines = ["Time,Bond,Side,PredictedNextMid,QuotePrice,Offset,PFill,PExceed,Payoff,CapApplied"]
    for d in decisions:
        lines.append(f"{d.time},{d.bond},{d.side},{d.predicted_next_mid:.6f},"
                     f"{d.quote_price:.6f},{d.offset:.6f},{d.p_fill:.6f},"
                     f"{d.p_exceed:.6f},{d.payoff:.6f},{int(d.cap_applied)}")
    rio.write_atomic(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(decisions)} quote decisions to {args.out}")
    return 0


def cmd_compete(args) -> int:
    records, decisions = _quote_decisions(args)
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    rows = pipeline.compete_live_rfqs(records, decisions, seed)
    lines = ["Time,Bond,Side,OurQuote,TrueNextMid,OurUtility,Won,OurLoss,NWinners,CompetitorQuotes"]
    for r in rows:
        competitors = ";".join(f"{q:.6f}" for q in r.competitor_quotes)
        lines.append(f"{r.time},{r.bond},{r.side},{r.our_quote:.6f},{r.true_next_mid:.6f},"
                     f"{_float_repr(r.our_utility)},{int(r.won)},{int(r.our_loss)},"
                     f"{r.n_winners},{competitors}")
    rio.write_atomic(args.out, "\n".join(lines) + "\n")
    total = sum(r.our_utility for r in rows)
    print(f"competed {len(rows)} live RFQs: won {sum(r.won for r in rows)}, "
          f"total utility {total:+.2f} -> {args.out}")
    return 0


def cmd_report(args) -> int:
    opts = _pipeline_options(args)
    _, _, train, test = _load_tables(args, opts.get("test_fraction", 0.3))
    seed = args.seed if args.seed is not None else 0
    n_iter = args.n_iter if args.n_iter is not None else 50
    lam = args.lam if args.lam is not None else opts.get("lam", 0.001)
    payload = pipeline.comparison_report(train, test, seed=seed, n_iter=n_iter, lam=lam)
    rio.write_atomic(args.out, json.dumps(payload, indent=2) + "\n")
    csv_path = Path(str(args.out) + ".csv")
    lines = ["model,vote,n,log_loss,accuracy,f1,tp,fp,tn,fn"]
    for row in payload["models"]:
        c = row["confusion"]
        lines.append(f"{row['model']},{row['vote']},{row['n']},{_float_repr(row['log_loss'])},"
                     f"{_float_repr(row['accuracy'])},{_float_repr(row['f1'])},"
                     f"{c['tp']},{c['fp']},{c['tn']},{c['fn']}")
    rio.write_atomic(csv_path, "\n".join(lines) + "\n")
    for row in payload["models"]:
        vote = f" ({row['vote']})" if row["vote"] else ""
        print(f"{row['model']}{vote}: log_loss={row['log_loss']:.4f} "
              f"accuracy={row['accuracy']:.4f} f1={row['f1']:.4f}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfqlab",
        description="Synthetic RFQ simulation, fill-probability models, and quote optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--seed", type=int, default=None, help="override the RNG seed")
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--out", required=True, help="output file path")
        if data:
            p.add_argument("--data", required=True, help="dataset CSV path")

    p = sub.add_parser("simulate", help="generate the synthetic RFQ dataset")
    common(p, data=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("featurize", help="engineer model features from a dataset")
    common(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a model on the chronological training split")
    common(p, data=False)
    p.add_argument("--data", required=False, default=None,
                   help="dataset CSV path (not needed for ensemble manifests)")
    p.add_argument("--model", required=True, choices=["bnt", "lasso", "nextmid", "ensemble"])
    p.add_argument("--stiffness", type=float, default=None)
    p.add_argument("--n-iter", type=int, default=None, dest="n_iter")
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--members", default=None, help="comma-separated member model files")
    p.add_argument("--vote", default="soft", choices=["soft", "hard"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="time-series cross-validated grid search")
    common(p)
    p.add_argument("--model", required=True, choices=["bnt", "lasso"])
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--n-iter", type=int, default=None, dest="n_iter")
    p.add_argument("--stiffness", type=float, default=None)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("evaluate", help="score fill models on the test split")
    common(p)
    p.add_argument("--models", required=True, help="comma-separated model files")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("curve", help="empirical fill-rate curves per feature")
    common(p)
    p.add_argument("--feature", default="all")
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("boundary", help="decision-boundary probability grid")
    common(p)
    p.add_argument("--model", required=True, help="bnt model file")
    p.add_argument("--features", required=True, help="two feature names, comma-separated")
    p.add_argument("--grid", type=int, default=25)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("quote", help="optimal quotes for the live RFQs")
    common(p)
    p.add_argument("--models", required=True,
                   help="comma-separated fill model and next-mid model files")
    p.set_defaults(func=cmd_quote)

    p = sub.add_parser("compete", help="auction the live RFQs against simulated competitors")
    common(p)
    p.add_argument("--models", required=True,
                   help="comma-separated fill model and next-mid model files")
    p.set_defaults(func=cmd_compete)

    p = sub.add_parser("report", help="train LR/ABR2/ABR6/Ensemble1 and compare")
    common(p)
    p.add_argument("--n-iter", type=int, default=None, dest="n_iter")
    p.add_argument("--lam", type=float, default=None)
    p.set_defaults(func=cmd_report)

    return parser


def run_cli(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (rio.DataFormatError, ValueError, RuntimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""Command-line surface: prepare datasets, recommend, and run sweeps."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .core import BudgetExhaustedError, InfeasibleConstraintError
from .datasets import AdultRecipe, CountMismatchError, leave_one_out_split, load_prepared, prepare
from .evalharness import (
    SENSITIVITY_FIELDS,
    TRADEOFF_FIELDS,
    build_backbone,
    oracle_baseline,
    random_baseline,
    run_sweep,
    sensitivity_sweep,
    write_records_csv,
)
from .fairness import FairnessConfig, entropy, least_ratio
from .privaterank import PPRParams, private_rank_recommend
from .privatewalk import WalkParams, private_walk_recommend
from .recnet import build_network, load_edges, save_edges

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_BUDGET = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="privrec")
    sub = p.add_subparsers(dest="command", required=True)

    prep = sub.add_parser("prepare", help="preprocess a raw dataset into a canonical directory")
    prep.add_argument("--kind", required=True, choices=["movielens", "lastfm", "amazon", "adult"])
    prep.add_argument("--raw", required=True, help="raw file or distribution directory")
    prep.add_argument("--out", required=True)
    prep.add_argument("--allow-count-mismatch", action="store_true",
                      help="do not fail when counts differ from the published sizes")
    prep.add_argument("--adult-keep-fnlwgt", action="store_true")
    prep.add_argument("--adult-keep-sex-feature", action="store_true")
    prep.add_argument("--adult-keep-missing", action="store_true")
    prep.add_argument("--adult-keep-duplicates", action="store_true")

    def common(cmd):
        cmd.add_argument("--data", required=True, help="prepared dataset directory")
        cmd.add_argument("--provider", required=True, choices=["knn", "cosine", "bpr"])
        cmd.add_argument("--attribute", default=None)
        cmd.add_argument("--topk", type=int, default=10)
        cmd.add_argument("--tau", type=int, default=0)
        cmd.add_argument("--damping-c", type=float, default=0.01)
        cmd.add_argument("--ppr-L", type=int, default=10)
        cmd.add_argument("--walk-Lmax", type=int, default=100)
        cmd.add_argument("--seed", type=int, default=0)
        cmd.add_argument("--exclude-history", action="store_true",
                         help="exclude each user's full history, not just the source")
        cmd.add_argument("--bpr-dims", type=int, default=100)
        cmd.add_argument("--bpr-iters", type=int, default=100)
        cmd.add_argument("--bpr-lr", type=float, default=0.01)
        cmd.add_argument("--bpr-reg", type=float, default=0.01)

    rec = sub.add_parser("recommend", help="print one fairness-constrained list")
    common(rec)
    rec.add_argument("--method", required=True,
                     choices=["provider", "privaterank", "privatewalk", "random", "oracle"])
    rec.add_argument("--source", type=int, required=True)
    rec.add_argument("--history", default="", help="comma-separated item indices")
    rec.add_argument("--network-cache", default=None,
                     help="edge-file path; reused when present, written otherwise")
    rec.add_argument("--query-budget", type=int, default=None,
                     help="cap on provider queries; exceeding it aborts")

    sw = sub.add_parser("sweep", help="trade-off sweep over tau values")
    common(sw)
    sw.add_argument("--methods", default="provider,privaterank,privatewalk,random,oracle")
    sw.add_argument("--taus", default="0,1,2,3,4,5")
    sw.add_argument("--walk-seeds", default="0,1,2,3,4")
    sw.add_argument("--sample", type=int, default=2000,
                    help="evaluation sample size for per-item corpora (adult)")
    sw.add_argument("--full", action="store_true", help="evaluate every source item")
    sw.add_argument("--out", default=None)

    sens = sub.add_parser("sensitivity", help="hyperparameter sensitivity at full fairness")
    common(sens)
    sens.add_argument("--param", required=True, choices=["L", "c", "L_max"])
    sens.add_argument("--values", required=True, help="comma-separated grid")
    sens.add_argument("--walk-seeds", default="0,1,2,3,4")
    sens.add_argument("--sample", type=int, default=2000)
    sens.add_argument("--full", action="store_true")
    sens.add_argument("--out", default=None)
    return p


def _out_dir(args) -> Path:
    out = getattr(args, "out", None) or os.environ.get("PRIVREC_OUT_DIR") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _threads() -> int:
    return max(1, int(os.environ.get("PRIVREC_THREADS", "1")))


def _versions() -> dict:
    return {
        "privrec": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _dataset_hash(data_dir: Path) -> str:
    h = hashlib.sha256()
    for f in sorted(data_dir.glob("*")):
        if f.is_file():
            h.update(f.name.encode())
            h.update(f.read_bytes())
    return h.hexdigest()


def _write_manifest(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True))
    tmp.replace(path)


def _cmd_prepare(args) -> int:
    recipe = AdultRecipe(
        drop_missing=not args.adult_keep_missing,
        drop_duplicates=not args.adult_keep_duplicates,
        include_fnlwgt=args.adult_keep_fnlwgt,
        include_sex_feature=args.adult_keep_sex_feature,
    )
    manifest = prepare(
        args.kind,
        args.raw,
        args.out,
        audit=not args.allow_count_mismatch,
        adult_recipe=recipe,
    )
    print(json.dumps(manifest.get("counts", {}), sort_keys=True))
    print(f"prepared {args.kind} -> {args.out}")
    return EXIT_OK


def _cmd_recommend(args) -> int:
    prepared = load_prepared(args.data, attribute=args.attribute)
    catalog = prepared.catalog
    cfg = FairnessConfig(K=args.topk, tau=args.tau, n_groups=catalog.n_groups)
    history = [int(x) for x in args.history.split(",") if x.strip() != ""]
    train = None
    if prepared.interactions is not None:
        train = leave_one_out_split(prepared.interactions, seed=args.seed).train
    oracle = build_backbone(
        prepared, args.provider, args.topk, train=train, seed=args.seed,
        bpr_options={"dims": args.bpr_dims, "iters": args.bpr_iters,
                     "lr": args.bpr_lr, "reg": args.bpr_reg},
    )
    if args.query_budget is not None:
        oracle = oracle.with_fresh_counter(budget=args.query_budget)

    scores = None
    if args.method == "provider":
        rec_items = [int(i) for i in oracle.query(args.source)]
        feasible = True
    elif args.method == "privaterank":
        cache = args.network_cache
        if cache and Path(cache).exists():
            net = load_edges(cache, n=catalog.n)
        else:
            net = build_network(oracle)
            if cache:
                save_edges(net, cache)
        rec = private_rank_recommend(
            net, args.source, PPRParams(c=args.damping_c, L=args.ppr_L),
            cfg, catalog, history,
        )
        rec_items, feasible = list(rec.items), rec.feasible
    elif args.method == "privatewalk":
        rec = private_walk_recommend(
            oracle, args.source, cfg, catalog, history,
            WalkParams(L_max=args.walk_Lmax, seed=args.seed), memoize=True,
        )
        rec_items, feasible = list(rec.items), rec.feasible
    elif args.method == "random":
        rec = random_baseline(cfg, catalog, set(history) | {args.source}, args.seed)
        rec_items, feasible = list(rec.items), rec.feasible
    else:  # oracle
        scores = oracle.scores(args.source)
        rec = oracle_baseline(scores, cfg, catalog, set(history) | {args.source})
        rec_items, feasible = list(rec.items), rec.feasible

    if args.method == "privaterank":
        scores = oracle.scores(args.source)
    for rank0, item in enumerate(rec_items):
        group = catalog.group_names[catalog.group_of[item]]
        score = f"{scores[item]:.6g}" if scores is not None else "-"
        print(f"{rank0 + 1:3d}  item={item:<8d} group={group:<16s} score={score}")
    if rec_items:
        print(
            f"least_ratio={least_ratio(rec_items, catalog):.4f} "
            f"entropy={entropy(rec_items, catalog):.4f} "
            f"queries={oracle.query_count}"
        )
    out = _out_dir(args)
    _write_manifest(out / "recommend_manifest.json", {
        "command": "recommend",
        "config": {
            "data": str(args.data), "provider": args.provider,
            "attribute": prepared.attribute, "method": args.method,
            "source": args.source, "tau": args.tau, "K": args.topk,
            "c": args.damping_c, "L": args.ppr_L, "L_max": args.walk_Lmax,
            "seed": args.seed, "history": history,
        },
        "items": rec_items,
        "feasible": feasible,
        "versions": _versions(),
        "dataset_hash": _dataset_hash(Path(args.data)),
    })
    if not feasible:
        print("constraint infeasible: returned a partial list", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_sweep(args) -> int:
    prepared = load_prepared(args.data, attribute=args.attribute)
    records, manifest = run_sweep(
        prepared,
        args.provider,
        methods=[m.strip() for m in args.methods.split(",") if m.strip()],
        taus=[int(t) for t in args.taus.split(",")],
        K=args.topk,
        ppr_params=PPRParams(c=args.damping_c, L=args.ppr_L),
        walk_params=WalkParams(L_max=args.walk_Lmax),
        walk_seeds=[int(s) for s in args.walk_seeds.split(",")],
        seed=args.seed,
        sample=None if args.full else args.sample,
        exclude_history=args.exclude_history,
        threads=_threads(),
        bpr_options={"dims": args.bpr_dims, "iters": args.bpr_iters,
                     "lr": args.bpr_lr, "reg": args.bpr_reg},
    )
    out = _out_dir(args)
    write_records_csv(records, out / "tradeoff.csv", TRADEOFF_FIELDS)
    manifest["versions"] = _versions()
    manifest["dataset_hash"] = _dataset_hash(Path(args.data))
    manifest["argv"] = args.invocation
    _write_manifest(out / "sweep_manifest.json", manifest)
    print(f"wrote {out / 'tradeoff.csv'} ({len(records)} records)")
    return EXIT_OK


def _cmd_sensitivity(args) -> int:
    prepared = load_prepared(args.data, attribute=args.attribute)
    records, manifest = sensitivity_sweep(
        prepared,
        args.provider,
        args.param,
        [float(v) for v in args.values.split(",")],
        K=args.topk,
        ppr_params=PPRParams(c=args.damping_c, L=args.ppr_L),
        walk_params=WalkParams(L_max=args.walk_Lmax),
        walk_seeds=[int(s) for s in args.walk_seeds.split(",")],
        seed=args.seed,
        sample=None if args.full else args.sample,
        exclude_history=args.exclude_history,
        threads=_threads(),
        bpr_options={"dims": args.bpr_dims, "iters": args.bpr_iters,
                     "lr": args.bpr_lr, "reg": args.bpr_reg},
    )
    out = _out_dir(args)
    write_records_csv(records, out / "sensitivity.csv", SENSITIVITY_FIELDS)
    manifest["versions"] = _versions()
    manifest["dataset_hash"] = _dataset_hash(Path(args.data))
    manifest["argv"] = args.invocation
    _write_manifest(out / "sensitivity_manifest.json", manifest)
    print(f"wrote {out / 'sensitivity.csv'} ({len(records)} records)")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    args.invocation = list(argv) if argv is not None else sys.argv[1:]
    handlers = {
        "prepare": _cmd_prepare,
        "recommend": _cmd_recommend,
        "sweep": _cmd_sweep,
        "sensitivity": _cmd_sensitivity,
    }
    try:
        return handlers[args.command](args)
    except BudgetExhaustedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except InfeasibleConstraintError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (CountMismatchError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``mgsearch {search,eval,enumerate,gradcheck,synth}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import CardinalityError, ConfigError, DataError
from .evaluate import aggregate, train_eval
from .hin import load_hin, write_hin
from .model import TrainConfig
from .oracle import brute_force_search, gradcheck_suite
from .search import SearchConfig, run_search, worker_count
from .space import build_space, cardinality, export_dot, parse_meta_graph
from .synth import synth_planted

log = logging.getLogger("mgsearch")

MODE_FLAGS = {"sampled": "sampled", "darts": "darts_reference", "single-level": "single_level"}


def _dump(path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _load(data_dir, want_task=None):
    graph, features, task = load_hin(data_dir)
    if task is None:
        raise DataError(f"{data_dir} has no task files (labels.tsv or task.txt)")
    if want_task is not None and task.kind != want_task:
        raise ConfigError(f"--task {want_task} but {data_dir} holds a {task.kind} task")
    return graph, features, task


def _train_config(args, epochs, seed):
    return TrainConfig(
        hidden_dim=args.hidden,
        lr_omega=args.lr_omega,
        weight_decay_omega=args.weight_decay,
        lr_lambda=getattr(args, "lr_lambda", 3e-4),
        epochs=epochs,
        patience=getattr(args, "patience", 10),
        seed=seed,
        dropout=args.dropout,
    )


def cmd_search(args):
    if args.K < 1:
        raise ConfigError("K must be ≥ 1")
    graph, features, task = _load(args.data, args.task)
    epochs = args.epochs if args.epochs is not None else (50 if task.kind == "nodeclass" else 100)
    config = SearchConfig(
        epochs=epochs,
        epsilon0=args.epsilon0,
        K=args.K,
        n_restarts=args.restarts,
        mode=MODE_FLAGS[args.mode],
        seed=args.seed,
        train=_train_config(args, epochs, args.seed),
    )
    meta_graphs, report = run_search(graph, features, task, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "search_report.json", report)
    for mg in meta_graphs:
        _dump(out / f"metagraph_{mg.target_type}.json", mg.to_json())
        (out / f"metagraph_{mg.target_type}.dot").write_text(export_dot(mg, graph.registry), encoding="utf-8")
    best = report["restarts"][report["best_restart"]]
    print(f"task={task.kind} restarts={config.n_restarts} best_restart={report['best_restart']} "
          f"val={best['final_val_metric']:.4f} spmm_per_epoch={best['history'][-1]['spmm_calls']}")
    return 0


def parse_seeds(text):
    text = text.strip()
    for sep in ("..", "-"):
        if sep in text and "," not in text:
            a, b = text.split(sep, 1)
            return list(range(int(a), int(b) + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def _read_meta_graph(path, registry):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read meta graph {path}: {exc}") from None
    return parse_meta_graph(text, registry=registry)


def _eval_one(mgs, graph, features, task, cfg):
    return train_eval(mgs, graph, features, task, cfg)


def cmd_eval(args):
    graph, features, task = _load(args.data)
    if task.kind == "rec" and not args.meta_graph2:
        raise ConfigError("recommendation requires two meta graphs (one per endpoint type)")
    mgs = [_read_meta_graph(args.meta_graph, graph.registry)]
    if args.meta_graph2:
        mgs.append(_read_meta_graph(args.meta_graph2, graph.registry))
    if task.kind == "rec":
        # order by endpoint: source DAG first
        mgs.sort(key=lambda m: m.target_type != task.source_type)
    epochs = args.epochs if args.epochs is not None else (100 if task.kind == "nodeclass" else 200)
    try:
        seeds = parse_seeds(args.seeds)
    except ValueError:
        raise ConfigError(f"cannot parse --seeds {args.seeds!r}") from None
    if not seeds:
        raise ConfigError("no seeds given")
    cfgs = [_train_config(args, epochs, s) for s in seeds]
    n_workers = min(worker_count(), len(seeds))
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            reports = list(pool.map(_eval_one, *zip(*[(mgs, graph, features, task, c) for c in cfgs])))
    else:
        reports = [train_eval(mgs, graph, features, task, c) for c in cfgs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for r in reports:
        _dump(out / f"eval_seed{r.seed}.json", r.to_json(timings=False))
        _dump(out / f"timings_seed{r.seed}.json", {"seed": r.seed, "epoch_seconds": r.epoch_seconds})
        print(r.summary_line(task.kind))
    summary = aggregate(reports)
    summary["task"] = task.kind
    _dump(out / "summary.json", summary)
    print(f"task={task.kind} seeds={len(reports)} test_mean={summary['test_mean']:.4f} "
          f"test_std={summary['test_std']:.4f}")
    return 0


def cmd_enumerate(args):
    if args.K < 1:
        raise ConfigError("K must be ≥ 1")
    graph, features, task = load_hin(args.data)
    if args.target:
        targets = [args.target]
    elif task is None:
        raise DataError("no task files; pass --target to count a single space")
    else:
        targets = [task.source_type, task.target_type] if task.kind == "rec" else [task.target_type]
    specs = [build_space(graph, t, args.K) for t in targets]
    total = 1
    for sp in specs:
        total *= cardinality(sp)
        if len(specs) > 1:
            print(f"{sp.target_type}: {cardinality(sp)} meta graphs")
    if total > args.cap:
        print(f"{total} meta graphs (cap exceeded)")
        return 0
    if task is None or len(specs) != (2 if task.kind == "rec" else 1):
        print(f"{total} meta graphs")
        return 0
    cfg = _train_config(args, args.epochs, args.seed)
    ranking = brute_force_search(specs, graph, features, task, cfg, args.cap, epochs=args.epochs)
    lines = [
        json.dumps({"rank": r, "metric": m, "meta_graph": [mg.to_json() for mg in mgs]
                    if len(mgs) > 1 else mgs[0].to_json()})
        for r, (mgs, m) in enumerate(ranking, 1)
    ]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ranking.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"{total} meta graphs ranked -> {out / 'ranking.jsonl'}")
    else:
        print("\n".join(lines))
    return 0


def cmd_gradcheck(args):
    graph, features, task = _load(args.data)
    results = gradcheck_suite(graph, features, task, K=args.K, hidden_dim=args.hidden, n_states=args.states,
                              seed=args.seed)
    failed = 0
    for r in results:
        flag = "PASS" if r["ok"] else "FAIL"
        failed += not r["ok"]
        print(f"{flag} state={r['state']} {r['check']} err={r['error']:.3e} tol={r['tol']:.0e}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_synth(args):
    graph, features, task, planted = synth_planted(args.config, args.seed)
    out = Path(args.out)
    write_hin(out, graph, features, task)
    for mg in planted:
        _dump(out / f"planted_{mg.target_type}.json", mg.to_json())
    print(f"wrote {graph.n_nodes} nodes, {len(graph.registry)} edge types, task={task.kind} -> {out}")
    return 0


def _add_train_flags(p, hidden=64):
    p.add_argument("--hidden", type=int, default=hidden, help="hidden dimension (default 64)")
    p.add_argument("--lr-omega", type=float, default=0.005, help="Adam learning rate for model weights")
    p.add_argument("--weight-decay", type=float, default=0.001, help="L2 weight decay for model weights")
    p.add_argument("--dropout", type=float, default=0.5, help="input dropout on projected features")


def build_parser():
    ap = argparse.ArgumentParser(prog="mgsearch", description="Differentiable meta-graph search for heterogeneous GNNs.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="search for a meta graph")
    p.add_argument("--data", required=True)
    p.add_argument("--task", choices=("nodeclass", "rec"), required=True)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--epochs", type=int, default=None, help="default 50 (nodeclass) / 100 (rec)")
    p.add_argument("--epsilon0", type=float, default=0.0)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--mode", choices=tuple(MODE_FLAGS), default="sampled")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr-lambda", type=float, default=3e-4)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="retrain and evaluate a derived meta graph")
    p.add_argument("--data", required=True)
    p.add_argument("--meta-graph", required=True)
    p.add_argument("--meta-graph2", default=None)
    p.add_argument("--epochs", type=int, default=None, help="default 100 (nodeclass) / 200 (rec)")
    p.add_argument("--seeds", default="0-9")
    p.add_argument("--patience", type=int, default=10, help="early-stopping patience")
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("enumerate", help="count or exhaustively rank a search space")
    p.add_argument("--data", required=True)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--cap", type=int, default=1000)
    p.add_argument("--target", default=None, help="count the space of one target node type")
    p.add_argument("--epochs", type=int, default=30, help="training epochs per candidate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _add_train_flags(p)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("gradcheck", help="finite-difference and relaxation checks")
    p.add_argument("--data", required=True)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--hidden", type=int, default=6)
    p.add_argument("--states", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a planted synthetic dataset")
    p.add_argument("--config", required=True, help="JSON file or preset name (academic, douban)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, CardinalityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

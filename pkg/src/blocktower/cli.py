"""Command-line entry point: generate, train, eval, occlude, transfer,
verify, serve. Exit codes: 0 success, 1 validation/usage error, 2 runtime
failure. Every run prints the resolved configuration as one JSON line."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np


def _jobs_default() -> int:
    env = os.environ.get("BLOCKTOWER_JOBS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blocktower",
        description="Block-tower physics lab: datasets, predictors, metrics, trials",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a balanced train/test dataset")
    p.add_argument("--config", help="GenConfig JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--count-per-cell", type=int, default=None,
                   help="train examples per (size,label) cell; test gets 1/8")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--jobs", type=int, default=_jobs_default())

    p = sub.add_parser("train", help="train a predictor on the train split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--model", choices=("mini", "logreg", "logreg-factored"),
                   default="mini")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr-grid", default="0.1,0.03,0.01")
    p.add_argument("--lambda-mask", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--share-heads", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--knn", choices=("raw", "trunk"), default=None,
                   help="evaluate k-NN over raw pixels or trunk features")

    p = sub.add_parser("occlude", help="occlusion heatmap for one record")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--id", required=True, dest="record_id")
    p.add_argument("--out", required=True, help="output path prefix")

    p = sub.add_parser("transfer", help="held-out tower size protocol")
    p.add_argument("--dataset", required=True)
    p.add_argument("--train-sizes", required=True, help="e.g. 2,3")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr-grid", default="0.03")
    p.add_argument("--lambda-mask", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify", help="self-validate a dataset directory")
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("serve", help="run the human-trial service")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--sessions", required=True)
    p.add_argument("--ui-dir", default="auto")
    return parser


def _print_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items())}
    print(json.dumps({"resolved_config": resolved}))


def _train_config(args):
    from .learn.train import LossConfig, TrainConfig

    lr_grid = tuple(float(v) for v in args.lr_grid.split(","))
    return (
        TrainConfig(lr_grid=lr_grid, epochs=args.epochs,
                    batch_size=args.batch_size, seed=args.seed),
        LossConfig(lambda_mask=args.lambda_mask),
    )


def cmd_generate(args) -> int:
    from .dataset import write_dataset
    from .scenegen import GenConfig, generate_balanced, load_gen_config

    cfg = load_gen_config(args.config) if args.config else GenConfig()
    overrides = {}
    if args.count_per_cell is not None:
        overrides["count_per_cell"] = args.count_per_cell
        overrides["test_count_per_cell"] = max(1, args.count_per_cell // 8)
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if overrides:
        import dataclasses

        cfg = dataclasses.replace(cfg, **overrides)
    samples = generate_balanced(cfg, "train", jobs=args.jobs)
    samples += generate_balanced(cfg, "test", jobs=args.jobs)
    manifest = write_dataset(samples, args.out, cfg, jobs=args.jobs)
    print(json.dumps({"written": len(manifest.records), "out": args.out}))
    return 0


def cmd_train(args) -> int:
    from .dataset import load_dataset
    from .learn.model import save_checkpoint
    from .learn.train import train, write_training_log

    examples = load_dataset(args.dataset, "train")
    train_cfg, loss_cfg = _train_config(args)
    model, log = train(examples, train_cfg, loss_cfg, model_kind=args.model,
                       share_heads=args.share_heads)
    save_checkpoint(model, args.out)
    write_training_log(log, args.out + ".log.jsonl")
    print(json.dumps({"checkpoint": args.out, "selected": log[-1]}))
    return 0


def cmd_eval(args) -> int:
    from .dataset import load_dataset
    from .evalmetrics import binomial_ci, evaluate, roc_curve
    from .learn.model import load_checkpoint, trunk_features
    from .learn.knn import knn_predict

    model = load_checkpoint(args.model)
    test = load_dataset(args.dataset, "test")
    if args.knn is None:
        report = evaluate(model, test).to_dict()
    else:
        train_ex = load_dataset(args.dataset, "train")
        if args.knn == "raw":
            feats = lambda ex: np.stack([e.image.reshape(-1) for e in ex])
        else:
            feats = lambda ex: trunk_features(model, np.stack([e.image for e in ex]))
        probs = knn_predict(feats(train_ex),
                            np.array([e.record.fell for e in train_ex]),
                            feats(test), k=10)
        fell = np.array([e.record.fell for e in test])
        acc = float(((probs > 0.5) == fell).mean())
        points, auc = roc_curve(probs, fell)
        report = {
            "n_examples": len(test),
            "accuracy": acc,
            "accuracy_ci": binomial_ci(acc, len(test)),
            "knn": args.knn,
            "roc": {"points": [list(p) for p in points], "auc": auc},
        }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(json.dumps({"report": args.out, "accuracy": report["accuracy"]}))
    return 0


def cmd_occlude(args) -> int:
    from .dataset import load_record, read_manifest
    from .evalmetrics import export_heatmap_pgm, occlusion_heatmap
    from .learn.model import load_checkpoint

    model = load_checkpoint(args.model)
    manifest = read_manifest(args.dataset)
    matches = [r for r in manifest.records if r.id == args.record_id]
    if not matches:
        raise ValueError(f"record id {args.record_id!r} not in dataset")
    example = load_record(args.dataset, matches[0])
    heatmap = occlusion_heatmap(model, example.image)
    export_heatmap_pgm(heatmap, args.out)
    print(json.dumps({"heatmap": args.out + ".pgm",
                      "mapping": args.out + ".json"}))
    return 0


def cmd_transfer(args) -> int:
    from .dataset import load_dataset
    from .evalmetrics import transfer_protocol

    sizes = tuple(int(v) for v in args.train_sizes.split(","))
    train_ex = load_dataset(args.dataset, "train")
    test_ex = load_dataset(args.dataset, "test")
    train_cfg, loss_cfg = _train_config(args)
    out = transfer_protocol(train_ex, test_ex, sizes, train_cfg, loss_cfg)
    report = {
        "train_sizes": list(out["train_sizes"]),
        "held_out_sizes": list(out["held_out_sizes"]),
        "per_size": {str(s): r.to_dict() for s, r in out["reports"].items()},
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(json.dumps({"report": args.out}))
    return 0


def cmd_verify(args) -> int:
    from .dataset import verify_dataset

    problems = verify_dataset(args.dataset)
    for p in problems:
        print(p, file=sys.stderr)
    print(json.dumps({"dataset": args.dataset, "problems": len(problems)}))
    return 0 if not problems else 1


def cmd_serve(args) -> int:
    from .service import TrialService

    service = TrialService(
        dataset_dir=args.dataset,
        sessions_dir=args.sessions,
        checkpoint_path=args.model,
        ui_dir=args.ui_dir,
    )
    server = service.make_server(port=args.port)
    print(json.dumps({"serving": f"http://127.0.0.1:{server.server_port}/"}))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "occlude": cmd_occlude,
    "transfer": cmd_transfer,
    "verify": cmd_verify,
    "serve": cmd_serve,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses code 2 for usage errors; exit-code contract says 1
        return 0 if exc.code == 0 else 1
    _print_config(args)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failure contract
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

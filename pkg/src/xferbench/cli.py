"""``xferbench`` command line: run experiments, degrade corpora, dump embeddings.

Exit codes: 0 on success, 1 for configuration problems, 2 when an
experiment finished but lost at least one iteration or algorithm cell.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import classify, diffusion, harness, imageprep
from .dataset import Domain, load_tabular
from .harness import ConfigError, ExperimentConfig


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config = ExperimentConfig.from_dict({**config.to_dict(), "master_seed": args.seed})
    out_dir = args.out or config.output_dir or "."
    report = harness.run_experiment(config, parallel=args.parallel)
    written = harness.emit_report(report, out_dir)
    for path in written:
        print(f"wrote {path}")
    for name in report.mean:
        mean = report.mean[name]
        std = report.std[name]
        if mean is None:
            print(f"{name}: no successful iterations")
        else:
            print(f"{name}: accuracy {mean:.4f} +/- {std:.4f}")
    lost = sum(
        1
        for r in report.iterations
        if r.errors
    )
    if lost:
        print(f"{lost} iteration(s) had failures; see report.json", file=sys.stderr)
        return 2
    return 0


def _cmd_degrade(args) -> int:
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out_dir)
    if not in_dir.is_dir():
        raise ConfigError(f"input directory {in_dir} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)
    w, h = args.final
    count = 0
    for path in sorted(in_dir.iterdir()):
        if path.suffix.lower() not in (".png", ".pgm"):
            continue
        chip = imageprep.load_image(path)
        imageprep.save_image(imageprep.degrade(chip, w, h), out_dir / path.name)
        count += 1
    if count == 0:
        raise ConfigError(f"no .png/.pgm images found in {in_dir}")
    print(f"degraded {count} image(s) into {out_dir}")
    return 0


def _cmd_embed(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    data = harness._iteration_data(config, 0)
    target = harness.Dataset(
        features=data.target_features,
        labels=data.target_labels,
        domains=np.ones(len(data.target_features), dtype=np.int64),
        class_names=data.train.class_names,
    )
    raw = {}
    for spec in config.algorithms:
        if spec.name in ("dm_knn", "dm_1known"):
            raw = spec.params
            break
    n_joint = len(data.train) + len(target)
    params = harness._diffusion_params(raw, n_joint)
    embedding, domains = diffusion.embed_joint(data.train, target, params)
    out = Path(args.out or config.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    ids = list(data.train.ids) + [f"t{i}" for i in range(len(target))]
    path = out / "embedding.csv"
    diffusion.embedding_to_csv(embedding, domains, ids, path)
    print(f"wrote {path}")
    return 0


def _cmd_report(args) -> int:
    report = harness.report_from_json(args.in_path)
    harness._accuracy_svg(report, args.svg)
    print(f"wrote {args.svg}")
    return 0


def _cmd_train(args) -> int:
    data = load_tabular(args.data, args.label_column, Domain.SOURCE)
    if args.algo == "knn":
        model = classify.KnnModel(coords=data.features, labels=data.labels, k=args.k)
    elif args.algo in ("svm_linear", "svm_rbf"):
        kind = "linear" if args.algo == "svm_linear" else "rbf"
        model = classify.svm_train_ovr(data.features, data.labels, kind=kind, C=args.C, gamma=args.gamma)
    elif args.algo == "mlp":
        model, _ = classify.mlp_train(
            data.features,
            data.labels,
            hidden=args.hidden,
            epochs=args.epochs,
            learn_rate=args.learn_rate,
            seed=args.seed,
            n_classes=len(data.class_names),
        )
    else:
        raise ConfigError(f"unknown algorithm {args.algo!r}")
    classify.save_model(model, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_predict(args) -> int:
    model = classify.load_model(args.model)
    if args.label_column:
        data = load_tabular(args.data, args.label_column, Domain.TARGET)
        features, class_names = data.features, data.class_names
    else:
        import csv as _csv

        with open(args.data, newline="", encoding="utf-8") as fh:
            rows = list(_csv.reader(fh))
        features = np.asarray([[float(v) for v in row] for row in rows[1:]], dtype=np.float64)
        class_names = None
    if isinstance(model, classify.KnnModel):
        pred = classify.knn_predict(model, features)
    elif isinstance(model, classify.SvmOvrModel):
        pred = classify.svm_predict_ovr(model, features)
    elif isinstance(model, classify.SvmModel):
        pred = classify.svm_predict(model, features)[0]
    elif isinstance(model, classify.MlpModel):
        pred = classify.mlp_predict(model, features)[0]
    elif isinstance(model, classify.DaMlpModel):
        pred = classify.mlp_predict(model.base, features)[0]
    else:
        raise ConfigError(f"cannot predict with {type(model).__name__}")
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("prediction\n")
        for p in np.asarray(pred).reshape(-1):
            if class_names is not None and 0 <= int(p) < len(class_names):
                fh.write(f"{class_names[int(p)]}\n")
            else:
                fh.write(f"{int(p)}\n")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xferbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config and emit its report")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--out", default=None, help="override output directory")
    p.add_argument("--parallel", action="store_true", help="run iterations concurrently")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("degrade", help="push a directory of images through the degradation pipeline")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--final", type=_parse_size, required=True, metavar="WxH")
    p.set_defaults(func=_cmd_degrade)

    p = sub.add_parser("embed", help="dump the joint diffusion embedding of a config's data")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("report", help="re-render the accuracy chart from a report.json")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--svg", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("train", help="train a classifier on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", required=True)
    p.add_argument("--algo", required=True, choices=["knn", "svm_linear", "svm_rbf", "mlp"])
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--learn-rate", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="predict classes for a dataset CSV with a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default=None, help="drop this column before predicting")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

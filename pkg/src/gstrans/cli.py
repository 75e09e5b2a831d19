"""Command-line entry point: train, sweep, viz, eval, export-graph."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import data, evaluate, graph as graph_mod, nn, viz
from .errors import IngestionError
from .transforms import (EdgeLogits, Schedule, harden, transforms_from_json,
                         transforms_to_json)

DEFAULTS = {
    "seed": 0,
    "out_dir": "out",
    "dataset": "ring",
    "graph": "auto",
    "edge_list": None,
    "data_dir": None,
    "content": None,
    "cites": None,
    "k": 5,
    "t_init": 10.0,
    "t_final": 0.01,
    "steps": 2000,
    "epochs": None,
    "lr": None,
    "logit_lr": None,
    "batch_size": 32,
    "optimizer": "adam",
    "layers": None,
    "knn": 5,
    "height": None,
    "width": None,
    "downscale": True,
    "max_train": None,
    "ring_n": 16,
    "ring_classes": 4,
    "ring_samples": 200,
    "ring_noise": 0.05,
    "repeats": 1,
    "sweep_axis": None,
    "sweep_values": None,
    "split": "val",
}

LAYER_DEFAULTS = {"cifar10": "32,64", "webkb": "64,64", "ring": "16,16,16"}
LR_DEFAULTS = {"ring": 5e-4}
# the transform logits move on a coarser loss surface than the weights and
# need a larger step to saturate the softmax before the anneal sharpens it
LOGIT_LR_DEFAULTS = {"ring": 0.05, "cifar10": 0.02, "webkb": 0.02}

# keys whose built-in default is None still need a numeric type when they
# come from a config file
FLOAT_KEYS = {"lr", "logit_lr"}
INT_KEYS = {"epochs", "max_train", "height", "width"}


def _read_config_file(path) -> dict:
    """Flat 'key = value' format; '#' starts a comment."""
    out = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(key, value):
    if value is None or not isinstance(value, str):
        return value
    if key in FLOAT_KEYS:
        return float(value)
    if key in INT_KEYS:
        return int(value)
    default = DEFAULTS.get(key)
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int) and not isinstance(default, bool):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def _resolve(args) -> SimpleNamespace:
    """Merge precedence: CLI flag > config file > built-in default."""
    cfg = _read_config_file(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for key, default in DEFAULTS.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            merged[key] = cli_val
        elif key in cfg:
            merged[key] = _coerce(key, cfg[key])
        else:
            merged[key] = default
    for key in ("config", "transforms", "image", "checkpoint", "out"):
        if hasattr(args, key):
            merged[key] = getattr(args, key)
    return SimpleNamespace(**merged)


def _parse_layers(opts) -> tuple[int, ...]:
    text = opts.layers or LAYER_DEFAULTS.get(opts.dataset, "16,16")
    return tuple(int(x) for x in text.split(",") if x.strip())


def _load_dataset(opts):
    """Returns (dataset, graph, grid_dims or None)."""
    if opts.dataset == "ring":
        ds, g = data.make_ring_task(opts.ring_n, opts.ring_classes,
                                    opts.ring_samples, opts.ring_noise, opts.seed)
        grid = None
    elif opts.dataset == "cifar10":
        if not opts.data_dir or not Path(opts.data_dir).is_dir():
            raise FileNotFoundError(
                f"--data-dir {opts.data_dir!r} does not exist or is not a directory")
        ds = data.load_cifar10(opts.data_dir)
        if opts.downscale:
            ds = data.downscale_cifar(ds)
            grid = (16, 16)
        else:
            grid = (32, 32)
        g = None
    elif opts.dataset == "webkb":
        for p in (opts.content, opts.cites):
            if not p or not Path(p).is_file():
                raise FileNotFoundError(f"WebKB input file {p!r} not found")
        ds, g = data.load_webkb(opts.content, opts.cites)
        grid = None
    else:
        raise ValueError(f"unknown dataset {opts.dataset!r}")

    if opts.max_train is not None:
        ds.splits["train"] = ds.splits["train"][:opts.max_train]

    height = opts.height or (grid[0] if grid else None)
    width = opts.width or (grid[1] if grid else None)
    n = ds.signals[0].shape[0]

    if opts.graph == "auto":
        if g is None:
            g = graph_mod.build_grid_graph(height, width, True)
    elif opts.graph == "grid":
        if height is None or width is None or height * width != n:
            raise ValueError("grid graph needs --height/--width with h*w = n")
        g = graph_mod.build_grid_graph(height, width, True)
    elif opts.graph == "ring":
        g = graph_mod.build_ring_graph(n, True)
    elif opts.graph == "knn-covariance":
        train_idx = ds.splits["train"]
        samples = np.stack([ds.signals[i].mean(axis=1) for i in train_idx])
        g = graph_mod.build_knn_covariance_graph(samples, opts.knn)
    elif opts.graph == "edge-list":
        if not opts.edge_list or not Path(opts.edge_list).is_file():
            raise FileNotFoundError(f"edge list file {opts.edge_list!r} not found")
        g = graph_mod.read_edge_list(Path(opts.edge_list).read_text(), n)
    else:
        raise ValueError(f"unknown graph selector {opts.graph!r}")
    if g.n != n:
        raise ValueError(f"graph has {g.n} vertices but signals have {n}")
    grid_dims = (height, width) if height and width and height * width == n else None
    return ds, g, grid_dims


def _train_config(opts, ds) -> nn.TrainConfig:
    steps = opts.steps
    if opts.epochs is not None:
        per_epoch = (1 if ds.mode == "vertex" else
                     max(1, -(-len(ds.splits["train"]) // opts.batch_size)))
        steps = opts.epochs * per_epoch
    lr = opts.lr if opts.lr is not None else LR_DEFAULTS.get(opts.dataset, 1e-3)
    return nn.TrainConfig(
        schedule=Schedule(opts.t_init, opts.t_final, steps),
        lr=lr, batch_size=opts.batch_size, optimizer=opts.optimizer,
        logit_lr=(opts.logit_lr if opts.logit_lr is not None
                  else LOGIT_LR_DEFAULTS.get(opts.dataset)),
        seed=opts.seed, k=opts.k, hidden=_parse_layers(opts))


def _write_metrics(path, history):
    with open(path, "w") as f:
        f.write("step,temperature,train_loss,train_acc,val_acc\n")
        for row in history:
            f.write(f"{row.step},{row.temperature:.10g},{row.train_loss:.10g},"
                    f"{row.train_acc:.10g},{row.val_acc:.10g}\n")


def cmd_train(args) -> int:
    opts = _resolve(args)
    ds, g, grid_dims = _load_dataset(opts)
    config = _train_config(opts, ds)
    model, params, hard, history = nn.train(ds, g, config)
    out = Path(opts.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(out / "checkpoint.npz", model, params, g,
                       config.schedule.s_total, config.schedule)
    _write_metrics(out / "metrics.csv", history)
    (out / "transforms.json").write_text(transforms_to_json(hard))
    acc = evaluate.evaluate_accuracy(model, params, ds, "val", opts.t_final)
    print(f"final val accuracy: {acc:.4f}")
    if grid_dims is not None:
        report = evaluate.transform_report(hard, *grid_dims)
        (out / "eval_report.csv").write_text(report)
        for line in report.strip().splitlines()[1:]:
            k, name, d = line.split(",")
            label = f"slice {k}" if k != "mean" else "mean distance"
            print(f"{label}: {name + ' ' if name else ''}{float(d):.4f}")
    return 0


def cmd_sweep(args) -> int:
    opts = _resolve(args)
    if not opts.sweep_axis or not opts.sweep_values:
        raise ValueError("sweep needs --sweep-axis and --sweep-values")
    values = [float(v) for v in str(opts.sweep_values).split(",") if v.strip()]
    if not values:
        raise ValueError("empty sweep grid")
    ds, g, grid_dims = _load_dataset(opts)
    out = Path(opts.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for v in values:
        point = SimpleNamespace(**vars(opts))
        setattr(point, opts.sweep_axis.replace("-", "_"), v)
        accs, reports = [], []
        for r in range(opts.repeats):
            point.seed = opts.seed + r
            config = _train_config(point, ds)
            model, params, hard, _ = nn.train(ds, g, config)
            accs.append(evaluate.evaluate_accuracy(model, params, ds, "val",
                                                   point.t_final))
            reports.append(hard)
        row = {"t_init": point.t_init, "t_final": point.t_final,
               "accuracy": float(np.mean(accs))}
        if grid_dims is not None:
            h, w = grid_dims
            canon = {c.name: c.targets for c in evaluate.canonical_transforms(h, w)}
            for label, name in (("identity", "identity"), ("up", "up"),
                                ("down", "down"), ("dilation", "h-dilate")):
                d = np.mean([min(evaluate.transform_distance(hd.slice(k),
                                                             canon[name], h * w)
                                 for k in range(hd.k)) for hd in reports])
                row[f"distance_{label}"] = float(d)
            mean_d = np.mean([np.mean([evaluate.nearest_canonical(hd.slice(k), h, w)[1]
                                       for k in range(hd.k)]) for hd in reports])
            row["distance_mean"] = float(mean_d)
        rows.append(row)
    cols = ["t_init", "t_final", "accuracy", "distance_identity", "distance_up",
            "distance_down", "distance_dilation", "distance_mean"]
    with open(out / "sweep.csv", "w") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(f"{row[c]:.10g}" if c in row else "" for c in cols) + "\n")
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} grid points)")
    return 0


def cmd_viz(args) -> int:
    opts = _resolve(args)
    if opts.height is None or opts.width is None:
        raise ValueError("viz needs --height and --width")
    try:
        hard = transforms_from_json(Path(opts.transforms).read_text())
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"malformed transforms file {opts.transforms}: {exc}") from exc
    if hard.n != opts.height * opts.width:
        raise ValueError(f"transforms cover {hard.n} vertices, "
                         f"grid is {opts.height}x{opts.width}")
    out = Path(opts.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    image = None
    if getattr(opts, "image", None):
        image, h, w = viz.read_ppm(Path(opts.image).read_bytes())
        if (h, w) != (opts.height, opts.width):
            raise ValueError(f"image is {h}x{w}, grid is {opts.height}x{opts.width}")
    for k in range(hard.k):
        svg = viz.arrow_field_svg(hard.slice(k), opts.height, opts.width)
        (out / f"T{k}.svg").write_text(svg)
        if image is not None:
            ppm = viz.translated_image_ppm(hard, k, image, opts.height, opts.width)
            (out / f"T{k}.ppm").write_bytes(ppm)
    n_files = hard.k * (2 if image is not None else 1)
    print(f"wrote {n_files} files to {out}")
    return 0


def cmd_eval(args) -> int:
    opts = _resolve(args)
    ds, g, _ = _load_dataset(opts)
    model, params, _, sched = nn.load_checkpoint(opts.checkpoint, g)
    acc = evaluate.evaluate_accuracy(model, params, ds, opts.split, sched.t_final)
    print(f"{opts.split} accuracy: {acc:.4f}")
    return 0


def cmd_export_graph(args) -> int:
    opts = _resolve(args)
    ds, g, _ = _load_dataset(opts)
    Path(opts.out).write_text(graph_mod.write_edge_list(g))
    print(f"wrote {g.n} vertices, {g.num_entries()} support entries to {opts.out}")
    return 0


def _add_common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--dataset", choices=["ring", "cifar10", "webkb"])
    p.add_argument("--graph",
                   choices=["auto", "grid", "ring", "knn-covariance", "edge-list"])
    p.add_argument("--edge-list", dest="edge_list")
    p.add_argument("--data-dir", dest="data_dir", help="CIFAR-10 binary batch dir")
    p.add_argument("--content", help="WebKB content file")
    p.add_argument("--cites", help="WebKB cites file")
    p.add_argument("--k", type=int, help="number of transformation slices")
    p.add_argument("--t-init", dest="t_init", type=float)
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--logit-lr", dest="logit_lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--layers", help="comma-separated GSL channel widths")
    p.add_argument("--knn", type=int, help="neighbors for the covariance graph")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--no-downscale", dest="downscale", action="store_false",
                   default=None)
    p.add_argument("--max-train", dest="max_train", type=int)
    p.add_argument("--ring-n", dest="ring_n", type=int)
    p.add_argument("--ring-classes", dest="ring_classes", type=int)
    p.add_argument("--ring-samples", dest="ring_samples", type=int)
    p.add_argument("--ring-noise", dest="ring_noise", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gstrans",
        description="Infer edge-constrained graph-signal pseudo-translations "
                    "by training an annealed weight-sharing classifier.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train, harden, and write run artifacts")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="one training run per temperature grid point")
    _add_common(p)
    p.add_argument("--sweep-axis", dest="sweep_axis", choices=["t-init", "t-final"])
    p.add_argument("--sweep-values", dest="sweep_values",
                   help="comma-separated grid values")
    p.add_argument("--repeats", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("viz", help="render hardened transforms as SVG/PPM")
    p.add_argument("--transforms", required=True, help="transforms JSON file")
    p.add_argument("--image", help="P6 PPM image to transform")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--config")
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "val", "test"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-graph", help="write the graph as an edge list")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_graph)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IngestionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands: synth, extract, generate, train, eval, edit, gradcheck, serve.
Every source of randomness is an explicit --seed flag. Exit codes: 0 on
success, 2 on usage errors (argparse), 1 on runtime errors.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .errors import MsgenError
from .extract import ExtractParams, extract_msg
from .geometry import load_cloud, save_cloud
from .graph import GraphEdit, apply_edit, load_graph, save_graph, validate
from .model import ModelConfig, init_weights
from .training import (DatasetSpec, TrainConfig, build_dataset, evaluate,
                       load_checkpoint, load_dataset, make_generator,
                       save_checkpoint, save_dataset, save_loss_csv, train)


def _parse_range(text: str) -> tuple[int, int]:
    """'64:128' -> (64, 128); a bare int is a degenerate range."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        return (int(lo), int(hi))
    v = int(text)
    return (v, v)


def _extract_params(args) -> ExtractParams:
    return ExtractParams(
        coarse_k_range=_parse_range(args.coarse_k),
        fine_k_range=_parse_range(args.fine_k),
        pick_range=_parse_range(args.pick),
        edge_tau=args.edge_tau,
        mix_mode=args.mix_mode,
        seed=args.seed,
    )


def _add_extract_flags(p):
    p.add_argument("--coarse-k", default="4:16", help="coarse k range LO:HI")
    p.add_argument("--fine-k", default="64:128", help="fine k range LO:HI")
    p.add_argument("--pick", default="12:32", help="kept-centroid count range LO:HI")
    p.add_argument("--edge-tau", type=float, default=1.8)
    p.add_argument("--mix-mode", choices=["as_written", "union"], default="as_written")
    p.add_argument("--seed", type=int, default=0)


def cmd_synth(args) -> int:
    counts = {f: args.count for f in args.families.split(",")}
    spec = DatasetSpec(counts=counts, points_per_shape=args.points,
                       msgs_per_shape=args.msgs, seed=args.seed)
    entries = build_dataset(spec)
    manifest = save_dataset(entries, args.out_dir)
    print(f"wrote {len(entries)} shapes to {manifest}")
    return 0


def cmd_extract(args) -> int:
    cloud = load_cloud(args.infile)
    g = extract_msg(cloud, _extract_params(args))
    save_graph(g, args.out)
    print(f"extracted {len(g.vertices)} vertices, {len(g.edges)} edges -> {args.out}")
    return 0


def cmd_generate(args) -> int:
    g = load_graph(args.graph)
    if args.checkpoint:
        weights, _ = load_checkpoint(args.checkpoint)
        generator = make_generator("checkpoint", weights)
    else:
        generator = make_generator(args.method, kappa=args.kappa)
    cloud = generator(g, args.seed)
    save_cloud(cloud, args.out)
    print(f"generated {len(cloud)} points -> {args.out}")
    return 0


def cmd_train(args) -> int:
    entries = load_dataset(args.manifest)
    cfg = TrainConfig(epochs=args.epochs, batch=args.batch, seed=args.seed,
                      alpha=args.alpha,
                      model=ModelConfig(channels=args.channels))
    result = train(entries, cfg, log=print)
    save_checkpoint(result, args.out_checkpoint)
    if args.loss_csv:
        save_loss_csv(result.loss_history, args.loss_csv)
    print(f"saved checkpoint -> {args.out_checkpoint}")
    return 0


def cmd_eval(args) -> int:
    entries = load_dataset(args.manifest)
    clouds = [e.cloud for e in entries]
    if args.checkpoint:
        weights, _ = load_checkpoint(args.checkpoint)
        generator = make_generator("checkpoint", weights)
        label = args.checkpoint
    else:
        generator = make_generator(args.method, kappa=args.kappa)
        label = args.method
    k_range = _parse_range(args.k)
    report = evaluate(generator, clouds, seed=args.seed, k_range=k_range,
                      rotate=args.rotate, scale=args.scale)
    doc = report.to_json()
    doc["model"] = label
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
    print(f"mean CD x1e4: {report.mean_cd_x1e4:.4f} ({label}) -> {args.out}")
    return 0


def cmd_edit(args) -> int:
    g = load_graph(args.graph)
    with open(args.edits, "r", encoding="utf-8") as f:
        edits = json.load(f)
    if not isinstance(edits, list):
        raise MsgenError("edits file must contain a JSON list")
    for doc in edits:
        g = apply_edit(g, GraphEdit.from_json(doc))
    violations = validate(g)
    if violations:
        raise MsgenError("edited graph is invalid: " + "; ".join(violations))
    save_graph(g, args.out)
    print(f"applied {len(edits)} edits -> {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import full_model_gradcheck, primitive_gradchecks

    worst_primitive = primitive_gradchecks(seed=args.seed)
    print(f"primitive max relative error: {worst_primitive:.3e}")
    err = full_model_gradcheck(seed=args.seed)
    print(f"full-model max relative error: {err:.3e}")
    if err > 1e-4 or worst_primitive > 1e-6:
        print("gradcheck FAILED", file=sys.stderr)
        return 1
    print("gradcheck passed")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    checkpoints = {}
    if args.checkpoint:
        weights, _ = load_checkpoint(args.checkpoint)
        checkpoints["mspcg"] = weights
    serve(port=args.port, checkpoints=checkpoints)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msgen",
        description="Extract, edit, and generate point clouds via multiscale structure graphs.",
    )
    parser.add_argument("--version", action="version", version=f"msgen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="emit a synthetic shape dataset")
    p.add_argument("--families", default="box,cylinder,sphere,plane,table,lamp,lbracket")
    p.add_argument("--count", type=int, default=10, help="shapes per family")
    p.add_argument("--points", type=int, default=512)
    p.add_argument("--msgs", type=int, default=5, help="graphs per shape")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract a structure graph from a cloud")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    _add_extract_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("generate", help="generate a cloud from a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--method", choices=["interp", "gaussian"], default="interp")
    p.add_argument("--kappa", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the generator on a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--loss-csv")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--alpha", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model or baseline on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--method", choices=["interp", "gaussian"], default="interp")
    p.add_argument("--kappa", type=float, default=0.5)
    p.add_argument("--k", default="16:64", help="eval vertex-count range LO:HI")
    p.add_argument("--rotate", action="store_true")
    p.add_argument("--scale", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("edit", help="apply a JSON list of edits to a graph file")
    p.add_argument("--graph", required=True)
    p.add_argument("--edits", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("serve", help="start the local generation service")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MsgenError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points for every workflow.

Subcommands: gen-data, train-vae, run-loop, compare, ablate, evaluate,
serve. Exit status 0 on success; 2 for usage/config errors (one-line
machine-parsable message on stderr); 1 for runtime failures.
"""

import argparse
import json
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

from .. import datagen, manifold, orchestrator
from ..orchestrator import BudgetError, LoopConfig, OracleAnnotator
from ..segmenter import UNet


class ConfigError(ValueError):
    pass


def load_loop_config(path, seed_override=None):
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    known = {f.name for f in fields(LoopConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "seg_filters" in raw:
        raw["seg_filters"] = tuple(raw["seg_filters"])
    try:
        cfg = LoopConfig(**raw)
    except TypeError as e:
        raise ConfigError(f"invalid config: {e}") from e
    if seed_override is not None:
        cfg = replace(cfg, seed=seed_override)
    return cfg


def _outdir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_report(report, out):
    out = _outdir(out)
    report.save(out / "report.json", out / "timing.json")
    with open(out / "metrics.csv", "w") as f:
        f.write(report.metrics_csv())


def cmd_gen_data(args):
    spec = datagen.DatasetSpec(
        n_train=args.n_train,
        n_test=args.n_test,
        height=args.height,
        width=args.width,
        n_classes=args.classes,
        noise=args.noise,
        seed=args.seed,
    )
    spec.validate()
    ds = datagen.generate_dataset(spec)
    out = _outdir(args.out)
    datagen.save_dataset(ds, out / "dataset.gsad")
    print(f"wrote {out / 'dataset.gsad'} ({len(ds.samples)} samples)")
    return 0


def cmd_train_vae(args):
    ds = datagen.load_dataset(args.data)
    pool = ds.split("train")
    vae = manifold.Vae(
        height=ds.spec.height,
        width=ds.spec.width,
        z_dim=args.z_dim,
        seed=args.seed,
    )
    history = manifold.train_vae(
        pool,
        vae,
        manifold.VaeTrainConfig(
            epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, seed=args.seed
        ),
    )
    vae.save(args.out)
    if args.latent_out:
        table = manifold.encode_pool(vae, pool)
        manifold.save_latent_table(table, args.latent_out)
    print(
        f"wrote {args.out}; loss {history[0]:.4f} -> {history[-1]:.4f}"
        if history
        else f"wrote {args.out} (0 epochs)"
    )
    return 0


def cmd_run_loop(args):
    cfg = load_loop_config(args.config, args.seed)
    ds = datagen.load_dataset(args.data)
    vae = manifold.Vae.load(args.vae)
    out = _outdir(args.out)
    ckpt = args.checkpoint or str(out / "loop.ckpt")
    annotator = OracleAnnotator(ds)
    if args.resume:
        report = orchestrator.resume_loop(args.resume, ds, vae, annotator, ckpt)
    else:
        report = orchestrator.run_loop(cfg, ds, vae, annotator, ckpt)
    _write_report(report, out)
    print(f"final mean dice {report.final_mean_dice:.4f}; report in {out}")
    return 0


def cmd_compare(args):
    cfg = load_loop_config(args.config, args.seed)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for s in strategies:
        if s not in orchestrator.STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}")
    ds = datagen.load_dataset(args.data)
    vae = manifold.Vae.load(args.vae)
    result = orchestrator.compare_strategies(cfg, strategies, args.reps, ds, vae)
    out = _outdir(args.out)
    with open(out / "comparison.json", "w") as f:
        json.dump(result, f, sort_keys=True, indent=2)
    for block in result["blocks"]:
        print(
            f"{block['strategy']}: {block['mean_final_dice']:.4f} "
            f"+/- {block['std_final_dice']:.4f}"
        )
    print(f"report in {out / 'comparison.json'}")
    return 0


def cmd_ablate(args):
    cfg = load_loop_config(args.config, args.seed)
    ds = datagen.load_dataset(args.data)
    z_dims = [int(z) for z in args.z_dims.split(",")]
    angular = []
    for a in args.angular.split(","):
        if a not in ("on", "off"):
            raise ConfigError(f"angular must be on/off, got {a!r}")
        angular.append(a == "on")
    out = _outdir(args.out)
    vaes = {}
    for z in z_dims:
        vae_path = out / f"vae_z{z}.ckpt"
        if vae_path.exists():
            vaes[z] = manifold.Vae.load(vae_path)
            continue
        vae = manifold.Vae(height=ds.spec.height, width=ds.spec.width, z_dim=z,
                           seed=cfg.seed)
        manifold.train_vae(
            ds.split("train"),
            vae,
            manifold.VaeTrainConfig(epochs=args.vae_epochs, seed=cfg.seed),
        )
        vae.save(vae_path)
        vaes[z] = vae
    grid = [(z, a) for z in z_dims for a in angular]
    result = orchestrator.ablate(cfg, grid, args.reps, ds, vaes)
    with open(out / "ablation.json", "w") as f:
        json.dump(result, f, sort_keys=True, indent=2)
    for b in result["blocks"]:
        ang = "on" if b["angular"] else "off"
        print(
            f"z={b['z_dim']} angular={ang}: "
            f"{b['mean_final_dice']:.4f} +/- {b['std_final_dice']:.4f}"
        )
    return 0


def cmd_evaluate(args):
    ds = datagen.load_dataset(args.data)
    net = UNet.load(args.checkpoint)
    row = orchestrator.evaluate(net, ds.split("test"))
    print(json.dumps(row, sort_keys=True))
    if args.out:
        out = _outdir(args.out)
        with open(out / "evaluation.json", "w") as f:
            json.dump(row, f, sort_keys=True, indent=2)
    return 0


def cmd_serve(args):
    from . import server as srv

    cfg = load_loop_config(args.config, args.seed)
    data_dir = os.environ.get("GS_DATA_DIR")
    data_path = args.data or (data_dir and os.path.join(data_dir, "dataset.gsad"))
    if not data_path:
        raise ConfigError("--data or GS_DATA_DIR required")
    ds = datagen.load_dataset(data_path)
    vae = manifold.Vae.load(args.vae)
    ckpt = args.checkpoint
    if not ckpt and data_dir:
        ckpt = os.path.join(data_dir, "loop.ckpt")
    session = srv.Session(cfg, ds, vae, checkpoint_path=ckpt)
    port = args.port or int(os.environ.get("GS_PORT", "8080"))
    static_dir = args.static
    if static_dir is None:
        bundled = Path(__file__).resolve().parents[3] / "frontend" / "dist"
        static_dir = str(bundled) if bundled.is_dir() else None
    print(f"serving on port {port}")
    srv.serve(session, port, static_dir=static_dir)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="gradseg")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--n-train", type=int, default=600)
    g.add_argument("--n-test", type=int, default=200)
    g.add_argument("--height", type=int, default=32)
    g.add_argument("--width", type=int, default=32)
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--noise", type=float, default=0.3)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train-vae", help="train the manifold VAE")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--latent-out")
    t.add_argument("--z-dim", type=int, default=3)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(fn=cmd_train_vae)

    r = sub.add_parser("run-loop", help="run the suggestive annotation loop")
    r.add_argument("--config", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--vae", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--checkpoint")
    r.add_argument("--resume")
    r.set_defaults(fn=cmd_run_loop)

    c = sub.add_parser("compare", help="compare strategies over repetitions")
    c.add_argument("--config", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--vae", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--strategies", required=True)
    c.add_argument("--reps", type=int, default=10)
    c.add_argument("--seed", type=int)
    c.set_defaults(fn=cmd_compare)

    a = sub.add_parser("ablate", help="z-dimension / angular-condition grid")
    a.add_argument("--config", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--z-dims", default="2,3,10")
    a.add_argument("--angular", default="on,off")
    a.add_argument("--reps", type=int, default=10)
    a.add_argument("--vae-epochs", type=int, default=50)
    a.add_argument("--seed", type=int)
    a.set_defaults(fn=cmd_ablate)

    e = sub.add_parser("evaluate", help="evaluate a segmenter checkpoint")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out")
    e.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("serve", help="HTTP annotation service")
    s.add_argument("--config", required=True)
    s.add_argument("--data")
    s.add_argument("--vae", required=True)
    s.add_argument("--port", type=int)
    s.add_argument("--checkpoint")
    s.add_argument("--static")
    s.add_argument("--seed", type=int)
    s.set_defaults(fn=cmd_serve)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, BudgetError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

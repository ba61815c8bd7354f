"""Command-line entry point.

Subcommands: gen-data, train, eval, verify, fig1, sweep.  Exit status is 0 on
success, 1 on a runtime or numeric failure and 2 on a usage, config or
missing-input error.  ``UDI_LOG=debug|info`` raises log verbosity.
"""

import argparse
import json
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from xml.etree import ElementTree

from . import checkpoint, config, metrics, pipeline, synthdata, verify
from .errors import ConfigError, DataError, UDIError

log = logging.getLogger("udi")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad command-line input detected after argparse."""


def _setup_logging():
    level = os.environ.get("UDI_LOG", "warning").strip().upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _load_config(args, required=True):
    if args.config is None:
        if required:
            raise UsageError("--config is required")
        return None
    cfg = config.load(args.config)
    return config.with_overrides(cfg, seed=args.seed, out_dir=args.out)


def _prepare_dir(path, force, sentinel):
    os.makedirs(path, exist_ok=True)
    target = os.path.join(path, sentinel)
    if os.path.exists(target) and not force:
        raise UsageError(f"{target} exists; pass --force to overwrite")


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(args):
    if args.config is not None:
        cfg = _load_config(args)
        if cfg.dataset.generator is None:
            raise UsageError("gen-data needs a generator dataset, not csv")
        ds = config.build_dataset(cfg)
        out = args.out or os.path.join(cfg.out_dir, "data")
    else:
        params = {}
        for item in args.param or []:
            key, sep, value = item.partition("=")
            if not sep:
                raise UsageError(f"--param expects key=value, got {item!r}")
            params[key] = json.loads(value)
        try:
            ds = synthdata.generate(args.generator, seed=args.seed or 0, **params)
        except TypeError as exc:
            raise ConfigError(f"generator parameters: {exc}") from None
        out = args.out or "data"
    paths = synthdata.save_csv(ds, out, force=args.force)
    meta = {"names": ds.names, "n": ds.n, "n_classes": ds.n_classes, "fingerprint": ds.fingerprint(),
            "generator": ds.meta.get("generator"), "params": ds.meta.get("params"), "files": paths}
    _write_text(os.path.join(out, "dataset.json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {ds.n} rows x {len(ds.names)} modalities to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def train_run(cfg, force=False):
    """Run one configured experiment into ``cfg.out_dir``; returns the RunResult."""
    ds = config.build_dataset(cfg)
    opts = config.to_options(cfg)
    if cfg.fusion == "concat" and cfg.strategy != "udi":
        raise ConfigError("concat fusion is only defined for the udi strategy")
    out = cfg.out_dir
    _prepare_dir(out, force, "metrics.csv")
    _write_text(os.path.join(out, "config.json"), config.dump(cfg))
    run_id = f"{cfg.strategy}-s{cfg.seed}"
    sink = pipeline.RowSink(run_id, cfg.strategy)
    result = pipeline.run_strategy(cfg.strategy, ds, opts, sink)
    rows = sink.rows + metrics.final_rows(run_id, cfg.strategy, result.test, ds.names)
    metrics.write_metrics(os.path.join(out, "metrics.csv"), rows, ds.names)
    metrics.write_timings(os.path.join(out, "timings.csv"), sink.timings)
    checkpoint.save_run(os.path.join(out, "checkpoints"), result, ds, opts)
    summary = result.summary()
    summary["checksums"] = {b.modality: b.checksum() for b in result.ensemble.branches}
    _write_text(os.path.join(out, "summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return result


def cmd_train(args):
    cfg = _load_config(args)
    result = train_run(cfg, force=args.force)
    print(json.dumps(result.summary(), sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _resolve_checkpoint(path):
    """Accept either a run directory or its checkpoints/ subdirectory."""
    if os.path.exists(os.path.join(path, checkpoint.MANIFEST)):
        return path, os.path.dirname(os.path.abspath(path))
    sub = os.path.join(path, "checkpoints")
    if os.path.exists(os.path.join(sub, checkpoint.MANIFEST)):
        return sub, path
    raise FileNotFoundError(f"no checkpoint manifest under {path}")


def cmd_eval(args):
    ckpt_dir, run_dir = _resolve_checkpoint(args.checkpoint)
    ens, manifest = checkpoint.load_run(ckpt_dir)
    cfg_path = args.config or os.path.join(run_dir, "config.json")
    if not os.path.exists(cfg_path):
        raise UsageError(f"no dataset config: pass --config (looked for {cfg_path})")
    cfg = config.with_overrides(config.load(cfg_path), seed=args.seed)
    ds = config.build_dataset(cfg)
    if ds.names != manifest["modalities"]:
        raise DataError(f"dataset modalities {ds.names} do not match checkpoint {manifest['modalities']}")
    rule = args.fusion or manifest["fusion"]
    if rule == "concat" and ens.concat_head is None:
        raise UsageError("this checkpoint has no concat head")
    res = pipeline.evaluate_ensemble(ens, ds, args.split, rule)
    run_id = f"{manifest['strategy']}-eval"
    rows = metrics.final_rows(run_id, manifest["strategy"], res, ds.names, stage="eval")
    for r in rows:
        r["split"] = args.split
    out = args.out or os.path.join(run_dir, "eval.csv")
    metrics.write_metrics(out, rows, ds.names)
    doc = {"fusion": rule, "split": args.split, "fused_acc": res["fused_acc"], "macro_f1": res["macro_f1"]}
    doc.update({f"acc_{m}": v for m, v in res["unimodal"].items()})
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args):
    results = verify.run_all()
    print(verify.format_report(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


# ---------------------------------------------------------------------------
# fig1


def fig1_table(ds, opts):
    """Scheme x (per-modality accuracy, fused accuracy) on one dataset and seed."""
    dec = pipeline.run_decoupled(ds, opts)
    joint = pipeline.run_joint_sum(ds, opts)
    udi = pipeline.run_udi(ds, opts, probes=dec.probes)
    header = ["scheme"] + [f"acc_{m}" for m in ds.names] + ["fused_acc"]
    rows = []
    for name, res in (("decoupled", dec), ("joint_sum", joint), ("udi", udi)):
        rows.append([name] + [res.test["unimodal"][m] for m in ds.names] + [res.test["fused_acc"]])
    return header, rows


def cmd_fig1(args):
    cfg = _load_config(args)
    ds = config.build_dataset(cfg)
    opts = config.to_options(cfg)
    out = cfg.out_dir
    _prepare_dir(out, args.force, "fig1.csv")
    _write_text(os.path.join(out, "config.json"), config.dump(cfg))
    header, rows = fig1_table(ds, opts)
    metrics.write_csv(os.path.join(out, "fig1.csv"), [header] + [[r[0]] + [repr(float(v)) for v in r[1:]] for r in rows])
    svg = metrics.bar_chart_svg([r[0] for r in rows], header[1:], [r[1:] for r in rows],
                                title=f"{cfg.dataset.generator or 'csv'} seed {cfg.seed}")
    ElementTree.fromstring(svg)
    metrics.write_svg(os.path.join(out, "fig1.svg"), svg)
    width = max(len(h) for h in header)
    print("  ".join(h.ljust(width) for h in header))
    for r in rows:
        print("  ".join([r[0].ljust(width)] + [f"{v:.4f}".ljust(width) for v in r[1:]]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def _sweep_one(doc, seed, out_dir):
    cfg = config.with_overrides(config.from_dict(doc), seed=seed, out_dir=out_dir)
    res = train_run(cfg, force=True)
    row = {"seed": seed, "strategy": cfg.strategy, "fused_acc": res.test["fused_acc"], "macro_f1": res.test["macro_f1"]}
    row.update({f"acc_{m}": v for m, v in res.test["unimodal"].items()})
    row["anchor"] = res.anchor
    return row


def cmd_sweep(args):
    cfg = _load_config(args)
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise UsageError(f"--seeds expects comma-separated integers, got {args.seeds!r}") from None
    else:
        seeds = list(range(cfg.seed, cfg.seed + args.n_seeds))
    doc = cfg.model_dump(mode="json")
    jobs = [(doc, s, os.path.join(cfg.out_dir, f"seed{s}")) for s in seeds]
    _prepare_dir(cfg.out_dir, args.force, "sweep.csv")
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_one, *zip(*jobs)))
    else:
        rows = [_sweep_one(*j) for j in jobs]
    cols = ["seed", "strategy", "anchor", "fused_acc", "macro_f1"] + sorted(k for k in rows[0] if k.startswith("acc_"))
    table = [cols] + [[metrics.format_cell(c, r.get(c)) for c in cols] for r in rows]
    metrics.write_csv(os.path.join(cfg.out_dir, "sweep.csv"), table)
    med = statistics.median(r["fused_acc"] for r in rows)
    print(f"{cfg.strategy}: {len(rows)} seeds, median fused accuracy {med:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="udi", description="Sequential anchor-guided multimodal training.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="output directory (overrides the config)")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")

    sp = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    common(sp)
    sp.add_argument("--generator", default="redundant", choices=sorted(synthdata.GENERATORS))
    sp.add_argument("--param", action="append", metavar="KEY=VALUE", help="generator parameter (JSON value)")
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", help="train one strategy and write metrics and checkpoints")
    common(sp, config_required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a trained checkpoint")
    sp.add_argument("checkpoint", help="run directory or its checkpoints/ subdirectory")
    sp.add_argument("--config", default=None, help="dataset config (default: the run's config.json)")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--fusion", choices=list(pipeline.FUSIONS), default=None)
    sp.add_argument("--split", choices=list(synthdata.SPLITS), default="test")
    sp.add_argument("--out", default=None, help="CSV path (default: <run>/eval.csv)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("verify", help="run the bundled oracle checks")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("fig1", help="decoupled / joint_sum / udi comparison table and SVG")
    common(sp, config_required=True)
    sp.set_defaults(func=cmd_fig1)

    sp = sub.add_parser("sweep", help="run the configured strategy over several seeds")
    common(sp, config_required=True)
    sp.add_argument("--seeds", default=None, help="comma-separated seeds")
    sp.add_argument("--n-seeds", type=int, default=5)
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UDIError, FloatingPointError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

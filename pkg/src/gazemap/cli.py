"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import ConfigError

log = logging.getLogger("gazemap")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class CommandError(RuntimeError):
    """A failure inside one module, tagged with that module's name."""

    def __init__(self, module: str, exc: BaseException):
        super().__init__(f"{module}: {type(exc).__name__}: {exc}")
        self.module = module
        self.validation = isinstance(exc, (ConfigError, ValueError, FileNotFoundError, json.JSONDecodeError))


def _step(module: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (KeyboardInterrupt, CommandError):
        raise
    except Exception as exc:
        raise CommandError(module, exc) from exc


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _config(args):
    from .config import load_run_config

    return _step("config", load_run_config, args.config, args.seed)


# subcommands


def cmd_synthgen(args) -> int:
    from .synthgen import generate, grid_specs, training_specs, write_jsonl
    from .workflow import evaluation_set, generator

    cfg = _config(args)
    if args.spec == "table1":
        samples = _step("synthgen", evaluation_set, cfg)
    elif args.spec == "grid":
        samples = _step("synthgen", generate, grid_specs(), 36, args.frames, cfg.noise, cfg.seed, generator(cfg, "uniform"))
    else:
        samples = _step("synthgen", generate, training_specs(cfg.seed, cfg.train.users), cfg.train.cells_per_spec, cfg.train.frames_per_dwell, cfg.train_noise, cfg.seed, generator(cfg, "uniform"))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _step("synthgen", write_jsonl, samples, out)
    print(f"wrote {len(samples)} samples to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .nets.matchnet import write_loss_csv
    from .synthgen import read_jsonl
    from .workflow import train_matchnet

    cfg = _config(args)
    out = _out_dir(args.out)
    samples = _step("synthgen", read_jsonl, args.data, cfg.panel.cols) if args.data else None
    net, curve = _step("nets", train_matchnet, cfg, samples)
    net.save(out / "matchnet.json")
    write_loss_csv(curve, out / "train_loss.csv")
    print(f"loss {curve[0]:.5f} -> {curve[-1]:.5f}; model in {out / 'matchnet.json'}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    from dataclasses import replace

    from .pipeline import load_pipeline_spec, predict, run

    spec = _step("pipeline", load_pipeline_spec, args.profile)
    if args.time_scale is not None:
        spec = replace(spec, time_scale=args.time_scale)
    out = _out_dir(args.out)
    report = _step("pipeline", run, spec, items=args.items)
    oracle = predict(spec, args.items)
    d = report.to_dict()
    d.update({"profile": args.profile, "ideal_fps": spec.ideal_fps(), "oracle_fps": oracle.fps})
    _write_json(out / "pipeline_report.json", d)
    (out / "pipeline_stages.csv").write_text(report.to_csv())
    print(f"{report.items_processed} items, {report.fps:.2f} fps (oracle {oracle.fps:.2f}, ideal {spec.ideal_fps():.2f})")
    return EXIT_OK


def _parse_vec(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError("embedding", f"expected comma-separated numbers, got {text!r}") from exc


def cmd_idsync(args) -> int:
    from .idsync import Registry, RegistryClient, RegistryServer

    if args.action == "serve":
        srv = _step("idsync", RegistryServer, Registry(args.dim, args.threshold), args.host, args.port)
        host, port = srv.address
        print(f"registry listening on {host}:{port}", flush=True)
        if args.out:
            _write_json(_out_dir(args.out) / "idsync_server.json", {"host": host, "port": port, "dim": args.dim, "threshold": args.threshold})
        try:
            srv.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            srv.stop()
        return EXIT_OK

    if args.port is None:
        raise CommandError("idsync", ConfigError("port", "client needs --port"))
    with _step("idsync", RegistryClient, args.host, args.port) as client:
        if args.register:
            rid, created = _step("idsync", client.register_or_lookup, _parse_vec(args.register), args.device)
            reply = {"id": rid, "created": created}
        elif args.lookup:
            reply = {"id": _step("idsync", client.lookup, _parse_vec(args.lookup))}
        else:
            reply = client.snapshot().to_dict()
    print(json.dumps(reply))
    if args.out:
        _write_json(_out_dir(args.out) / "idsync_reply.json", reply)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .nets.matchnet import MatchNet
    from .synthgen import read_jsonl
    from .workflow import evaluate, evaluation_set

    cfg = _config(args)
    out = _out_dir(args.out)
    net = _step("nets", MatchNet.load, args.model)
    samples = _step("synthgen", read_jsonl, args.data, cfg.panel.cols) if args.data else _step("synthgen", evaluation_set, cfg)
    res = _step("evalharness", evaluate, cfg, net, samples)
    res.write(out, cfg.panel)
    print(res.table.to_csv(), end="")
    return EXIT_OK


def cmd_costmodel(args) -> int:
    from .config import DATA_DIR
    from .costmodel import cost_table, format_table, load_specs

    path = args.specs or (args.config if args.config else DATA_DIR / "mobilenet_layers.json")
    specs = _step("costmodel", load_specs, path)
    rows = cost_table(specs)
    text = format_table(rows)
    print(text)
    if args.out:
        out = _out_dir(args.out)
        keys = list(rows[0]) if rows else []
        lines = [",".join(keys)] + [",".join(str(r[k]) for k in keys) for r in rows]
        (out / "cost_table.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_e2e(args) -> int:
    from .evalharness import predict_frames
    from .nets.matchnet import write_loss_csv
    from .synthgen import dataset_stats
    from .workflow import evaluate, evaluation_set, noise_sweep, run_pipeline, train_matchnet, training_set

    started = time.time()
    cfg = _config(args)
    out = _out_dir(args.out)
    artifacts: list[Path] = []

    t0 = time.perf_counter()
    train = _step("synthgen", training_set, cfg)
    stats = _step("synthgen", dataset_stats, train)
    log.info("training set: %d samples", len(train))
    net, curve = _step("nets", train_matchnet, cfg, train)
    net.save(out / "matchnet.json")
    write_loss_csv(curve, out / "train_loss.csv")
    artifacts += [out / "matchnet.json", out / "train_loss.csv"]
    t_train = time.perf_counter() - t0

    evalset = _step("synthgen", evaluation_set, cfg)
    report, streamed = _step("pipeline", run_pipeline, cfg, net, evalset)
    # the streamed per-frame path must agree with the batched evaluation path
    batch = _step("evalharness", predict_frames, evalset[: len(streamed)], net, cfg.panel, cfg.camera)
    mismatch = float(np.max(np.abs(streamed - batch))) if len(streamed) else 0.0
    pipe = report.to_dict()
    pipe.update({"profile": cfg.pipeline.profile, "max_abs_diff_vs_batch_m": mismatch})
    artifacts.append(_write_json(out / "pipeline_report.json", pipe))

    res = _step("evalharness", evaluate, cfg, net, evalset)
    artifacts += res.write(out, cfg.panel)
    sweep = _step("evalharness", noise_sweep, cfg, net)
    lines = ["noise_multiple,accuracy_pct"] + [f"{lvl:g},{acc:.2f}" for lvl, acc in sweep]
    (out / "noise_sweep.csv").write_text("\n".join(lines) + "\n")
    artifacts.append(out / "noise_sweep.csv")

    manifest = {
        "config": str(args.config) if args.config else "quickstart (shipped)",
        "seed": cfg.seed,
        "versions": {"gazemap": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "output_dir": str(out),
        "started": started,
        "finished": time.time(),
        "train_seconds": round(t_train, 3),
        "train_samples": len(train),
        "train_feature_degenerate": stats.degenerate,
        "eval_samples": len(evalset),
        "pipeline_fps": report.fps,
        "scoring": "joint per row; per-user rows in accuracy_table_per_user.csv",
        "artifacts": sorted(p.name for p in artifacts),
    }
    _write_json(out / "manifest.json", manifest)
    print(res.table.to_csv(), end="")
    print(f"pipeline {report.fps:.2f} fps; rows 1-4 {res.split['top'].accuracy:.2f}%, rows 5-6 {res.split['bottom'].accuracy:.2f}%")
    return EXIT_OK


# parser


def _common(p: argparse.ArgumentParser, out_help: str, out_required: bool = True) -> None:
    p.add_argument("--seed", type=int, default=None, help="master random seed (overrides the config's seed)")
    p.add_argument("--config", default=None, help="JSON run config merged over the shipped quickstart config")
    p.add_argument("--out", required=out_required, default=None, help=out_help)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gazemap", description="Shelf gaze-mapping simulator: data, training, pipeline, ID sync and evaluation.")
    ap.add_argument("--version", action="version", version=f"gazemap {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthgen", help="generate a synthetic dataset as JSON Lines")
    p.add_argument("--spec", choices=["table1", "grid", "train"], default="table1", help="scenario suite: the three user cases, the 3x3 acquisition grid, or the training users")
    p.add_argument("--frames", type=int, default=10, help="frames per dwell for --spec grid")
    _common(p, "output .jsonl file")
    p.set_defaults(func=cmd_synthgen)

    p = sub.add_parser("train", help="train the gaze-matching network")
    p.add_argument("--data", default=None, help="training .jsonl (default: generate from the config)")
    _common(p, "output directory for matchnet.json and train_loss.csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pipeline", help="run the staged engine on stub latencies and compare with the event-driven oracle")
    p.add_argument("--profile", default="tx2-profile", help="profile path or shipped name (tx2-profile, xavier-profile)")
    p.add_argument("--items", type=int, default=60, help="items to push through")
    p.add_argument("--time-scale", type=float, default=None, help="multiply all stage latencies")
    _common(p, "output directory for pipeline_report.json and pipeline_stages.csv")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("idsync", help="face-ID registry server and client")
    p.add_argument("action", choices=["serve", "client"], help="run the registry or talk to one")
    p.add_argument("--host", default="127.0.0.1", help="address to bind or connect to")
    p.add_argument("--port", type=int, default=None, help="TCP port (serve: 0 picks a free one)")
    p.add_argument("--dim", type=int, default=128, help="embedding dimension (serve)")
    p.add_argument("--threshold", type=float, default=0.6, help="L2 match threshold on normalized embeddings (serve)")
    p.add_argument("--register", default=None, help="comma-separated embedding to register (client)")
    p.add_argument("--lookup", default=None, help="comma-separated embedding to look up (client)")
    p.add_argument("--device", default="cli", help="device name recorded on registration (client)")
    _common(p, "optional directory for the server address or client reply", out_required=False)
    p.set_defaults(func=cmd_idsync)

    p = sub.add_parser("eval", help="score a trained model on the user-case suite")
    p.add_argument("--model", required=True, help="matchnet.json from the train step")
    p.add_argument("--data", default=None, help="evaluation .jsonl (default: generate the user-case suite)")
    _common(p, "output directory for accuracy tables, per-cell CSV and heat map")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("costmodel", help="standard vs. depthwise-separable convolution cost table")
    p.add_argument("--specs", default=None, help="JSON list of layers {dk, df, m, n, alpha, beta}; --config is accepted as an alias")
    _common(p, "optional directory for cost_table.csv", out_required=False)
    p.set_defaults(func=cmd_costmodel)

    p = sub.add_parser("e2e", help="data -> training -> pipeline -> evaluation -> reports")
    _common(p, "output directory for every report and the run manifest")
    p.set_defaults(func=cmd_e2e)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: seed: must be non-negative", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION if exc.validation else EXIT_RUNTIME
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

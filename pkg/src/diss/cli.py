"""Operator command line: dataset synthesis, training, sampling, editing,
evaluation, and serving.

Options may come from an INI config file (one section per subcommand);
explicit flags win. Every run prints the resolved configuration before
doing work. Exit codes: 0 success, 2 validation error, 3 runtime or
numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="INI config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diss", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic paired dataset")
    _add_config_flag(p)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="run one training stage")
    _add_config_flag(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--stage", type=int, default=1, choices=(1, 2))
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--ckpt-in", type=str, default=None)
    p.add_argument("--ckpt-out", type=str, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--vlb-weight", type=float, default=0.001)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--diffusion-steps", type=int, default=1000)
    p.add_argument("--base-channels", type=int, default=32)
    p.add_argument("--loss-log", type=str, default=None)
    p.add_argument("--checkpoint-every", type=int, default=0)

    for name, extra in (("sample", ()), ("edit", ("cutoff",)), ("fill", ("cutoff",))):
        p = sub.add_parser(name, help=f"run {name} inference")
        _add_config_flag(p)
        p.add_argument("--ckpt", type=str, required=True)
        p.add_argument("--comb", type=str, default=None)
        if name == "edit":
            p.add_argument("--original", type=str, default=None)
            p.add_argument("--drawing", type=str, default=None)
        p.add_argument("--s-sketch", type=float, default=2.0)
        p.add_argument("--s-stroke", type=float, default=2.0)
        p.add_argument("--s-realism", type=float, default=1.0)
        p.add_argument("--divisor", type=float, default=8.0)
        p.add_argument("--offset", type=int, default=0)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=str, required=True)
        if "cutoff" in extra:
            p.add_argument("--refine-cutoff", type=int, default=None)

    p = sub.add_parser("eval", help="consistency report and scale grid")
    _add_config_flag(p)
    p.add_argument("--ckpt", type=str, required=True)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--sweep-realism", action="store_true")
    p.add_argument("--grid", action="store_true")
    p.add_argument("--example-index", type=int, default=0)
    p.add_argument("--seeds", type=int, nargs="*", default=[0])
    p.add_argument("--out-report", type=str, default=None)

    p = sub.add_parser("serve", help="run the HTTP job service")
    _add_config_flag(p)
    p.add_argument("--ckpt", type=str, default=os.environ.get("DISS_CHECKPOINT"))
    p.add_argument("--port", type=int, default=int(os.environ.get("DISS_PORT", "8000")))
    p.add_argument("--data-dir", type=str, default=os.environ.get("DISS_DATA_DIR", "./service-data"))
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--static-dir", type=str, default=None, help="serve the web UI from this directory")
    return parser


def apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Fill in values from the INI section matching the subcommand; flags
    that were given explicitly on the command line take precedence."""
    if not args.config:
        return args
    config = configparser.ConfigParser()
    read = config.read(args.config)
    if not read:
        raise FileNotFoundError(f"config file not found: {args.config}")
    if not config.has_section(args.command):
        return args
    explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in config.items(args.command):
        attr = key.replace("-", "_")
        if attr in explicit or not hasattr(args, attr):
            continue
        current = getattr(args, attr)
        if isinstance(current, bool):
            value = config.getboolean(args.command, key)
        elif isinstance(current, int):
            value = int(value)
        elif isinstance(current, float):
            value = float(value)
        elif isinstance(current, list):
            value = [int(v) for v in value.split()]
        setattr(args, attr, value)
    return args


def print_effective_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "config"}
    print(f"[diss {args.command}] resolved config: {json.dumps(resolved, default=str)}")


def _load_runtime(ckpt_path: str):
    from .checkpoint import load_checkpoint
    from .schedule import make_linear_schedule

    ckpt = load_checkpoint(ckpt_path)
    net = ckpt.build_network().eval()
    meta = ckpt.metadata.get("schedule", {})
    sched = make_linear_schedule(
        int(meta.get("steps", 1000)),
        float(meta.get("beta_start", 1e-4)),
        float(meta.get("beta_end", 0.02)),
    )
    return ckpt, net, sched


def cmd_gen_data(args) -> int:
    from .data import write_dataset

    if args.size < 16:
        print("error: --size must be >= 16", file=sys.stderr)
        return EXIT_VALIDATION
    manifest = write_dataset(args.out, args.count, args.size, args.seed)
    print(f"wrote {manifest.count} examples to {args.out} (hash {manifest.content_hash[:16]})")
    return EXIT_OK


def cmd_train(args) -> int:
    import torch

    from .checkpoint import load_checkpoint, save_checkpoint
    from .data import load_dataset
    from .schedule import DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS, make_linear_schedule
    from .training import TrainConfig, train_stage
    from .unet import ConditionalUNet, UNetConfig

    if args.stage == 2 and not args.ckpt_in:
        print("error: --ckpt-in is required for stage 2", file=sys.stderr)
        return EXIT_VALIDATION
    dataset = load_dataset(args.data)
    init = load_checkpoint(args.ckpt_in) if args.ckpt_in else None

    scale = DEFAULT_STEPS / args.diffusion_steps
    schedule_meta = {
        "steps": args.diffusion_steps,
        "beta_start": scale * DEFAULT_BETA_START,
        "beta_end": min(scale * DEFAULT_BETA_END, 0.999),
    }
    sched = make_linear_schedule(
        schedule_meta["steps"], schedule_meta["beta_start"], schedule_meta["beta_end"]
    )
    torch.manual_seed(args.seed)
    size = dataset[0][0].shape[-1]
    config = init.config if init else UNetConfig(
        image_size=size,
        base_channels=args.base_channels,
        attention_head_channels=min(32, args.base_channels),
    )
    net = ConditionalUNet(config)
    cfg = TrainConfig(
        batch_size=args.batch_size,
        learning_rate=args.lr,
        vlb_weight=args.vlb_weight,
        dropout_prob=args.dropout,
        stage=args.stage,
        steps=args.steps,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        checkpoint_dir=str(Path(args.ckpt_out).parent) if args.checkpoint_every else None,
    )
    ckpt = train_stage(
        dataset, net, cfg, sched,
        init_from=init, log_path=args.loss_log, schedule_meta=schedule_meta,
    )
    save_checkpoint(ckpt, args.ckpt_out)
    print(f"trained stage {args.stage} for {args.steps} steps -> {args.ckpt_out}")
    return EXIT_OK


def _inference_request(args, net, sched, comb):
    from .data import extract_sketch_stroke
    from .guidance import GuidanceScales
    from .realism import RealismConfig
    from .sampler import EditRequest, default_refine_cutoff

    sketch, stroke = extract_sketch_stroke(comb)
    cutoff = getattr(args, "refine_cutoff", None)
    if cutoff is None:
        cutoff = default_refine_cutoff(sched.steps)
    return EditRequest(
        c_sketch=sketch,
        c_stroke=stroke,
        c_comb=comb,
        scales=GuidanceScales(args.s_sketch, args.s_stroke),
        realism=RealismConfig(args.s_realism, divisor=args.divisor, offset=args.offset),
        seed=args.seed,
        refine_cutoff=cutoff,
    )


def cmd_sample(args) -> int:
    from .images import decode_png, encode_png
    from .metrics import sketch_consistency, stroke_consistency
    from .sampler import sample

    _, net, sched = _load_runtime(args.ckpt)
    comb = decode_png(args.comb)
    req = _inference_request(args, net, sched, comb)
    out = sample(req, net, sched)
    encode_png(out, args.out)
    print(f"sketch_consistency: {sketch_consistency(out, req.c_sketch):.4f}")
    print(f"stroke_consistency: {stroke_consistency(out, comb):.4f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_edit(args) -> int:
    from .images import decode_png, encode_png
    from .sampler import local_edit
    from .service import _overlay_drawing

    _, net, sched = _load_runtime(args.ckpt)
    if args.comb:
        comb = decode_png(args.comb)
    elif args.original and args.drawing:
        comb = _overlay_drawing(decode_png(args.original), decode_png(args.drawing))
    else:
        print("error: provide --comb or both --original and --drawing", file=sys.stderr)
        return EXIT_VALIDATION
    req = _inference_request(args, net, sched, comb)
    if not 0 <= req.refine_cutoff <= sched.steps:
        print(f"error: --refine-cutoff out of range [0, {sched.steps}]", file=sys.stderr)
        return EXIT_VALIDATION
    out = local_edit(req, net, sched)
    encode_png(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_fill(args) -> int:
    from .images import decode_png, encode_png
    from .sampler import region_fill

    _, net, sched = _load_runtime(args.ckpt)
    comb = decode_png(args.comb)
    req = _inference_request(args, net, sched, comb)
    if not 0 <= req.refine_cutoff <= sched.steps:
        print(f"error: --refine-cutoff out of range [0, {sched.steps}]", file=sys.stderr)
        return EXIT_VALIDATION
    out = region_fill(req, net, sched)
    encode_png(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .data import load_dataset, compose_comb
    from .guidance import GuidanceScales
    from .metrics import realism_tradeoff_curve, sketch_consistency, stroke_consistency
    from .realism import RealismConfig
    from .sampler import SampleRequest, sample

    _, net, sched = _load_runtime(args.ckpt)
    dataset = load_dataset(args.data)
    photo, sketch, stroke = dataset[args.example_index]
    comb = compose_comb(sketch, stroke)
    lines: list[str] = []

    if args.sweep_realism:
        request = SampleRequest(
            c_sketch=sketch, c_stroke=stroke, c_comb=comb,
            realism=RealismConfig(1.0), seed=args.seeds[0],
        )
        report = realism_tradeoff_curve(
            net, request, [1.0, 0.8, 0.6, 0.4, 0.2, 0.0], sched, seeds=args.seeds
        )
        lines.extend(report.summary_lines())

    if args.grid:
        lines.append("scale grid (rows s_sketch, cols s_stroke): sketch/stroke distance")
        for s_sk in (0.0, 1.0, 2.0, 3.0):
            cells = []
            for s_st in (0.0, 1.0, 2.0, 3.0):
                req = SampleRequest(
                    c_sketch=sketch, c_stroke=stroke, c_comb=comb,
                    scales=GuidanceScales(s_sk, s_st), realism=None, seed=args.seeds[0],
                )
                out = sample(req, net, sched)
                cells.append(
                    f"{sketch_consistency(out, sketch):.3f}/{stroke_consistency(out, comb):.3f}"
                )
            lines.append(f"s_sketch={s_sk:.0f}: " + "  ".join(cells))

    text = "\n".join(lines)
    print(text)
    if args.out_report:
        Path(args.out_report).write_text(text + "\n")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, build_state, create_app

    if not args.ckpt:
        print("error: --ckpt (or DISS_CHECKPOINT) is required", file=sys.stderr)
        return EXIT_VALIDATION
    if not Path(args.ckpt).exists():
        print(f"error: checkpoint not found: {args.ckpt}", file=sys.stderr)
        return EXIT_VALIDATION
    config = ServiceConfig(
        data_dir=Path(args.data_dir),
        checkpoint_path=Path(args.ckpt),
        workers=args.workers or max(1, (os.cpu_count() or 2) - 1),
        static_dir=Path(args.static_dir) if args.static_dir else None,
    )
    state = build_state(config)
    app = create_app(state)
    print(f"serving on port {args.port} (data dir {args.data_dir})")
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")
    state.executor.shutdown(wait=True)
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "edit": cmd_edit,
    "fill": cmd_fill,
    "eval": cmd_eval,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        args = apply_config_file(args, parser, argv)
    except (FileNotFoundError, ValueError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print_effective_config(args)
    from .checkpoint import CheckpointError

    try:
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

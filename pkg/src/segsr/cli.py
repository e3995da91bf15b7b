"""Command-line surface: synth-pairs, preprocess, train, infer, eval.

Every command takes an optional --config YAML plus repeatable --set
key.path=value overrides (flags > file > defaults); the effective config is
printed at startup and written next to the command's outputs. Exit codes:
0 ok, 1 domain error, 2 usage/config error.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np
import torch

from . import __version__
from .config import RunConfig, dump_config, load_config, to_dict
from .conditioning import upsample_lr
from .degradation import apply_degradation, sample_stage_params
from .errors import ConfigError, SegsrError, UsageError, ValidationError
from .guidance import dump_guidance
from .imgio import read_image_rgb, write_image_rgb
from .metrics import DEFAULT_CROP_BORDER, MetricPlugin, evaluate_dir, write_report
from .pipeline import (
    build_model,
    get_or_build_table,
    list_image_stems,
    load_dataset,
    make_degradation_config,
    make_noise_schedule,
    make_segmenter,
    make_text_encoder,
    make_unet_config,
)
from .prompting import load_tag_file
from .sampling import ddpm_sample
from .seeding import derive_seed
from .segmentation import save_mask_file
from .taxonomy import default_taxonomy
from .training import load_checkpoint, train_model
from .conditioning import signal_to_image


def _echo(message: str) -> None:
    print(message, flush=True)


def _load_and_print_config(args) -> RunConfig:
    config = load_config(args.config, args.set or ())
    _echo(f"segsr {__version__} -- effective config (flags > file > defaults):")
    _echo(dump_config(config).rstrip())
    return config


def _write_run_config(config: RunConfig, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run_config.yaml"), "w", encoding="utf-8") as fh:
        fh.write(dump_config(config))


def cmd_synth_pairs(args) -> int:
    config = _load_and_print_config(args)
    deg = make_degradation_config(config)
    stems = list_image_stems(args.hr_dir)
    out_dir = args.out_dir
    lr_dir, hr_dir = os.path.join(out_dir, "lr"), os.path.join(out_dir, "hr")
    os.makedirs(lr_dir, exist_ok=True)
    os.makedirs(hr_dir, exist_ok=True)
    _write_run_config(config, out_dir)

    records, errors = [], []
    for stem in stems:
        hr_path = next(
            os.path.join(args.hr_dir, stem + ext)
            for ext in (".png", ".jpg", ".jpeg")
            if os.path.exists(os.path.join(args.hr_dir, stem + ext))
        )
        hr = read_image_rgb(hr_path)
        seed = derive_seed(config.seed, f"degrade:{stem}")
        rng = np.random.default_rng(seed)
        try:
            params = sample_stage_params(deg, rng)
            lr = apply_degradation(hr, params)
        except SegsrError as exc:
            errors.append({"id": stem, "error": str(exc)})
            _echo(f"[skip] {stem}: {exc}")
            continue
        write_image_rgb(os.path.join(lr_dir, f"{stem}.png"), lr)
        write_image_rgb(os.path.join(hr_dir, f"{stem}.png"), hr)
        records.append({"id": stem, "seed": seed, "stages": params.as_dict()})

    manifest = {"scale": deg.scale, "root_seed": config.seed, "pairs": records, "errors": errors}
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _echo(f"wrote {len(records)} pairs ({len(errors)} skipped) -> {out_dir}")
    return 0


def cmd_preprocess(args) -> int:
    config = _load_and_print_config(args)
    taxonomy = default_taxonomy()
    out_dir = args.out_dir
    masks_dir = os.path.join(out_dir, "masks")
    prompts_dir = os.path.join(out_dir, "prompts")
    os.makedirs(masks_dir, exist_ok=True)
    os.makedirs(prompts_dir, exist_ok=True)
    _write_run_config(config, out_dir)

    table_path = os.path.join(out_dir, "embedding_table.bin")
    table = get_or_build_table(config, taxonomy, cache_path=table_path, log=_echo)
    _echo(f"embedding table: {table.rows.shape[0]}x{table.dim} backend={table.backend_name}")

    segmenter = make_segmenter(config)
    tags = None
    if config.prompting.source == "tags":
        tags = load_tag_file(config.prompting.tag_file)

    stems = list_image_stems(args.lr_dir)
    failures = 0
    for stem in stems:
        mask_path = os.path.join(masks_dir, f"{stem}.png")
        prompt_path = os.path.join(prompts_dir, f"{stem}.txt")
        if os.path.exists(mask_path) and os.path.exists(prompt_path):
            _echo(f"[cache hit] {stem}: skipped recomputation")
            continue
        lr = read_image_rgb(
            next(
                os.path.join(args.lr_dir, stem + ext)
                for ext in (".png", ".jpg", ".jpeg")
                if os.path.exists(os.path.join(args.lr_dir, stem + ext))
            )
        )
        try:
            seg = segmenter.segment(lr, image_id=stem)
        except SegsrError as exc:
            failures += 1
            _echo(f"[fail] {stem}: {exc}")
            continue
        save_mask_file(seg, mask_path)
        if tags is not None:
            text = tags.get(stem)
            if text is None:
                failures += 1
                _echo(f"[fail] {stem}: no tag prompt")
                continue
        else:
            from .prompting import prompt_from_map

            text = prompt_from_map(seg, taxonomy, config.prompting.min_area_fraction).text
        with open(prompt_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    _echo(f"preprocessed {len(stems)} images ({failures} failures) -> {out_dir}")
    return 0 if failures == 0 else 1


def cmd_train(args) -> int:
    config = _load_and_print_config(args)
    workdir = args.workdir
    os.makedirs(workdir, exist_ok=True)
    _write_run_config(config, workdir)

    taxonomy = default_taxonomy()
    table = get_or_build_table(
        config, taxonomy, cache_path=os.path.join(workdir, "embedding_table.bin"), log=_echo
    )
    schedule = make_noise_schedule(config)
    lr_dir = os.path.join(args.pairs_dir, "lr")
    hr_dir = os.path.join(args.pairs_dir, "hr")
    stems, _, x0, cond = load_dataset(config, lr_dir, hr_dir, table, taxonomy)
    _echo(f"dataset: {len(stems)} pairs from {args.pairs_dir}")

    start_step = 0
    optimizer = None
    if args.resume:
        model, schedule, payload = load_checkpoint(args.resume, table.header_hash())
        start_step = payload["step"]
        optimizer = torch.optim.AdamW(
            model.parameters(), lr=config.training.lr, weight_decay=config.training.weight_decay
        )
        if payload.get("optimizer_state"):
            optimizer.load_state_dict(payload["optimizer_state"])
        _echo(f"resumed from {args.resume} at step {start_step}")
    else:
        model = build_model(config)
    _echo(f"model parameters: {model.parameter_count()}")

    def progress(step, loss):
        if step % max(config.training.log_every, 1) == 0:
            _echo(f"step {step}: loss {loss:.6f}")

    train_model(
        model,
        x0,
        cond,
        schedule,
        steps=config.training.steps,
        batch_size=config.training.batch_size,
        lr=config.training.lr,
        weight_decay=config.training.weight_decay,
        seed=config.seed,
        workdir=workdir,
        checkpoint_every=config.training.checkpoint_every,
        log_every=config.training.log_every,
        start_step=start_step,
        optimizer=optimizer,
        table_hash=table.header_hash(),
        run_config=to_dict(config),
    )
    _echo(f"training complete -> {os.path.join(workdir, 'checkpoint_final.pt')}")
    return 0


def cmd_infer(args) -> int:
    config = _load_and_print_config(args)
    if args.ablate:
        config.model.guidance = args.ablate
    taxonomy = default_taxonomy()
    table = get_or_build_table(config, taxonomy)
    model, schedule, _ = load_checkpoint(args.checkpoint, table.header_hash())
    model.eval()
    if args.ablate and args.ablate != "none":
        _check_runtime_ablation(model, args.ablate)

    text_encoder = make_text_encoder(config)
    stems, lr_images, _, cond = load_dataset(config, args.lr_dir, None, table, taxonomy)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_run_config(config, args.out_dir)

    scale = config.degradation.scale
    for i, stem in enumerate(stems):
        lr = lr_images[i]
        sr_hw = (lr.shape[0] * scale, lr.shape[1] * scale)
        generator = torch.Generator().manual_seed(derive_seed(config.seed, f"sample:{stem}"))
        batch = cond.select(torch.tensor([i]))
        sample = ddpm_sample(
            model,
            batch,
            schedule,
            (1, 3, *sr_hw),
            generator,
            clip_denoised=config.sampling.clip_denoised,
            guidance_weight=config.sampling.guidance_weight,
            text_encoder=text_encoder,
            guidance_mode=args.ablate,
        )
        sr = signal_to_image(sample[0].numpy())
        write_image_rgb(os.path.join(args.out_dir, f"{stem}.png"), sr)
        if args.debug:
            bundles_dir = os.path.join(args.out_dir, "debug")
            segmenter = make_segmenter(config)
            from .pipeline import bundle_for_image, make_unet_config as _muc

            bundle = bundle_for_image(
                config, lr, stem, segmenter, table, _muc(config), taxonomy,
                load_tag_file(config.prompting.tag_file) if config.prompting.source == "tags" else None,
            )
            dump_guidance(bundle, bundles_dir, stem)
        _echo(f"sampled {stem} -> {sr.shape[1]}x{sr.shape[0]}")
    _echo(f"inference complete -> {args.out_dir}")
    return 0


def _check_runtime_ablation(model, mode: str) -> None:
    for fusion in model.fusions.values():
        if mode == "no-scmap" and fusion.mask_block is None:
            raise ConfigError("cannot ablate to mask-only: model has no mask branch")
        if mode == "no-mask" and fusion.embed_block is None:
            raise ConfigError("cannot ablate to scmap-only: model has no embedding branch")


def cmd_eval(args) -> int:
    plugins = []
    for spec in args.plugin or ():
        parts = spec.split(":", 2)
        if len(parts) < 2:
            raise UsageError(f"--plugin must be name:command[:ref], got {spec!r}")
        needs_ref = len(parts) == 3 and parts[2] == "ref"
        plugins.append(MetricPlugin(name=parts[0], command=parts[1], needs_reference=needs_ref))
    report = evaluate_dir(args.sr_dir, args.hr_dir, tuple(plugins), args.crop_border)
    json_path, csv_path = write_report(report, args.out_dir, args.dataset_name)
    for warning in report.warnings:
        _echo(f"[warn] {warning}")
    if report.missing:
        _echo(f"[warn] {len(report.missing)} SR images had no reference: {report.missing}")
    _echo(f"report -> {json_path}, {csv_path}")
    agg = report.aggregates
    _echo(
        f"psnr_mean={agg.get('psnr_mean')} (inf x{agg.get('psnr_inf_count')}) "
        f"ssim_mean={agg.get('ssim_mean')} over {agg.get('count')} images"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segsr",
        description="Segmentation-guided conditional diffusion super-resolution",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument(
            "--set", action="append", metavar="KEY=VALUE",
            help="override a config key (repeatable), e.g. --set training.steps=500",
        )

    p = sub.add_parser("synth-pairs", help="degrade an HR directory into LR/HR training pairs")
    common(p)
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth_pairs)

    p = sub.add_parser("preprocess", help="cache masks, prompts, and the embedding table")
    common(p)
    p.add_argument("--lr-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the conditional denoiser on synthesized pairs")
    common(p)
    p.add_argument("--pairs-dir", required=True, help="directory with lr/ and hr/ subdirs")
    p.add_argument("--workdir", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="sample SR images for an LR directory")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lr-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument(
        "--ablate", choices=["no-mask", "no-scmap", "none"],
        help="drop guidance branches at inference time",
    )
    p.add_argument("--debug", action="store_true", help="dump per-image prompt and mask")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score an SR directory (PSNR/SSIM + plugins)")
    p.add_argument("--sr-dir", required=True)
    p.add_argument("--hr-dir")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--crop-border", type=int, default=DEFAULT_CROP_BORDER)
    p.add_argument("--dataset-name", default="dataset")
    p.add_argument(
        "--plugin", action="append", metavar="NAME:COMMAND[:ref]",
        help="external metric executable printing one float (repeatable)",
    )
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SegsrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

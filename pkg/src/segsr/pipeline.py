"""Glue from a RunConfig to concrete backends, models, and datasets.

These helpers keep the CLI commands thin and give tests a single place to
assemble the same objects a command would.
"""

import os

import numpy as np
import torch

from .config import RunConfig
from .conditioning import collate_conditioning, image_to_signal
from .degradation import DegradationConfig
from .embeddings import (
    EmbeddingTable,
    HashTextEncoder,
    TextEncoder,
    build_embedding_table,
    load_embedding_table,
    save_embedding_table,
)
from .errors import ConfigError, UsageError, ValidationError
from .guidance import GuidanceBundle, build_guidance
from .imgio import read_image_rgb
from .lr_encoder import ConvLREncoder, LREmbeddingBackend
from .prompting import Prompt, load_tag_file, prompt_from_tags
from .schedule import NoiseSchedule, make_schedule
from .seeding import derive_seed
from .segmentation import (
    BandSegmenter,
    CommandSegmenter,
    PrecomputedMaskSegmenter,
    SegmenterBackend,
)
from .taxonomy import LabelTaxonomy, default_taxonomy
from .unet import ConditionalUNet, UNetConfig


def make_segmenter(config: RunConfig) -> SegmenterBackend:
    seg = config.backends.segmenter
    if seg.kind == "toy":
        return BandSegmenter(num_bands=seg.num_bands)
    if seg.kind == "oracle":
        return PrecomputedMaskSegmenter(seg.mask_dir)
    if seg.kind == "external":
        return CommandSegmenter(seg.command)
    raise ConfigError(f"unknown segmenter kind {seg.kind!r}")


def make_text_encoder(config: RunConfig) -> TextEncoder:
    enc = config.backends.text_encoder
    if enc.kind == "hash":
        return HashTextEncoder(dim=enc.dim, seed=enc.seed)
    raise ConfigError(f"unknown text encoder kind {enc.kind!r}")


def make_lr_encoder(config: RunConfig) -> LREmbeddingBackend:
    enc = config.backends.lr_encoder
    if enc.kind == "conv-stub":
        return ConvLREncoder(dim=enc.dim, seed=enc.seed)
    raise ConfigError(f"unknown LR encoder kind {enc.kind!r}")


def make_unet_config(config: RunConfig) -> UNetConfig:
    m = config.model
    return UNetConfig(
        base_channels=m.base_channels,
        channel_mults=tuple(m.channel_mults),
        res_blocks=m.res_blocks,
        attention_levels=tuple(m.attention_levels),
        middle_attention=m.middle_attention,
        text_context_dim=config.backends.text_encoder.dim,
        lr_context_dim=config.backends.lr_encoder.dim,
        gfm_levels=tuple(m.gfm_levels),
        fusion_mode=m.fusion_mode,
        guidance=m.guidance,
        fusion_hidden=m.fusion_hidden,
        embed_raw_dim=config.backends.text_encoder.dim,
        embed_channels=m.embed_channels,
        embed_hidden=m.embed_hidden,
        use_control=m.use_control,
        max_text_tokens=m.max_text_tokens,
    )


def make_degradation_config(config: RunConfig) -> DegradationConfig:
    d = config.degradation
    return DegradationConfig(
        blur_sigma=tuple(d.blur_sigma),
        resize_modes=dict(d.resize_modes),
        noise_sigma=tuple(d.noise_sigma),
        jpeg_quality=tuple(d.jpeg_quality),
        scale=d.scale,
    )


def make_noise_schedule(config: RunConfig) -> NoiseSchedule:
    s = config.schedule
    return make_schedule(s.t_train, s.sample_steps, s.beta_min, s.beta_max)


def build_model(config: RunConfig) -> ConditionalUNet:
    """Construct the model with parameter init keyed to the run seed."""
    unet_config = make_unet_config(config)
    with torch.random.fork_rng():
        torch.manual_seed(derive_seed(config.seed, "init"))
        model = ConditionalUNet(unet_config)
    return model


def get_or_build_table(
    config: RunConfig,
    taxonomy: LabelTaxonomy | None = None,
    cache_path=None,
    log=None,
) -> EmbeddingTable:
    """Load a cached embedding table if compatible, else build (and cache) one."""
    taxonomy = taxonomy or default_taxonomy()
    encoder = make_text_encoder(config)
    if cache_path is not None and os.path.exists(cache_path):
        table = load_embedding_table(cache_path)
        if table.backend_name == encoder.name and table.dim == encoder.dim:
            if log:
                log(f"embedding table cache hit: {cache_path}")
            return table
        if log:
            log(f"embedding table cache stale (backend {table.backend_name}), rebuilding")
    table = build_embedding_table(taxonomy, encoder)
    if cache_path is not None:
        os.makedirs(os.path.dirname(os.path.abspath(str(cache_path))), exist_ok=True)
        save_embedding_table(table, cache_path)
    return table


def list_image_stems(directory) -> list[str]:
    if not os.path.isdir(directory):
        raise UsageError(f"not a directory: {directory}")
    stems = sorted(
        os.path.splitext(f)[0]
        for f in os.listdir(directory)
        if f.lower().endswith((".png", ".jpg", ".jpeg"))
    )
    if not stems:
        raise UsageError(f"no images found in {directory}")
    return stems


def _find_image(directory, stem) -> str:
    for ext in (".png", ".jpg", ".jpeg"):
        path = os.path.join(directory, stem + ext)
        if os.path.exists(path):
            return path
    raise ValidationError(f"no image for stem {stem!r} in {directory}")


def bundle_for_image(
    config: RunConfig,
    lr_image: np.ndarray,
    image_id: str,
    segmenter: SegmenterBackend,
    table: EmbeddingTable | None,
    unet_config: UNetConfig,
    taxonomy: LabelTaxonomy,
    tags: dict | None = None,
) -> GuidanceBundle:
    sr_hw = (
        lr_image.shape[0] * config.degradation.scale,
        lr_image.shape[1] * config.degradation.scale,
    )
    prompt_override: Prompt | None = None
    if config.prompting.source == "tags":
        if tags is None:
            raise ConfigError("tag prompting requested but no tag table loaded")
        prompt_override = prompt_from_tags(tags, image_id)
    return build_guidance(
        lr_image,
        segmenter,
        table,
        taxonomy,
        scales=unet_config.fusion_scales(sr_hw),
        min_area_fraction=config.prompting.min_area_fraction,
        mode=config.model.guidance,
        prompt_override=prompt_override,
        image_id=image_id,
    )


def load_dataset(
    config: RunConfig,
    lr_dir,
    hr_dir=None,
    table: EmbeddingTable | None = None,
    taxonomy: LabelTaxonomy | None = None,
):
    """Assemble an in-memory dataset for training or inference.

    Returns (stems, lr_images, x0 tensor or None, conditioning batch).
    """
    taxonomy = taxonomy or default_taxonomy()
    stems = list_image_stems(lr_dir)
    segmenter = make_segmenter(config)
    unet_config = make_unet_config(config)
    text_encoder = make_text_encoder(config)
    lr_backend = make_lr_encoder(config)
    tags = None
    if config.prompting.source == "tags":
        tags = load_tag_file(config.prompting.tag_file)

    lr_images, bundles, x0_list = [], [], []
    sr_hw = None
    for stem in stems:
        lr = read_image_rgb(_find_image(lr_dir, stem))
        if sr_hw is None:
            sr_hw = (
                lr.shape[0] * config.degradation.scale,
                lr.shape[1] * config.degradation.scale,
            )
        lr_images.append(lr)
        bundles.append(
            bundle_for_image(config, lr, stem, segmenter, table, unet_config, taxonomy, tags)
        )
        if hr_dir is not None:
            hr = read_image_rgb(_find_image(hr_dir, stem))
            expected = (lr.shape[0] * config.degradation.scale, lr.shape[1] * config.degradation.scale)
            if hr.shape[:2] != expected:
                raise ValidationError(
                    f"{stem}: HR dims {hr.shape[:2]} do not match scale x LR {expected}"
                )
            x0_list.append(image_to_signal(hr))

    cond = collate_conditioning(
        bundles, lr_images, sr_hw, text_encoder, lr_backend, config.model.max_text_tokens
    )
    x0 = torch.from_numpy(np.stack(x0_list)) if x0_list else None
    return stems, lr_images, x0, cond

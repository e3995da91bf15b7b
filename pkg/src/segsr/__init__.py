"""Segmentation-guided conditional diffusion super-resolution (desk scale).

A low-resolution image is segmented once; the label field then drives every
conditioning channel of a conditional denoising UNet: class names become the
text prompt, the colorized mask and a per-pixel class-embedding map supply
dense spatial guidance through pointwise feature modulation, and the LR
image itself enters via a control branch and cross-attention tokens.
"""

__version__ = "0.1.0"

from .taxonomy import LabelTaxonomy, default_taxonomy, load_taxonomy
from .segmentation import (
    BandSegmenter,
    CommandSegmenter,
    PrecomputedMaskSegmenter,
    SegmentationMap,
    SegmenterBackend,
    load_mask_file,
    resize_labels,
)
from .prompting import Prompt, build_prompt, extract_labels, prompt_from_map
from .embeddings import (
    EmbeddingTable,
    HashTextEncoder,
    TextEncoder,
    build_embedding_table,
    load_embedding_table,
    save_embedding_table,
)
from .embedding_map import EmbeddingMapCompressor, build_embedding_map
from .guidance import GuidanceBundle, build_guidance, build_palette, colorize_labels
from .fusion import GuidanceFusion, ModulationBlock, modulate
from .schedule import NoiseSchedule, make_schedule, q_sample, sampling_steps
from .unet import ConditionalUNet, UNetConfig, predict_noise
from .lr_encoder import ConvLREncoder, LREmbeddingBackend
from .training import create_optimizer, load_checkpoint, save_checkpoint, train_model, training_loss
from .sampling import ddpm_sample
from .degradation import DegradationConfig, degrade
from .metrics import evaluate_dir, psnr, ssim, to_ycbcr
from .config import RunConfig, load_config
from .seeding import derive_seed

__all__ = [
    "BandSegmenter",
    "CommandSegmenter",
    "ConditionalUNet",
    "ConvLREncoder",
    "DegradationConfig",
    "EmbeddingMapCompressor",
    "EmbeddingTable",
    "GuidanceBundle",
    "GuidanceFusion",
    "HashTextEncoder",
    "LabelTaxonomy",
    "LREmbeddingBackend",
    "ModulationBlock",
    "NoiseSchedule",
    "PrecomputedMaskSegmenter",
    "Prompt",
    "RunConfig",
    "SegmentationMap",
    "SegmenterBackend",
    "TextEncoder",
    "UNetConfig",
    "build_embedding_map",
    "build_embedding_table",
    "build_guidance",
    "build_palette",
    "build_prompt",
    "colorize_labels",
    "create_optimizer",
    "ddpm_sample",
    "default_taxonomy",
    "degrade",
    "derive_seed",
    "evaluate_dir",
    "extract_labels",
    "load_checkpoint",
    "load_config",
    "load_embedding_table",
    "load_mask_file",
    "load_taxonomy",
    "make_schedule",
    "modulate",
    "predict_noise",
    "prompt_from_map",
    "psnr",
    "q_sample",
    "resize_labels",
    "sampling_steps",
    "save_checkpoint",
    "save_embedding_table",
    "ssim",
    "to_ycbcr",
    "train_model",
    "training_loss",
]

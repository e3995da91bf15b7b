"""Fidelity metrics: PSNR and SSIM on the Y channel of studio-swing YCbCr,
with 4-pixel border shaving, plus external metric plugins and reports.

Conversion follows ITU-R BT.601 full-to-studio swing (Y in [16, 235]):
    Y  =  16 +  (65.481 R + 128.553 G + 24.966 B)
    Cb = 128 + (-37.797 R -  74.203 G + 112.0  B)
    Cr = 128 + (112.0   R -  93.786 G - 18.214 B)
with R, G, B in [0, 1]. Scores use the Y channel only; the choice is
recorded in every report's protocol block.
"""

import csv
import json
import math
import os
import subprocess
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import BackendError, ShapeError, UsageError
from .imgio import read_image_rgb

DEFAULT_CROP_BORDER = 4
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2

PROTOCOL = {
    "color_space": "ycbcr-bt601-studio-swing",
    "channel": "y",
}


def to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    """8-bit RGB -> float64 YCbCr (BT.601 studio swing)."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) image, got {rgb.shape}")
    x = rgb.astype(np.float64) / 255.0
    m = np.array(
        [
            [65.481, 128.553, 24.966],
            [-37.797, -74.203, 112.0],
            [112.0, -93.786, -18.214],
        ]
    )
    out = x @ m.T
    out[..., 0] += 16.0
    out[..., 1] += 128.0
    out[..., 2] += 128.0
    return out


def _y_channel(image: np.ndarray, crop_border: int) -> np.ndarray:
    y = to_ycbcr(image)[..., 0]
    if crop_border > 0:
        h, w = y.shape
        if h <= 2 * crop_border or w <= 2 * crop_border:
            raise ShapeError(f"image {y.shape} too small for crop_border={crop_border}")
        y = y[crop_border:-crop_border, crop_border:-crop_border]
    return y


def psnr(a: np.ndarray, b: np.ndarray, crop_border: int = DEFAULT_CROP_BORDER) -> float:
    """Peak signal-to-noise ratio in dB on the shaved Y channel.

    Identical inputs return math.inf (reported downstream as "inf").
    """
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    ya, yb = _y_channel(a, crop_border), _y_channel(b, crop_border)
    mse = float(np.mean((ya - yb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(a: np.ndarray, b: np.ndarray, crop_border: int = DEFAULT_CROP_BORDER) -> float:
    """Mean local SSIM on the shaved Y channel (11x11 Gaussian window, sigma 1.5).

    Window statistics are evaluated on the valid filter region (a further
    (window-1)/2 crop after filtering), the usual SR-toolbox convention.
    """
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    ya, yb = _y_channel(a, crop_border), _y_channel(b, crop_border)
    if min(ya.shape) < SSIM_WINDOW:
        raise ShapeError(f"shaved image {ya.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    kernel = _gaussian_kernel()
    pad = SSIM_WINDOW // 2

    def filt(img):
        return cv2.filter2D(img, -1, kernel)[pad:-pad, pad:-pad]

    mu1, mu2 = filt(ya), filt(yb)
    mu1_sq, mu2_sq, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    sigma1_sq = filt(ya * ya) - mu1_sq
    sigma2_sq = filt(yb * yb) - mu2_sq
    sigma12 = filt(ya * yb) - mu12
    ssim_map = ((2 * mu12 + SSIM_C1) * (2 * sigma12 + SSIM_C2)) / (
        (mu1_sq + mu2_sq + SSIM_C1) * (sigma1_sq + sigma2_sq + SSIM_C2)
    )
    return float(ssim_map.mean())


@dataclass(frozen=True)
class MetricPlugin:
    """External scorer: an executable taking (sr_path[, hr_path]) and printing one float."""

    name: str
    command: str
    needs_reference: bool = False

    def score(self, sr_path: str, hr_path: str | None = None) -> float:
        argv = self.command.split() + [sr_path]
        if self.needs_reference:
            if hr_path is None:
                raise BackendError(self.name, "plugin needs a reference image but none given")
            argv.append(hr_path)
        proc = subprocess.run(argv, capture_output=True, text=True)
        if proc.returncode != 0:
            raise BackendError(self.name, f"plugin failed ({proc.returncode}): {proc.stderr.strip()}")
        try:
            return float(proc.stdout.strip().splitlines()[-1])
        except (ValueError, IndexError):
            raise BackendError(self.name, f"plugin printed no float: {proc.stdout!r}") from None


@dataclass
class MetricReport:
    per_image: list = field(default_factory=list)   # dicts: {id, psnr, ssim, <plugin>...}
    aggregates: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)
    missing: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def _fmt(value) -> object:
    if value is None:
        return None
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return round(value, 6)
    return value


def evaluate_dir(
    sr_dir,
    hr_dir=None,
    plugins: tuple = (),
    crop_border: int = DEFAULT_CROP_BORDER,
) -> MetricReport:
    """Score every PNG in sr_dir against same-stem files in hr_dir.

    Without a reference directory only plugin metrics run (the non-reference
    protocol); missing pairs are listed, never silently dropped. Aggregates
    are means over finite per-image values, with an explicit count of
    infinite PSNR entries.
    """
    sr_files = sorted(
        f for f in os.listdir(sr_dir) if f.lower().endswith((".png", ".jpg", ".jpeg"))
    )
    if not sr_files:
        raise UsageError(f"no images found in {sr_dir}")
    report = MetricReport(protocol=dict(PROTOCOL, crop_border=crop_border))
    if hr_dir is None and not plugins:
        report.warnings.append("no reference directory and no plugins: metric columns are empty")

    psnr_vals, ssim_vals, inf_count = [], [], 0
    plugin_vals: dict[str, list[float]] = {p.name: [] for p in plugins}
    for fname in sr_files:
        stem = os.path.splitext(fname)[0]
        sr_path = os.path.join(sr_dir, fname)
        record: dict = {"id": stem, "psnr": None, "ssim": None}
        hr_path = None
        if hr_dir is not None:
            for ext in (".png", ".jpg", ".jpeg"):
                cand = os.path.join(hr_dir, stem + ext)
                if os.path.exists(cand):
                    hr_path = cand
                    break
            if hr_path is None:
                report.missing.append(stem)
            else:
                sr_img = read_image_rgb(sr_path)
                hr_img = read_image_rgb(hr_path)
                p = psnr(sr_img, hr_img, crop_border)
                s = ssim(sr_img, hr_img, crop_border)
                if math.isinf(p):
                    inf_count += 1
                else:
                    psnr_vals.append(p)
                ssim_vals.append(s)
                record["psnr"] = _fmt(p)
                record["ssim"] = _fmt(s)
        for plugin in plugins:
            score = plugin.score(sr_path, hr_path)
            plugin_vals[plugin.name].append(score)
            record[plugin.name] = _fmt(score)
        report.per_image.append(record)

    report.aggregates = {
        "count": len(sr_files),
        "psnr_mean": _fmt(float(np.mean(psnr_vals))) if psnr_vals else None,
        "psnr_inf_count": inf_count,
        "ssim_mean": _fmt(float(np.mean(ssim_vals))) if ssim_vals else None,
    }
    for name, vals in plugin_vals.items():
        report.aggregates[f"{name}_mean"] = _fmt(float(np.mean(vals))) if vals else None
    return report


def write_report(report: MetricReport, out_dir, dataset_name: str = "dataset") -> tuple[str, str]:
    """Write report.json (per-image) and report.csv (one aggregate row).

    Output is byte-stable: sorted keys, fixed float formatting, fixed CSV
    column order (dataset, count, psnr_mean, psnr_inf_count, ssim_mean,
    then plugin means alphabetically).
    """
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "report.json")
    payload = {
        "protocol": report.protocol,
        "aggregates": report.aggregates,
        "per_image": report.per_image,
        "missing": report.missing,
        "warnings": report.warnings,
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    csv_path = os.path.join(out_dir, "report.csv")
    fixed = ["dataset", "count", "psnr_mean", "psnr_inf_count", "ssim_mean"]
    plugin_cols = sorted(k for k in report.aggregates if k.endswith("_mean") and k not in fixed)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fixed + plugin_cols)
        row = [dataset_name] + [report.aggregates.get(c) for c in fixed[1:]] + [
            report.aggregates.get(c) for c in plugin_cols
        ]
        writer.writerow(["" if v is None else v for v in row])
    return json_path, csv_path

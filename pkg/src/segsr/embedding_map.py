"""Per-pixel class-embedding maps and their channel compressor.

A raw embedding map assigns every pixel the text embedding of its semantic
class (an (H, W, 1024) field for the default encoder). It is piecewise
constant over same-label regions by construction. The compressor squeezes
1024 channels down to 128 through two 1x1 convolutions; it is strictly
pointwise, so compressing the 151 table rows once and gathering by label is
exactly equivalent to compressing the expanded map.
"""

import numpy as np
import torch
from torch import nn

from .errors import ShapeError
from .embeddings import EmbeddingTable, UNLABELED_ROW
from .segmentation import SegmentationMap
from .taxonomy import UNLABELED_INDEX

RAW_CHANNELS = 1024
COMPRESSED_CHANNELS = 128


def label_row_indices(labels: np.ndarray, unlabeled_index: int = UNLABELED_INDEX) -> np.ndarray:
    """Map class indices to table row indices (sentinel -> last row)."""
    return np.where(labels == unlabeled_index, UNLABELED_ROW, labels).astype(np.int64)


def build_embedding_map(seg: SegmentationMap, table: EmbeddingTable) -> np.ndarray:
    """Expand a label field into its (H, W, dim) per-pixel embedding map.

    Pixel (i, j) carries exactly ``table`` row of its class; the gather is
    element-exact, so this is observationally identical to encoding each
    pixel's class name directly with the backend that built the table.
    """
    rows = label_row_indices(seg.labels)
    return np.ascontiguousarray(table.rows[rows])


class EmbeddingMapCompressor(nn.Module):
    """Two 1x1 convolutions (1024 -> 256 -> 128) with a SiLU in between.

    Output at a pixel depends only on the input at that pixel; spatially
    mixing encoders would break the per-pixel semantics of the map.
    """

    def __init__(
        self,
        in_channels: int = RAW_CHANNELS,
        hidden_channels: int = 256,
        out_channels: int = COMPRESSED_CHANNELS,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.proj_in = nn.Conv2d(in_channels, hidden_channels, kernel_size=1)
        self.act = nn.SiLU()
        self.proj_out = nn.Conv2d(hidden_channels, out_channels, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Compress a (B, in_channels, H, W) map to (B, out_channels, H, W)."""
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"expected (B, {self.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        return self.proj_out(self.act(self.proj_in(x)))

    def compress_rows(self, rows: torch.Tensor) -> torch.Tensor:
        """Compress an (N, in_channels) row matrix pointwise to (N, out_channels)."""
        if rows.ndim != 2 or rows.shape[1] != self.in_channels:
            raise ShapeError(f"expected (N, {self.in_channels}) rows, got {tuple(rows.shape)}")
        out = self.forward(rows.t().unsqueeze(0).unsqueeze(-1))  # (1, C, N, 1)
        return out.squeeze(-1).squeeze(0).t()

    def compress_map(self, raw: np.ndarray) -> np.ndarray:
        """Compress an (H, W, in_channels) numpy map to (H, W, out_channels)."""
        if raw.ndim != 3 or raw.shape[2] != self.in_channels:
            raise ShapeError(
                f"expected (H, W, {self.in_channels}) map, got {raw.shape}"
            )
        x = torch.from_numpy(np.ascontiguousarray(raw, dtype=np.float32))
        x = x.permute(2, 0, 1).unsqueeze(0).to(next(self.parameters()).dtype)
        with torch.no_grad():
            out = self.forward(x)
        return out.squeeze(0).permute(1, 2, 0).numpy()

"""ADE20K 150-class label taxonomy and the index -> class-name function.

The canonical name list ships as ``data/ade20k150.tsv`` (Mask2Former-flavored
naming: class 0 is "wall", class 1 "building", class 34 the multi-word
"rock, stone"). Pixels without a semantic label carry the reserved sentinel
index 255, whose name is the empty string.
"""

import importlib.resources
from dataclasses import dataclass

from .errors import TaxonomyError

NUM_CLASSES = 150
UNLABELED_INDEX = 255
UNLABELED_NAME = ""

_DATA_FILE = "ade20k150.tsv"


@dataclass(frozen=True)
class LabelTaxonomy:
    """Immutable class-index -> class-name lookup over 150 classes + sentinel."""

    names: tuple[str, ...]
    unlabeled_index: int = UNLABELED_INDEX

    def __post_init__(self):
        if len(self.names) != NUM_CLASSES:
            raise TaxonomyError(
                f"taxonomy must define exactly {NUM_CLASSES} classes, got {len(self.names)}"
            )
        for i, name in enumerate(self.names):
            if not name:
                raise TaxonomyError(f"class {i} has an empty name")

    @property
    def num_classes(self) -> int:
        return NUM_CLASSES

    def class_name(self, index: int) -> str:
        """Return the class name for ``index``; the sentinel maps to ""."""
        if index == self.unlabeled_index:
            return UNLABELED_NAME
        if 0 <= index < NUM_CLASSES:
            return self.names[index]
        raise TaxonomyError(f"class index {index} out of range [0, {NUM_CLASSES})")

    def is_valid_index(self, index: int) -> bool:
        return index == self.unlabeled_index or 0 <= index < NUM_CLASSES


def load_taxonomy(path) -> LabelTaxonomy:
    """Parse a UTF-8 "index<TAB>name" file defining all 150 classes.

    Raises TaxonomyError with the offending line number on malformed input,
    duplicate indices, or missing classes.
    """
    names: dict[int, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise TaxonomyError(f"{path}:{lineno}: expected 'index<TAB>name', got {line!r}")
            idx_text, name = parts[0].strip(), parts[1].strip()
            try:
                idx = int(idx_text)
            except ValueError:
                raise TaxonomyError(f"{path}:{lineno}: non-integer index {idx_text!r}") from None
            if not 0 <= idx < NUM_CLASSES:
                raise TaxonomyError(f"{path}:{lineno}: index {idx} out of range [0, {NUM_CLASSES})")
            if idx in names:
                raise TaxonomyError(f"{path}:{lineno}: duplicate index {idx}")
            if not name:
                raise TaxonomyError(f"{path}:{lineno}: empty class name for index {idx}")
            names[idx] = name
    missing = [i for i in range(NUM_CLASSES) if i not in names]
    if missing:
        raise TaxonomyError(f"{path}: missing class indices {missing[:5]}{'...' if len(missing) > 5 else ''}")
    return LabelTaxonomy(names=tuple(names[i] for i in range(NUM_CLASSES)))


def save_taxonomy(taxonomy: LabelTaxonomy, path) -> None:
    """Write the taxonomy in the canonical file format (LF, ascending indices)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, name in enumerate(taxonomy.names):
            fh.write(f"{i}\t{name}\n")


_default: list[LabelTaxonomy] = []


def default_taxonomy() -> LabelTaxonomy:
    """The packaged ADE20K-150 taxonomy (loaded once, cached)."""
    if not _default:
        ref = importlib.resources.files("segsr").joinpath("data", _DATA_FILE)
        with importlib.resources.as_file(ref) as path:
            _default.append(load_taxonomy(path))
    return _default[0]

"""Root-seed splitting.

Every source of randomness in a run derives from one root seed:
derive_seed(root, label) = low 63 bits of SHA-256("root:label"), where the
label names the subsystem and, where needed, the item (e.g. "degrade:img42",
"train:step137", "sample:img3"). Distinct labels give independent streams;
the derivation is documented here and stable across processes.
"""

import hashlib


def derive_seed(root: int, label: str) -> int:
    digest = hashlib.sha256(f"{int(root)}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)

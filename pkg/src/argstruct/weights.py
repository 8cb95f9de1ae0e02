"""Block-structured linear weights shared by the structured and baseline models."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Scheme
from .features import FeatureTemplate

SECOND_ORDER_KINDS = {
    Scheme.CDCP: ("sibling", "coparent"),
    Scheme.UKP: ("grandparent", "coparent"),
}


@dataclass
class ModelWeights:
    prop: np.ndarray                 # (n_types, prop_dim)
    link: np.ndarray                 # (2, link_dim), rows are (off, on)
    compat: np.ndarray               # (n_types, n_types, 2, 3)
    second_order: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros(cls, template: FeatureTemplate) -> "ModelWeights":
        P = len(template.scheme.labels)
        return cls(
            np.zeros((P, template.prop_dim)),
            np.zeros((2, template.link_dim)),
            np.zeros((P, P, 2, 3)),
            {k: np.zeros(template.second_order_dim) for k in SECOND_ORDER_KINDS[template.scheme]},
        )

    def blocks(self) -> list[tuple[str, np.ndarray]]:
        out = [("prop", self.prop), ("link", self.link), ("compat", self.compat)]
        out += [(f"second_order/{k}", v) for k, v in self.second_order.items()]
        return out

    @property
    def size(self) -> int:
        return sum(b.size for _, b in self.blocks())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([b.ravel() for _, b in self.blocks()])

    def like(self, vec: np.ndarray) -> "ModelWeights":
        """Weights with this layout filled from a flat vector."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise ValueError(f"expected a vector of size {self.size}, got {vec.shape}")
        parts = {}
        pos = 0
        for name, b in self.blocks():
            parts[name] = vec[pos:pos + b.size].reshape(b.shape).copy()
            pos += b.size
        return ModelWeights(parts["prop"], parts["link"], parts["compat"],
                            {k: parts[f"second_order/{k}"] for k in self.second_order})

    def check(self, template: FeatureTemplate) -> None:
        P = len(template.scheme.labels)
        expected = {
            "prop": (P, template.prop_dim),
            "link": (2, template.link_dim),
            "compat": (P, P, 2, 3),
        }
        for name, arr in self.blocks():
            shape = expected.get(name, (template.second_order_dim,))
            if arr.shape != shape:
                raise ValueError(f"weight block {name} has shape {arr.shape}, template needs {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"weight block {name} is not finite")

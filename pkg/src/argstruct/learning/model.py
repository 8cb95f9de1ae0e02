"""Joint feature map, trained-model container and the model file format.

Model files are zip archives (numpy ``.npz`` layout, fixed timestamps so
identical models give identical bytes) with members

    meta.npy               uint8 bytes of a UTF-8 JSON object
    prop.npy, link.npy, compat.npy, so_<kind>.npy   float64 weight blocks

``meta`` holds ``format``, ``version``, ``kind`` ("structured" or
"baseline"), the feature template JSON and its fingerprint, the variant
and cost configurations and the full run configuration.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..corpus import Document
from ..features import DocFeatures, FeatureTemplate
from ..graph import DocGraph, VariantConfig, build_structure, compute_potentials, doc_graph_features
from ..inference import RelaxedSolution
from ..weights import SECOND_ORDER_KINDS, ModelWeights
from .cost import CostConfig

MODEL_FORMAT = "argstruct-model"
MODEL_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


class ModelFormatError(ValueError):
    pass


class TemplateMismatchError(ModelFormatError):
    pass


# ---------------------------------------------------------------------------
# joint feature map

def _onehot(states, k: int) -> np.ndarray:
    states = np.asarray(states, dtype=np.int64)
    out = np.zeros((len(states), k))
    out[np.arange(len(states)), states] = 1.0
    return out


def psi(dg: DocGraph, feats: DocFeatures, template: FeatureTemplate, y) -> ModelWeights:
    """psi(x, y) laid out like ``ModelWeights``.

    ``y`` is a full assignment or a ``RelaxedSolution``; for the latter the
    indicators become the solution's (factor-local) probabilities.
    """
    out = ModelWeights.zeros(template)
    P = out.prop.shape[0]
    n = dg.n_props
    L = len(dg.links)
    link_vars = [dg.link_var[l] for l in dg.links]
    soft = isinstance(y, RelaxedSolution)
    if soft:
        Yp = np.array([y.marginals[a] for a in range(n)]).reshape(n, P)
        Yl = np.array([y.marginals[v] for v in link_vars]).reshape(L, 2)
    else:
        if len(y) != dg.graph.n_variables:
            raise ValueError(f"assignment covers {len(y)} of {dg.graph.n_variables} variables")
        Yp = _onehot(y[:n], P)
        Yl = _onehot([y[v] for v in link_vars], 2)
    if dg.config.unaries:
        if n:
            out.prop[:] = np.asarray(feats.prop.T @ Yp).T
        if L:
            out.link[:] = np.asarray(feats.link.T @ Yl).T
    if dg.compat_factor:
        if dg.config.compat_factors:
            V = feats.compat if dg.config.compat_features else np.tile([1.0, 0.0, 0.0], (L, 1))
            for i, l in enumerate(dg.links):
                fi = dg.compat_factor[l]
                if soft:
                    out.compat += y.factor_marginals[fi][..., None] * V[i]
                else:
                    a, b = l
                    out.compat[y[a], y[b], y[link_vars[i]]] += V[i]
    if dg.second_order:
        X = feats.triples([t for _, _, t in dg.second_order])
        for row, (fi, kind, _) in enumerate(dg.second_order):
            f = dg.graph.factors[fi]
            if soft:
                on = float(y.factor_marginals[fi][1, 1])
            else:
                on = float(y[f.variables[0]] == 1 and y[f.variables[1]] == 1)
            if on:
                out.second_order[kind] += on * X[row]
    return out


def joint_feature_map(doc: Document, template: FeatureTemplate, y,
                      config: VariantConfig | None = None) -> ModelWeights:
    """psi(x, y) for ``doc`` under a variant (default: full structured)."""
    dg = build_structure(doc, config or VariantConfig.structured("full"))
    return psi(dg, doc_graph_features(dg, template), template, y)


# ---------------------------------------------------------------------------
# cached per-document training state

@dataclass
class Example:
    doc: Document
    dg: DocGraph
    feats: DocFeatures
    gold: list[int]
    psi_gold: np.ndarray
    rho: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def build(cls, doc: Document, template: FeatureTemplate, config: VariantConfig,
              cost: CostConfig | None = None) -> "Example":
        from .cost import cost_vectors
        dg = build_structure(doc, config)
        feats = doc_graph_features(dg, template)
        gold = dg.gold_assignment()
        ex = cls(doc, dg, feats, gold, psi(dg, feats, template, gold).to_vector())
        if cost is not None:
            ex.rho = cost_vectors(dg, gold, cost)
        return ex

    def potentials(self, weights: ModelWeights):
        return compute_potentials(self.dg, self.feats, weights)


# ---------------------------------------------------------------------------
# model container and file format

@dataclass
class Model:
    kind: str                                   # "structured" or "baseline"
    template: FeatureTemplate
    weights: ModelWeights
    variant: VariantConfig
    cost: CostConfig = field(default_factory=CostConfig)
    run_config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("structured", "baseline"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        self.weights.check(self.template)

    def with_variant(self, variant: VariantConfig) -> "Model":
        return Model(self.kind, self.template, self.weights, variant, self.cost, self.run_config)


def _array_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_model(model: Model, path) -> None:
    meta = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "template": model.template.to_json(),
        "template_hash": model.template.fingerprint(),
        "variant": model.variant.as_dict(),
        "cost": model.cost.as_dict(),
        "run_config": model.run_config,
        "second_order_kinds": list(model.weights.second_order),
    }
    members = [("meta.npy", np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)),
               ("prop.npy", model.weights.prop), ("link.npy", model.weights.link),
               ("compat.npy", model.weights.compat)]
    members += [(f"so_{k}.npy", v) for k, v in model.weights.second_order.items()]
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, arr in members:
            info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, _array_bytes(arr))


def load_model(path, template: FeatureTemplate | None = None) -> Model:
    """Read a model file; refuses templates whose fingerprint does not match."""
    try:
        with np.load(Path(path), allow_pickle=False) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            arrays = {k: z[k] for k in z.files if k != "meta"}
    except (OSError, ValueError, KeyError, zipfile.BadZipFile) as err:
        raise ModelFormatError(f"{path}: not a model file ({err})") from None
    if meta.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: unknown format {meta.get('format')!r}")
    if meta.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {meta.get('version')!r}")
    stored = FeatureTemplate.from_json(meta["template"])
    if stored.fingerprint() != meta["template_hash"]:
        raise ModelFormatError(f"{path}: embedded template does not match its hash")
    if template is not None and template.fingerprint() != meta["template_hash"]:
        raise TemplateMismatchError(
            f"{path}: model was trained with template {meta['template_hash'][:12]}, "
            f"got {template.fingerprint()[:12]}")
    weights = ModelWeights(arrays["prop"], arrays["link"], arrays["compat"],
                           {k: arrays[f"so_{k}"] for k in meta["second_order_kinds"]})
    variant = VariantConfig(**meta["variant"])
    return Model(meta["kind"], stored, weights, variant, CostConfig(**meta["cost"]),
                 meta["run_config"])


def expected_kinds(template: FeatureTemplate) -> Sequence[str]:
    return SECOND_ORDER_KINDS[template.scheme]

"""Command-line entry point: ``argstruct <command> ...``.

Settings resolve in three layers: built-in defaults, then a JSON file given
with ``--config``, then explicit flags. Exit status is 0 on success, 2 on
invalid input or configuration and 3 when training diverges.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import (CorpusError, InvariantError, Scheme, corpus_stats, load_corpus, preprocess,
                     save_corpus)
from .evaluation import DocumentMismatchError, confusion_csv, evaluate
from .features import FeatureTemplate
from .graph import VariantConfig, build_graph, dump_graph
from .inference import Ad3Config
from .learning import (C_GRID, BaselineConfig, ModelFormatError, TrainConfig, TrainingDiverged,
                       check_corpus, cross_validate, fit_baseline, fit_structured, load_model,
                       predict_corpus, save_model)
from .learning.predict import variant_for
from .synth import synth_corpus

log = logging.getLogger("argstruct")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3


@dataclass
class RunConfig:
    scheme: str | None = None
    variant: str = "full"
    kind: str = "structured"
    mode: str = "inference"
    C: float = 0.1
    grid: list[float] = field(default_factory=lambda: list(C_GRID))
    k: int = 3
    epochs: int = 20
    seed: int = 0
    beta: float = 1.0
    min_freq: int = 2
    ad3_eta: float = 0.1
    ad3_max_iter: int = 2000
    jobs: int = 1

    def __post_init__(self):
        if self.scheme is not None:
            self.scheme = Scheme(self.scheme).value
        checks = [
            (self.variant in ("basic", "full", "strict"), f"unknown variant {self.variant!r}"),
            (self.kind in ("structured", "baseline"), f"unknown model kind {self.kind!r}"),
            (self.mode in ("round", "inference"), f"unknown mode {self.mode!r}"),
            (self.C > 0 and all(c > 0 for c in self.grid) and len(self.grid) > 0,
             "C values must be positive"),
            (self.k >= 2, "k must be at least 2"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.beta >= 0, "beta must be >= 0"),
            (self.min_freq >= 1, "min_freq must be >= 1"),
            (self.ad3_eta > 0 and self.ad3_max_iter >= 1, "invalid AD3 settings"),
            (self.jobs >= 1, "jobs must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        self.grid = [float(c) for c in self.grid]

    @classmethod
    def resolve(cls, file_values: dict, flag_values: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(file_values) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        merged = dict(file_values)
        merged.update({k: v for k, v in flag_values.items() if k in names and v is not None})
        return cls(**merged)

    @property
    def ad3(self) -> Ad3Config:
        return Ad3Config(eta=self.ad3_eta, max_iterations=self.ad3_max_iter)

    def variant_config(self) -> VariantConfig:
        if self.kind == "baseline":
            return VariantConfig.baseline(self.variant)
        return VariantConfig.structured(self.variant)

    def train_config(self, C: float | None = None) -> TrainConfig:
        return TrainConfig(C=self.C if C is None else C, epochs=self.epochs, seed=self.seed,
                           variant=self.variant_config(), k=self.k, ad3=self.ad3)

    def baseline_config(self, C: float | None = None) -> BaselineConfig:
        return BaselineConfig(C=self.C if C is None else C, epochs=self.epochs, seed=self.seed,
                              beta=self.beta)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# helpers

def _write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return f"{x:.10g}" if isinstance(x, float) else str(x)


def _load(args, cfg: RunConfig, path=None):
    return load_corpus(path or args.corpus, cfg.scheme, strict=args.strict)


def compat_log_odds(model) -> list[tuple[str, np.ndarray]]:
    """score(on) - score(off) of the compat factor for every (source, target) type pair.

    One table per compat-feature setting (adjacent, source first); a model
    without compat features has a single table.
    """
    w = model.weights.compat                       # (P, P, 2, 3)
    settings = [("basic", (1.0, 0.0, 0.0))]
    if model.variant.compat_features:
        settings = [(f"adjacent={adj},source_first={order}", (1.0, float(adj), float(order)))
                    for adj in (0, 1) for order in (0, 1)]
    return [(name, (w[:, :, 1, :] - w[:, :, 0, :]) @ np.array(v)) for name, v in settings]


# ---------------------------------------------------------------------------
# commands

def cmd_preprocess(args, cfg: RunConfig) -> int:
    docs = load_corpus(args.corpus, cfg.scheme, strict=args.strict, raw=True)
    save_corpus([preprocess(d) for d in docs], args.out)
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    docs = synth_corpus(cfg.scheme or "cdcp", args.n_docs, seed=cfg.seed, noise=args.noise,
                        min_props=args.min_props, max_props=args.max_props)
    save_corpus(docs, args.out)
    return EXIT_OK


def cmd_stats(args, cfg: RunConfig) -> int:
    print(json.dumps(corpus_stats(_load(args, cfg)).as_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _write_trace(path, trace) -> None:
    cols = ["epoch", "dual", "primal", "gap", "integral_ratio", "n_calls"]
    _write_csv(path, cols, [[_fmt(getattr(e, c)) for c in cols] for e in trace.epochs])


def cmd_train(args, cfg: RunConfig) -> int:
    docs = _load(args, cfg)
    if cfg.kind == "baseline":
        fit = fit_baseline(docs, cfg.baseline_config(), cfg.variant, cfg.min_freq, cfg.as_dict())
    else:
        fit = fit_structured(docs, cfg.train_config(), cfg.beta, cfg.min_freq, cfg.as_dict())
        _write_trace(args.trace or f"{args.model}.trace.csv", fit.trace)
    save_model(fit.model, args.model)
    return EXIT_OK


def cmd_cv(args, cfg: RunConfig) -> int:
    docs = _load(args, cfg)
    res = cross_validate(docs, cfg.train_config(), cfg.grid, cfg.kind, cfg.mode, cfg.beta,
                         cfg.min_freq, cfg.jobs)
    _write_csv(args.table, ["C", "fold", "link_f1", "prop_f1", "average"],
               [[_fmt(r.C), r.fold, _fmt(r.link_f1), _fmt(r.prop_f1), _fmt(r.average)]
                for r in res.rows])
    print(f"best C {res.best_C:g}")
    if args.model:
        final = dataclasses.replace(cfg, C=res.best_C)
        if cfg.kind == "baseline":
            fit = fit_baseline(docs, final.baseline_config(), cfg.variant, cfg.min_freq, final.as_dict())
        else:
            fit = fit_structured(docs, final.train_config(), cfg.beta, cfg.min_freq, final.as_dict())
            _write_trace(f"{args.model}.trace.csv", fit.trace)
        save_model(fit.model, args.model)
    return EXIT_OK


def cmd_predict(args, cfg: RunConfig) -> int:
    template = None
    if args.template:
        template = FeatureTemplate.from_json(Path(args.template).read_text(encoding="utf-8"))
    model = load_model(args.model, template)
    docs = _load(args, cfg)
    variant = variant_for(model, args.variant)
    preds = predict_corpus(docs, model, cfg.mode, variant, cfg.ad3, cfg.jobs)
    save_corpus([p.doc for p in preds], args.out)
    if args.dump_inference:
        _write_csv(args.dump_inference,
                   ["doc_id", "status", "iterations", "objective", "score", "nodes"],
                   [[p.doc.doc_id, p.status, p.iterations, _fmt(p.objective), _fmt(p.score), p.nodes]
                    for p in preds])
    if cfg.mode == "inference":
        v = check_corpus([p.doc for p in preds], variant)
        print(f"constraint violations: {json.dumps(v.as_dict(), sort_keys=True)}")
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    gold = _load(args, cfg, args.gold)
    pred = load_corpus(args.pred, cfg.scheme, strict=args.strict)
    rep = evaluate(gold, pred)
    print(rep.table(), end="")
    if args.json:
        _write_text(args.json, rep.to_json() + "\n")
    if args.confusion:
        _write_text(args.confusion, confusion_csv(rep.labels, rep.confusion))
        norm = Path(args.confusion).with_suffix(".normalized.csv")
        _write_text(norm, confusion_csv(rep.labels, rep.confusion_normalized))
    if args.check:
        v = check_corpus(pred, VariantConfig.structured(args.check))
        print(f"constraint violations: {json.dumps(v.as_dict(), sort_keys=True)}")
    return EXIT_OK


def cmd_inspect(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    labels = model.template.scheme.labels
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tables = compat_log_odds(model)
    for name, t in tables:
        fname = "compat_" + name.replace("=", "").replace(",", "_") + ".csv"
        _write_text(out / fname, confusion_csv(labels, t).replace("gold\\predicted", "source\\target"))
    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, axes = plt.subplots(1, len(tables), figsize=(4 * len(tables), 4), squeeze=False)
        for ax, (name, t) in zip(axes[0], tables):
            lim = max(1e-12, float(np.abs(t).max()))
            ax.imshow(t, cmap="RdBu", vmin=-lim, vmax=lim)
            ax.set_xticks(range(len(labels)), labels, rotation=90)
            ax.set_yticks(range(len(labels)), labels)
            ax.set_title(name, fontsize=8)
        fig.tight_layout()
        fig.savefig(out / "compat.png", dpi=120, metadata={"Software": None})
        plt.close(fig)
    return EXIT_OK


def cmd_dump(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    variant = variant_for(model, args.variant)
    for doc in _load(args, cfg):
        dg, pots = build_graph(doc, model.template, model.weights, variant)
        print(f"# document {doc.doc_id}")
        print(dump_graph(dg.graph, pots), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _common(p: argparse.ArgumentParser, *flags: str) -> None:
    p.add_argument("--config", help="JSON file with run settings (flags take precedence)")
    p.add_argument("--scheme", choices=[s.value for s in Scheme])
    p.add_argument("--strict", action="store_true", help="reject unknown keys in corpus files")
    opts = {
        "variant": dict(choices=["basic", "full", "strict"]),
        "kind": dict(choices=["structured", "baseline"]),
        "mode": dict(choices=["round", "inference"]),
        "C": dict(type=float), "grid": dict(type=float, nargs="+"), "k": dict(type=int),
        "epochs": dict(type=int), "seed": dict(type=int), "beta": dict(type=float),
        "min-freq": dict(type=int), "ad3-eta": dict(type=float), "ad3-max-iter": dict(type=int),
        "jobs": dict(type=int),
    }
    for f in flags:
        p.add_argument(f"--{f}", dest=f.replace("-", "_"), **opts[f])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="argstruct", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    learn = ("variant", "kind", "mode", "C", "k", "epochs", "seed", "beta", "min-freq",
             "ad3-eta", "ad3-max-iter", "jobs")

    p = sub.add_parser("preprocess", help="resolve nested props and close CDCP links")
    _common(p)
    p.add_argument("corpus")
    p.add_argument("out")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", help="write a planted-rule synthetic corpus")
    _common(p, "seed")
    p.add_argument("out")
    p.add_argument("--n-docs", type=int, default=200)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--min-props", type=int, default=3)
    p.add_argument("--max-props", type=int, default=6)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="corpus statistics as JSON")
    _common(p)
    p.add_argument("corpus")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="fit a model on a corpus")
    _common(p, *learn)
    p.add_argument("corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--trace", help="per-epoch trace CSV (default: MODEL.trace.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="choose C by k-fold cross-validation")
    _common(p, *learn, "grid")
    p.add_argument("corpus")
    p.add_argument("--table", required=True, help="CSV with one row per (C, fold)")
    p.add_argument("--model", help="refit on all documents with the best C and save here")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", help="predict types and links")
    _common(p, "variant", "mode", "ad3-eta", "ad3-max-iter", "jobs")
    p.add_argument("corpus")
    p.add_argument("out")
    p.add_argument("--model", required=True)
    p.add_argument("--template", help="template JSON the model must have been trained with")
    p.add_argument("--dump-inference", help="per-document inference CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    _common(p)
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("--json")
    p.add_argument("--confusion", help="confusion CSV (a .normalized.csv sibling is also written)")
    p.add_argument("--check", choices=["basic", "full", "strict"],
                   help="also count constraint violations of this variant in the predictions")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="dump learned compat log-odds tables")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--plot", action="store_true", help="also render a heatmap PNG")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("dump", help="print factor graphs with potentials")
    _common(p, "variant")
    p.add_argument("corpus")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_dump)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = {}
        if args.config:
            file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
            if not isinstance(file_values, dict):
                raise ValueError("config file must hold a JSON object")
        cfg = RunConfig.resolve(file_values, vars(args))
        return args.func(args, cfg)
    except TrainingDiverged as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (CorpusError, InvariantError, ModelFormatError, DocumentMismatchError, ValueError,
            OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

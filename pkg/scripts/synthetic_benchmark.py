"""Train every model variant on a planted-rule synthetic corpus and print a results table.

    python3 scripts/synthetic_benchmark.py --scheme cdcp --n-train 200 --n-test 100
"""
import argparse
import json
import time

from argstruct.evaluation import evaluate
from argstruct.graph import VariantConfig
from argstruct.learning import (BaselineConfig, TrainConfig, check_corpus, fit_baseline,
                                fit_structured, predict_corpus)
from argstruct.synth import synth_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scheme", default="cdcp", choices=["cdcp", "ukp"])
    ap.add_argument("--n-train", type=int, default=200)
    ap.add_argument("--n-test", type=int, default=100)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--C", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--json", help="also write the rows here")
    args = ap.parse_args()

    train = synth_corpus(args.scheme, args.n_train, seed=args.seed)
    test = synth_corpus(args.scheme, args.n_test, seed=args.seed + 1)
    rows = []
    for variant in ("basic", "full", "strict"):
        t0 = time.perf_counter()
        base = fit_baseline(train, BaselineConfig(C=args.C, epochs=args.epochs, seed=args.seed), variant).model
        cfg = TrainConfig(C=args.C, epochs=args.epochs, seed=args.seed, variant=VariantConfig.structured(variant))
        structured = fit_structured(train, cfg).model
        for name, model, mode in (("baseline", base, "round"), ("baseline+inference", base, "inference"),
                                  ("structured", structured, "inference")):
            preds = [p.doc for p in predict_corpus(test, model, mode, jobs=args.jobs)]
            rep = evaluate(test, preds)
            rows.append(dict(variant=variant, model=name, link_f1=rep.link_f1, prop_f1=rep.prop_macro_f1,
                             average=rep.average, violations=check_corpus(preds, model.variant).total))
        print(f"# {variant} done in {time.perf_counter() - t0:.0f}s", flush=True)

    print(f"{'variant':<8} {'model':<20} {'link F1':>8} {'prop F1':>8} {'avg':>8} {'viol':>5}")
    for r in rows:
        print(f"{r['variant']:<8} {r['model']:<20} {r['link_f1']:8.4f} {r['prop_f1']:8.4f} "
              f"{r['average']:8.4f} {r['violations']:5d}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()

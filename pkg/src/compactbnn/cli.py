"""Command-line entry point: ``compactbnn <subcommand> [options]``.

Subcommands ``train``, ``prune``, ``resample``, ``evaluate`` and ``diagnose``
run one stage at a time on files; ``experiment`` runs the whole pipeline for
every configured run and writes the aggregated results.
"""

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import experiment as ex
from .diagnostics import DegenerateChainWarning, export_trace, psrf_report, write_rhat_csv
from .pruning import apply_mask, build_mask, chain_statistics, load_mask, save_mask
from .sampler import load_chain, resample_chain, resample_config, save_chain


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(message)
        self.stage = stage


def _add_common(p, runs=False):
    p.add_argument("--config", help="file of `key = value` lines")
    p.add_argument("--dataset", help="built-in dataset name or CSV path")
    p.add_argument("--data-path", help="CSV file backing a built-in dataset")
    p.add_argument("--samples", type=int, help="chain length")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--backend", choices=["numba", "numpy"])
    if runs:
        p.add_argument("--runs", type=int, help="number of independent runs")
        p.add_argument("--method", help="pruning method(s): stn, spn, rnd (comma separated)")
        p.add_argument("--level", help="pruning level(s) in [0, 1) (comma separated)")
        p.add_argument("--workers", type=int, help="parallel worker processes")


def build_parser():
    parser = argparse.ArgumentParser(prog="compactbnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="sample the full network and save the chain")
    _add_common(p)
    p.add_argument("--out", default="train", help="output directory")

    p = sub.add_parser("prune", help="build a pruning mask from a saved chain")
    p.add_argument("--chain", required=True)
    p.add_argument("--method", default="stn", choices=["stn", "spn", "rnd"])
    p.add_argument("--level", type=float, default=0.25)
    p.add_argument("--seed", type=int, help="seed for random pruning")
    p.add_argument("--out", default="mask.txt", help="mask file")

    p = sub.add_parser("resample", help="resample the pruned network")
    p.add_argument("--chain", required=True, help="chain the mask was built from")
    p.add_argument("--mask", required=True)
    p.add_argument("--samples", type=int, default=1000, help="resampling length")
    p.add_argument("--seed", type=int)
    p.add_argument("--backend", choices=["numba", "numpy"])
    p.add_argument("--out", default="resampled.csv", help="output chain file")

    p = sub.add_parser("evaluate", help="posterior-predictive metrics of a saved chain")
    p.add_argument("--chain", required=True)
    p.add_argument("--mask", help="apply this mask to every retained sample first")
    p.add_argument("--thinning", type=int)
    p.add_argument("--out", help="CSV file for the metrics")

    p = sub.add_parser("diagnose", help="R-hat and acceptance of one or more saved chains")
    p.add_argument("--chain", required=True, action="append", help="repeat for several chains")
    p.add_argument("--trace", help="comma-separated parameter indices to export")
    p.add_argument("--out", default="diagnostics", help="output directory")

    p = sub.add_parser("experiment", help="full pipeline over all runs, methods and levels")
    _add_common(p, runs=True)
    p.add_argument("--out", help="output directory")
    return parser


def _config(args):
    cfg = ex.load_config(args.config) if getattr(args, "config", None) else ex.ExperimentConfig()
    overrides = {}
    for flag, key in [("dataset", "dataset"), ("data_path", "data_path"), ("samples", "max_samples"),
                      ("seed", "master_seed"), ("runs", "n_runs"), ("method", "methods"),
                      ("level", "levels"), ("workers", "workers"), ("out", "out_dir"),
                      ("backend", "backend")]:
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value) if key in ("methods", "levels") else value
    return ex.config_from_mapping(overrides, cfg)


def _chain_context(path):
    chain, meta = load_chain(path)
    cfg = ex.config_from_metadata(meta)
    return chain, meta, cfg, ex.prepare_data(cfg)


def cmd_train(args):
    cfg = _config(args)
    try:
        prep = ex.prepare_data(cfg)
    except Exception as exc:
        raise StageError("data", exc) from exc
    try:
        chain = ex.train_chain(cfg, 0, prep)
    except Exception as exc:
        raise StageError("train", exc) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_chain(chain, out / "chain.csv", ex.chain_metadata(cfg, 0))
    print(f"wrote {out / 'chain.csv'}: {len(chain)} samples, acceptance {chain.acceptance_rate:.3f}")


def cmd_prune(args):
    chain, _ = load_chain(args.chain)
    if args.method == "rnd":
        mask = build_mask(chain.n_weights, "rnd", args.level, seed=0 if args.seed is None else args.seed)
    else:
        mask = build_mask(chain_statistics(chain), args.method, args.level)
    save_mask(mask, args.out)
    print(f"wrote {args.out}: pruned {mask.n_pruned} of {mask.size} weights ({mask.method.value})")


def cmd_resample(args):
    chain, meta, cfg, prep = _chain_context(args.chain)
    mask = load_mask(args.mask)
    if mask.size != chain.n_weights:
        raise StageError("resample", f"mask has {mask.size} entries, chain has {chain.n_weights} weights")
    retained = chain.retained()
    start = apply_mask(retained.mean(axis=0), mask)
    seed = ex.derive_seed(chain.config.seed, 2, 0) if args.seed is None else args.seed
    rcfg = resample_config(chain.config, args.samples, seed)
    backend = args.backend or cfg.backend
    rchain = resample_chain(prep.spec, prep.train, rcfg, cfg.prior_config(), start, mask, backend=backend)
    save_chain(rchain, args.out, {k: v for k, v in meta.items() if k.startswith("experiment.")})
    print(f"wrote {args.out}: {len(rchain)} samples, acceptance {rchain.acceptance_rate:.3f}")


def cmd_evaluate(args):
    chain, _, cfg, prep = _chain_context(args.chain)
    mask = load_mask(args.mask) if args.mask else None
    pred = ex.posterior_predictive(prep.spec, chain.retained(), prep.test.x,
                                   args.thinning or cfg.thinning, mask=mask, backend=cfg.backend)
    value, aucs, _ = ex.evaluate(prep.spec, pred, prep.test)
    metric = "accuracy" if prep.spec.task.value == "classification" else "rmse"
    rows = [(metric, value)] + [(f"auc_class{k}", a) for k, a in enumerate(aucs)]
    for name, v in rows:
        print(f"{name} = {v!r}")
    if args.out:
        with open(args.out, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["metric", "value"])
            w.writerows([(n, repr(float(v))) for n, v in rows])


def cmd_diagnose(args):
    chains = [load_chain(p)[0] for p in args.chain]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    retained = [c.retained() for c in chains]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateChainWarning)
        report = psrf_report(retained, skip_constant=True)
    names = [f"p{i}" for i in range(chains[0].n_weights)] + (["log_tau_sq"] if chains[0].has_noise else [])
    write_rhat_csv(report, out / "rhat.csv", names)
    print(f"chains = {len(chains)}, max_rhat = {report.max_rhat!r}")
    for i, c in enumerate(chains):
        print(f"acceptance[{i}] = {c.acceptance_rate!r}")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.trace:
        idx = [int(t) for t in args.trace.split(",") if t.strip()]
        export_trace(chains[0], idx, out / "trace.csv")


def cmd_experiment(args):
    cfg = _config(args)
    summary, results = ex.run_experiment(cfg)
    for r in summary.rows:
        if r.metric in ("accuracy", "rmse"):
            print(f"{r.method:>4} {r.level:<5g} {r.stage:<14} {r.metric} = {r.mean:.4f} +/- {r.std:.4f} "
                  f"(n={r.n_runs})")
    if summary.n_failed:
        print(f"{summary.n_failed} run(s) failed; see runs.csv", file=sys.stderr)
    print(f"results in {cfg.out_dir}")


COMMANDS = {"train": cmd_train, "prune": cmd_prune, "resample": cmd_resample, "evaluate": cmd_evaluate,
            "diagnose": cmd_diagnose, "experiment": cmd_experiment}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return 1
    except ex.ExperimentError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end runs: train, prune, resample, evaluate, aggregate and export.

A run samples the full network once, then for every requested (method, level)
pair builds a pruning mask from the post-burn-in posterior statistics,
evaluates the masked posterior, resamples the pruned network and evaluates
again. Runs are independent and seeded by ``master_seed + run_index``.
"""

import configparser
import csv
import dataclasses
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, data as data_mod
from .diagnostics import psrf_report, write_rhat_csv
from .metrics import accuracy, auc, one_vs_all_roc, rmse
from .nnet import Task
from .posterior import PriorConfig
from .pruning import Method, apply_mask, build_mask, chain_statistics, save_mask
from .sampler import SamplerConfig, resample_chain, resample_config, sample_chain, save_chain

log = logging.getLogger(__name__)

STAGES = ("pre_prune", "post_prune", "post_resample")


class ExperimentError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "iris"
    data_path: str = None
    task: str = None
    feature_columns: tuple = None
    target_columns: tuple = None
    series: bool = False
    window: int = 4
    horizon: int = 1
    ordered: bool = None
    hidden_size: int = None
    output_size: int = None
    train_ratio: float = 0.6
    split_seed: int = None

    max_samples: int = 50_000
    burn_in_fraction: float = 0.5
    step_size_epsilon: float = 0.02
    proposal_std: float = 0.025
    tau_proposal_std: float = 0.2
    langevin_probability: float = 0.5

    sigma_sq: float = 25.0
    nu1: float = 0.0
    nu2: float = 0.0

    methods: tuple = ("stn",)
    levels: tuple = (0.25,)
    resample_length: int = 1000
    n_runs: int = 30
    master_seed: int = 0
    init_std: float = 0.5
    thinning: int = 10
    workers: int = 1
    save_chains: bool = True
    out_dir: str = "results"
    backend: str = None

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.thinning < 1 or self.resample_length < 2:
            raise ValueError("thinning must be >= 1 and resample_length >= 2")
        object.__setattr__(self, "methods", tuple(Method(m).value for m in _as_tuple(self.methods)))
        object.__setattr__(self, "levels", tuple(float(v) for v in _as_tuple(self.levels)))
        for level in self.levels:
            if not 0.0 <= level < 1.0:
                raise ValueError(f"pruning level {level} outside [0, 1)")
        self.sampler_config(0)
        self.prior_config()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def sampler_config(self, seed):
        return SamplerConfig(self.max_samples, self.burn_in_fraction, self.step_size_epsilon,
                             self.proposal_std, self.tau_proposal_std, self.langevin_probability,
                             int(seed) % 2**64)

    def prior_config(self):
        return PriorConfig(self.sigma_sq, self.nu1, self.nu2)

    @property
    def combinations(self):
        return [(m, lv) for m in self.methods for lv in self.levels]


def _as_tuple(v):
    if isinstance(v, str):
        return tuple(s.strip() for s in v.split(",") if s.strip())
    if isinstance(v, (list, tuple)):
        return tuple(v)
    return (v,)


def _parse_value(text, default):
    text = text.strip()
    if text.lower() in ("none", ""):
        return None
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return _as_tuple(text)
    return text


_INT_FIELDS = {"window", "horizon", "hidden_size", "output_size", "split_seed", "max_samples",
               "resample_length", "n_runs", "master_seed", "thinning", "workers"}
_BOOL_FIELDS = {"series", "ordered", "save_chains"}
_TUPLE_FIELDS = {"feature_columns", "target_columns", "methods", "levels"}


def config_from_mapping(mapping, base=None):
    base = base or ExperimentConfig()
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    changes = {}
    for key, raw in mapping.items():
        key = key.strip().replace("-", "_")
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        if not isinstance(raw, str):
            changes[key] = raw
            continue
        if key in _INT_FIELDS:
            proto = 0
        elif key in _BOOL_FIELDS:
            proto = False
        elif key in _TUPLE_FIELDS:
            proto = ()
        else:
            proto = getattr(base, key)
            proto = proto if proto is not None else ""
        changes[key] = _parse_value(raw, proto)
    return base.replace(**changes)


def load_config(path, base=None):
    """Read ``key = value`` lines (``#`` comments allowed) into an :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string("[experiment]\n" + text)
    return config_from_mapping(dict(parser["experiment"]), base)


def dump_config(cfg):
    out = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"


def derive_seed(base, *key):
    """Independent 64-bit seed for a named sub-stream of ``base``."""
    ss = np.random.SeedSequence(int(base) % 2**64, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


# -- data ------------------------------------------------------------------------

def load_data(cfg):
    """Raw dataset and the defaults (hidden size, ordering) for ``cfg``."""
    desc = data_mod.BUILTIN.get(cfg.dataset)
    if desc is not None:
        raw = data_mod.load_builtin(cfg.dataset, cfg.data_path)
        hidden = cfg.hidden_size or desc.hidden_size
        ordered = desc.ordered if cfg.ordered is None else cfg.ordered
        out = cfg.output_size or (desc.output_size if desc.task is Task.CLASSIFICATION else None)
        return raw, hidden, ordered, out
    path = Path(cfg.data_path or cfg.dataset)
    if not path.exists():
        raise data_mod.DataError(f"dataset {cfg.dataset!r} is neither built-in nor an existing file")
    task = Task(cfg.task or "classification")
    if cfg.series:
        col = cfg.target_columns[0] if cfg.target_columns else None
        if col is None:
            with open(path, newline="") as f:
                col = next(csv.reader(f))[-1].strip()
        raw = data_mod.window_series(data_mod._read_series(path, col), cfg.window, cfg.horizon, path.stem)
    else:
        raw = data_mod.load_csv(path, cfg.feature_columns, cfg.target_columns, task, path.stem)
    if cfg.hidden_size is None:
        raise data_mod.DataError("hidden_size is required for CSV datasets")
    ordered = cfg.series if cfg.ordered is None else cfg.ordered
    return raw, cfg.hidden_size, ordered, cfg.output_size


def prepare_data(cfg):
    raw, hidden, ordered, out = load_data(cfg)
    seed = cfg.master_seed if cfg.split_seed is None else cfg.split_seed
    return data_mod.prepare(raw, hidden, cfg.train_ratio, seed, ordered, out)


# -- prediction --------------------------------------------------------------------

@dataclass
class Prediction:
    """Posterior-predictive summary.

    ``mean`` is N x outputs (class probabilities for classification);
    ``lower``/``upper`` are the per-point 5th and 95th percentiles.
    """

    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    labels: np.ndarray = None


def posterior_predictive(spec, samples, inputs, thinning=1, mask=None, backend=None, noise=False, seed=0):
    """Forward pass for every ``thinning``-th row of ``samples`` (already post burn-in).

    The band covers the network output by default. With ``noise=True`` a
    regression band also includes the Gaussian observation noise of each
    sample (drawn from ``seed``), giving a band for new targets.
    """
    samples = np.asarray(getattr(samples, "samples", samples), dtype=float)
    rows = samples[::max(1, int(thinning))]
    if rows.shape[0] == 0:
        raise ValueError("no retained samples for the posterior predictive")
    if mask is not None:
        rows = apply_mask(rows, mask)
    x = np.ascontiguousarray(inputs, dtype=float)
    k = _kernels.get(backend)
    with np.errstate(over="ignore", under="ignore"):
        out = k.predict_many(np.ascontiguousarray(rows), x, spec.hidden_size, spec.output_size,
                             spec.task.code)
    mean = out.mean(axis=0)
    if noise and spec.has_noise:
        if rows.shape[1] != spec.n_params:
            raise ValueError("noisy predictive band needs the log(tau^2) column")
        tau = np.exp(0.5 * rows[:, -1])[:, None, None]
        out = out + tau * np.random.default_rng(seed).standard_normal(out.shape)
    lower, upper = np.percentile(out, [5.0, 95.0], axis=0)
    labels = mean.argmax(axis=1) if spec.task is Task.CLASSIFICATION else None
    return Prediction(mean, lower, upper, labels)


def evaluate(spec, pred, test):
    """Primary metric, per-class AUCs and ROC curves of a prediction on ``test``."""
    if spec.task is Task.CLASSIFICATION:
        curves = one_vs_all_roc(pred.mean, test.y)
        aucs = [auc(c) if c is not None else float("nan") for c in curves]
        return accuracy(pred.labels, test.y), aucs, curves
    return rmse(pred.mean, test.y), [], []


# -- runs --------------------------------------------------------------------------

@dataclass
class RunResult:
    run_index: int
    method: str
    level: float
    metric: str
    status: str = "ok"
    values: dict = field(default_factory=dict)
    aucs: dict = field(default_factory=dict)
    roc: dict = field(default_factory=dict, repr=False)
    max_rhat: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)
    n_pruned: int = 0
    seconds: float = 0.0
    trace: np.ndarray = field(default=None, repr=False)

    @property
    def ok(self):
        return self.status == "ok"


def _initial_state(spec, train, rng, init_std, backend):
    theta = rng.normal(0.0, init_std, spec.n_weights)
    if not spec.has_noise:
        return theta
    k = _kernels.get(backend)
    pred = k.forward(np.r_[theta, 0.0], np.ascontiguousarray(train.x), spec.hidden_size,
                     spec.output_size, spec.task.code)
    mse = float(np.mean((train.y - pred) ** 2))
    return np.r_[theta, math.log(max(mse, 1e-8))]


def run_seed(cfg, run_index):
    return (int(cfg.master_seed) + int(run_index)) % 2**64


def train_chain(cfg, run_index, prepared):
    """Stage 1 and 2: random initial state, then the full-network chain."""
    spec, train = prepared.spec, prepared.train
    seed = run_seed(cfg, run_index)
    init = _initial_state(spec, train, np.random.default_rng(derive_seed(seed, 1)), cfg.init_std,
                          cfg.backend)
    return sample_chain(spec, train, cfg.sampler_config(seed), cfg.prior_config(), init,
                        backend=cfg.backend)


def chain_metadata(cfg, run_index):
    """Sidecar entries that let a saved chain be re-evaluated on the same data."""
    items = {"run_index": run_index}
    for line in dump_config(cfg).splitlines():
        key, _, value = line.partition(" = ")
        items[f"experiment.{key}"] = value
    return items


def config_from_metadata(meta, base=None):
    prefix = "experiment."
    mapping = {k[len(prefix):]: v for k, v in meta.items() if k.startswith(prefix)}
    return config_from_mapping(mapping, base)


def _chain_name(run_index):
    return f"chain_run{run_index}.csv"


def _mask_name(cfg, run_index, method, level):
    if len(cfg.combinations) == 1:
        return f"mask_run{run_index}.txt"
    return f"mask_run{run_index}_{method}_{level:g}.txt"


def run_pipeline(cfg, run_index, prepared=None):
    """Train once, then prune/resample/evaluate every (method, level) pair.

    Returns one :class:`RunResult` per combination. A failing stage marks the
    affected results ``failed:<stage>`` instead of raising.
    """
    t0 = time.perf_counter()
    seed = run_seed(cfg, run_index)
    metric = None
    combos = cfg.combinations
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None

    def failed(stage, exc, subset=combos):
        log.warning("run %d failed in %s: %s", run_index, stage, exc)
        return [RunResult(run_index, m, lv, metric or "", status=f"failed:{stage}",
                          seconds=time.perf_counter() - t0) for m, lv in subset]

    try:
        prep = prepared or prepare_data(cfg)
    except Exception as exc:
        return failed("data", exc)
    spec, train, test = prep.spec, prep.train, prep.test
    metric = "accuracy" if spec.task is Task.CLASSIFICATION else "rmse"
    prior = cfg.prior_config()

    try:
        chain = train_chain(cfg, run_index, prep)
        if out_dir is not None and cfg.save_chains:
            out_dir.mkdir(parents=True, exist_ok=True)
            save_chain(chain, out_dir / _chain_name(run_index), chain_metadata(cfg, run_index))
    except Exception as exc:
        return failed("train", exc)

    try:
        retained = chain.retained()
        stats = chain_statistics(chain)
        pre = posterior_predictive(spec, retained, test.x, cfg.thinning, backend=cfg.backend)
        pre_value, pre_auc, pre_roc = evaluate(spec, pre, test)
        pre_rhat = psrf_report([retained[:, :spec.n_weights]]).max_rhat
        trace = np.ascontiguousarray(retained[::cfg.thinning, :spec.n_weights])
    except Exception as exc:
        return failed("evaluate_pre", exc)

    results = []
    for j, (method, level) in enumerate(combos):
        res = RunResult(run_index, method, level, metric, trace=trace)
        res.values["pre_prune"] = pre_value
        res.aucs["pre_prune"] = pre_auc
        res.roc["pre_prune"] = pre_roc
        res.max_rhat["pre_prune"] = pre_rhat
        res.acceptance["pre_prune"] = chain.acceptance_rate
        stage = "prune"
        try:
            mask = build_mask(stats if method != "rnd" else spec.n_weights, method, level,
                              seed=derive_seed(seed, 3, j) if method == "rnd" else None)
            res.n_pruned = mask.n_pruned
            if out_dir is not None:
                out_dir.mkdir(parents=True, exist_ok=True)
                save_mask(mask, out_dir / _mask_name(cfg, run_index, method, level))
            stage = "evaluate_post_prune"
            post = posterior_predictive(spec, retained, test.x, cfg.thinning, mask=mask, backend=cfg.backend)
            res.values["post_prune"], res.aucs["post_prune"], res.roc["post_prune"] = evaluate(spec, post, test)
            stage = "resample"
            start = apply_mask(np.r_[stats.means, retained[:, spec.n_weights:].mean(axis=0)], mask)
            rcfg = resample_config(cfg.sampler_config(seed), cfg.resample_length,
                                   seed=derive_seed(seed, 2, j))
            rchain = resample_chain(spec, train, rcfg, prior, start, mask, backend=cfg.backend)
            stage = "evaluate_post_resample"
            rpred = posterior_predictive(spec, rchain.samples, test.x, cfg.thinning, backend=cfg.backend)
            res.values["post_resample"], res.aucs["post_resample"], res.roc["post_resample"] = \
                evaluate(spec, rpred, test)
            res.max_rhat["post_resample"] = psrf_report([rchain.theta], skip_constant=True).max_rhat
            res.acceptance["post_resample"] = rchain.acceptance_rate
        except Exception as exc:
            log.warning("run %d, %s@%g failed in %s: %s", run_index, method, level, stage, exc)
            res.status = f"failed:{stage}"
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return results


def _run_one(args):
    cfg, i = args
    return run_pipeline(cfg, i)


def run_experiment(cfg, export=True):
    """All runs, aggregated; writes the result files when ``export`` is set."""
    jobs = [(cfg, i) for i in range(cfg.n_runs)]
    if cfg.workers > 1 and cfg.n_runs > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            batches = list(pool.map(_run_one, jobs))
    else:
        prepared = None
        try:
            prepared = prepare_data(cfg)
        except Exception:
            pass  # run_pipeline reports the data stage failure per run
        batches = [run_pipeline(cfg, i, prepared) for i in range(cfg.n_runs)]
    results = sorted((r for b in batches for r in b), key=lambda r: (r.run_index, cfg.combinations.index(
        (r.method, r.level))))
    summary = aggregate_runs(results, cfg.dataset)
    if export:
        export_results(summary, results, cfg.out_dir)
    return summary, results


# -- aggregation and export ------------------------------------------------------------

@dataclass(frozen=True)
class SummaryRow:
    dataset: str
    method: str
    level: float
    stage: str
    metric: str
    mean: float
    std: float
    n_runs: int


@dataclass
class Summary:
    rows: list
    n_failed: int = 0
    single_run: bool = False

    def get(self, method, level, stage, metric=None):
        for r in self.rows:
            if r.method == method and r.level == level and r.stage == stage and (metric is None or r.metric == metric):
                return r
        raise KeyError((method, level, stage, metric))


def _mean_std(values):
    values = np.asarray(values, dtype=float)
    if values.size == 1:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1))


def aggregate_runs(results, dataset=""):
    """Mean and sample standard deviation per (method, level, stage, metric) over successful runs."""
    ok = [r for r in results if r.ok]
    n_failed = len(results) - len(ok)
    if not ok:
        raise ExperimentError("aggregate", f"no successful runs ({n_failed} failed)")
    groups = {}
    for r in ok:
        key = (r.method, r.level)
        groups.setdefault(key, []).append(r)
    rows = []
    for (method, level) in groups:
        runs = sorted(groups[(method, level)], key=lambda r: r.run_index)
        metric = runs[0].metric
        for stage in STAGES:
            m, s = _mean_std([r.values[stage] for r in runs])
            rows.append(SummaryRow(dataset, method, level, stage, metric, m, s, len(runs)))
            n_classes = len(runs[0].aucs.get(stage, []))
            for k in range(n_classes):
                m, s = _mean_std([r.aucs[stage][k] for r in runs])
                rows.append(SummaryRow(dataset, method, level, stage, f"auc_class{k}", m, s, len(runs)))
        for stage in ("pre_prune", "post_resample"):
            m, s = _mean_std([r.max_rhat[stage] for r in runs])
            rows.append(SummaryRow(dataset, method, level, stage, "max_rhat", m, s, len(runs)))
            m, s = _mean_std([r.acceptance[stage] for r in runs])
            rows.append(SummaryRow(dataset, method, level, stage, "acceptance_rate", m, s, len(runs)))
    single = min(len(g) for g in groups.values()) == 1
    if single:
        log.warning("single successful run per group; standard deviations reported as 0")
    return Summary(rows, n_failed, single)


RESULT_COLUMNS = ["dataset", "method", "level", "stage", "metric", "mean", "std", "n_runs"]


def write_results_csv(summary, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in summary.rows:
            w.writerow([r.dataset, r.method, repr(r.level), r.stage, r.metric, repr(r.mean), repr(r.std),
                        r.n_runs])


def read_results_csv(path):
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(SummaryRow(rec["dataset"], rec["method"], float(rec["level"]), rec["stage"],
                                   rec["metric"], float(rec["mean"]), float(rec["std"]), int(rec["n_runs"])))
    return Summary(rows)


def export_results(summary, results, out_dir):
    """Write ``results.csv``, ``runs.csv``, ``roc_class_k.csv`` and ``rhat.csv`` under ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_results_csv(summary, out / "results.csv")
        _write_runs_csv(results, out / "runs.csv")
        _write_roc(results, out)
        traces = []
        seen = set()
        for r in results:
            if r.ok and r.trace is not None and r.run_index not in seen:
                seen.add(r.run_index)
                traces.append(r.trace)
        if traces:
            report = psrf_report(traces, skip_constant=True)
            write_rhat_csv(report, out / "rhat.csv")
    except OSError as exc:
        raise OSError(f"cannot export results to {out}: {exc}") from exc


def _write_runs_csv(results, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["run", "method", "level", "status", "metric", *STAGES, "n_pruned",
                    "max_rhat_pre_prune", "max_rhat_post_resample", "acceptance_pre_prune",
                    "acceptance_post_resample"])
        for r in results:
            vals = [repr(r.values[s]) if s in r.values else "" for s in STAGES]
            w.writerow([r.run_index, r.method, repr(r.level), r.status, r.metric, *vals, r.n_pruned,
                        repr(r.max_rhat.get("pre_prune", float("nan"))),
                        repr(r.max_rhat.get("post_resample", float("nan"))),
                        repr(r.acceptance.get("pre_prune", float("nan"))),
                        repr(r.acceptance.get("post_resample", float("nan")))])


def _write_roc(results, out):
    """One file per class with the curves of the first successful run, every combination and stage."""
    ok = [r for r in results if r.ok and r.roc.get("pre_prune")]
    if not ok:
        return
    first = min(r.run_index for r in ok)
    chosen = [r for r in ok if r.run_index == first]
    n_classes = len(chosen[0].roc["pre_prune"])
    for k in range(n_classes):
        with open(out / f"roc_class_{k}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["method", "level", "stage", "class", "fpr", "tpr"])
            for r in chosen:
                for stage in STAGES:
                    curve = r.roc[stage][k]
                    if curve is None:
                        continue
                    for x, y in zip(curve.fpr, curve.tpr):
                        w.writerow([r.method, repr(r.level), stage, k, repr(float(x)), repr(float(y))])

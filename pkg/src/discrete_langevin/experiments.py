"""Config-driven experiment runs.

Every experiment writes into ``output_dir``:

``metrics.csv``
    one row per (sampler, alpha, seed[, extra key]); columns depend on the kind
``summary.csv``
    experiment-level verdict rows (absent when the kind has none)
``plot_data.csv``
    ``x,y,series`` triples for the figure analogue (absent when not applicable)
``config.yaml``
    the canonical config text
``manifest.json``
    config hash, library version, timestamps and per-run wall times

Metric files contain no timing information, so the same config and seed give
byte-identical CSVs.  Anything clock-dependent (wall time, ESS per second)
goes to the manifest only.
"""

from __future__ import annotations

import csv
import json
import logging
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .config import MODEL_DEFAULTS, ExperimentConfig, ModelSpec, SamplerSpec
from .core import DiscreteDomain, EnergyModel
from .diagnostics import (
    MomentAccumulator,
    empirical_distribution,
    ess,
    flip_stats,
    mean_rmse,
    mmd_permutation_test,
)
from .dlp import stochastic_proposal_bias_probe
from .exact_oracle import (
    exact_kernel,
    exact_mean,
    exact_target,
    l1_distance,
    log_quadratic_pi_alpha,
    stationary_distribution,
    theorem1_bound,
    tv_distance,
)
from .models import (
    IsingLatticeModel,
    LogQuadraticModel,
    NoisyGradientModel,
    Perturbed1DModel,
    load_matrix,
    load_rbm,
    random_rbm,
)
from .samplers import DMALA, DULA, RbmBlockGibbs, Sampler, make_sampler, run_chain

log = logging.getLogger(__name__)

# spawn keys for streams that do not belong to a listed sampler run
_REFERENCE_KEY = 1_000_003
_WARMUP_KEY = 1_000_033
# exact distances carry roundoff; a zero bound must still admit it
BOUND_ATOL = 1e-12


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def build_model(spec: ModelSpec | dict, base_dir: Path | None = None) -> EnergyModel:
    if isinstance(spec, ModelSpec):
        spec = spec.to_dict()
    kind = spec["kind"]
    p = {**MODEL_DEFAULTS.get(kind, {}), **spec}
    base_dir = base_dir or Path(".")
    if kind == "ising":
        return IsingLatticeModel(p["rows"], p["cols"], p["a"], p["b"], periodic=p["periodic"],
                                 encoding=p["encoding"])
    if kind == "log_quadratic":
        W = np.asarray(p["W"], dtype=float) if "W" in p else load_matrix(base_dir / p["W_file"])
        if "b_file" in p:
            b = load_matrix(base_dir / p["b_file"]).reshape(-1)
        else:
            b = np.asarray(p.get("b", np.zeros(W.shape[0])), dtype=float)
        dim = W.shape[0]
        dom = DiscreteDomain.binary(dim) if p["domain"] == "binary" else DiscreteDomain.spin(dim)
        return LogQuadraticModel(W, b, dom)
    if kind == "perturbed_1d":
        return Perturbed1DModel(p["a"], p["b"], p["eps"])
    if kind == "rbm":
        if "path" in p:
            return load_rbm(base_dir / p["path"])
        return random_rbm(p["n_visible"], p["n_hidden"], scale=p["weight_scale"], rng=p["seed"],
                          bias_scale=p["bias_scale"], visible_bias=p["visible_bias"],
                          hidden_bias=p["hidden_bias"])
    if kind == "noisy_gradient":
        return NoisyGradientModel(build_model(p["base"], base_dir), p["noise_scale"])
    raise ValueError(f"unknown model kind {kind!r}")


def build_sampler(spec: SamplerSpec, alpha: float | None) -> Sampler:
    params = dict(spec.params)
    if "precond" in params:
        params["precond"] = tuple(params["precond"])
    if spec.kind in ("dula", "dmala") or (spec.kind == "lb1" and alpha is not None):
        params["alpha"] = alpha
    return make_sampler(spec.kind, **params)


def run_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for ``seed`` and ``key``; unaffected by thread scheduling."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass
class RunUnit:
    index: int
    spec: SamplerSpec
    alpha: float | None

    @property
    def label(self) -> str:
        return self.spec.display


def expand_runs(cfg: ExperimentConfig) -> list[RunUnit]:
    units = []
    for spec in cfg.samplers:
        for a in spec.alphas:
            units.append(RunUnit(len(units), spec, a))
    return units


@dataclass
class RunRecord:
    """Outcome of one (sampler, alpha, seed) task."""

    label: str
    alpha: float | None
    seed: int | None
    rows: list[dict] = field(default_factory=list)
    status: str = "ok"
    error: str | None = None
    wall_time: float = 0.0
    timing: dict = field(default_factory=dict)  # clock-dependent extras, manifest only
    payload: Any = None  # in-memory results (samples, traces) for callers


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunRecord]
    metrics: list[dict]
    summary: list[dict]
    plot: list[dict]
    manifest: dict
    output_dir: Path | None

    @property
    def failed(self) -> list[RunRecord]:
        return [r for r in self.runs if r.status != "ok"]


def _initial_state(model: EnergyModel, init: str, n_chains: int, rng: np.random.Generator) -> np.ndarray:
    batch = (n_chains,) if n_chains > 1 else ()
    if init == "zeros":
        return np.zeros(batch + model.domain.state_shape)
    return model.domain.random_state(rng, batch)


def _pooled_samples(samples: np.ndarray, domain: DiscreteDomain) -> np.ndarray:
    return samples.reshape((-1,) + domain.state_shape)


def _energy_ess(trace, burn_in: int) -> float:
    e = trace.energy[burn_in:]
    e = e.reshape(len(e), -1)
    return float(np.mean([ess(e[:, c]) for c in range(e.shape[1])]))


def _f(x):
    return None if x is None else float(x)


# ---------------------------------------------------------------------------
# experiment kinds
# ---------------------------------------------------------------------------

Task = Callable[[], RunRecord]


def _theorem1(cfg: ExperimentConfig, model, units) -> tuple[list[Task], Callable]:
    target = exact_target(model, cfg.state_cap)

    def task(u: RunUnit) -> Task:
        def go():
            pi_a = stationary_distribution(exact_kernel(model, DULA(u.alpha), cfg.state_cap))
            closed = log_quadratic_pi_alpha(model, u.alpha, cfg.state_cap)
            dist = l1_distance(pi_a, target.probs)
            bound = theorem1_bound(model, u.alpha, cfg.state_cap)
            row = {"sampler": u.label, "alpha": u.alpha, "l1_distance": dist,
                   "closed_form_l1": l1_distance(closed, target.probs), "bound": bound,
                   "within_bound": dist <= bound + BOUND_ATOL}
            return RunRecord(u.label, u.alpha, None, [row])
        return go

    def finish(runs):
        rows = sorted((r for run in runs for r in run.rows), key=lambda r: r["alpha"])
        dists = [r["l1_distance"] for r in rows]
        monotone = all(b >= a - 1e-12 for a, b in zip(dists, dists[1:]))
        summary = [{"check": "distance_within_bound", "passed": all(r["within_bound"] for r in rows)},
                   {"check": "distance_monotone_in_alpha", "passed": monotone}]
        plot = [{"x": r["alpha"], "y": r["l1_distance"], "series": "measured"} for r in rows]
        plot += [{"x": r["alpha"], "y": r["bound"], "series": "bound"} for r in rows]
        return rows, summary, plot

    return [task(u) for u in units], finish


def _theorem2(cfg: ExperimentConfig, model, units) -> tuple[list[Task], Callable]:
    eps_values = [float(e) for e in cfg.option("eps")]
    a, b = model.a, model.b

    def task(u: RunUnit) -> Task:
        def go():
            rows = []
            base_kernel = base_pi = None
            for eps in eps_values:
                m = Perturbed1DModel(a, b, eps)
                kernel = exact_kernel(m, DULA(u.alpha), cfg.state_cap)
                pi = exact_target(m).probs
                if base_kernel is None:
                    base_kernel, base_pi = kernel.matrix, pi
                rows.append({"sampler": u.label, "alpha": u.alpha, "eps": eps,
                             "l1_distance": l1_distance(stationary_distribution(kernel), pi),
                             "target_shift": l1_distance(pi, base_pi),
                             "proposal_shift": float(np.abs(kernel.matrix - base_kernel).max())})
            return RunRecord(u.label, u.alpha, None, rows)
        return go

    def finish(runs):
        rows = [r for run in runs for r in run.rows]
        summary = []
        for run in runs:
            d = [r["l1_distance"] for r in sorted(run.rows, key=lambda r: r["eps"])]
            summary.append({"check": f"nondecreasing_in_eps[alpha={run.alpha!r}]",
                            "passed": all(y >= x - 1e-12 for x, y in zip(d, d[1:]))})
        plot = [{"x": r["eps"], "y": r["l1_distance"], "series": f"alpha={r['alpha']!r}"} for r in rows]
        return rows, summary, plot

    return [task(u) for u in units], finish


class _ChainMeans:
    """Per-chain running sums, for a between-chain standard error."""

    def __init__(self):
        self.total = None
        self.count = 0

    def record(self, step, x, event):
        self.total = x.copy() if self.total is None else self.total + x
        self.count += 1

    @property
    def means(self) -> np.ndarray:
        return self.total / self.count


def _reference_mean(cfg: ExperimentConfig, model) -> tuple[np.ndarray, float, str]:
    """True mean for RMSE: exact when enumerable under the cap, else a long DMALA run.

    The second value is the Monte-Carlo standard error of the reference
    (root mean square over coordinates of the between-chain standard error).
    """
    truth = cfg.option("truth")
    if truth in ("auto", "exact") and model.domain.n_states <= cfg.state_cap:
        return exact_mean(model, cfg.state_cap), 0.0, "exact"
    if truth == "exact":
        raise ValueError(f"exact truth requested but {model.domain.n_states} states exceed state_cap")
    alpha = next((u.alpha for u in expand_runs(cfg) if u.spec.kind == "dmala"), 0.4)
    chains, steps = cfg.option("reference_chains"), cfg.option("reference_steps")
    rng = run_rng(cfg.seeds[0], _REFERENCE_KEY)
    rec = _ChainMeans()
    run_chain(model, DMALA(alpha), model.domain.random_state(rng, (chains,)), steps, rng=rng,
              recorders=[rec], store_samples=False)
    m = rec.means
    se = float(np.sqrt(np.mean(m.var(0, ddof=1) / chains))) if chains > 1 else float("nan")
    return m.mean(0), se, "reference"


def _ising(cfg: ExperimentConfig, model, units) -> tuple[list[Task], Callable]:
    truth, truth_se, truth_kind = _reference_mean(cfg, model)
    burn = cfg.effective_burn_in

    def task(u: RunUnit, seed: int) -> Task:
        def go():
            rng = run_rng(seed, u.index)
            sampler = build_sampler(u.spec, u.alpha)
            x0 = _initial_state(model, cfg.option("init"), cfg.n_chains, rng)
            acc = MomentAccumulator()
            tr = run_chain(model, sampler, x0, cfg.n_steps, burn_in=burn, thin=cfg.thin, rng=rng,
                           recorders=[acc], store_samples=False)
            fs = flip_stats(tr)
            rmse = mean_rmse(acc.mean, truth)
            e = _energy_ess(tr, burn)
            sec = float(tr.step_times[burn:].sum())
            row = {"sampler": u.label, "alpha": _f(u.alpha), "seed": seed,
                   "acceptance": fs.acceptance, "mean_changed": fs.mean_changed,
                   "changed_per_accept": fs.changed_per_accept, "mean_proposed": fs.mean_proposed,
                   "rmse": rmse, "log_rmse": float(np.log(rmse)) if rmse > 0 else float("-inf"),
                   "ess_energy": e, "truth": truth_kind}
            return RunRecord(u.label, u.alpha, seed, [row],
                             timing={"ess_per_sec": e / sec if sec > 0 else None, "sampling_seconds": sec},
                             payload=tr)
        return go

    def finish(runs):
        rows = [r for run in runs for r in run.rows]
        return rows, [{"check": "truth_standard_error", "value": truth_se, "source": truth_kind}], []

    return [task(u, s) for u in units for s in cfg.seeds], finish


def _preconditioner(cfg: ExperimentConfig, model, units) -> tuple[list[Task], Callable]:
    truth = exact_target(model, cfg.state_cap).mean()
    burn = cfg.effective_burn_in

    def task(u: RunUnit, seed: int) -> Task:
        def go():
            rng = run_rng(seed, u.index)
            x0 = _initial_state(model, cfg.option("init"), cfg.n_chains, rng)
            acc = MomentAccumulator()
            run_chain(model, build_sampler(u.spec, u.alpha), x0, cfg.n_steps, burn_in=burn, thin=cfg.thin,
                      rng=rng, recorders=[acc], store_samples=False)
            rmse = mean_rmse(acc.mean, truth)
            row = {"sampler": u.label, "alpha": u.alpha, "seed": seed,
                   "preconditioned": u.spec.params.get("precond") is not None,
                   "rmse": rmse, "log_rmse": float(np.log(rmse)) if rmse > 0 else float("-inf")}
            return RunRecord(u.label, u.alpha, seed, [row])
        return go

    def finish(runs):
        rows = [r for run in runs for r in run.rows]
        groups: dict[tuple, list[float]] = {}
        for r in rows:
            groups.setdefault((r["preconditioned"], r["sampler"], r["alpha"]), []).append(r["log_rmse"])
        summary = []
        for pre, name in ((True, "preconditioned"), (False, "standard")):
            cands = [(float(np.mean(v)), k) for k, v in groups.items() if k[0] == pre]
            if cands:
                best, key = min(cands, key=lambda c: c[0])
                summary.append({"group": name, "best_log_rmse": best, "sampler": key[1], "alpha": key[2]})
        plot = [{"x": k[2], "y": float(np.mean(v)), "series": k[1]} for k, v in sorted(groups.items(),
                                                                                  key=lambda kv: (kv[0][1], kv[0][2]))]
        return rows, summary, plot

    return [task(u, s) for u in units for s in cfg.seeds], finish


def _rbm(cfg: ExperimentConfig, model, units) -> tuple[list[Task], Callable]:
    exact = exact_target(model, cfg.state_cap) if model.domain.n_states <= min(cfg.state_cap, 2**20) else None
    burn = cfg.effective_burn_in
    n_mmd = cfg.option("mmd_samples")
    references: dict[int, np.ndarray] = {}

    def reference(seed):
        # block-Gibbs ground truth, computed once per seed before the sampler tasks run
        if seed not in references:
            rng = run_rng(seed, _REFERENCE_KEY)
            tr = run_chain(model, RbmBlockGibbs(), _initial_state(model, cfg.option("init"), cfg.n_chains, rng),
                           cfg.n_steps, burn_in=burn, thin=cfg.thin, rng=rng)
            references[seed] = _pooled_samples(tr.samples, model.domain)
        return references[seed]

    for s in cfg.seeds:
        reference(s)

    def task(u: RunUnit, seed: int) -> Task:
        def go():
            rng = run_rng(seed, u.index)
            x0 = _initial_state(model, cfg.option("init"), cfg.n_chains, rng)
            tr = run_chain(model, build_sampler(u.spec, u.alpha), x0, cfg.n_steps, burn_in=burn, thin=cfg.thin,
                           rng=rng)
            samples = _pooled_samples(tr.samples, model.domain)
            ref = references[seed]
            pick = run_rng(seed, u.index, _REFERENCE_KEY)
            a = samples[pick.choice(len(samples), min(n_mmd, len(samples)), replace=False)]
            b = ref[pick.choice(len(ref), min(n_mmd, len(ref)), replace=False)]
            test = mmd_permutation_test(a, b, pick, n_perm=cfg.option("n_perm"), level=cfg.option("level"),
                                        domain=model.domain)
            fs = flip_stats(tr)
            row = {"sampler": u.label, "alpha": _f(u.alpha), "seed": seed, "acceptance": fs.acceptance,
                   "mean_changed": fs.mean_changed,
                   "tv_to_exact": (tv_distance(empirical_distribution(samples, model.domain), exact.probs)
                                   if exact is not None else None),
                   "mmd2": test.statistic, "log_mmd": float(np.log(max(test.statistic, 1e-10))),
                   "mmd_threshold": test.threshold, "mmd_p_value": test.p_value,
                   "mmd_rejects": test.rejects, "n_samples": len(samples)}
            return RunRecord(u.label, u.alpha, seed, [row], payload=samples)
        return go

    def finish(runs):
        rows = [r for run in runs for r in run.rows]
        summary = []
        if exact is not None:
            for s in cfg.seeds:
                summary.append({"sampler": "rbm_block_gibbs-reference", "seed": s,
                                "tv_to_exact": tv_distance(empirical_distribution(references[s], model.domain),
                                                           exact.probs)})
        return rows, summary, []

    return [task(u, s) for u in units for s in cfg.seeds], finish


def _stochastic(cfg: ExperimentConfig, model, units) -> tuple[list[Task], Callable]:
    base = model.base
    x = base.domain.random_state(np.random.default_rng(cfg.option("state_seed")))
    noises = [float(v) for v in cfg.option("noise_scales")]

    def task(u: RunUnit, seed: int) -> Task:
        def go():
            rows = []
            for k, noise in enumerate(noises):
                rng = run_rng(seed, u.index, k)
                res = stochastic_proposal_bias_probe(NoisyGradientModel(base, noise), x, u.alpha,
                                                     cfg.option("n_draws"), rng)
                for i in range(base.domain.dim):
                    rows.append({"sampler": u.label, "alpha": u.alpha, "noise_scale": noise, "seed": seed,
                                 "coord": i, "distance": float(res.distance[i]),
                                 "sigma_hat": float(res.sigma_hat[i]), "L_hat": res.L_hat,
                                 "bound": float(res.bound[i]), "holds": bool(res.distance[i] <= res.bound[i] + BOUND_ATOL)})
            return RunRecord(u.label, u.alpha, seed, rows)
        return go

    def finish(runs):
        rows = [r for run in runs for r in run.rows]
        summary, plot = [], []
        keys = sorted({(r["alpha"], r["noise_scale"]) for r in rows})
        for a, n in keys:
            sel = [r for r in rows if r["alpha"] == a and r["noise_scale"] == n]
            summary.append({"alpha": a, "noise_scale": n, "max_distance": max(r["distance"] for r in sel),
                            "all_hold": all(r["holds"] for r in sel)})
            plot.append({"x": n, "y": float(np.mean([r["distance"] for r in sel])), "series": f"alpha={a!r}"})
        return rows, summary, plot

    return [task(u, s) for u in units for s in cfg.seeds], finish


def _ablation(cfg: ExperimentConfig, model, units) -> tuple[list[Task], Callable]:
    burn = cfg.effective_burn_in
    starts: dict[int, np.ndarray] = {}
    for seed in cfg.seeds:
        rng = run_rng(seed, _WARMUP_KEY)
        x0 = _initial_state(model, "random", cfg.n_chains, rng)
        if cfg.option("init") == "reference":
            x0 = run_chain(model, RbmBlockGibbs(), x0, cfg.option("warmup_steps"), rng=rng,
                           store_samples=False).final_state
        elif cfg.option("init") == "zeros":
            x0 = np.zeros_like(x0)
        starts[seed] = x0

    def task(u: RunUnit, seed: int) -> Task:
        def go():
            rng = run_rng(seed, u.index)
            tr = run_chain(model, build_sampler(u.spec, u.alpha), starts[seed], cfg.n_steps, burn_in=burn,
                           rng=rng, store_samples=False)
            fs = flip_stats(tr)
            row = {"sampler": u.label, "alpha": u.alpha, "seed": seed,
                   "stepsize_term": u.spec.params.get("stepsize_term", True),
                   "acceptance": fs.acceptance, "mean_changed": fs.mean_changed,
                   "mean_proposed": fs.mean_proposed}
            return RunRecord(u.label, u.alpha, seed, [row])
        return go

    def finish(runs):
        rows = [r for run in runs for r in run.rows]

        def mean_by(sel, key):
            out: dict[tuple, list[float]] = {}
            for r in sel:
                out.setdefault((r["sampler"], r["alpha"]), []).append(r[key])
            return {k: float(np.mean(v)) for k, v in out.items()}

        with_term = [r for r in rows if r["stepsize_term"]]
        without = [r for r in rows if not r["stepsize_term"]]
        summary = []
        if without:
            acc = mean_by(without, "acceptance")
            for (name, a), v in sorted(acc.items()):
                summary.append({"role": "no_stepsize_term", "sampler": name, "alpha": a, "acceptance": v})
        if with_term:
            changed = mean_by(with_term, "mean_changed")
            acc = mean_by(with_term, "acceptance")
            best = max(changed, key=lambda k: (changed[k], -k[1]))
            summary.append({"role": "tuned", "sampler": best[0], "alpha": best[1], "acceptance": acc[best],
                            "mean_changed": changed[best]})
        plot = [{"x": a, "y": v, "series": "acceptance"} for (_, a), v in sorted(mean_by(with_term, "acceptance").items())]
        return rows, summary, plot

    return [task(u, s) for u in units for s in cfg.seeds], finish


EXPERIMENTS = {
    "Theorem1Sweep": _theorem1,
    "Theorem2Sweep": _theorem2,
    "IsingSample": _ising,
    "PreconditionerDemo": _preconditioner,
    "RbmSample": _rbm,
    "StochasticProbe": _stochastic,
    "StepsizeAblation": _ablation,
}

DESCRIPTIONS = {
    "Theorem1Sweep": "exact DULA bias vs stepsize on a log-quadratic model, with the analytic bound",
    "Theorem2Sweep": "exact DULA bias vs distance-from-log-quadratic on the perturbed 1-d model",
    "IsingSample": "acceptance, flips, mean RMSE and energy ESS of samplers on a lattice Ising model",
    "PreconditionerDemo": "log RMSE of preconditioned vs standard DLP on a badly scaled quadratic",
    "RbmSample": "TV to the exact distribution and MMD against block-Gibbs samples on an RBM",
    "StochasticProbe": "stochastic-gradient proposal bias against its analytic bound",
    "StepsizeAblation": "DMALA acceptance with and without the stepsize term on an RBM",
}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_rows(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])


def _guarded(task: Task, label: str) -> RunRecord:
    t0 = time.perf_counter()
    try:
        rec = task()
    except Exception as exc:  # a failed run must not take the others down
        log.error("run %s failed: %s", label, exc)
        rec = RunRecord(label, None, None, status="failed",
                        error="".join(traceback.format_exception_only(type(exc), exc)).strip())
    rec.wall_time = time.perf_counter() - t0
    return rec


def run_experiment(cfg: ExperimentConfig, threads: int = 1, write: bool = True,
                   base_dir: Path | None = None) -> ExperimentResult:
    """Run every (sampler, alpha, seed) task of ``cfg`` and write the result files.

    Tasks run on ``threads`` worker threads; each owns its random stream, so
    the results do not depend on scheduling.  A task that raises is recorded
    as failed in the manifest and the remaining tasks still complete.
    """
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    model = build_model(cfg.model, base_dir)
    units = expand_runs(cfg)
    tasks, finish = EXPERIMENTS[cfg.experiment](cfg, model, units)
    labels = [f"task{k}" for k in range(len(tasks))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(_guarded, tasks, labels))
        # ThreadPoolExecutor.map preserves submission order
    else:
        runs = [_guarded(t, lab) for t, lab in zip(tasks, labels)]
    ok = [r for r in runs if r.status == "ok"]
    metrics, summary, plot = finish(ok)

    manifest = {
        "experiment": cfg.experiment,
        "name": cfg.name,
        "config_hash": cfg.semantic_hash(),
        "library_version": __version__,
        "started_utc": started.isoformat(timespec="seconds"),
        "total_wall_time": time.perf_counter() - t0,
        "threads": threads,
        "runs": [{"sampler": r.label, "alpha": r.alpha, "seed": r.seed, "status": r.status,
                  "error": r.error, "wall_time": r.wall_time, **r.timing} for r in runs],
        "outputs": [],
    }
    out = None
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(cfg.canonical_text())
        for name, rows in (("metrics.csv", metrics), ("summary.csv", summary), ("plot_data.csv", plot)):
            if rows:
                write_rows(out / name, rows)
                manifest["outputs"].append(name)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n")
    return ExperimentResult(cfg, runs, metrics, summary, plot, manifest, out)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def oracle_dump(model: EnergyModel, out_dir: Path, sampler: Sampler | None = None, cap: int = 2**12) -> list[Path]:
    """Write the exact target (and, given a sampler, its kernel and stationary law) as CSV."""
    from .exact_oracle import write_distribution_csv, write_kernel_csv

    out_dir.mkdir(parents=True, exist_ok=True)
    dist = exact_target(model, cap)
    extra = {}
    written = []
    if sampler is not None:
        kernel = exact_kernel(model, sampler, cap)
        extra["stationary"] = stationary_distribution(kernel)
        write_kernel_csv(kernel, out_dir / "kernel.csv")
        written.append(out_dir / "kernel.csv")
    write_distribution_csv(dist, out_dir / "distribution.csv", extra)
    written.insert(0, out_dir / "distribution.csv")
    return written


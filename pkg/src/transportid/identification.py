"""End-to-end equation identification.

One experiment is: simulate a scenario, sample measurements (optionally
noisy, then smoothed), build derivative points, split in time, and run a
multi-restart ensemble in which each restart assimilates the embedded
parameters from a random prior draw and refits the term coefficients.
Restarts with anomalously large prediction error are screened out, terms
with negligible or unphysical coefficients are pruned, and the whole
ensemble is rerun with the reduced library until the term set is stable.
The final round's aggregate is the learned equation.

The two sorption candidates are never regressed jointly.  Both multiply
the time derivative, so together with their free parameters they can
combine into a nearly constant weight on the regression target and soak
up measurement noise; the parameter estimates then run into the prior
bounds and the coefficient split between the two terms is arbitrary.
Selection therefore compares nested candidate models, each containing
at most one sorption term, by ensemble-mean prediction error, and the
winner's sorption term still has to justify itself against magnitude
and sign guards:

* a relative-magnitude threshold on the ensemble-mean normalized
  coefficient of each term;
* a sign check for the sorption term: its coefficient carries a
  negative retardation prefactor, so a positive ensemble-mean value
  marks the term as spurious regardless of magnitude.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .assimilation import AssimilationConfig, AssimilationTrace, run_assimilation
from .errors import TransportIdError, ValidationError
from .library import LibrarySpec
from .params import ModelParams, ParamBounds
from .preprocess import (DataSplit, NoiseSpec, SmoothingConfig, add_noise,
                         compute_derivatives, smooth_field, split_train_test)
from .regression import FitResult, PredictionErrorEvaluator
from .scenarios import get_scenario
from .transport import ScenarioConfig, sample_measurements, simulate

__all__ = [
    "IdentifyConfig",
    "PreparedData",
    "RunResult",
    "EnsembleSummary",
    "ModelCandidate",
    "IdentificationRound",
    "IdentificationReport",
    "prepare_dataset",
    "sample_prior",
    "run_single",
    "run_ensemble",
    "screen_by_prediction_error",
    "prune_terms",
    "aggregate_summary",
    "identify",
    "learned_equation",
]


@dataclass(frozen=True)
class IdentifyConfig:
    """Experiment-level settings shared by every restart."""

    n_restarts: int = 20
    master_seed: int = 0
    split_ratio: float = 0.6
    screen_factor: float = 1.5
    prune_threshold: float = 0.05
    max_rounds: int = 4
    jobs: int = 1
    bounds: ParamBounds = field(default_factory=ParamBounds.default)
    assimilation: AssimilationConfig = field(default_factory=AssimilationConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)

    def __post_init__(self) -> None:
        if self.n_restarts < 1:
            raise ValidationError("need at least one restart")
        if not (0.0 < self.split_ratio < 1.0):
            raise ValidationError("split_ratio must be in (0, 1)")
        if self.screen_factor < 1.0:
            raise ValidationError("screen_factor below 1 screens the median run")
        if not (0.0 < self.prune_threshold < 1.0):
            raise ValidationError("prune_threshold must be in (0, 1)")
        if self.max_rounds < 1 or self.jobs < 1:
            raise ValidationError("max_rounds and jobs must be positive")


@dataclass
class PreparedData:
    """Derivative points ready for regression, plus provenance."""

    scenario_name: str
    config: ScenarioConfig
    split: DataSplit
    noise: NoiseSpec | None
    smoothing_passes: int
    n_points: int


@dataclass
class RunResult:
    run_id: int
    seed: int
    m0: ModelParams
    trace: AssimilationTrace
    fit: FitResult
    library_name: str


@dataclass
class FailedRun:
    run_id: int
    error: str


@dataclass
class EnsembleSummary:
    """Aggregate statistics over the retained restarts of one round."""

    library_name: str
    term_ids: tuple
    n_runs: int
    retained_run_ids: tuple
    screened_run_ids: tuple
    failed_run_ids: tuple
    alpha_norm_mean: np.ndarray
    alpha_norm_std: np.ndarray
    alpha_abs_norm_mean: np.ndarray
    alpha_phys_mean: np.ndarray
    alpha_phys_std: np.ndarray
    param_names: tuple
    param_mean: np.ndarray
    param_std: np.ndarray
    eps_values: np.ndarray

    def term_stat(self, term_id: str, which: str = "alpha_phys_mean") -> float:
        arr = getattr(self, which)
        for j, tid in enumerate(self.term_ids):
            if tid == term_id:
                return float(arr[j])
        raise ValidationError(f"term {term_id!r} not in summary")


@dataclass
class ModelCandidate:
    """One nested model compared during selection."""

    name: str
    library: LibrarySpec
    summary: EnsembleSummary
    results: list

    @property
    def mean_eps(self) -> float:
        return float(self.summary.eps_values.mean())


@dataclass
class IdentificationRound:
    library: LibrarySpec
    summary: EnsembleSummary
    selected_term_ids: tuple
    results: list


@dataclass
class IdentificationReport:
    scenario_name: str
    library_name: str
    noise: NoiseSpec | None
    candidates: list
    winner_name: str
    rounds: list
    stable: bool

    def candidate(self, name: str) -> ModelCandidate:
        for cand in self.candidates:
            if cand.name == name:
                return cand
        raise ValidationError(f"no candidate model named {name!r}")

    @property
    def selection_summary(self) -> EnsembleSummary:
        """Aggregate of the winning candidate before pruning."""
        return self.candidate(self.winner_name).summary

    @property
    def final_summary(self) -> EnsembleSummary:
        return self.rounds[-1].summary

    @property
    def selected_term_ids(self) -> tuple:
        return self.rounds[-1].selected_term_ids

    @property
    def final_results(self) -> list:
        return self.rounds[-1].results

    @property
    def equation(self) -> str:
        return learned_equation(self.final_summary)


def prepare_dataset(config: ScenarioConfig, scenario_name: str = "custom",
                    noise: NoiseSpec | None = None,
                    smoothing: SmoothingConfig | None = None,
                    split_ratio: float = 0.6) -> PreparedData:
    """Simulate, sample, optionally perturb and smooth, differentiate, split.

    Clean data skip smoothing entirely and are floored at sampling time.
    Noisy data are sampled without the floor so every series can support
    the smoothing windows; the clean sampled field serves as the
    fluctuation reference, and the floor is enforced on the smoothed
    output before derivatives are taken.
    """
    sim = simulate(config)
    passes = 0
    if noise is None or noise.delta == 0.0:
        meas = sample_measurements(sim, config)
    else:
        full = sample_measurements(sim, replace(config, conc_floor=0.0))
        noisy = add_noise(full, noise)
        smoothing = smoothing or SmoothingConfig()
        meas, passes = smooth_field(noisy, smoothing,
                                    conc_floor=config.conc_floor,
                                    reference=full, return_passes=True)
    deriv = compute_derivatives(meas)
    split = split_train_test(deriv, split_ratio)
    return PreparedData(scenario_name=scenario_name, config=config,
                        split=split, noise=noise, smoothing_passes=passes,
                        n_points=deriv.n_points)


def sample_prior(n: int, bounds: ParamBounds, seed: int) -> list:
    """Independent uniform draws of the embedded parameters."""
    if n < 1:
        raise ValidationError("need n >= 1 prior draws")
    rng = np.random.default_rng(seed)
    lower = bounds.lower_array()
    upper = bounds.upper_array()
    draws = rng.uniform(lower, upper, size=(n, lower.size))
    return [ModelParams(names=bounds.names, values=tuple(map(float, row)))
            for row in draws]


def run_single(split: DataSplit, library: LibrarySpec, m0: ModelParams,
               bounds: ParamBounds, assim_cfg: AssimilationConfig,
               run_id: int = 0, seed: int = 0) -> RunResult:
    """One restart: assimilate m from m0, then refit alpha at the result."""
    evaluator = PredictionErrorEvaluator(split, library)
    trace = run_assimilation(evaluator, m0, bounds, assim_cfg)
    fit = evaluator.evaluate(trace.m_final)
    return RunResult(run_id=run_id, seed=seed, m0=m0, trace=trace, fit=fit,
                     library_name=library.name)


def _run_single_args(args) -> RunResult:
    return run_single(*args)


def run_ensemble(split: DataSplit, library: LibrarySpec, cfg: IdentifyConfig):
    """All restarts for one library; failures are recorded, not fatal."""
    m0s = sample_prior(cfg.n_restarts, cfg.bounds, cfg.master_seed)
    tasks = [(split, library, m0, cfg.bounds, cfg.assimilation, i,
              cfg.master_seed) for i, m0 in enumerate(m0s)]
    results: list = []
    failures: list = []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            for i, outcome in enumerate(pool.map(_run_single_args, tasks)):
                results.append(outcome)
    else:
        for i, task in enumerate(tasks):
            try:
                results.append(_run_single_args(task))
            except TransportIdError as exc:
                failures.append(FailedRun(run_id=i, error=str(exc)))
    results.sort(key=lambda r: r.run_id)
    return results, failures


def screen_by_prediction_error(results: list, factor: float = 1.5):
    """Split runs into (retained, screened) by final prediction error.

    Runs above ``factor`` times the median error are set aside; with
    fewer than three runs everything is retained.
    """
    if len(results) < 3:
        return list(results), []
    eps = np.array([r.fit.eps for r in results])
    cutoff = factor * float(np.median(eps))
    retained = [r for r, e in zip(results, eps) if e <= cutoff]
    screened = [r for r, e in zip(results, eps) if e > cutoff]
    return retained, screened


def aggregate_summary(library: LibrarySpec, retained: list, screened: list,
                      failures: list) -> EnsembleSummary:
    if not retained:
        raise ValidationError("no retained runs to aggregate")
    a_norm = np.array([r.fit.alpha_norm.values for r in retained])
    a_phys = np.array([r.fit.alpha_phys.values for r in retained])
    m_mat = np.array([r.trace.m_final.as_array() for r in retained])
    names = retained[0].trace.m_final.names
    return EnsembleSummary(
        library_name=library.name,
        term_ids=library.term_ids,
        n_runs=len(retained) + len(screened) + len(failures),
        retained_run_ids=tuple(r.run_id for r in retained),
        screened_run_ids=tuple(r.run_id for r in screened),
        failed_run_ids=tuple(f.run_id for f in failures),
        alpha_norm_mean=a_norm.mean(axis=0),
        alpha_norm_std=a_norm.std(axis=0),
        alpha_abs_norm_mean=np.abs(a_norm).mean(axis=0),
        alpha_phys_mean=a_phys.mean(axis=0),
        alpha_phys_std=a_phys.std(axis=0),
        param_names=names,
        param_mean=m_mat.mean(axis=0),
        param_std=m_mat.std(axis=0),
        eps_values=np.array([r.fit.eps for r in retained]),
    )


def prune_terms(library: LibrarySpec, summary: EnsembleSummary,
                threshold: float = 0.05) -> tuple:
    """Select the terms worth keeping, in library order.

    Sorption terms with a positive ensemble-mean coefficient are dropped
    first (wrong retardation sign); the relative threshold is then taken
    against the largest surviving mean magnitude, so a spurious dominant
    term cannot define the scale; at most one sorption model survives.
    """
    ids = list(library.term_ids)
    signed = {tid: float(summary.alpha_norm_mean[j])
              for j, tid in enumerate(ids)}
    magnitude = {tid: float(summary.alpha_abs_norm_mean[j])
                 for j, tid in enumerate(ids)}
    sorption = {t.id for t in library.terms if t.is_sorption}

    survivors = [tid for tid in ids
                 if not (tid in sorption and signed[tid] > 0.0)]
    if survivors:
        scale = max(magnitude[tid] for tid in survivors)
        survivors = [tid for tid in survivors
                     if magnitude[tid] >= threshold * scale]
    kept_sorption = [tid for tid in survivors if tid in sorption]
    if len(kept_sorption) > 1:
        best = max(kept_sorption, key=lambda tid: magnitude[tid])
        survivors = [tid for tid in survivors
                     if tid not in sorption or tid == best]
    if not survivors:
        raise ValidationError("pruning removed every candidate term")
    return tuple(survivors)


def _candidate_splits(library: LibrarySpec) -> list:
    """Nested models: the sorption-free core plus one per sorption term."""
    base_ids = tuple(t.id for t in library.terms if not t.is_sorption)
    out = []
    if base_ids:
        out.append(("none", base_ids))
    for term in library.terms:
        if term.is_sorption:
            ids = tuple(t.id for t in library.terms
                        if not t.is_sorption or t.id == term.id)
            out.append((term.id, ids))
    if not out:
        raise ValidationError("library has no usable terms")
    return out


def _ensemble_round(split: DataSplit, lib: LibrarySpec, cfg: IdentifyConfig):
    results, failures = run_ensemble(split, lib, cfg)
    if not results:
        raise ValidationError("every restart failed; nothing to aggregate")
    retained, screened = screen_by_prediction_error(results, cfg.screen_factor)
    return aggregate_summary(lib, retained, screened, failures), results


def identify(scenario, library="basic", noise: NoiseSpec | None = None,
             cfg: IdentifyConfig | None = None,
             data: PreparedData | None = None) -> IdentificationReport:
    """Full pipeline: prepare data, compare candidate models, prune, refit.

    ``scenario`` is a preset name or a ScenarioConfig; ``data`` can carry
    a previously prepared dataset to share across experiments.  Every
    ensemble reuses the same master seed, so rerunning with an unchanged
    term set reproduces identical coefficients.
    """
    cfg = cfg or IdentifyConfig()
    if isinstance(library, str):
        library = LibrarySpec.from_name(library)
    if isinstance(scenario, ScenarioConfig):
        scen_cfg, scen_name = scenario, "custom"
    else:
        scen_name = scenario
        scen_cfg = get_scenario(scen_name)
    if data is None:
        data = prepare_dataset(scen_cfg, scen_name, noise=noise,
                               smoothing=cfg.smoothing,
                               split_ratio=cfg.split_ratio)

    candidates: list = []
    for name, ids in _candidate_splits(library):
        lib_c = (library if ids == library.term_ids
                 else library.subset(ids, name=f"{library.name}-{name}"))
        summary, results = _ensemble_round(data.split, lib_c, cfg)
        candidates.append(ModelCandidate(name=name, library=lib_c,
                                         summary=summary, results=results))
    winner = min(candidates, key=lambda c: c.mean_eps)

    rounds: list = []
    current = winner.library
    summary = winner.summary
    results = winner.results
    stable = False
    for _ in range(cfg.max_rounds):
        selected = prune_terms(current, summary, cfg.prune_threshold)
        rounds.append(IdentificationRound(library=current, summary=summary,
                                          selected_term_ids=selected,
                                          results=results))
        if selected == current.term_ids:
            stable = True
            break
        current = current.subset(selected)
        summary, results = _ensemble_round(data.split, current, cfg)
    return IdentificationReport(scenario_name=data.scenario_name,
                                library_name=library.name, noise=noise,
                                candidates=candidates,
                                winner_name=winner.name,
                                rounds=rounds, stable=stable)


def _format_coef(value: float) -> str:
    return f"{value:+.5g}"


def learned_equation(summary: EnsembleSummary) -> str:
    """Render the aggregate as a readable transport equation."""
    params = dict(zip(summary.param_names, summary.param_mean))
    pieces = []
    for j, tid in enumerate(summary.term_ids):
        coef = float(summary.alpha_phys_mean[j])
        if tid == "adv":
            body = "dC/dx"
        elif tid == "dis":
            body = "d2C/dx2"
        elif tid == "fsorp":
            body = f"C^({params.get('a', math.nan):.3f}-1) dC/dt"
        elif tid == "lsorp":
            body = f"(1+{params.get('K_l', math.nan):.3f} C)^-2 dC/dt"
        elif tid == "conc":
            body = "C"
        elif tid == "conc_sq":
            body = "C^2"
        elif tid == "d3":
            body = "d3C/dx3"
        elif tid == "sq_dx":
            body = "dC^2/dx"
        elif tid == "sq_dxx":
            body = "d2C^2/dx2"
        elif tid == "sq_dxxx":
            body = "d3C^2/dx3"
        else:
            body = tid
        pieces.append(f"{_format_coef(coef)} {body}")
    return "dC/dt = " + " ".join(pieces)

"""End-to-end Monte Carlo experiment runner.

One realization draws a topology, a channel, training-phase traffic, and an
evaluation decode table, then computes six assignment strategies and scores
every one of them on that same decode table.  All randomness derives from a
single realization seed through fixed substream positions, so strategy
comparisons are paired and a rerun with the same seed is bit-identical.

Substream layout per realization seed: topology, channel, training traffic,
evaluation traffic, decode-stage noise/fading, solver randomness.  Adding a
station or sweeping an evaluation-only parameter never shifts the other
substreams.
"""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from unbsim.channel import ChannelRealization, build_channel_realization
from unbsim.core import Assignment, SimConfig, Topology
from unbsim.sinr import DecodeTable, SinrTable, compute_sinr_table, metrics
from unbsim.solvers import (
    ENUMERATION_CAP,
    build_p3_objective,
    build_p4_objective,
    oracle_best_assignment,
    random_assignment,
    solve_enumeration,
    solve_local_search,
)
from unbsim.traffic import (
    generate_interferer_traffic,
    generate_topology,
    generate_unb_traffic,
    merge_traces,
)
from unbsim.training import (
    TrainingSlot,
    replicate_across_bands,
    simulate_training_slots,
    slot_records,
    stats_from_records,
)

__all__ = [
    "STRATEGIES",
    "SWEEP_PARAMS",
    "CSV_HEADER",
    "ExperimentResult",
    "RealizationDraw",
    "StrategySummary",
    "MonteCarloRun",
    "draw_topology",
    "simulate_draw",
    "evaluate_draw",
    "run_realization",
    "run_monte_carlo",
    "derive_seeds",
    "sweep",
    "summarize",
    "paired_error_gap",
    "format_result_row",
    "threshold_at_error_level",
    "write_results_csv",
    "load_config",
    "parse_config_text",
]

STRATEGIES = (
    "heuristic",
    "oracle_packet",
    "oracle_trans",
    "proposed",
    "proposed_low_overhead",
    "random",
)

# sweepable parameter name -> SimConfig field it overrides
SWEEP_PARAMS = {
    "num_bs": "num_bs",
    "sinr_threshold": "sinr_threshold",
    "eta": "heuristic_eta",
    "training_duration": "training_duration",
}

CSV_HEADER = "param_value,realization,strategy,pdp,transmission_rate,error_rate,assignment,wall_time_s"


@dataclass(frozen=True)
class ExperimentResult:
    """One (realization, strategy) outcome row."""

    realization_id: int
    strategy: str
    pdp: float
    transmission_rate: float
    error_rate: float
    assignment: Assignment
    wall_time_s: float
    param_value: float | int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if abs(self.error_rate - (1.0 - self.pdp)) > 0.0:
            raise ValueError("error_rate must equal 1 - pdp exactly")


@dataclass(frozen=True)
class RealizationDraw:
    """Everything sampled for one realization, before thresholding.

    The SINR tables are kept raw so a threshold sweep can re-score the same
    draws without re-simulating.  Solver entropy is stored as seed sequences
    rather than live generators so repeated evaluations of the same draw are
    identical.
    """

    config: SimConfig
    realization_seed: int
    topology: Topology
    channel: ChannelRealization
    training_slots: list[TrainingSlot]
    eval_sinr: SinrTable
    random_ss: np.random.SeedSequence
    search_full_ss: np.random.SeedSequence
    search_low_ss: np.random.SeedSequence
    search_heur_ss: np.random.SeedSequence


def _substreams(realization_seed: int, topology_salt: int | None = None):
    ss = np.random.SeedSequence(int(realization_seed))
    children = ss.spawn(6)
    if topology_salt is not None:
        children[0] = np.random.SeedSequence([int(realization_seed), int(topology_salt)])
    return children


def draw_topology(config: SimConfig, realization_seed: int) -> Topology:
    """The deployment a realization seed produces, without the rest of the draw."""
    return generate_topology(config, np.random.default_rng(_substreams(realization_seed)[0]))


def simulate_draw(config: SimConfig, realization_seed: int, topology_salt: int | None = None) -> RealizationDraw:
    """Sample one realization's topology, channel, training, and evaluation traffic.

    topology_salt, when given, reseeds only the topology substream; the sweep
    runner uses it to redraw deployments across sweep values while every other
    substream stays paired.
    """
    topo_ss, chan_ss, train_ss, traffic_ss, decode_ss, solver_ss = _substreams(
        realization_seed, topology_salt
    )
    topology = generate_topology(config, np.random.default_rng(topo_ss))
    channel = build_channel_realization(topology, config, np.random.default_rng(chan_ss))
    slots = simulate_training_slots(
        topology,
        channel,
        config,
        np.random.default_rng(train_ss),
        bands=range(1, config.num_bands + 1),
    )
    unb_rng, intf_rng = np.random.default_rng(traffic_ss).spawn(2)
    trace = merge_traces(
        generate_unb_traffic(topology, config, unb_rng),
        generate_interferer_traffic(topology, config, intf_rng),
    )
    eval_sinr = compute_sinr_table(trace, channel, config, np.random.default_rng(decode_ss))
    random_ss, search_full_ss, search_low_ss, search_heur_ss = solver_ss.spawn(4)
    return RealizationDraw(
        config=config,
        realization_seed=int(realization_seed),
        topology=topology,
        channel=channel,
        training_slots=slots,
        eval_sinr=eval_sinr,
        random_ss=random_ss,
        search_full_ss=search_full_ss,
        search_low_ss=search_low_ss,
        search_heur_ss=search_heur_ss,
    )


def _solve_assignment(obj, search_ss) -> Assignment:
    if obj.num_bands ** obj.num_bs <= ENUMERATION_CAP:
        return solve_enumeration(obj).assignment
    return solve_local_search(obj, rng=np.random.default_rng(search_ss)).assignment


def evaluate_draw(
    draw: RealizationDraw,
    tau_db: float | None = None,
    heuristic_eta: float | None = None,
    strategies: tuple[str, ...] | None = None,
) -> list[ExperimentResult]:
    """Score strategies on one draw, optionally overriding the decode
    threshold or the heuristic's distance exponent.

    Both overrides are evaluation-only: they change nothing about the sampled
    draw, which is what makes sweeping them cheap.  A strategies subset skips
    the others' solver work; each strategy's own result is identical either
    way because no randomness is shared between them.
    """
    config = draw.config
    tau = config.sinr_threshold if tau_db is None else float(tau_db)
    eta = config.heuristic_eta if heuristic_eta is None else float(heuristic_eta)
    if strategies is None:
        strategies = STRATEGIES
    else:
        unknown = set(strategies) - set(STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies: {sorted(unknown)}")
        strategies = tuple(s for s in STRATEGIES if s in strategies)
    table = draw.eval_sinr.threshold(tau)
    M = config.num_bands

    def full_stats():
        return stats_from_records(slot_records(draw.training_slots, tau, M))

    def low_stats():
        probe = config.probe_band
        records = slot_records([draw.training_slots[probe - 1]], tau, M)
        return replicate_across_bands(stats_from_records(records), probe)

    builders = {
        "heuristic": lambda: _solve_assignment(
            build_p4_objective(draw.topology.bs_locations, eta=eta, num_bands=M),
            draw.search_heur_ss,
        ),
        "oracle_packet": lambda: oracle_best_assignment(table, "packet").assignment,
        "oracle_trans": lambda: oracle_best_assignment(table, "transmission").assignment,
        "proposed": lambda: _solve_assignment(build_p3_objective(full_stats()), draw.search_full_ss),
        "proposed_low_overhead": lambda: _solve_assignment(
            build_p3_objective(low_stats()), draw.search_low_ss
        ),
        "random": lambda: random_assignment(config.num_bs, M, np.random.default_rng(draw.random_ss)),
    }

    results = []
    for name in strategies:
        if config.record_timing:
            t0 = time.perf_counter()
            x = builders[name]()
            elapsed = time.perf_counter() - t0
        else:
            x = builders[name]()
            elapsed = 0.0
        pdp, rate = metrics(table, x)
        results.append(
            ExperimentResult(
                realization_id=0,
                strategy=name,
                pdp=pdp,
                transmission_rate=rate,
                error_rate=1.0 - pdp,
                assignment=x,
                wall_time_s=elapsed,
            )
        )
    return results


def run_realization(config: SimConfig, realization_seed: int, realization_id: int = 0) -> list[ExperimentResult]:
    """Simulate and score one realization; deterministic given the seed."""
    try:
        draw = simulate_draw(config, realization_seed)
        results = evaluate_draw(draw)
    except Exception as exc:
        raise RuntimeError(f"realization {realization_id} (seed {realization_seed}) failed: {exc}") from exc
    return [dataclasses.replace(r, realization_id=realization_id) for r in results]


@dataclass(frozen=True)
class StrategySummary:
    strategy: str
    mean_pdp: float
    mean_rate: float
    mean_error: float
    se_error: float
    var_error: float
    n: int


@dataclass(frozen=True)
class MonteCarloRun:
    results: list[ExperimentResult]
    summary: dict[str, StrategySummary]
    seeds: list[int] = field(default_factory=list)


def derive_seeds(master_seed: int, n: int) -> list[int]:
    """Independent per-realization seeds; stable under master seed and count."""
    state = np.random.SeedSequence(int(master_seed)).generate_state(n, dtype=np.uint64)
    return [int(v) for v in state]


def summarize(results: list[ExperimentResult]) -> dict[str, StrategySummary]:
    """Per-strategy mean/SE of the error rate (single-realization SE is 0)."""
    out = {}
    for name in STRATEGIES:
        rows = [r for r in results if r.strategy == name]
        if not rows:
            continue
        err = np.array([r.error_rate for r in rows])
        n = len(err)
        out[name] = StrategySummary(
            strategy=name,
            mean_pdp=float(np.mean([r.pdp for r in rows])),
            mean_rate=float(np.mean([r.transmission_rate for r in rows])),
            mean_error=float(err.mean()),
            se_error=float(err.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
            var_error=float(err.var(ddof=1)) if n > 1 else 0.0,
            n=n,
        )
    return out


def paired_error_gap(
    results: list[ExperimentResult], strategy_a: str, strategy_b: str
) -> tuple[float, float]:
    """(mean, standard error) of error_rate(a) - error_rate(b), paired per
    (param value, realization)."""
    keyed: dict[tuple, dict[str, float]] = {}
    for r in results:
        keyed.setdefault((r.param_value, r.realization_id), {})[r.strategy] = r.error_rate
    diffs = [
        v[strategy_a] - v[strategy_b]
        for v in keyed.values()
        if strategy_a in v and strategy_b in v
    ]
    if not diffs:
        raise ValueError(f"no paired rows for {strategy_a!r} vs {strategy_b!r}")
    d = np.array(diffs)
    se = float(d.std(ddof=1) / np.sqrt(len(d))) if len(d) > 1 else 0.0
    return float(d.mean()), se


def run_monte_carlo(
    config: SimConfig,
    n_realizations: int,
    master_seed: int | None = None,
) -> MonteCarloRun:
    """Run independent realizations and aggregate per-strategy statistics.

    Realization seeds derive from the master seed alone, so the batch can be
    split across workers without changing any outcome; rows come out sorted by
    (realization, strategy) either way.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be at least 1")
    if master_seed is None:
        master_seed = config.master_seed
    seeds = derive_seeds(master_seed, n_realizations)
    results: list[ExperimentResult] = []
    for i, seed in enumerate(seeds):
        results.extend(run_realization(config, seed, realization_id=i))
    return MonteCarloRun(results=results, summary=summarize(results), seeds=seeds)


def sweep(
    config: SimConfig,
    param: str,
    values,
    n_realizations: int,
    master_seed: int | None = None,
    nested_topologies: bool = False,
    out_path: str | None = None,
) -> list[ExperimentResult]:
    """Long-format results over a parameter sweep with paired seeds.

    The same realization seeds are reused for every value, pairing the sweep
    points.  Threshold and eta sweeps re-score the realizations without
    re-simulating them.  A station-count sweep redraws the deployment at each
    value by default; with nested_topologies the deployments share their
    substream, so each value's station set is a prefix of the next and the
    hindsight-oracle decode probability is monotone realization by
    realization.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"param must be one of {sorted(SWEEP_PARAMS)}, got {param!r}")
    values = list(values)
    if not values:
        raise ValueError("values must be nonempty")
    if param == "num_bs":
        cast = []
        for v in values:
            if int(v) != float(v):
                raise ValueError(f"num_bs sweep values must be integers, got {v!r}")
            cast.append(int(v))
        values = cast
    else:
        values = [float(v) for v in values]
    if master_seed is None:
        master_seed = config.master_seed
    seeds = derive_seeds(master_seed, n_realizations)

    buckets: list[list[ExperimentResult]] = [[] for _ in values]
    if param in ("sinr_threshold", "eta"):
        override = {"tau_db": None, "heuristic_eta": None}
        key = "tau_db" if param == "sinr_threshold" else "heuristic_eta"
        for i, seed in enumerate(seeds):
            draw = simulate_draw(config, seed)
            for j, v in enumerate(values):
                override[key] = v
                for r in evaluate_draw(draw, **override):
                    buckets[j].append(
                        dataclasses.replace(r, realization_id=i, param_value=v)
                    )
    else:
        fld = SWEEP_PARAMS[param]
        for j, v in enumerate(values):
            cfg = dataclasses.replace(config, **{fld: v})
            salt = None
            if param == "num_bs" and not nested_topologies:
                salt = j
            for i, seed in enumerate(seeds):
                draw = simulate_draw(cfg, seed, topology_salt=salt)
                for r in evaluate_draw(draw):
                    buckets[j].append(
                        dataclasses.replace(r, realization_id=i, param_value=v)
                    )

    rows: list[ExperimentResult] = []
    for bucket in buckets:
        bucket.sort(key=lambda r: (r.realization_id, r.strategy))
        rows.extend(bucket)
    if out_path is not None:
        write_results_csv(rows, out_path)
    return rows


def threshold_at_error_level(thresholds, errors, level: float) -> float:
    """First threshold at which a nondecreasing error curve reaches the level,
    linearly interpolated between grid points and clamped to the grid ends."""
    thresholds = np.asarray(thresholds, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(thresholds) != len(errors) or len(thresholds) < 2:
        raise ValueError("need matching threshold and error arrays of length >= 2")
    if level <= errors[0]:
        return float(thresholds[0])
    for i in range(1, len(errors)):
        if errors[i] >= level:
            e0, e1 = errors[i - 1], errors[i]
            if e1 == e0:
                return float(thresholds[i])
            frac = (level - e0) / (e1 - e0)
            return float(thresholds[i - 1] + frac * (thresholds[i] - thresholds[i - 1]))
    return float(thresholds[-1])


def _format_param(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return repr(int(value))
    return repr(float(value))


def format_result_row(r: ExperimentResult) -> str:
    """One CSV row; floats use repr so equal runs are byte-identical."""
    return ",".join(
        (
            _format_param(r.param_value),
            str(r.realization_id),
            r.strategy,
            repr(float(r.pdp)),
            repr(float(r.transmission_rate)),
            repr(float(r.error_rate)),
            r.assignment.compact(),
            repr(float(r.wall_time_s)),
        )
    )


def write_results_csv(results: list[ExperimentResult], path) -> None:
    """Write result rows in the stable comma-separated layout."""
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in results:
            fh.write(format_result_row(r) + "\n")


_INT_FIELDS = {"num_bs", "num_bands", "repetitions", "probe_band", "master_seed"}
_BOOL_FIELDS = {"fading_enabled", "cross_bs_shadowing_correlated", "record_timing"}
_OPTIONAL_FIELDS = {"tx_duration", "interferer_duration"}


def parse_config_text(text: str) -> SimConfig:
    """Parse the flat key = value config form; unknown keys are rejected."""
    known = {f.name for f in dataclasses.fields(SimConfig)}
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key in overrides:
            raise ValueError(f"line {lineno}: duplicate config key {key!r}")
        if key in _BOOL_FIELDS:
            low = value.lower()
            if low in ("true", "1", "yes"):
                overrides[key] = True
            elif low in ("false", "0", "no"):
                overrides[key] = False
            else:
                raise ValueError(f"line {lineno}: {key} expects true/false, got {value!r}")
        elif key in _INT_FIELDS:
            overrides[key] = int(value)
        elif key in _OPTIONAL_FIELDS and value.lower() == "none":
            overrides[key] = None
        else:
            overrides[key] = float(value)
    return SimConfig(**overrides)


def load_config(path) -> SimConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())

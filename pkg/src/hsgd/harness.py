"""Experiment orchestration: config files, sweeps, reports, verification.

An experiment is one TOML file: an ``[experiment]`` header with explicit
seeds, one shared ``[objective]``/``[oracle]`` pair, an optional ``[comm]``
model, and any number of ``[[run]]`` tables.  Scalar run fields may be swept
by listing values under ``run.sweep``; every run is additionally expanded
over the seed list.  Outputs are one CSV per run instance plus a JSON
summary, and are byte-identical across repeated invocations.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from itertools import product
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import bounds as bounds_mod
from . import comm as comm_mod
from . import divergence as div_mod
from . import engine as engine_mod
from . import objectives as obj_mod
from . import topology as topo_mod
from .errors import ConfigError, HsgdError


# ---------------------------------------------------------------------------
# config loading

_RUN_SCALAR_FIELDS = {
    "gamma",
    "gamma_scale",
    "horizon",
    "w0",
    "participation",
    "eval_stride",
    "global_period",
}


@dataclass(eq=False)
class RunSpec:
    name: str
    table: dict


@dataclass(eq=False)
class ExperimentSpec:
    name: str
    seeds: list[int]
    objective_table: dict
    oracle_table: dict
    comm_table: dict
    runs: list[RunSpec]
    lr_policy: str = "enforce"
    out: str = "results"
    verify: list[str] = field(default_factory=list)

    def objective(self):
        return build_objective(self.objective_table)

    def comm_model(self) -> comm_mod.CommModel:
        return build_comm_model(self.comm_table)


def load_experiment(path: str) -> ExperimentSpec:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_experiment(data, source=path)


def parse_experiment(data: dict, source: str = "<config>") -> ExperimentSpec:
    exp = data.get("experiment")
    if not isinstance(exp, dict):
        raise ConfigError(f"{source}: missing [experiment] section")
    name = exp.get("name")
    if not name:
        raise ConfigError(f"{source}: experiment.name is required")
    seeds = exp.get("seeds")
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) for s in seeds
    ):
        raise ConfigError(f"{source}: experiment.seeds must be a non-empty integer list")
    lr_policy = exp.get("lr_policy", "enforce")
    if lr_policy not in engine_mod.LR_POLICIES:
        raise ConfigError(f"{source}: experiment.lr_policy must be one of "
                          f"{engine_mod.LR_POLICIES}")
    objective_table = data.get("objective")
    if not isinstance(objective_table, dict):
        raise ConfigError(f"{source}: missing [objective] section")
    oracle_table = data.get("oracle", {"noise": "exact"})
    comm_table = data.get("comm", {"model": "unit"})
    # fail fast on unresolvable fixtures or models
    try:
        build_objective(objective_table)
        build_comm_model(comm_table)
    except ConfigError:
        raise
    except HsgdError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    run_tables = data.get("run")
    if not isinstance(run_tables, list) or not run_tables:
        raise ConfigError(f"{source}: at least one [[run]] table is required")
    runs = []
    for i, table in enumerate(run_tables):
        rname = table.get("name")
        if not rname:
            raise ConfigError(f"{source}: run #{i} has no name")
        runs.append(RunSpec(name=rname, table=table))
    if len({r.name for r in runs}) != len(runs):
        raise ConfigError(f"{source}: run names must be unique")
    verify = exp.get("verify", [])
    unknown = [s for s in verify if s not in VERIFY_SUITES]
    if unknown:
        raise ConfigError(f"{source}: unknown verification suites {unknown}")
    return ExperimentSpec(
        name=name,
        seeds=list(seeds),
        objective_table=objective_table,
        oracle_table=oracle_table,
        comm_table=comm_table,
        runs=runs,
        lr_policy=lr_policy,
        out=exp.get("out", "results"),
        verify=list(verify),
    )


def build_objective(table: dict):
    kind = table.get("kind", "quadratic")
    if kind == "fixture" or "fixture" in table:
        return obj_mod.make_quadratic_fixture(table["fixture"])
    if kind == "quadratic":
        if "anchors" not in table:
            raise ConfigError("objective.anchors is required for inline quadratics")
        return obj_mod.QuadraticObjective(
            np.asarray(table["anchors"], dtype=np.float64),
            float(table.get("curvature", 1.0)),
        )
    if kind == "logistic":
        try:
            return obj_mod.make_logistic(
                n_workers=int(table["workers"]),
                dim=int(table["dim"]),
                samples_per_worker=int(table["samples_per_worker"]),
                label_skew=float(table.get("label_skew", 1.0)),
                regularization=float(table.get("regularization", 1e-2)),
                seed=int(table.get("seed", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"objective.{exc.args[0]} is required for logistic") from None
    raise ConfigError(f"unknown objective kind {kind!r}")


def build_comm_model(table: dict) -> comm_mod.CommModel:
    if "model" in table:
        return comm_mod.builtin_model(table["model"])
    try:
        level = table.get("level_latencies")
        return comm_mod.CommModel(
            local_latency=float(table["local_latency"]),
            global_latency=float(table["global_latency"]),
            compute_per_iteration=float(table.get("compute_per_iteration", 0.0)),
            level_latencies=tuple(level) if level else None,
            jitter_std=float(table.get("jitter_std", 0.0)),
            jitter_seed=int(table.get("jitter_seed", 0)),
        )
    except KeyError as exc:
        raise ConfigError(f"comm.{exc.args[0]} is required for inline models") from None


def build_topology(table: dict):
    kind = table.get("topology", "two-level")
    try:
        if kind == "two-level":
            return topo_mod.build_two_level(
                table["group_sizes"], table["local_periods"], table["global_period"]
            )
        if kind == "multi-level":
            return topo_mod.build_multi_level(table["branching"], table["periods"])
    except KeyError as exc:
        raise ConfigError(f"run.{exc.args[0]} is required for {kind}") from None
    raise ConfigError(f"unknown topology kind {kind!r}")


@dataclass(eq=False)
class RunInstance:
    name: str
    seed: int
    config: engine_mod.RunConfig


def _sweep_axes(table: dict) -> list[dict]:
    sweep = table.get("sweep", {})
    if not sweep:
        return [{}]
    for key in sweep:
        if key not in _RUN_SCALAR_FIELDS:
            raise ConfigError(f"cannot sweep field {key!r}")
    keys = sorted(sweep)
    combos = []
    for values in product(*(sweep[k] for k in keys)):
        combos.append(dict(zip(keys, values)))
    return combos


def expand_runs(spec: ExperimentSpec) -> list[RunInstance]:
    """All (run x sweep x seed) instances, in declaration order."""
    objective = spec.objective()
    oracle_table = spec.oracle_table
    instances = []
    for run in spec.runs:
        for combo in _sweep_axes(run.table):
            table = {**run.table, **combo}
            table.pop("sweep", None)
            topology = build_topology(table)
            obj = objective
            if "worker_order" in table:
                obj = objective.permuted(table["worker_order"])
            gamma = table.get("gamma")
            if gamma is None:
                scale = table.get("gamma_scale")
                if scale is None:
                    raise ConfigError(f"run {run.name}: gamma or gamma_scale required")
                period = (
                    topology.global_period
                    if isinstance(topology, topo_mod.TwoLevelTopology)
                    else topology.periods[0]
                )
                gamma = float(scale) * bounds_mod.lr_max(period, obj.lipschitz)
            suffix = "".join(f"__{k}={v}" for k, v in sorted(combo.items()))
            for seed in spec.seeds:
                try:
                    config = engine_mod.RunConfig(
                        topology=topology,
                        objective=obj,
                        gamma=float(gamma),
                        horizon=int(table["horizon"]),
                        seed=seed,
                        w0=table.get("w0", 0.0),
                        noise=oracle_table.get("noise", "exact"),
                        sigma2=float(oracle_table.get("sigma2", 0.0)),
                        batch_size=int(oracle_table.get("batch_size", 1)),
                        participation=float(table.get("participation", 1.0)),
                        lr_policy=spec.lr_policy,
                        eval_stride=int(table.get("eval_stride", 1)),
                    )
                except KeyError as exc:
                    raise ConfigError(f"run {run.name}: {exc.args[0]} is required") from None
                instances.append(
                    RunInstance(name=f"{run.name}{suffix}__seed={seed}", seed=seed,
                                config=config)
                )
    return instances


# ---------------------------------------------------------------------------
# CSV / summary emission

def _fmt(value: float) -> str:
    return repr(float(value))


def trace_to_csv(trace: engine_mod.RunTrace, series: comm_mod.CommSeries) -> str:
    header = ["t", "loss", "grad_norm_sq", "upward_mse", "downward_mse"]
    levels = 0
    if trace.level_upward_mse is not None:
        levels = trace.level_upward_mse.shape[1]
        for k in range(levels):
            header += [f"level{k + 1}_upward_mse", f"level{k + 1}_downward_mse"]
    header += ["event", "cum_comm_ms", "cum_compute_ms"]
    lines = [",".join(header)]
    for t in range(len(trace)):
        row = [
            str(int(trace.t[t])),
            _fmt(trace.loss[t]),
            _fmt(trace.grad_norm_sq[t]),
            _fmt(trace.upward_mse[t]),
            _fmt(trace.downward_mse[t]),
        ]
        for k in range(levels):
            row.append(_fmt(trace.level_upward_mse[t, k]))
            row.append(_fmt(trace.level_downward_mse[t, k]))
        row += [
            trace.events[t],
            _fmt(series.cum_comm_ms[t]),
            _fmt(series.cum_compute_ms[t]),
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _execute_instance(instance: RunInstance, model: comm_mod.CommModel, out_dir: str):
    trace = engine_mod.run(instance.config)
    series = comm_mod.account(trace, model)
    csv_text = trace_to_csv(trace, series)
    fname = instance.name.replace("/", "_") + ".csv"
    path = os.path.join(out_dir, fname)
    with open(path, "w") as fh:
        fh.write(csv_text)
    digest = hashlib.sha256(csv_text.encode()).hexdigest()
    return {
        "name": instance.name,
        "file": fname,
        "seed": instance.seed,
        "gamma": instance.config.gamma,
        "horizon": instance.config.horizon,
        "meta": trace.meta,
        "final_loss": float(trace.loss[~np.isnan(trace.loss)][-1]),
        "mean_grad_norm_sq": trace.mean_grad_norm_sq(),
        "cum_comm_ms": float(series.cum_comm_ms[-1]),
        "cum_compute_ms": float(series.cum_compute_ms[-1]),
        "sha256": digest,
    }


def run_experiment(spec: ExperimentSpec, out_dir: str, threads: int = 1) -> dict:
    """Execute all run instances and write one CSV each plus summary.json."""
    os.makedirs(out_dir, exist_ok=True)
    instances = expand_runs(spec)
    model = spec.comm_model()
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda r: _execute_instance(r, model, out_dir), instances))
    else:
        rows = [_execute_instance(inst, model, out_dir) for inst in instances]
    summary = {"experiment": spec.name, "seeds": spec.seeds, "runs": rows}
    if spec.verify:
        reports = [verify_suite(suite) for suite in spec.verify]
        summary["verification"] = [
            {"suite": r.suite, "passed": r.passed, "entries": [asdict(e) for e in r.entries]}
            for r in reports
        ]
        summary["verification_passed"] = all(r.passed for r in reports)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


# ---------------------------------------------------------------------------
# verification suites

@dataclass
class CheckEntry:
    name: str
    measured: float
    expected: float
    tolerance: float
    passed: bool
    provenance: str


@dataclass
class VerifyReport:
    suite: str
    entries: list[CheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def check(self, name, measured, expected, tolerance, provenance):
        self.entries.append(
            CheckEntry(
                name=name,
                measured=float(measured),
                expected=float(expected),
                tolerance=float(tolerance),
                passed=bool(abs(measured - expected) <= tolerance),
                provenance=provenance,
            )
        )

    def check_leq(self, name, measured, limit, provenance):
        self.entries.append(
            CheckEntry(
                name=name,
                measured=float(measured),
                expected=float(limit),
                tolerance=0.0,
                passed=bool(measured <= limit),
                provenance=provenance,
            )
        )

    def to_json(self) -> str:
        return json.dumps(
            {"suite": self.suite, "passed": self.passed,
             "entries": [asdict(e) for e in self.entries]},
            indent=2,
            sort_keys=True,
        )


VERIFY_SUITES = (
    "lemmas",
    "partition",
    "sandwich",
    "reductions",
    "eigen",
    "bound-domination",
)

# test-only hooks: deliberately corrupt one constant to prove the harness
# reports failures with a nonzero exit code
CORRUPTIONS = ("lemma-closed-form", "bound-constant")


def verify_suite(suite: str, corrupt: Optional[str] = None) -> VerifyReport:
    if corrupt is not None and corrupt not in CORRUPTIONS:
        raise ConfigError(f"unknown corruption hook {corrupt!r}; use {CORRUPTIONS}")
    if suite == "lemmas":
        return _suite_lemmas(corrupt)
    if suite == "partition":
        return _suite_partition()
    if suite == "sandwich":
        return _suite_sandwich()
    if suite == "reductions":
        return _suite_reductions(corrupt)
    if suite == "eigen":
        return _suite_eigen()
    if suite == "bound-domination":
        return _suite_bound_domination(corrupt)
    raise ConfigError(f"unknown verify suite {suite!r}; available: {VERIFY_SUITES}")


def _suite_lemmas(corrupt: Optional[str]) -> VerifyReport:
    report = VerifyReport("lemmas")
    skew = 1.01 if corrupt == "lemma-closed-form" else 1.0
    w = np.array([0.3])
    cases = [("QF1", 2), ("QF2", 2), ("QF2", 3)]
    for fixture, groups in cases:
        obj = obj_mod.make_quadratic_fixture(fixture)
        up = div_mod.check_expected_upward(obj, groups, w)
        down = div_mod.check_expected_downward(obj, groups, w)
        report.check(
            f"grouping-mean upward {fixture} N={groups}",
            up.empirical_mean, up.closed_form * skew, 1e-12, "derived",
        )
        report.check(
            f"grouping-mean downward {fixture} N={groups}",
            down.empirical_mean, down.closed_form * skew, 1e-12, "derived",
        )
    tree = topo_mod.build_multi_level([2, 2, 2], [4, 2, 1])
    obj = obj_mod.make_quadratic_fixture("QF3")
    for level in (1, 2):
        up, down = div_mod.check_expected_level_divergences(obj, tree, level, w)
        report.check(
            f"level-mean upward QF3 level={level}",
            up.empirical_mean, up.closed_form * skew, 1e-12, "derived",
        )
        report.check(
            f"level-mean downward QF3 level={level}",
            down.empirical_mean, down.closed_form * skew, 1e-12, "derived",
        )
    return report


def _suite_partition(cases: int = 200) -> VerifyReport:
    report = VerifyReport("partition")
    gen = np.random.Generator(np.random.Philox(key=[99, 0]))
    worst = 0.0
    for _ in range(cases):
        n = int(gen.integers(2, 13))
        d = int(gen.integers(1, 5))
        obj = obj_mod.QuadraticObjective(gen.standard_normal((n, d)) * 2.0)
        divisors = [k for k in range(1, n + 1) if n % k == 0]
        num_groups = int(divisors[gen.integers(0, len(divisors))])
        grouping = topo_mod.uniform_random_grouping(n, num_groups, int(gen.integers(0, 1 << 30)))
        w = gen.standard_normal(d)
        identity = div_mod.check_partition_identity(obj, grouping, w)
        worst = max(worst, identity.residual / max(1.0, abs(identity.lhs)))
    report.check_leq(
        f"max relative residual over {cases} random instances", worst, 1e-12, "derived"
    )
    return report


def _suite_sandwich() -> VerifyReport:
    report = VerifyReport("sandwich")
    violations = 0
    cases = 0
    endpoint_dev = 0.0
    for n in range(2, 25):
        divisors = [k for k in range(1, n + 1) if n % k == 0]
        for G in range(1, 61):
            periods_i = [i for i in range(1, G + 1) if G % i == 0]
            for I in periods_i:
                for N in divisors:
                    chk = bounds_mod.sandwich_check(n, N, G, I)
                    cases += 1
                    if not chk.holds:
                        violations += 1
                    if N == 1:
                        endpoint_dev = max(
                            endpoint_dev,
                            abs(chk.noise_middle - chk.noise_lower),
                            abs(chk.divergence_middle - chk.divergence_lower),
                        )
                    if N == n:
                        endpoint_dev = max(
                            endpoint_dev,
                            abs(chk.noise_middle - chk.noise_upper),
                            abs(chk.divergence_middle - chk.divergence_upper),
                        )
    report.check(f"violations over {cases} grid points", violations, 0, 0, "derived")
    report.check("endpoint equality deviation", endpoint_dev, 0.0, 0.0, "trivial")
    return report


def _suite_reductions(corrupt: Optional[str]) -> VerifyReport:
    report = VerifyReport("reductions")
    # engines: M=2 tree vs its two-level equivalent, bitwise
    tree = topo_mod.build_multi_level([2, 5], [50, 5])
    flat = topo_mod.two_level_equivalent(tree)
    obj = obj_mod.make_quadratic_fixture("QF10")
    kwargs = dict(objective=obj, gamma=2e-3, horizon=100, seed=5,
                  noise="gaussian", sigma2=0.25, w0=1.0)
    trace_tree = engine_mod.run(engine_mod.RunConfig(topology=tree, **kwargs))
    trace_flat = engine_mod.run(engine_mod.RunConfig(topology=flat, **kwargs))
    max_diff = float(
        np.max(np.abs(trace_tree.mean_history - trace_flat.mean_history))
    )
    report.check("two-level vs M=2 engine mean trajectory", max_diff, 0.0, 0.0, "derived")

    c = bounds_mod.C * (1.01 if corrupt == "bound-constant" else 1.0)
    gen = np.random.Generator(np.random.Philox(key=[7, 1]))
    worst_single = 0.0
    worst_multi = 0.0
    for _ in range(50):
        n = int(gen.integers(2, 40))
        P = int(gen.integers(1, 30))
        L = float(gen.uniform(0.2, 3.0))
        gamma = 0.9 / (2 * math.sqrt(6.0) * P * L)
        common = dict(
            L=L, sigma2=float(gen.uniform(0.0, 2.0)), gamma=gamma,
            T=float(gen.integers(1, 10_000)), delta=float(gen.uniform(0.0, 5.0)),
        )
        div = float(gen.uniform(0.0, 3.0))
        one_group = bounds_mod.BoundInputs(
            **common, group_sizes=(n,), local_periods=(float(P),),
            global_period=float(P), upward_div=0.0, downward_divs=(div,), c=c,
        )
        single = bounds_mod.BoundInputs(
            **common, n=n, local_period=float(P), global_div=div, c=c
        )
        a = bounds_mod.fixed_grouping_bound(one_group)
        b = bounds_mod.local_sgd_bound(single)
        worst_single = max(worst_single, abs(a - b) / max(1.0, abs(b)))

        n1 = int(gen.integers(1, 6))
        n2 = int(gen.integers(1, 6))
        if n1 * n2 < 2:
            n2 = 2
        inner = int(gen.integers(1, 10))
        outer = inner * int(gen.integers(2, 6))
        gamma_ml = 0.9 / (2 * math.sqrt(6.0) * outer * L)
        common_ml = dict(common)
        common_ml["gamma"] = gamma_ml
        multi = bounds_mod.BoundInputs(
            **common_ml, branching=(n1, n2), periods=(float(outer), float(inner)),
            global_div=div, c=c,
        )
        flat_inputs = bounds_mod.BoundInputs(
            **common_ml, n=n1 * n2, num_groups=n1, global_period=float(outer),
            local_period=float(inner), global_div=div, c=c,
        )
        a = bounds_mod.multi_level_bound(multi)
        b = bounds_mod.random_grouping_bound(flat_inputs)
        worst_multi = max(worst_multi, abs(a - b) / max(1.0, abs(b)))
    report.check_leq("single-group bound vs local-SGD bound (rel)", worst_single,
                     1e-12, "derived")
    report.check_leq("M=2 bound vs random-grouping bound (rel)", worst_multi,
                     1e-12, "derived")
    return report


def _suite_eigen() -> VerifyReport:
    report = VerifyReport("eigen")
    failures = 0
    cases = 0

    def size_partitions(n, max_part=None):
        if n == 0:
            yield ()
            return
        cap = n if max_part is None else min(n, max_part)
        for first in range(cap, 0, -1):
            for rest in size_partitions(n - first, first):
                yield (first,) + rest

    for n in range(1, 13):
        for sizes in size_partitions(n):
            topo = topo_mod.build_two_level(list(sizes), [1] * len(sizes), 1)
            count = topo_mod.count_unit_eigenvalues(topo_mod.aggregation_matrix(topo))
            cases += 1
            if count != len(sizes):
                failures += 1
    report.check(f"unit-eigenvalue count mismatches over {cases} topologies",
                 failures, 0, 0, "paper")
    return report


def _suite_bound_domination(corrupt: Optional[str], seeds: int = 10) -> VerifyReport:
    report = VerifyReport("bound-domination")
    obj = obj_mod.make_quadratic_fixture("QF10")
    topo = topo_mod.build_two_level([5, 5], [5, 5], 20)
    grouping = topo_mod.contiguous_grouping([5, 5], origin="group-non-iid")
    gamma = 0.8 * bounds_mod.lr_max(20, obj.lipschitz)
    sigma2 = 0.25
    horizon = 2000
    w0 = 1.0
    measured = []
    for seed in range(seeds):
        config = engine_mod.RunConfig(
            topology=topo, objective=obj, gamma=gamma, horizon=horizon,
            seed=seed, w0=w0, noise="gaussian", sigma2=sigma2,
        )
        measured.append(engine_mod.run(config).mean_grad_norm_sq())
    mean = float(np.mean(measured))
    sem = float(np.std(measured, ddof=1) / math.sqrt(len(measured)))
    w_point = np.full(obj.dim, w0)
    delta = obj.global_loss(w_point) - obj.f_star()
    c = bounds_mod.C * (0.01 if corrupt == "bound-constant" else 1.0)
    inputs = bounds_mod.BoundInputs(
        L=obj.lipschitz, sigma2=sigma2, gamma=gamma, T=float(horizon), delta=delta,
        group_sizes=(5, 5), local_periods=(5.0, 5.0), global_period=20.0,
        upward_div=div_mod.upward_divergence(obj, grouping, w_point),
        downward_divs=tuple(
            div_mod.downward_divergence(obj, grouping, i, w_point) for i in range(2)
        ),
        c=c,
    )
    bound = bounds_mod.fixed_grouping_bound(inputs)
    report.check_leq(
        f"measured mean grad norm over {seeds} seeds vs bound (margin 3 SE)",
        mean - 3.0 * sem,
        bound,
        "derived",
    )
    return report


# ---------------------------------------------------------------------------
# bounds report backend

def bounds_report(table: dict) -> dict:
    """Evaluate every bound whose inputs are present in the table."""
    required = ("L", "sigma2", "gamma", "T", "delta")
    missing = [k for k in required if k not in table]
    if missing:
        raise ConfigError(f"bounds inputs missing {missing}")

    def maybe_tuple(key):
        value = table.get(key)
        return tuple(value) if value is not None else None

    inputs = bounds_mod.BoundInputs(
        L=float(table["L"]),
        sigma2=float(table["sigma2"]),
        gamma=float(table["gamma"]),
        T=float(table["T"]),
        delta=float(table["delta"]),
        n=table.get("n"),
        group_sizes=maybe_tuple("group_sizes"),
        local_periods=maybe_tuple("local_periods"),
        global_period=table.get("global_period"),
        upward_div=table.get("upward_div"),
        downward_divs=maybe_tuple("downward_divs"),
        num_groups=table.get("num_groups"),
        local_period=table.get("local_period"),
        global_div=table.get("global_div"),
        branching=maybe_tuple("branching"),
        periods=maybe_tuple("periods"),
        level_upward_divs=maybe_tuple("level_upward_divs"),
        level_downward_divs=maybe_tuple("level_downward_divs"),
    )
    out: dict = {}
    if inputs.global_period is not None:
        out["lr_max_two_level"] = bounds_mod.lr_max(inputs.global_period, inputs.L)
    if inputs.periods is not None:
        out["lr_max_multi_level"] = bounds_mod.lr_max(inputs.periods[0], inputs.L)
    if inputs.group_sizes is not None:
        out["two_level_fixed"] = bounds_mod.fixed_grouping_bound(inputs)
    if inputs.local_period is not None and inputs.n is not None:
        out["local_sgd"] = bounds_mod.local_sgd_bound(inputs)
    if inputs.num_groups is not None and inputs.n is not None:
        out["two_level_random"] = bounds_mod.random_grouping_bound(inputs)
        chk = bounds_mod.sandwich_check(
            inputs.n, inputs.num_groups, inputs.global_period, inputs.local_period
        )
        out["sandwich"] = asdict(chk) | {
            "noise_holds": chk.noise_holds,
            "divergence_holds": chk.divergence_holds,
        }
        if 1 < inputs.num_groups < inputs.n and table.get("rescale_l") is not None:
            res = bounds_mod.period_rescaling_check(
                inputs.n, inputs.num_groups, inputs.global_period,
                inputs.local_period, table["rescale_l"], table.get("rescale_q", 1.0),
            )
            out["period_rescaling"] = asdict(res) | {"improved": res.improved}
    if inputs.branching is not None:
        out["multi_level"] = bounds_mod.multi_level_bound(inputs)
        out["multi_level_raw"] = bounds_mod.multi_level_raw_bound(inputs)
        chk = bounds_mod.sandwich_check_multi(inputs.branching, inputs.periods)
        out["sandwich_multi"] = asdict(chk) | {
            "noise_holds": chk.noise_holds,
            "divergence_holds": chk.divergence_holds,
        }
    return out


def divergence_report(
    fixture: str,
    num_groups: int,
    grouping_kind: str = "contiguous",
    seed: int = 0,
    probes: int = 5,
) -> div_mod.DivergenceReport:
    """One-off divergence report for a fixture and a grouping strategy."""
    obj = obj_mod.make_quadratic_fixture(fixture)
    n = obj.n_workers
    if n % num_groups != 0:
        raise ConfigError(f"{num_groups} does not divide {n}")
    per = n // num_groups
    if grouping_kind == "contiguous":
        grouping = topo_mod.contiguous_grouping([per] * num_groups, origin="group-non-iid")
    elif grouping_kind == "round-robin":
        grouping = topo_mod.round_robin_grouping(n, num_groups)
    elif grouping_kind == "random":
        grouping = topo_mod.uniform_random_grouping(n, num_groups, seed)
    else:
        raise ConfigError(f"unknown grouping kind {grouping_kind!r}")
    gen = np.random.Generator(np.random.Philox(key=[seed, 17]))
    points = [gen.standard_normal(obj.dim) for _ in range(probes)]
    return div_mod.estimate_sup_divergences(obj, grouping, points)

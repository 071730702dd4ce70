"""Experiment configuration, scenario runners and CSV emission.

Every scenario is driven by an :class:`ExperimentConfig` and produces one or
more :class:`ResultTable` objects, written as CSV with ``#``-prefixed metadata
lines (UTF-8, LF, comma separated, ``.`` decimal).  The full configuration is
echoed into the metadata so a result file can be reproduced exactly; rerunning
with the same seed yields byte-identical bodies (the timestamp lives in the
metadata only).  Entropy columns use the natural logarithm (nats).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import posterior, posterior_moments, sample_counts
from .chain import (
    ChainParams,
    chain_spectrum,
    default_temperature_grid,
    find_t_star,
    gibbs_state,
    qfi_thermal,
)
from .errors import ValidationError
from .fisher import (
    DerivativeScheme,
    cfi_from_probability_table,
    cfi_static,
    exact_sequential_cfi,
    mc_protocol_run,
)
from .lindblad import build_liouvillian, thermalization_time_t95, unvec, vec
from .linalg import fidelity, random_density_matrix, von_neumann_entropy
from .protocol import (
    ProbeDynamics,
    ProtocolConfig,
    enumerate_trajectory_tree,
    multi_site_probabilities,
    sequence_probability_table,
)

SCENARIOS = (
    "thermalize",
    "t95-map",
    "static-fi",
    "qfi-scan",
    "weak-regime",
    "intermediate-regime",
    "kappa-sweep",
    "nseq-star",
    "bayes",
)

COLUMN_UNITS = {
    "t": "1/J",
    "t95": "1/J",
    "tau": "1/J",
    "temperature": "J",
    "kappa": "J",
    "fisher": "1/J^2",
    "fisher_stderr": "1/J^2",
    "fisher_at_star": "1/J^2",
    "qfi": "1/J^2",
    "entropy": "nat",
    "entropy_stderr": "nat",
    "density": "1/J",
    "m_var": "J^2",
    "inv_fisher": "J^2",
    "posterior_mean": "J",
}


def _unit_for(column: str) -> str:
    return COLUMN_UNITS.get(column, "1")


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment run.

    Scalar-or-list fields (``n_sites``, ``temperature``, ``kappa``, ``n_seq``)
    are interpreted per scenario; ``defaulted`` records fields that were filled
    with documented defaults rather than values fixed by a reproduced figure.
    """

    scenario: str
    n_sites: int | list[int]
    coupling: float = 1.0
    temperature: float | list[float] | None = None
    kappa: float | list[float] | None = None
    tau: float | None = None
    n_seq: int | list[int] | None = None
    mc_samples: int = 1000
    n_datasets: int | None = None
    true_temperature: float | None = None
    master_seed: int = 0
    n_seeds: int = 10
    n_measured: list[int] | None = None
    t_max: float | None = None
    dt: float | None = None
    entropy_steps: list[int] | None = None
    series_temperatures: list[float] | None = None
    use_t_star: bool = False
    posterior_points: int = 400
    out: str = "results"
    figure: str | None = None
    defaulted: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValidationError(
                f"unknown scenario {self.scenario!r}; valid: {', '.join(SCENARIOS)}"
            )
        for name in ("coupling",):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        needs = _REQUIRED_FIELDS[self.scenario]
        for name in needs:
            if getattr(self, name) is None:
                raise ValidationError(f"scenario {self.scenario!r} requires field {name!r}")
        for name in ("temperature", "true_temperature", "tau", "t_max", "dt"):
            value = getattr(self, name)
            for x in _as_list(value):
                if x is not None and not x > 0:
                    raise ValidationError(f"{name} must be positive, got {x}")
        for x in _as_list(self.kappa):
            if x is not None and x < 0:
                raise ValidationError(f"kappa must be non-negative, got {x}")
        if self.n_datasets is not None and self.n_datasets < 1:
            raise ValidationError("M (n_datasets) must be positive")
        if self.mc_samples < 1:
            raise ValidationError("mc_samples must be positive")
        if self.n_seeds < 1:
            raise ValidationError("n_seeds must be positive")

    def to_dict(self) -> dict:
        raw = dataclasses.asdict(self)
        return {k: v for k, v in raw.items() if v is not None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        if "scenario" not in data or "n_sites" not in data:
            raise ValidationError("config requires at least 'scenario' and 'n_sites'")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("config JSON must be an object")
        return cls.from_dict(data)


_REQUIRED_FIELDS = {
    "thermalize": ("temperature", "kappa", "t_max", "dt"),
    "t95-map": ("temperature", "kappa", "t_max", "dt"),
    "static-fi": ("temperature",),
    "qfi-scan": ("temperature",),
    "weak-regime": ("temperature", "n_seq"),  # tau defaults to N/J per chain
    "intermediate-regime": ("temperature", "kappa", "tau", "n_seq"),
    "kappa-sweep": ("temperature", "kappa", "tau", "n_seq"),
    "nseq-star": ("temperature", "kappa", "tau", "n_seq"),
    "bayes": ("kappa", "tau", "n_seq", "true_temperature", "n_datasets"),
}


def _as_list(value) -> list:
    if value is None:
        return [None]
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _scalar(value, name: str) -> float:
    items = _as_list(value)
    if len(items) != 1 or items[0] is None:
        raise ValidationError(f"{name} must be a single value for this scenario")
    return items[0]


@dataclass
class ResultTable:
    """Column-schema'd rows with units and a metadata header."""

    name: str
    columns: list[str]
    rows: list[tuple]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValidationError(
                    f"row arity {len(row)} != schema arity {len(self.columns)}"
                )

    @property
    def units(self) -> list[str]:
        return [_unit_for(c) for c in self.columns]


def _format_cell(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_result_table(table: ResultTable, path: Path) -> Path:
    lines = []
    for key, value in table.metadata.items():
        lines.append(f"# {key}={value}")
    lines.append("# units=" + ";".join(f"{c}={u}" for c, u in zip(table.columns, table.units)))
    lines.append(",".join(table.columns))
    for row in table.rows:
        lines.append(",".join(_format_cell(v) for v in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def _parse_cell(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def read_result_table(path: Path) -> ResultTable:
    metadata: dict[str, str] = {}
    columns: list[str] | None = None
    rows: list[tuple] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                metadata[key.strip()] = value
            continue
        parts = line.split(",")
        if columns is None:
            columns = parts
        else:
            rows.append(tuple(_parse_cell(p) for p in parts))
    if columns is None:
        raise ValidationError(f"{path} contains no table header")
    return ResultTable(name=Path(path).stem, columns=columns, rows=rows, metadata=metadata)


def csv_body(path: Path) -> bytes:
    """Table body (everything except '#' metadata lines), for determinism checks."""
    keep = [
        line for line in Path(path).read_text(encoding="utf-8").splitlines()
        if not line.startswith("#")
    ]
    return ("\n".join(keep) + "\n").encode()


def _metadata_for(cfg: ExperimentConfig) -> dict[str, str]:
    meta = {
        "generator": f"seqtherm {__version__}",
        "scenario": cfg.scenario,
        "config": cfg.to_json(),
        "seed": str(cfg.master_seed),
        "entropy_log_base": "e",
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if cfg.figure:
        meta["figure"] = cfg.figure
    if cfg.defaulted:
        meta["defaulted"] = ",".join(cfg.defaulted)
    return meta


def _chain(cfg: ExperimentConfig, n_sites: int | None = None) -> ChainParams:
    n = n_sites if n_sites is not None else _scalar(cfg.n_sites, "n_sites")
    return ChainParams(n_sites=int(n), coupling=cfg.coupling)


# ---------------------------------------------------------------------------
# scenario runners


def _run_thermalize(cfg: ExperimentConfig, n_workers=None) -> list[ResultTable]:
    chain = _chain(cfg)
    temperature = _scalar(cfg.temperature, "temperature")
    kappa = _scalar(cfg.kappa, "kappa")
    model = build_liouvillian(chain_spectrum(chain), kappa, temperature)
    target = model.stationary_state()
    dim = chain.dim
    down = np.zeros((dim, dim), dtype=complex)
    down[dim - 1, dim - 1] = 1.0
    rnd = random_density_matrix(dim, np.random.default_rng(cfg.master_seed))
    step = model._propagator(cfg.dt)
    n_steps = int(round(cfg.t_max / cfg.dt))
    rows = [(0.0, fidelity(down, target), fidelity(rnd, target))]
    state_a, state_b = down.copy(), rnd.copy()
    for k in range(1, n_steps + 1):
        state_a = unvec(step @ vec(state_a), dim)
        state_a /= np.trace(state_a).real
        state_b = unvec(step @ vec(state_b), dim)
        state_b /= np.trace(state_b).real
        rows.append((k * cfg.dt, fidelity(state_a, target), fidelity(state_b, target)))
    name = cfg.figure or "thermalize"
    return [ResultTable(
        name=name,
        columns=["t", "fidelity_down_state", "fidelity_random_state"],
        rows=rows,
        metadata=_metadata_for(cfg),
    )]


def _run_t95_map(cfg: ExperimentConfig, n_workers=None) -> list[ResultTable]:
    chain = _chain(cfg)
    spectrum = chain_spectrum(chain)
    dim = chain.dim
    down = np.zeros((dim, dim), dtype=complex)
    down[dim - 1, dim - 1] = 1.0
    rows = []
    for kappa in _as_list(cfg.kappa):
        for temperature in _as_list(cfg.temperature):
            model = build_liouvillian(spectrum, kappa, temperature)
            t95 = thermalization_time_t95(model, down, cfg.t_max, cfg.dt)
            rows.append((kappa, temperature, t95))
    name = cfg.figure or "t95_map"
    return [ResultTable(
        name=name,
        columns=["kappa", "temperature", "t95"],
        rows=rows,
        metadata=_metadata_for(cfg),
    )]


def _run_static_fi(cfg: ExperimentConfig, n_workers=None) -> list[ResultTable]:
    temps = _as_list(cfg.temperature)
    sweep_temperature = len(temps) > 1
    rows = []
    for n in _as_list(cfg.n_sites):
        chain = _chain(cfg, n)
        if sweep_temperature:
            measured = cfg.n_measured or [max(1, n // 2)]
            for temperature in temps:
                for n_m in measured:
                    if n_m > n:
                        continue
                    f = cfi_static(
                        lambda t, nm=n_m: multi_site_probabilities(gibbs_state(chain, t), nm),
                        temperature,
                    )
                    rows.append((n, n_m, temperature, f))
        else:
            temperature = temps[0]
            measured = cfg.n_measured or list(range(1, n + 1))
            for n_m in measured:
                if n_m > n:
                    continue
                f = cfi_static(
                    lambda t, nm=n_m: multi_site_probabilities(gibbs_state(chain, t), nm),
                    temperature,
                )
                rows.append((n, n_m, temperature, f))
    name = cfg.figure or "static_fi"
    return [ResultTable(
        name=name,
        columns=["n_sites", "n_measured", "temperature", "fisher"],
        rows=rows,
        metadata=_metadata_for(cfg),
    )]


def _run_qfi_scan(cfg: ExperimentConfig, n_workers=None) -> list[ResultTable]:
    rows = []
    for n in _as_list(cfg.n_sites):
        chain = _chain(cfg, n)
        for temperature in _as_list(cfg.temperature):
            probe = gibbs_state(chain, temperature)
            q = qfi_thermal(probe)
            f = cfi_static(
                lambda t: multi_site_probabilities(gibbs_state(chain, t), n),
                temperature,
            )
            rows.append((n, temperature, q, f))
    name = cfg.figure or "qfi_scan"
    return [ResultTable(
        name=name,
        columns=["n_sites", "temperature", "qfi", "fisher"],
        rows=rows,
        metadata=_metadata_for(cfg),
    )]


def _weak_rows_for(cfg: ExperimentConfig, chain: ChainParams, label: str,
                   temperature: float, n_workers) -> list[tuple]:
    n_max = _scalar(cfg.n_seq, "n_seq")
    steps = set(cfg.entropy_steps or range(1, n_max + 1))
    tau = cfg.tau if cfg.tau is not None else float(chain.n_sites) / cfg.coupling
    proto = ProtocolConfig(chain, temperature, 0.0, tau, n_max)
    dynamics = ProbeDynamics(chain, 0.0, tau)
    run = mc_protocol_run(
        proto, dynamics, n_samples=cfg.mc_samples, master_seed=cfg.master_seed,
        entropy_steps=steps, n_workers=n_workers,
    )
    mu = run.step_fisher.shape[0]
    cumulative = np.cumsum(run.step_fisher, axis=1)
    values = cumulative.mean(axis=0)
    stderr = cumulative.std(axis=0, ddof=0) / np.sqrt(mu)
    rows = []
    for n in range(1, n_max + 1):
        if n in run.entropies:
            ent = run.entropies[n]
            e_mean = float(ent.mean())
            e_err = float(ent.std(ddof=0) / np.sqrt(len(ent)))
        else:
            e_mean, e_err = float("nan"), float("nan")
        rows.append((chain.n_sites, label, temperature, n,
                     float(values[n - 1]), float(stderr[n - 1]), e_mean, e_err))
    return rows


def _run_weak_regime(cfg: ExperimentConfig, n_workers=None) -> list[ResultTable]:
    rows = []
    for n in _as_list(cfg.n_sites):
        chain = _chain(cfg, n)
        for temperature in _as_list(cfg.temperature):
            rows.extend(_weak_rows_for(cfg, chain, "fixed", temperature, n_workers))
        if cfg.use_t_star:
            t_star = find_t_star(chain)
            rows.extend(_weak_rows_for(cfg, chain, "t-star", t_star, n_workers))
    name = cfg.figure or "weak_regime"
    return [ResultTable(
        name=name,
        columns=["n_sites", "temperature_label", "temperature", "n_seq",
                 "fisher", "fisher_stderr", "entropy", "entropy_stderr"],
        rows=rows,
        metadata=_metadata_for(cfg),
    )]


def _run_intermediate(cfg: ExperimentConfig, n_workers=None) -> list[ResultTable]:
    chain = _chain(cfg)
    kappa = _scalar(cfg.kappa, "kappa")
    n_list = sorted(_as_list(cfg.n_seq))
    n_max = n_list[-1]
    dynamics = ProbeDynamics(chain, kappa, cfg.tau)
    rows = []
    for temperature in _as_list(cfg.temperature):
        probe = gibbs_state(chain, temperature)
        q = qfi_thermal(probe)
        proto = ProtocolConfig(chain, temperature, kappa, cfg.tau, n_max)
        series = exact_sequential_cfi(proto, dynamics)
        for n in n_list:
            rows.append((temperature, n, float(series.values[n - 1]), q))
    name = cfg.figure or "intermediate_regime"
    return [ResultTable(
        name=name,
        columns=["temperature", "n_seq", "fisher", "qfi"],
        rows=rows,
        metadata=_metadata_for(cfg),
    )]


def _run_kappa_sweep(cfg: ExperimentConfig, n_workers=None) -> list[ResultTable]:
    chain = _chain(cfg)
    n_list = sorted(_as_list(cfg.n_seq))
    temps: list[tuple[str, float]] = [("fixed", t) for t in _as_list(cfg.temperature)]
    if cfg.use_t_star:
        temps.append(("t-star", find_t_star(chain)))
    rows = []
    for kappa in _as_list(cfg.kappa):
        for label, temperature in temps:
            dynamics = ProbeDynamics(chain, kappa, cfg.tau)
            proto = ProtocolConfig(chain, temperature, kappa, cfg.tau, n_list[-1])
            series = exact_sequential_cfi(proto, dynamics)
            for n in n_list:
                tree = enumerate_trajectory_tree(
                    dataclasses.replace(proto, n_seq=n), dynamics
                )
                entropy = sum(
                    tr.probability * von_neumann_entropy(tr.final_state) for tr in tree
                )
                rows.append((label, temperature, kappa, n,
                             float(series.values[n - 1]), float(entropy)))
    name = cfg.figure or "kappa_sweep"
    return [ResultTable(
        name=name,
        columns=["temperature_label", "temperature", "kappa", "n_seq",
                 "fisher", "entropy"],
        rows=rows,
        metadata=_metadata_for(cfg),
    )]


def _run_nseq_star(cfg: ExperimentConfig, n_workers=None) -> list[ResultTable]:
    from .fisher import find_nseq_star

    chain = _chain(cfg)
    kappa = _scalar(cfg.kappa, "kappa")
    n_max = _scalar(cfg.n_seq, "n_seq")
    dynamics = ProbeDynamics(chain, kappa, cfg.tau)
    base = cfg.figure or "nseq_star"

    series_rows = []
    for temperature in (cfg.series_temperatures or []):
        probe = gibbs_state(chain, temperature)
        q = qfi_thermal(probe)
        proto = ProtocolConfig(chain, temperature, kappa, cfg.tau, min(int(n_max), 12))
        series = exact_sequential_cfi(proto, dynamics)
        for n in range(1, series.n_seq + 1):
            series_rows.append((temperature, n, float(series.values[n - 1]), q))

    star_rows = []
    for temperature in _as_list(cfg.temperature):
        probe = gibbs_state(chain, temperature)
        q = qfi_thermal(probe)
        proto = ProtocolConfig(chain, temperature, kappa, cfg.tau, int(n_max))
        result = find_nseq_star(proto, dynamics, q, mc_samples=cfg.mc_samples,
                                master_seed=cfg.master_seed, n_workers=n_workers)
        f_at = (float(result.fisher.values[result.n_star - 1])
                if result.n_star is not None else float("nan"))
        star_rows.append((temperature,
                          result.n_star if result.n_star is not None else float("nan"),
                          f_at, q,
                          result.ratio if result.ratio is not None else float("nan")))

    tables = []
    if series_rows:
        tables.append(ResultTable(
            name=f"{base}a" if cfg.figure else f"{base}_series",
            columns=["temperature", "n_seq", "fisher", "qfi"],
            rows=series_rows,
            metadata=_metadata_for(cfg),
        ))
    tables.append(ResultTable(
        name=f"{base}b" if cfg.figure else f"{base}_threshold",
        columns=["temperature", "n_star", "fisher_at_star", "qfi", "ratio"],
        rows=star_rows,
        metadata=_metadata_for(cfg),
    ))
    return tables


def _run_bayes(cfg: ExperimentConfig, n_workers=None) -> list[ResultTable]:
    chain = _chain(cfg)
    kappa = _scalar(cfg.kappa, "kappa")
    n_list = sorted(_as_list(cfg.n_seq))
    n_max = n_list[-1]
    true_t = cfg.true_temperature
    grid = default_temperature_grid(cfg.coupling, cfg.posterior_points)
    dynamics = ProbeDynamics(chain, kappa, cfg.tau)
    proto = ProtocolConfig(chain, true_t, kappa, cfg.tau, n_max)
    table_grid = sequence_probability_table(proto, dynamics, grid)
    table_true = sequence_probability_table(proto, dynamics, np.array([true_t]))
    scheme = DerivativeScheme.for_temperature(true_t, cfg.coupling)
    table_diff = sequence_probability_table(
        proto, dynamics, np.array(scheme.temperatures(true_t))
    )
    fisher = cfi_from_probability_table(table_diff, scheme)

    base = cfg.figure or "bayes"
    posterior_rows = []
    variance_rows = []
    for n in n_list:
        grid_n = table_grid.marginal(n)
        true_n = table_true.marginal(n)
        m_vars = []
        post0 = None
        for seed_index in range(cfg.n_seeds):
            rng = np.random.default_rng((cfg.master_seed, seed_index))
            counts = sample_counts(true_n, true_t, cfg.n_datasets, rng)
            pg = posterior(counts, grid_n)
            moments = posterior_moments(pg)
            m_vars.append(cfg.n_datasets * moments.variance)
            if seed_index == 0:
                post0 = pg
        for t, d in zip(post0.temperatures, post0.density):
            posterior_rows.append((n, float(t), float(d)))
        f_n = float(fisher.values[n - 1])
        variance_rows.append((
            n,
            float(np.mean(m_vars)),
            float(np.std(m_vars, ddof=0) / np.sqrt(len(m_vars))),
            1.0 / f_n if f_n > 0 else float("nan"),
            f_n,
        ))
    meta = _metadata_for(cfg)
    return [
        ResultTable(
            name=f"{base}_posterior",
            columns=["n_seq", "temperature", "density"],
            rows=posterior_rows,
            metadata=meta,
        ),
        ResultTable(
            name=f"{base}_variance",
            columns=["n_seq", "m_var", "m_var_stderr", "inv_fisher", "fisher"],
            rows=variance_rows,
            metadata=meta,
        ),
    ]


_SCENARIO_RUNNERS = {
    "thermalize": _run_thermalize,
    "t95-map": _run_t95_map,
    "static-fi": _run_static_fi,
    "qfi-scan": _run_qfi_scan,
    "weak-regime": _run_weak_regime,
    "intermediate-regime": _run_intermediate,
    "kappa-sweep": _run_kappa_sweep,
    "nseq-star": _run_nseq_star,
    "bayes": _run_bayes,
}


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None,
        n_workers: int | None = None) -> list[Path]:
    """Run one scenario and write its CSV tables; returns the written paths."""
    cfg.validate()
    tables = _SCENARIO_RUNNERS[cfg.scenario](cfg, n_workers)
    out = Path(out_dir if out_dir is not None else cfg.out)
    return [write_result_table(t, out / f"{t.name}.csv") for t in tables]

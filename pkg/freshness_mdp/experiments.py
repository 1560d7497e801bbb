"""
Experiment runner for the freshness_mdp package.

``ExperimentRunner`` is the main entry point: it takes a resolved
``ExperimentSpec`` and produces the rows of one experiment family, grid
point by grid point. ``run_experiment`` streams those rows to CSV in grid
order and returns a JSON-ready summary.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import IO, Any, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .aoii import (
    build_aoii_lagrangian_mdp,
    build_aoii_token_mdp,
    derive_chain_params,
    solve_aoii_cmdp,
)
from .exceptions import FreshnessMdpError
from .lagrangian import solve_two_rate_cmdp
from .mdp import FiniteMdp, long_run_average, rvia
from .models import (
    AOII_FAMILIES,
    METHODS,
    TWO_RATE_FAMILIES,
    AoiiParams,
    BaselineKind,
    ExperimentSpec,
    LagrangeVec,
    MixedPolicy,
    SimResult,
    ThresholdProfile,
    TokenParams,
    TwoRateParams,
)
from .serializers import (
    SEARCH_TRACE_COLUMNS,
    CsvTableWriter,
    mixed_policy_table,
    policy_table,
    provenance_lines,
    resolved_spec,
    search_trace_rows,
)
from .simulation import simulate, trace_columns
from .structure import extract_threshold_profile
from .two_rate import build_two_rate_lagrangian_mdp, build_two_rate_token_mdp, context_rates
from .utils import LogContext, get_logger

logger = get_logger("experiments")

Row = Tuple[Any, ...]

BASELINES = {"uniform": BaselineKind.UNIFORM_TWO_RATE, "random": BaselineKind.RANDOM_TWO_RATE}
TOKEN_METHODS = ("token", "greedy")
ZERO = LagrangeVec(lambda0=0.0, lambda1=0.0)


class ExperimentRunner:
    """
    Solves and simulates every grid point of one experiment.

    Attributes:
        spec: The resolved experiment
        methods: Methods to run, in canonical order (token, cmdp, uniform,
            random, never, greedy)
    """

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.solver_cfg = spec.solver_config()
        self.search_cfg = spec.search_config()
        sim_cfg = spec.sim_config()
        if spec.family == "simulate" and spec.trace_out:
            sim_cfg = sim_cfg.model_copy(update={"trace_runs": 1})
        self.sim_cfg = sim_cfg
        self.methods = [m for m in METHODS if m in spec.resolved_methods]
        self.summary: Dict[str, Any] = {}
        self.trace: Optional[Tuple[List[str], List[Row]]] = None

    # parameter construction

    def aoii_params(self, p_R: Optional[float] = None) -> AoiiParams:
        return derive_chain_params(
            self.spec.N, p_R if p_R is not None else self.spec.p_R, self.spec.p_s,
            self.spec.resolved_delta_max,
        )

    def two_rate_params(self, b_max: int = 5, **swept: float) -> TwoRateParams:
        values = {
            "q": self.spec.q,
            "alpha_min": self.spec.alpha_min,
            "alpha_max": self.spec.alpha_max,
            **swept,
        }
        return TwoRateParams(delta_max=self.spec.resolved_delta_max, b_max=b_max, **values)

    # table layout

    def columns(self) -> List[str]:
        family = self.spec.family
        field = self.spec.swept_field
        label = "pR" if field == "p_R" else field
        if family in AOII_FAMILIES:
            return [label, "bmax", "method", "J_exact", "J_sim", "rate_sim", "stderr"]
        if family == "aoi2-gap-bmax":
            return ["q", "bmax", "J_token", "J_cmdp", "gap"]
        if family in TWO_RATE_FAMILIES:
            return [label, "bmax", "method", "J_exact", "J_sim", "rate0_sim", "rate1_sim",
                    "stderr"]
        if family == "simulate":
            return ["method", "bmax", "J_exact", "J_sim", "rate0_sim", "rate1_sim", "stderr"]
        return self._solve_columns()

    def grid(self) -> List[Optional[float]]:
        return list(self.spec.grid) if self.spec.swept_field else [None]

    # per grid point

    def point_rows(self, x: Optional[float]) -> List[Row]:
        """All rows of one grid point, in method order."""
        family = self.spec.family
        if family in AOII_FAMILIES:
            swept = {self.spec.swept_field: x}
            return [
                row[:5] + (row[5] + row[6], row[7])
                for row in self._aoii_rows(x, swept.get("alpha"), swept.get("p_R"))
            ]
        if family == "aoi2-gap-bmax":
            return self._gap_rows(x)
        if family in TWO_RATE_FAMILIES:
            return self._two_rate_rows(x, {self.spec.swept_field: x})
        if family == "simulate":
            if self.spec.model_kind == "aoii":
                rows = self._aoii_rows(None)
            else:
                rows = self._two_rate_rows(None, {})
            return [(r[2], r[1], *r[3:]) for r in rows]
        return self._solve_rows()

    def _sim(self, mdp: FiniteMdp, source: Any,
             rates: Optional[Tuple[float, float]] = None) -> SimResult:
        result = simulate(mdp, source, self.sim_cfg, baseline_rates=rates)
        if self.sim_cfg.trace_runs and self.trace is None:
            self.trace = (trace_columns(mdp), list(result.trace))
        return result

    @staticmethod
    def _row(label: Any, b_max: Optional[int], method: str, J: Optional[float],
             sim: SimResult) -> Row:
        return (label, b_max, method, J, sim.avg_cost, sim.rate0, sim.rate1, sim.stderr_cost)

    def _aoii_rows(self, label: Optional[float], alpha: Optional[float] = None,
                   p_R: Optional[float] = None) -> List[Row]:
        alpha = alpha if alpha is not None else self.spec.alpha
        params = self.aoii_params(p_R)
        chain = build_aoii_lagrangian_mdp(params, 0.0)
        rows: List[Row] = []
        for method in self.methods:
            if method in TOKEN_METHODS:
                for b_max in self.spec.resolved_b_max:
                    mdp = build_aoii_token_mdp(params, TokenParams(alpha=alpha, b_max=b_max))
                    policy = self._token_policy(mdp, method)
                    J = long_run_average(mdp, policy, mdp.cost)
                    rows.append(self._row(label, b_max, method, J, self._sim(mdp, policy)))
            elif method == "cmdp":
                mixed, J, _ = solve_aoii_cmdp(params, alpha, self.solver_cfg)
                rows.append(self._row(label, None, method, J, self._sim(chain, mixed)))
            elif method == "never":
                idle = np.zeros(chain.n_states, dtype=int)
                J = long_run_average(chain, idle, chain.cost)
                rows.append(self._row(label, None, method, J, self._sim(chain, idle)))
            else:
                sim = self._sim(chain, BASELINES[method], (alpha, alpha))
                rows.append(self._row(label, None, method, None, sim))
        return rows

    def _two_rate_rows(self, label: Optional[float], swept: Dict[str, float]) -> List[Row]:
        base = self.two_rate_params(**swept)
        chain = build_two_rate_lagrangian_mdp(base, ZERO)
        rows: List[Row] = []
        for method in self.methods:
            if method in TOKEN_METHODS:
                for b_max in self.spec.resolved_b_max:
                    mdp = build_two_rate_token_mdp(self.two_rate_params(b_max, **swept))
                    policy = self._token_policy(mdp, method)
                    J, _, _ = context_rates(mdp, policy)
                    rows.append(self._row(label, b_max, method, J, self._sim(mdp, policy)))
            elif method == "cmdp":
                solution = solve_two_rate_cmdp(base, self.solver_cfg, self.search_cfg)
                rows.append(self._row(label, None, method, solution.J,
                                      self._sim(chain, solution.mixed)))
            elif method == "never":
                idle = np.zeros(chain.n_states, dtype=int)
                J, _, _ = context_rates(chain, idle)
                rows.append(self._row(label, None, method, J, self._sim(chain, idle)))
            else:
                sim = self._sim(chain, BASELINES[method], (base.alpha_min, base.alpha_max))
                rows.append(self._row(label, None, method, None, sim))
        return rows

    def _gap_rows(self, q: float) -> List[Row]:
        J_cmdp = solve_two_rate_cmdp(
            self.two_rate_params(q=q), self.solver_cfg, self.search_cfg
        ).J
        rows: List[Row] = []
        for b_max in self.spec.resolved_b_max:
            mdp = build_two_rate_token_mdp(self.two_rate_params(b_max, q=q))
            J_token, _, _ = context_rates(mdp, rvia(mdp, self.solver_cfg).policy)
            rows.append((q, b_max, J_token, J_cmdp, J_token - J_cmdp))
        return rows

    def _token_policy(self, mdp: FiniteMdp, method: str) -> np.ndarray:
        if method == "greedy":
            return mdp.action_mask[:, 1].astype(int)
        return rvia(mdp, self.solver_cfg).policy

    # single-instance solve

    def _solve_method(self) -> str:
        return "cmdp" if "cmdp" in self.spec.resolved_methods else "token"

    def _solve_model(self) -> FiniteMdp:
        b_max = self.spec.resolved_b_max[0]
        cmdp = self._solve_method() == "cmdp"
        if self.spec.model_kind == "aoii":
            params = self.aoii_params()
            if cmdp:
                return build_aoii_lagrangian_mdp(params, 0.0)
            return build_aoii_token_mdp(params, TokenParams(alpha=self.spec.alpha, b_max=b_max))
        if cmdp:
            return build_two_rate_lagrangian_mdp(self.two_rate_params(), ZERO)
        return build_two_rate_token_mdp(self.two_rate_params(b_max))

    def _solve_columns(self) -> List[str]:
        mdp = self._solve_model()
        if self._solve_method() == "cmdp":
            dummy = MixedPolicy.two_policy(np.zeros(mdp.n_states, dtype=int),
                                           np.zeros(mdp.n_states, dtype=int), 1.0)
            return mixed_policy_table(mdp, dummy)[0]
        return policy_table(mdp, np.zeros(mdp.n_states, dtype=int))[0]

    def _solve_rows(self) -> List[Row]:
        mdp = self._solve_model()
        aoii = self.spec.model_kind == "aoii"
        if self._solve_method() == "cmdp":
            if aoii:
                mixed, J, c0 = solve_aoii_cmdp(self.aoii_params(), self.spec.alpha,
                                               self.solver_cfg)
                c1 = 0.0
            else:
                solution = solve_two_rate_cmdp(self.two_rate_params(), self.solver_cfg,
                                               self.search_cfg)
                mixed, J, c0, c1 = solution.mixed, solution.J, solution.c0, solution.c1
                self.summary["lambda_star"] = solution.lambda_star.as_array().tolist()
                if solution.search is not None and self.spec.trace_out:
                    self.trace = (SEARCH_TRACE_COLUMNS,
                                  search_trace_rows(solution.search.trace))
            self.summary.update(J=J, c0=c0, c1=c1, rho0=mixed.rho0, rho1=mixed.rho1)
            return mixed_policy_table(mdp, mixed)[1]

        result = rvia(mdp, self.solver_cfg)
        if aoii:
            updates = np.tile([0.0, 1.0], (mdp.n_states, 1))
            J = long_run_average(mdp, result.policy, mdp.cost)
            c0 = long_run_average(mdp, result.policy, updates) - self.spec.alpha
            c1 = 0.0
        else:
            params = self.two_rate_params(self.spec.resolved_b_max[0])
            J, rate0, rate1 = context_rates(mdp, result.policy)
            c0, c1 = rate0 - params.alpha0, rate1 - params.alpha1
        profile = extract_threshold_profile(result, mdp.layout)
        self.summary.update(
            J=J, c0=c0, c1=c1, J_rvia=result.J, n_iterations=result.n_iterations,
            threshold=isinstance(profile, ThresholdProfile),
        )
        return policy_table(mdp, result.policy)[1]

    # driver

    def _guarded_point(self, x: Optional[float]) -> List[Row]:
        point = {self.spec.swept_field: x} if self.spec.swept_field else {}
        try:
            with LogContext("grid point", logger_name="experiments", **point) as ctx:
                rows = self.point_rows(x)
                ctx.logger.debug(f"{len(rows)} rows")
                return rows
        except FreshnessMdpError as e:
            e.details.setdefault("grid_point", point)
            logger.error(f"{self.spec.family} failed at {point or 'the single point'}: {e}")
            raise

    def iter_rows(self):
        """Yield rows in grid order; points may be computed concurrently."""
        grid = self.grid()
        if self.spec.workers > 1 and len(grid) > 1:
            with ThreadPoolExecutor(max_workers=self.spec.workers) as pool:
                for rows in pool.map(self._guarded_point, grid):
                    yield from rows
        else:
            for x in grid:
                yield from self._guarded_point(x)


def run_experiment(
    spec: ExperimentSpec,
    out: IO[str],
    trace_out: Optional[IO[str]] = None,
) -> Dict[str, Any]:
    """
    Run one experiment and stream its CSV to ``out``.

    Rows are flushed as soon as their grid point finishes, so a failure
    leaves every earlier row on disk before the error propagates.

    Returns:
        Summary with the resolved spec, the row count and, for ``solve``,
        the exact J, c0 and c1
    """
    runner = ExperimentRunner(spec)
    preamble = provenance_lines(spec, __version__)
    writer = CsvTableWriter(out, runner.columns(), preamble)
    for row in runner.iter_rows():
        writer.write_row(row)

    if trace_out is not None and runner.trace is not None:
        columns, rows = runner.trace
        CsvTableWriter(trace_out, columns, preamble).write_rows(rows)

    summary = {"family": spec.family, "rows": writer.n_rows, **runner.summary,
               "spec": resolved_spec(spec)}
    logger.info(f"{spec.family}: wrote {writer.n_rows} rows")
    return summary

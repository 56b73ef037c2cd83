"""Solve and verification pipelines driven by a RunConfig."""
from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ezmfg.common.logger import setup_logger
from ezmfg.common.solve_cache import SolveCache, solve_cache
from ezmfg.core.run_config import ConfigError, RunConfig, build_game, build_population, build_sim
from ezmfg.model import ModelValidationError, Population
from ezmfg.solver.mfg import (
    MfgEquilibrium,
    common_noise_loading_check,
    equilibrium_summary,
    power_utility_consumption,
    solve_mfg,
    y_tilde_by_quadrature,
)
from ezmfg.solver.nplayer import NPlayerEquilibrium, mfg_limit_report, solve_nplayer
from ezmfg.solver.ode import GridFunction, riccati_numeric
from ezmfg.solver.simulate import (
    ABS_TOL,
    DETERMINISTIC_TOL,
    SIGMA_LEVEL,
    CheckResult,
    SimulationReport,
    best_response_gap,
    within_band,
    fixed_point_residual,
)
from ezmfg.solver.utility import aggregator, mc_recursion_residual

logger = setup_logger('pipeline')

RICCATI_TOL = 1e-6
QUADRATURE_TOL = 1e-8
POWER_TOL = 1e-10
ORDER_BOUND = -0.9


def riccati_residual(c: np.ndarray, B: np.ndarray, grid: np.ndarray) -> float:
    """Largest centered-difference residual of c' = c^2 + B c at interior nodes.

    B is per cell; at a node the average of the two adjacent cells is used.
    """
    dc = (c[2:] - c[:-2]) / (grid[2:] - grid[:-2])
    b = 0.5 * (B[:-1] + B[1:])
    mid = c[1:-1]
    res = np.abs(dc - mid ** 2 - b * mid) / (1.0 + np.abs(dc))
    return float(res.max()) if res.size else 0.0


class RunService:
    """Solves the configured game once and runs verification checks on it."""

    def __init__(self, cfg: RunConfig, cache: Optional[SolveCache] = None):
        self.cfg = cfg
        self.cache = cache if cache is not None else solve_cache
        self.sim = build_sim(cfg)

    # ── solves ──

    @property
    def population(self) -> Population:
        return build_population(self.cfg)

    def equilibrium(self) -> MfgEquilibrium:
        def build():
            eq = solve_mfg(self.population, self.cfg.regime)
            for row in equilibrium_summary(eq):
                logger.info(f"type {row['type']}: pi*(0)={row['pi_star_0']:.8g} c*(0)={row['c_star_0']:.8g}")
            return eq
        return self.cache.get_or_create("mfg", self.cfg.model_fingerprint(), build)

    def nplayer(self) -> NPlayerEquilibrium:
        return self.cache.get_or_create(
            "nplayer", self.cfg.model_fingerprint(), lambda: solve_nplayer(build_game(self.cfg), self.cfg.regime)
        )

    # ── checks ──

    def check_riccati(self) -> CheckResult:
        eq = self.equilibrium()
        grid = eq.grid
        per_type = []
        for k in range(eq.population.n_types):
            B = GridFunction(grid, eq.riccati.B[k], "cell")
            numeric = riccati_numeric(B, float(eq.riccati.D[k])).values
            per_type.append({
                "type": k,
                "rk4_gap": float(np.max(np.abs(numeric - eq.c_path[k]))),
                "residual": riccati_residual(eq.c_path[k], eq.riccati.B[k], grid),
            })
        y_gap = float(np.max(np.abs(y_tilde_by_quadrature(eq) - eq.Y_tilde)))
        z_gap = common_noise_loading_check(eq)
        worst = max(max(row["rk4_gap"], row["residual"]) for row in per_type)
        passed = worst <= RICCATI_TOL and y_gap <= QUADRATURE_TOL and z_gap <= QUADRATURE_TOL
        return CheckResult(
            name="riccati",
            estimate=worst,
            std_error=0.0,
            tolerance=RICCATI_TOL,
            passed=bool(passed),
            details={"types": per_type, "y_tilde_gap": y_gap, "z0_loading_gap": z_gap},
        )

    def check_fixed_point(self) -> SimulationReport:
        return fixed_point_residual(self.population, self.equilibrium(), self.sim)

    def check_best_response(self, eps: Optional[Sequence[float]] = None) -> List[CheckResult]:
        eq = self.equilibrium()
        eps = list(eps) if eps is not None else list(self.cfg.verify.eps)
        return [best_response_gap(eq.population, eq, k, eps) for k in range(eq.population.n_types)]

    def check_recursion(self) -> List[CheckResult]:
        eq = self.equilibrium()
        results = []
        for k in range(eq.population.n_types):
            est = mc_recursion_residual(eq, k, self.sim)
            floor = DETERMINISTIC_TOL * max(1.0, abs(est.V0)) + ABS_TOL
            results.append(CheckResult(
                name=f"recursion[{k}]",
                estimate=est.residual,
                std_error=est.std_error,
                tolerance=SIGMA_LEVEL,
                passed=within_band(est.residual, est.std_error, floor),
                details={"V0": est.V0, "mc_estimate": est.estimate, "n_paths": self.sim.n_paths},
            ))
        return results

    def check_nplayer_limit(self) -> CheckResult:
        spec = self.cfg.nplayer_limit
        if spec.type_index >= len(self.cfg.population):
            raise ConfigError("/nplayer_limit/type_index", f"no population type {spec.type_index}")
        pop = self.population
        agent = pop.agents[spec.type_index]
        try:
            table = mfg_limit_report(agent, spec.ns, pop.grid, self.cfg.regime)
        except ModelValidationError:
            raise
        except ValueError as exc:
            raise ConfigError("/nplayer_limit/ns", str(exc))
        pi_ok = all(g <= 1e-10 for g in table.pi_gaps) or all(
            b <= a for a, b in zip(table.pi_gaps, table.pi_gaps[1:])
        )
        c_vanish = all(g <= 1e-10 for g in table.c_gaps)
        c_ok = c_vanish or (
            all(b <= a for a, b in zip(table.c_gaps, table.c_gaps[1:]))
            and table.c_order is not None
            and table.c_order <= ORDER_BOUND
        )
        return CheckResult(
            name="nplayer-limit",
            estimate=float(table.c_gaps[-1]),
            std_error=0.0,
            tolerance=ORDER_BOUND,
            passed=bool(pi_ok and c_ok),
            details=table.to_dict(),
        )

    def check_power_reduction(self) -> CheckResult:
        pop = self.population
        if any(abs(a.prefs.psi * a.prefs.gamma - 1.0) > 1e-12 for a in pop.agents):
            raise ConfigError("/population", "power-utility reduction needs psi*gamma = 1 for every type")
        eq = self.equilibrium()
        c_gap = float(np.max(np.abs(power_utility_consumption(pop) - eq.c_star)))

        rng = np.random.default_rng(self.sim.seed)
        agg_gap = 0.0
        for agent in pop.agents:
            p = agent.prefs
            c = rng.uniform(0.01, 5.0, 100)
            v = rng.uniform(0.0, 5.0, 100) * np.sign(1.0 - p.gamma)
            expected = p.delta * c ** (1.0 - p.gamma) / (1.0 - p.gamma) - p.delta * v
            agg_gap = max(agg_gap, float(np.max(np.abs(aggregator(c, v, p) - expected))))
        passed = c_gap <= POWER_TOL and agg_gap <= 1e-12
        return CheckResult(
            name="power-reduction",
            estimate=c_gap,
            std_error=0.0,
            tolerance=POWER_TOL,
            passed=bool(passed),
            details={"consumption_gap": c_gap, "aggregator_gap": agg_gap},
        )

    # ── bundles ──

    def run_checks(self, names: Sequence[str], eps: Optional[Sequence[float]] = None) -> SimulationReport:
        """Run the named checks into one report."""
        report = SimulationReport()
        runners: Dict[str, Callable[[], None]] = {
            "riccati": lambda: report.add(self.check_riccati()),
            "fixed-point": lambda: self._merge(report, self.check_fixed_point()),
            "best-response": lambda: [report.add(r) for r in self.check_best_response(eps)],
            "recursion": lambda: [report.add(r) for r in self.check_recursion()],
            "nplayer-limit": lambda: report.add(self.check_nplayer_limit()),
            "power-reduction": lambda: report.add(self.check_power_reduction()),
        }
        for name in names:
            if name not in runners:
                raise ConfigError("", f"unknown check {name!r}")
            logger.info(f"running check {name}")
            runners[name]()
        failed = [name for name, check in report.checks.items() if not check.passed]
        if failed:
            logger.warning(f"checks failed: {failed}")
        return report

    def applicable_checks(self) -> List[str]:
        names = ["riccati", "fixed-point", "best-response", "recursion", "nplayer-limit"]
        if all(abs(t.prefs.psi * t.prefs.gamma - 1.0) <= 1e-12 for t in self.cfg.population):
            names.append("power-reduction")
        return names

    @staticmethod
    def _merge(report: SimulationReport, other: SimulationReport) -> None:
        for check in other.checks.values():
            report.add(check)
        if other.paths_summary:
            report.paths_summary = other.paths_summary


CHECK_NAMES = ("riccati", "fixed-point", "best-response", "recursion", "nplayer-limit", "power-reduction")

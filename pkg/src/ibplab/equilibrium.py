"""Equilibrium and social-optimum computation.

Both problems minimize a convex separable objective over the product of
per-type scaled route-flow simplices:

- equilibrium: the potential  sum_e integral_0^{f_e} c_e(z) dz,  whose
  minimizers are exactly the flows where every type's positive-flow routes
  are cheapest within its information set;
- social optimum: the total cost  sum_e f_e c_e(f_e).

The solver is a conditional-gradient method over route flows.  Its linear
oracle is, per type, "put all demand on the currently cheapest route".  With
the default exact line search it takes pairwise steps (mass moves from the
most expensive active route onto the oracle route), which reach the tight
flow tolerances the regression suites need; the classic harmonic 2/(k+2)
step toward the oracle vertex is available as an alternative rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .netmodel import (
    FlowProfile,
    IbplabError,
    InstanceSpec,
    ValidationError,
    evaluate_flow,
)

_EPS = float(np.finfo(np.float64).eps)

#: Activity threshold: a route with flow above 1e-7 * demand counts as used.
ACTIVITY_REL = 1e-7


class ConvergenceError(IbplabError):
    """A solve failed to reach its tolerances within the iteration budget."""


@dataclass(frozen=True)
class SolveOptions:
    """Solver knobs.

    ``gap_tol`` and ``residual_tol`` default (when None) to
    ``1e-8 * max(1, |objective at start|)`` and ``1e-6 * max(1, c_max)``;
    the comparisons this package makes between equilibria need cost
    resolution well below typical example gaps.  ``seed`` feeds random
    initializations (used by the uniqueness check; regular solves start
    deterministically from each type's lexicographically first route).
    """

    max_iterations: int = 2000
    gap_tol: float | None = None
    feas_tol: float = 1e-9
    residual_tol: float | None = None
    step_rule: str = "exact"  # "exact" | "harmonic"
    seed: int = 42

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        for name in ("gap_tol", "residual_tol"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValidationError(f"{name} must be > 0")
        if self.feas_tol <= 0:
            raise ValidationError("feas_tol must be > 0")
        if self.step_rule not in ("exact", "harmonic"):
            raise ValidationError(f"unknown step rule {self.step_rule!r}")


@dataclass(frozen=True)
class Certificate:
    """Optimality evidence for a returned flow.

    ``residual`` is the worst excess cost of any used route over its type's
    cheapest available route.  ``duality_gap`` is the final linear-oracle
    gap, padded by a conservative rounding allowance so it remains a true
    upper bound on the suboptimality (and bounds the equilibrium violation)
    even at machine precision.
    """

    potential: float
    residual: float
    duality_gap: float
    converged: bool
    iterations: int

    def to_json(self) -> dict:
        return {
            "potential": self.potential,
            "residual": self.residual,
            "duality_gap": self.duality_gap,
            "converged": self.converged,
            "iterations": self.iterations,
        }


# ---------------------------------------------------------------------------
# Compiled instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _TypeBlock:
    type_id: str
    demand: float
    routes: tuple[tuple[str, ...], ...]
    start: int
    stop: int


class _Compiled:
    """Vectorized view of an instance: route-edge incidence plus cost arrays."""

    def __init__(self, instance: InstanceSpec):
        self.instance = instance
        self.edge_ids = instance.network.edge_ids
        self.n_edges = len(self.edge_ids)
        eidx = {eid: i for i, eid in enumerate(self.edge_ids)}
        self.costs = [instance.costs[eid] for eid in self.edge_ids]

        blocks: list[_TypeBlock] = []
        rows: list[np.ndarray] = []
        pos = 0
        for od, t in instance.all_types():
            routes = tuple(r.edges for r in instance.routes_for(od, t))
            for key in routes:
                row = np.zeros(self.n_edges)
                for eid in key:
                    row[eidx[eid]] = 1.0
                rows.append(row)
            blocks.append(_TypeBlock(t.id, t.demand, routes, pos, pos + len(routes)))
            pos += len(routes)
        self.blocks = blocks
        self.n_rows = pos
        self.A = np.vstack(rows) if rows else np.zeros((0, self.n_edges))
        self.total_demand = sum(b.demand for b in blocks)

        affs = [c.as_affine() for c in self.costs]
        self.affine = all(p is not None for p in affs)
        if self.affine:
            self.a = np.array([p[0] for p in affs])
            self.b = np.array([p[1] for p in affs])

    # -- cost machinery -----------------------------------------------------

    def edge_values(self, f: np.ndarray) -> np.ndarray:
        if self.affine:
            return self.a * f + self.b
        return np.array([c.value(x) for c, x in zip(self.costs, f)])

    def edge_marginals(self, f: np.ndarray) -> np.ndarray:
        if self.affine:
            return 2.0 * self.a * f + self.b
        return np.array([c.marginal(x) for c, x in zip(self.costs, f)])

    def grad_edges(self, f: np.ndarray, social: bool) -> np.ndarray:
        return self.edge_marginals(f) if social else self.edge_values(f)

    def objective(self, f: np.ndarray, social: bool) -> float:
        if social:
            return float(np.dot(f, self.edge_values(f)))
        if self.affine:
            return float(np.dot(0.5 * self.a * f + self.b, f))
        return float(sum(c.integral(x) for c, x in zip(self.costs, f)))

    def init_lexicographic(self) -> np.ndarray:
        f = np.zeros(self.n_rows)
        for blk in self.blocks:
            f[blk.start] = blk.demand
        return f

    def init_random_interior(self, rng: np.random.Generator) -> np.ndarray:
        f = np.zeros(self.n_rows)
        for blk in self.blocks:
            n = blk.stop - blk.start
            f[blk.start : blk.stop] = rng.dirichlet(np.ones(n)) * blk.demand
        return f


def _gap_and_residual(
    comp: _Compiled, f: np.ndarray, g_route: np.ndarray
) -> tuple[float, float, float]:
    gap = 0.0
    residual = 0.0
    cmax = 0.0
    for blk in comp.blocks:
        g = g_route[blk.start : blk.stop]
        fb = f[blk.start : blk.stop]
        gmin = float(g.min())
        cmax = max(cmax, float(np.abs(g).max()))
        gap += float(np.dot(fb, g)) - blk.demand * gmin
        thr = ACTIVITY_REL * blk.demand
        active = fb > thr
        if active.any():
            residual = max(residual, float((g[active] - gmin).max()))
    return max(gap, 0.0), max(residual, 0.0), cmax


def _gap_margin(comp: _Compiled, cmax: float) -> float:
    # Allowance for accumulated rounding in the gap/residual evaluation; keeps
    # the reported gap a rigorous upper bound.
    return 64.0 * _EPS * max(1.0, comp.total_demand) * max(1.0, cmax)


class _Minimizer:
    def __init__(self, comp: _Compiled, social: bool, opts: SolveOptions):
        self.comp = comp
        self.social = social
        self.opts = opts

    def _pair_delta(
        self, f_edge: np.ndarray, d: np.ndarray, g_gap: float, f_p: float
    ) -> float:
        comp = self.comp
        if comp.affine:
            slope = 2.0 * comp.a if self.social else comp.a
            denom = float(np.dot(slope, d * d))
            if denom <= 0.0:
                return f_p
            return min(g_gap / denom, f_p)
        lo, hi = 0.0, f_p
        g_hi = comp.grad_edges(f_edge + hi * d, self.social)
        if float(np.dot(d, g_hi)) <= 0.0:
            return f_p
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            g_mid = comp.grad_edges(f_edge + mid * d, self.social)
            if float(np.dot(d, g_mid)) <= 0.0:
                lo = mid
            else:
                hi = mid
        return lo

    def _sweep(self, f: np.ndarray, f_edge: np.ndarray) -> bool:
        """One pass of pairwise moves; returns whether anything moved."""
        comp = self.comp
        moved = False
        for blk in comp.blocks:
            if blk.stop - blk.start < 2 or blk.demand <= 0.0:
                continue
            rows = comp.A[blk.start : blk.stop]
            for _ in range(2 * (blk.stop - blk.start)):
                g = rows @ comp.grad_edges(f_edge, self.social)
                q = int(np.argmin(g))
                fb = f[blk.start : blk.stop]
                excess = np.where(fb > 0.0, g - g[q], 0.0)
                p = int(np.argmax(excess))
                if excess[p] <= 0.0:
                    break
                d = rows[q] - rows[p]
                delta = self._pair_delta(f_edge, d, float(excess[p]), float(fb[p]))
                if delta <= 0.0:
                    break
                if delta >= fb[p]:
                    delta = float(fb[p])
                    f[blk.start + p] = 0.0
                else:
                    f[blk.start + p] -= delta
                f[blk.start + q] += delta
                f_edge += delta * d
                moved = True
        return moved

    def run(self, f: np.ndarray) -> tuple[np.ndarray, Certificate]:
        comp = self.comp
        opts = self.opts
        gap_tol = opts.gap_tol
        res_tol = opts.residual_tol
        converged = False
        iterations = 0

        f_edge = comp.A.T @ f
        for k in range(opts.max_iterations):
            iterations = k + 1
            g_route = comp.A @ comp.grad_edges(f_edge, self.social)
            gap, residual, cmax = _gap_and_residual(comp, f, g_route)
            if k == 0:
                obj0 = comp.objective(f_edge, self.social)
                if gap_tol is None:
                    gap_tol = 1e-8 * max(1.0, abs(obj0))
                if res_tol is None:
                    res_tol = 1e-6 * max(1.0, cmax)
            if gap <= gap_tol and residual <= res_tol:
                converged = True
                break
            if opts.step_rule == "exact":
                if not self._sweep(f, f_edge):
                    # stationary to machine precision
                    converged = gap <= gap_tol and residual <= res_tol
                    break
                f_edge = comp.A.T @ f
            else:
                v = np.zeros_like(f)
                for blk in comp.blocks:
                    g = g_route[blk.start : blk.stop]
                    v[blk.start + int(np.argmin(g))] = blk.demand
                t = 2.0 / (k + 2.0)
                f += t * (v - f)
                f_edge = comp.A.T @ f

        if converged and opts.step_rule == "exact":
            # polish: drive the residual to its floating-point floor so the
            # rounding allowance in the reported gap dominates it
            g_route = comp.A @ comp.grad_edges(f_edge, self.social)
            _, best_res, _ = _gap_and_residual(comp, f, g_route)
            for _ in range(50):
                if best_res == 0.0 or not self._sweep(f, f_edge):
                    break
                f_edge = comp.A.T @ f
                g_route = comp.A @ comp.grad_edges(f_edge, self.social)
                _, res, _ = _gap_and_residual(comp, f, g_route)
                if res >= best_res:
                    break
                best_res = res

        f_edge = comp.A.T @ f
        g_route = comp.A @ comp.grad_edges(f_edge, self.social)
        gap, residual, cmax = _gap_and_residual(comp, f, g_route)
        cert = Certificate(
            potential=comp.objective(f_edge, self.social),
            residual=residual,
            duality_gap=gap + _gap_margin(comp, cmax),
            converged=converged,
            iterations=iterations,
        )
        return f, cert


def _profile_from_vector(
    comp: _Compiled, f: np.ndarray, feas_tol: float
) -> FlowProfile:
    flows = {}
    for blk in comp.blocks:
        for j, key in enumerate(blk.routes):
            flows[(blk.type_id, key)] = float(f[blk.start + j])
    return evaluate_flow(comp.instance, flows, require_feasible=True, feas_tol=feas_tol)


def _solve(
    instance: InstanceSpec,
    opts: SolveOptions,
    *,
    social: bool,
    init: np.ndarray | None = None,
) -> tuple[FlowProfile, Certificate]:
    comp = _Compiled(instance)
    if social:
        bad = [
            eid
            for eid, c in instance.costs.items()
            if not c.total_cost_is_convex()
        ]
        if bad:
            raise ValidationError(
                f"social optimum needs convex edge total costs; offending edges {sorted(bad)}"
            )
    f0 = comp.init_lexicographic() if init is None else np.array(init, dtype=float)
    f, cert = _Minimizer(comp, social, opts).run(f0)
    return _profile_from_vector(comp, f, opts.feas_tol), cert


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def solve_icwe(
    instance: InstanceSpec, opts: SolveOptions | None = None
) -> tuple[FlowProfile, Certificate]:
    """Compute an information-constrained Wardrop equilibrium.

    Minimizes the potential over per-type route flows; at the returned flow
    every type's used routes are within the certificate residual of its
    cheapest available route.  Works unchanged for several origin-destination
    pairs (the feasible set is separable by type; only edge flows couple).

    On non-convergence the best iterate is returned with
    ``certificate.converged == False``; nothing is raised.
    """
    return _solve(instance, opts or SolveOptions(), social=False)


def solve_social_optimum(
    instance: InstanceSpec, opts: SolveOptions | None = None
) -> tuple[FlowProfile, float]:
    """Minimize total cost over the same feasible flows as the equilibrium.

    Same machinery with the marginal-cost linearization.  Requires every
    edge's total cost x*c(x) to be convex, which holds structurally for the
    constant/affine/polynomial families and for convex piecewise-linear
    costs.  Raises :class:`ConvergenceError` if tolerances are not met.
    """
    profile, cert = _solve(instance, opts or SolveOptions(), social=True)
    if not cert.converged:
        raise ConvergenceError(
            f"social optimum did not converge in {cert.iterations} iterations"
        )
    return profile, cert.potential


def potential_value(instance: InstanceSpec, edge_flows: Mapping[str, float]) -> float:
    """The convex potential: sum over edges of the cost antiderivative."""
    return sum(
        instance.costs[eid].integral(edge_flows.get(eid, 0.0))
        for eid in instance.network.edge_ids
    )


def total_cost(instance: InstanceSpec, edge_flows: Mapping[str, float]) -> float:
    """Total travelled cost sum_e f_e c_e(f_e)."""
    return sum(
        f * instance.costs[eid].value(f)
        for eid, f in edge_flows.items()
    )


def verify_equilibrium(
    instance: InstanceSpec,
    profile: FlowProfile,
    tolerance: float | None = None,
) -> Certificate:
    """Re-derive the equilibrium conditions from scratch for a given flow.

    Independent of any solver state: edge flows, route costs, and the
    residual are recomputed from the route flows alone.  The certificate
    passes (``converged``) iff every positive-flow route of every type is
    within ``tolerance`` of that type's cheapest available route.
    """
    fresh = evaluate_flow(instance, profile.route_flows, require_feasible=True)
    residual = 0.0
    gap = 0.0
    cmax = 0.0
    for od, t in instance.all_types():
        routes = instance.routes_for(od, t)
        costs = [fresh.route_costs[r.edges] for r in routes]
        cmin = min(costs)
        cmax = max(cmax, max(abs(c) for c in costs))
        thr = ACTIVITY_REL * t.demand
        for r, c in zip(routes, costs):
            flow = fresh.route_flows.get((t.id, r.edges), 0.0)
            gap += flow * (c - cmin)
            if flow > thr:
                residual = max(residual, c - cmin)
    if tolerance is None:
        tolerance = 1e-6 * max(1.0, cmax)
    comp_margin = 64.0 * _EPS * max(1.0, instance.total_demand()) * max(1.0, cmax)
    return Certificate(
        potential=potential_value(instance, fresh.edge_flows),
        residual=max(residual, 0.0),
        duality_gap=max(gap, 0.0) + comp_margin,
        converged=residual <= tolerance,
        iterations=0,
    )


@dataclass(frozen=True, eq=False)
class UniquenessReport:
    """Cross-run agreement diagnostics for the equilibrium solver."""

    n_runs: int
    edge_cost_spread: float
    edge_flow_spread: float
    type_cost_spread: Mapping[str, float]
    tolerance: float
    passed: bool
    certificates: tuple[Certificate, ...]

    def to_json(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "edge_cost_spread": self.edge_cost_spread,
            "edge_flow_spread": self.edge_flow_spread,
            "type_cost_spread": dict(sorted(self.type_cost_spread.items())),
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def check_essential_uniqueness(
    instance: InstanceSpec,
    n_runs: int = 5,
    opts: SolveOptions | None = None,
    *,
    tolerance: float = 1e-5,
) -> UniquenessReport:
    """Solve from several random interior starts and compare edge costs.

    Equilibrium edge costs are unique even when route flows are not; the
    report passes iff the max over edges of the cost spread across all run
    pairs stays within ``tolerance``.  Edge-flow and per-type cost spreads
    are reported as well (flows coincide too when costs strictly increase).
    """
    if n_runs < 2:
        raise ValidationError("n_runs must be >= 2")
    opts = opts or SolveOptions()
    comp = _Compiled(instance)
    rng = np.random.default_rng(opts.seed)

    edge_costs = []
    edge_flows = []
    type_costs: dict[str, list[float]] = {}
    certs = []
    for run in range(n_runs):
        init = comp.init_random_interior(rng)
        profile, cert = _solve(instance, opts, social=False, init=init)
        if not cert.converged:
            raise ConvergenceError(f"uniqueness run {run} did not converge")
        certs.append(cert)
        flows = np.array([profile.edge_flows[eid] for eid in comp.edge_ids])
        costs = np.array(
            [instance.costs[eid].value(f) for eid, f in zip(comp.edge_ids, flows)]
        )
        edge_flows.append(flows)
        edge_costs.append(costs)
        for tid, c in profile.type_costs.items():
            type_costs.setdefault(tid, []).append(c)

    cost_mat = np.vstack(edge_costs)
    flow_mat = np.vstack(edge_flows)
    cost_spread = float((cost_mat.max(axis=0) - cost_mat.min(axis=0)).max())
    flow_spread = float((flow_mat.max(axis=0) - flow_mat.min(axis=0)).max())
    per_type = {tid: max(v) - min(v) for tid, v in type_costs.items()}
    return UniquenessReport(
        n_runs=n_runs,
        edge_cost_spread=cost_spread,
        edge_flow_spread=flow_spread,
        type_cost_spread=per_type,
        tolerance=tolerance,
        passed=cost_spread <= tolerance,
        certificates=tuple(certs),
    )

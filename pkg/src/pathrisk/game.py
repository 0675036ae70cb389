"""Delegated game among pathology-owning agents under a shared compute cap,
with the human-leader threshold loop and the deployment gate.

Each agent i picks a parameter vector theta_i in a box, minimizing

    J_i(theta_i) = mean over its data sample of
                   [risk_i(theta_i, x, y) + lambda * kappa ||theta_i||^2]

subject to the shared budget sum_i kappa ||theta_i||^2 <= cloud_cap. The
coupling runs only through that budget; it is enforced by giving each
agent a fixed share (equal by default, weights overridable), so a cyclic
best-response sweep solves the game. Data quality Qual(mu_i) >= tau_data
is checked, never computed.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class GameError(ValueError):
    pass


class InfeasibleGameError(GameError):
    pass


@dataclass(eq=False)
class QuadraticTargetCost:
    """Default surrogate: risk term ||theta - target||^2 plus the compute
    penalty lambda * kappa ||theta||^2. Strongly convex, so the projected
    gradient step with step 1/L lands on the constrained minimizer."""

    target: np.ndarray
    lam: float = 0.0
    kappa: float = 1.0

    def risk_term(self, theta):
        diff = np.asarray(theta, dtype=float) - self.target
        return float(diff @ diff)

    def compute_term(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.lam * self.kappa * float(theta @ theta)

    def value(self, theta):
        return self.risk_term(theta) + self.compute_term(theta)

    def grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        return 2.0 * (theta - self.target) + \
            2.0 * self.lam * self.kappa * theta

    def lipschitz(self):
        return 2.0 * (1.0 + self.lam * self.kappa)


@dataclass(eq=False)
class AgentSpec:
    pathology: str
    lo: np.ndarray
    hi: np.ndarray
    cost: QuadraticTargetCost

    def __post_init__(self):
        if np.any(self.lo > self.hi):
            raise GameError(f"{self.pathology}: empty box")

    @property
    def dim(self):
        return self.lo.size


@dataclass(eq=False)
class MeanField:
    """Per-agent empirical sample with its annotated quality score."""

    samples: tuple    # ((x, y), ...) pairs
    quality: float

    def __post_init__(self):
        if len(self.samples) == 0:
            raise GameError("mean field sample is empty")
        if not (0.0 <= self.quality <= 1.0):
            raise GameError(f"quality {self.quality} outside [0,1]")


@dataclass(frozen=True)
class SharedConstraints:
    cloud_cap: float
    tau_data: float = 0.0
    kappa: float = 1.0
    share_weights: Optional[tuple] = None

    def __post_init__(self):
        if self.cloud_cap <= 0.0:
            raise GameError("cloud_cap must be positive")
        if self.kappa <= 0.0:
            raise GameError("kappa must be positive")

    def budgets(self, n_agents):
        """Per-agent compute budgets summing to cloud_cap (equal share by
        default)."""
        if self.share_weights is None:
            return np.full(n_agents, self.cloud_cap / n_agents)
        w = np.asarray(self.share_weights, dtype=float)
        if w.size != n_agents or np.any(w <= 0):
            raise GameError("share_weights must be positive, one per agent")
        return self.cloud_cap * w / w.sum()


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    max_rounds: int = 200
    mode: str = "gauss-seidel"   # or "jacobi"
    projection_sweeps: int = 200
    projection_tol: float = 1e-14

    def __post_init__(self):
        if self.mode not in ("gauss-seidel", "jacobi"):
            raise GameError(f"unknown sweep mode {self.mode!r}")


@dataclass(eq=False)
class GameState:
    thetas: list
    residual: float
    rounds: int
    feasible: bool
    costs: list
    history: list   # (round, residual) pairs

    def to_json_dict(self, specs):
        return {"rounds": self.rounds,
                "residual": self.residual,
                "feasible": self.feasible,
                "agents": [{"pathology": s.pathology,
                            "theta": t.tolist(),
                            "cost": c,
                            "risk": s.cost.risk_term(t)}
                           for s, t, c in zip(specs, self.thetas,
                                              self.costs)],
                "history": [{"round": r, "residual": res}
                            for r, res in self.history]}


def project_box(theta, lo, hi):
    return np.minimum(np.maximum(theta, lo), hi)


def project_ball(theta, radius):
    norm = float(np.linalg.norm(theta))
    if norm <= radius:
        return theta
    return theta * (radius / norm)


def project_box_ball(theta, lo, hi, radius, sweeps=200, tol=1e-14):
    """Dykstra's alternating projection onto box intersect centered ball."""
    x = np.asarray(theta, dtype=float).copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(sweeps):
        prev = x.copy()
        y = project_box(x + p, lo, hi)
        p = x + p - y
        x = project_ball(y + q, radius)
        q = y + q - x
        if float(np.abs(x - prev).max()) <= tol:
            break
    return project_ball(project_box(x, lo, hi), radius)


def _budget_radius(budget, kappa):
    return math.sqrt(budget / kappa)


def check_feasibility(specs, mean_fields, constraints):
    """Raise unless every agent's box intersects its budget ball and every
    mean field meets the data-quality floor."""
    budgets = constraints.budgets(len(specs))
    for spec, mf, budget in zip(specs, mean_fields, budgets):
        if mf.quality < constraints.tau_data:
            raise InfeasibleGameError(
                f"{spec.pathology}: data quality {mf.quality} below "
                f"tau_data {constraints.tau_data}")
        closest = project_box(np.zeros(spec.dim), spec.lo, spec.hi)
        if constraints.kappa * float(closest @ closest) > budget + 1e-12:
            raise InfeasibleGameError(
                f"{spec.pathology}: cloud_cap share {budget:.6g} admits no "
                f"theta in the box")


def best_response(spec, budget, constraints, cfg=SolverConfig(),
                  theta0=None, max_steps=500):
    """Projected gradient descent on J_i over box intersect budget ball.

    With the default strongly convex quadratic cost and step 1/L the
    gradient step lands on the unconstrained minimizer, so a handful of
    projected steps reach the constrained optimum to projection accuracy.
    """
    radius = _budget_radius(budget, constraints.kappa)
    theta = (np.zeros(spec.dim) if theta0 is None
             else np.asarray(theta0, dtype=float).copy())
    theta = project_box_ball(theta, spec.lo, spec.hi, radius,
                             cfg.projection_sweeps, cfg.projection_tol)
    step = 1.0 / spec.cost.lipschitz()
    for _ in range(max_steps):
        candidate = project_box_ball(theta - step * spec.cost.grad(theta),
                                     spec.lo, spec.hi, radius,
                                     cfg.projection_sweeps,
                                     cfg.projection_tol)
        if float(np.abs(candidate - theta).max()) <= 1e-14:
            theta = candidate
            break
        theta = candidate
    return theta


def nash_residual(specs, thetas, budgets, constraints, cfg):
    """Largest unilateral cost improvement any agent can realize."""
    worst = 0.0
    for spec, theta, budget in zip(specs, thetas, budgets):
        best = best_response(spec, budget, constraints, cfg, theta0=theta)
        improvement = spec.cost.value(theta) - spec.cost.value(best)
        worst = max(worst, improvement)
    return max(0.0, worst)


def _total_compute(thetas, kappa):
    return kappa * sum(float(t @ t) for t in thetas)


def solve_nash(specs, mean_fields, constraints, cfg=SolverConfig()):
    """Cyclic (or Jacobi) best-response iteration to a Nash equilibrium.

    Terminates when the Nash residual drops to cfg.tol or max_rounds pass;
    a residual that grows for 10 consecutive rounds aborts with the
    trajectory attached. Every iterate respects both coupled constraints.
    """
    if len(specs) != len(mean_fields):
        raise GameError("one mean field per agent required")
    check_feasibility(specs, mean_fields, constraints)
    budgets = constraints.budgets(len(specs))
    thetas = [project_box_ball(np.zeros(s.dim), s.lo, s.hi,
                               _budget_radius(b, constraints.kappa),
                               cfg.projection_sweeps, cfg.projection_tol)
              for s, b in zip(specs, budgets)]
    history = []
    prev_residual = math.inf
    rising = 0
    rounds = 0
    for round_no in range(1, cfg.max_rounds + 1):
        rounds = round_no
        if cfg.mode == "jacobi":
            thetas = [best_response(s, b, constraints, cfg, theta0=t)
                      for s, t, b in zip(specs, thetas, budgets)]
        else:
            for i, (s, b) in enumerate(zip(specs, budgets)):
                thetas[i] = best_response(s, b, constraints, cfg,
                                          theta0=thetas[i])
        if _total_compute(thetas, constraints.kappa) > \
                constraints.cloud_cap + 1e-9:
            raise GameError("iterate violates the shared compute cap")
        residual = nash_residual(specs, thetas, budgets, constraints, cfg)
        history.append((round_no, residual))
        if residual <= cfg.tol:
            break
        rising = rising + 1 if residual > prev_residual else 0
        if rising >= 10:
            raise GameError(
                f"best-response iteration diverging; residual trajectory "
                f"{[f'{r:.3e}' for _, r in history]}")
        prev_residual = residual
    final_residual = history[-1][1] if history else 0.0
    return GameState(thetas=thetas, residual=final_residual, rounds=rounds,
                     feasible=final_residual <= cfg.tol,
                     costs=[s.cost.value(t) for s, t in zip(specs, thetas)],
                     history=history)


@dataclass(frozen=True)
class GateResult:
    accepted: bool
    violations: tuple   # (pathology, risk, eps, slack) sorted by slack desc
    risks: dict
    eps: dict

    def to_json_dict(self):
        return {"accepted": self.accepted,
                "violations": [{"pathology": p, "risk": r, "eps": e,
                                "slack": s}
                               for p, r, e, s in self.violations],
                "risks": dict(sorted(self.risks.items())),
                "eps": {k: (v if math.isfinite(v) else "inf")
                        for k, v in sorted(self.eps.items())}}


def deployment_gate(risks, eps):
    """Accept iff every available risk satisfies R_i <= eps_i (inclusive).

    risks and eps are {pathology: value} maps; pathologies without a risk
    value are not gated. Rejections list violators by slack, worst first.
    """
    violations = []
    for pathology in sorted(risks):
        if pathology not in eps:
            raise GameError(f"no epsilon threshold for {pathology!r}")
        slack = risks[pathology] - eps[pathology]
        if slack > 0.0:
            violations.append((pathology, risks[pathology], eps[pathology],
                               slack))
    violations.sort(key=lambda v: (-v[3], v[0]))
    return GateResult(accepted=not violations, violations=tuple(violations),
                      risks=dict(risks), eps=dict(eps))


def equilibrium_risks(specs, state):
    """Risk term of each agent's cost at equilibrium (compute penalty
    excluded), the R_i the gate compares against the thresholds."""
    return {s.pathology: s.cost.risk_term(t)
            for s, t in zip(specs, state.thetas)}


def stackelberg_loop(schedule, specs, mean_fields, constraints,
                     cfg=SolverConfig(), risks_override=None):
    """Leader loop: for each epsilon vector, recompute the followers'
    equilibrium, gate it, and report the least-restrictive accepted
    epsilon under the componentwise order when one exists."""
    schedule = list(schedule)
    if not schedule:
        raise GameError("empty epsilon schedule")
    trace = []
    accepted = []
    for eps in schedule:
        state = solve_nash(specs, mean_fields, constraints, cfg)
        risks = (dict(risks_override) if risks_override is not None
                 else equilibrium_risks(specs, state))
        gate = deployment_gate(risks, eps)
        trace.append({"eps": dict(eps), "state": state, "gate": gate})
        if gate.accepted:
            accepted.append(eps)

    def leq(a, b):
        return all(a[k] <= b[k] for k in a)

    best = None
    for eps in accepted:
        if all(leq(other, eps) for other in accepted):
            best = eps
            break
    return {"trace": trace, "accepted": accepted,
            "least_restrictive_accepted": best}


# --- scenario files ------------------------------------------------------------


def _parse_eps_entry(entry, pathologies):
    if isinstance(entry, dict):
        default = float(entry.get("default", math.inf))
        return {p: float(entry.get(p, default)) for p in pathologies}
    values = [float(v) for v in entry]
    if len(values) != len(pathologies):
        raise GameError(f"epsilon vector length {len(values)} != number of "
                        f"agents {len(pathologies)}")
    return dict(zip(pathologies, values))


def load_scenario(path):
    """Parse a scenario JSON file into solver inputs.

    Layout: kappa, cloud_cap, tau_data, optional lambda/share_weights/
    solver settings, an agents array ({pathology, lo, hi, target}), a
    mean_field map ({pathology: {quality, samples}}), an optional
    epsilon_schedule, and optional audit-derived risks.
    """
    with open(path, "r", encoding="utf-8") as handle:
        obj = json.load(handle)
    lam = float(obj.get("lambda", 0.0))
    kappa = float(obj.get("kappa", 1.0))
    specs = []
    for agent in obj["agents"]:
        dim = len(agent["target"])
        lo = agent.get("lo", -math.inf)
        hi = agent.get("hi", math.inf)
        lo_vec = np.full(dim, float(lo)) if np.isscalar(lo) \
            else np.asarray(lo, dtype=float)
        hi_vec = np.full(dim, float(hi)) if np.isscalar(hi) \
            else np.asarray(hi, dtype=float)
        specs.append(AgentSpec(
            pathology=str(agent["pathology"]), lo=lo_vec, hi=hi_vec,
            cost=QuadraticTargetCost(
                target=np.asarray(agent["target"], dtype=float),
                lam=float(agent.get("lambda", lam)), kappa=kappa)))
    mf_obj = obj.get("mean_field", {})
    mean_fields = []
    for spec in specs:
        entry = mf_obj.get(spec.pathology,
                           {"quality": 1.0, "samples": [[[0.0], [0.0]]]})
        samples = tuple((np.asarray(x, dtype=float),
                         np.asarray(y, dtype=float))
                        for x, y in entry["samples"])
        mean_fields.append(MeanField(samples=samples,
                                     quality=float(entry["quality"])))
    weights = obj.get("share_weights")
    constraints = SharedConstraints(
        cloud_cap=float(obj["cloud_cap"]),
        tau_data=float(obj.get("tau_data", 0.0)),
        kappa=kappa,
        share_weights=tuple(weights) if weights is not None else None)
    cfg = SolverConfig(tol=float(obj.get("tol", 1e-6)),
                       max_rounds=int(obj.get("max_rounds", 200)),
                       mode=str(obj.get("mode", "gauss-seidel")))
    pathologies = [s.pathology for s in specs]
    schedule = [_parse_eps_entry(e, pathologies)
                for e in obj.get("epsilon_schedule", [])]
    risks = obj.get("risks")
    if risks is not None:
        risks = {str(k): float(v) for k, v in risks.items()}
    return {"specs": specs, "mean_fields": mean_fields,
            "constraints": constraints, "cfg": cfg, "schedule": schedule,
            "risks": risks, "seed": int(obj.get("seed", 0))}

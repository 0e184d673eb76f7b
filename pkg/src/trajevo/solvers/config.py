"""Solver configurations: a mechanism (search logic) plus a schedule
(runtime control), together fully determining a backbone run.

The mechanism decides which transitions the search can make (neighborhoods,
move operators, acceptance, guidance, perturbation design); the schedule
decides when and for how long (time cap, loop and stagnation budgets,
trigger rules). The JSON wire format keeps the flat field names
(knn_k, top_k, gls_lambda, weight, lam, kick_strength, time_limit_s,
loop_max, max_no_improve) so configs are directly comparable across tools.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

TSP_OPERATORS = ("2opt", "or_opt")
SCAN_MODES = ("first", "best")
ACCEPTANCE_RULES = ("improve_only",)
PERTURBATION_OPERATORS = ("2opt_kick", "double_bridge")
GOA_RULES = ("best_fit", "first_fit", "scored")
ACO_DEPOSITS = ("best_of_iter",)
ACO_HEURISTICS = ("auto", "inv_distance", "profit_density")

# catalog bounds used by validation and canonicalization
BOUNDS = {
    "knn_k": (2, 64),
    "top_k": (1, 16),
    "gls_lambda": (0.01, 10.0),
    "weight": (0.0, 10.0),
    "lam": (0.0, 2.0),
    "kick_strength": (1, 10),
    "alpha": (0.1, 8.0),
    "beta": (0.1, 8.0),
    "rho": (0.01, 0.9),
    "n_ants": (2, 128),
    "sliver_threshold": (1, 64),
}


def _clamp(name: str, value):
    lo, hi = BOUNDS[name]
    return min(max(value, lo), hi)


@dataclass(frozen=True)
class GuidanceConfig:
    enabled: bool = True
    top_k: int = 1
    gls_lambda: float = 0.3
    weight: float = 1.0  # penalty increment per selected edge
    lam: float = 0.0  # exponent of the length emphasis in edge utilities

    def validate(self) -> None:
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not (self.gls_lambda > 0.0):
            raise ValueError("gls_lambda must be > 0")
        if self.weight < 0.0 or self.lam < 0.0:
            raise ValueError("guidance weight and lam must be >= 0")


@dataclass(frozen=True)
class PerturbationConfig:
    operator: str = "2opt_kick"
    kick_strength: int = 1

    def validate(self) -> None:
        if self.operator not in PERTURBATION_OPERATORS:
            raise ValueError(f"unknown perturbation operator {self.operator!r}")
        if self.kick_strength < 1:
            raise ValueError("kick_strength must be >= 1")


@dataclass(frozen=True)
class TspMechanism:
    knn_k: int = 10
    operator: str = "2opt"
    scan: str = "first"
    acceptance: str = "improve_only"
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)

    def validate(self) -> None:
        if self.knn_k < 2:
            raise ValueError("knn_k must be >= 2")
        if self.operator not in TSP_OPERATORS:
            raise ValueError(f"unknown local-improvement operator {self.operator!r}")
        if self.scan not in SCAN_MODES:
            raise ValueError(f"unknown scan mode {self.scan!r}")
        if self.acceptance not in ACCEPTANCE_RULES:
            raise ValueError(f"unknown acceptance rule {self.acceptance!r}")
        self.guidance.validate()
        self.perturbation.validate()


@dataclass(frozen=True)
class AcoMechanism:
    alpha: float = 1.0
    beta: float = 2.0
    rho: float = 0.1
    n_ants: int = 20
    deposit: str = "best_of_iter"
    heuristic: str = "auto"

    def validate(self) -> None:
        if not (0.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (0, 1)")
        if self.alpha <= 0.0 or self.beta < 0.0:
            raise ValueError("alpha must be > 0 and beta >= 0")
        if self.n_ants < 1:
            raise ValueError("n_ants must be >= 1")
        if self.deposit not in ACO_DEPOSITS:
            raise ValueError(f"unknown deposit rule {self.deposit!r}")
        if self.heuristic not in ACO_HEURISTICS:
            raise ValueError(f"unknown heuristic rule {self.heuristic!r}")


@dataclass(frozen=True)
class GoaMechanism:
    rule: str = "best_fit"
    sliver_threshold: int = 10  # scored rule: avoid leaving 0 < residual < threshold

    def validate(self) -> None:
        if self.rule not in GOA_RULES:
            raise ValueError(f"unknown bin scoring rule {self.rule!r}")
        if self.sliver_threshold < 1:
            raise ValueError("sliver_threshold must be >= 1")


Mechanism = TspMechanism | AcoMechanism | GoaMechanism


@dataclass(frozen=True)
class ScheduleConfig:
    time_limit_s: float = 10.0
    loop_max: int = 1000
    max_no_improve: int = 150
    guidance_update_every: int = 1
    perturbation_mode: str = "stagnation_mod"
    perturbation_period: int = 8
    ls_move_cap: int = 1_000_000  # per-phase cap on applied moves

    def validate(self) -> None:
        if not (self.time_limit_s > 0.0):
            raise ValueError("time_limit_s must be > 0")
        if self.loop_max < 1 or self.max_no_improve < 1:
            raise ValueError("loop_max and max_no_improve must be >= 1")
        if self.guidance_update_every < 1:
            raise ValueError("guidance_update_every must be >= 1")
        if self.perturbation_mode != "stagnation_mod":
            raise ValueError(f"unknown perturbation trigger {self.perturbation_mode!r}")
        if self.perturbation_period < 1:
            raise ValueError("perturbation_period must be >= 1")
        if self.ls_move_cap < 1:
            raise ValueError("ls_move_cap must be >= 1")


@dataclass(frozen=True)
class SolverConfig:
    backbone: str  # "gls" (TSP, also ILS-style) | "aco" (CVRP/MKP) | "goa" (BPP)
    mechanism: Mechanism
    schedule: ScheduleConfig

    def validate(self) -> None:
        expected = {"gls": TspMechanism, "aco": AcoMechanism, "goa": GoaMechanism}
        if self.backbone not in expected:
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if not isinstance(self.mechanism, expected[self.backbone]):
            raise ValueError(
                f"backbone {self.backbone!r} requires {expected[self.backbone].__name__}"
            )
        self.mechanism.validate()
        self.schedule.validate()


# ---------------------------------------------------------------------------
# JSON wire format
# ---------------------------------------------------------------------------


def config_to_json(config: SolverConfig) -> dict:
    mech = config.mechanism
    if isinstance(mech, TspMechanism):
        mech_obj = {
            "knn_k": mech.knn_k,
            "operator": mech.operator,
            "scan": mech.scan,
            "acceptance": mech.acceptance,
            "guidance": {
                "enabled": mech.guidance.enabled,
                "top_k": mech.guidance.top_k,
                "gls_lambda": mech.guidance.gls_lambda,
                "weight": mech.guidance.weight,
                "lam": mech.guidance.lam,
            },
            "perturbation": {
                "operator": mech.perturbation.operator,
                "kick_strength": mech.perturbation.kick_strength,
            },
        }
    elif isinstance(mech, AcoMechanism):
        mech_obj = {
            "alpha": mech.alpha,
            "beta": mech.beta,
            "rho": mech.rho,
            "n_ants": mech.n_ants,
            "deposit": mech.deposit,
            "heuristic": mech.heuristic,
        }
    else:
        mech_obj = {"rule": mech.rule, "sliver_threshold": mech.sliver_threshold}
    sched = config.schedule
    return {
        "backbone": config.backbone,
        "mechanism": mech_obj,
        "schedule": {
            "time_limit_s": sched.time_limit_s,
            "loop_max": sched.loop_max,
            "max_no_improve": sched.max_no_improve,
            "guidance_update_every": sched.guidance_update_every,
            "perturbation_trigger": {
                "mode": sched.perturbation_mode,
                "period": sched.perturbation_period,
            },
            "ls_move_cap": sched.ls_move_cap,
        },
    }


def config_from_json(obj: dict) -> SolverConfig:
    backbone = obj["backbone"]
    m = obj["mechanism"]
    if backbone == "gls":
        g = m.get("guidance", {})
        p = m.get("perturbation", {})
        mech: Mechanism = TspMechanism(
            knn_k=int(m["knn_k"]),
            operator=m.get("operator", "2opt"),
            scan=m.get("scan", "first"),
            acceptance=m.get("acceptance", "improve_only"),
            guidance=GuidanceConfig(
                enabled=bool(g.get("enabled", True)),
                top_k=int(g.get("top_k", 1)),
                gls_lambda=float(g.get("gls_lambda", 0.3)),
                weight=float(g.get("weight", 1.0)),
                lam=float(g.get("lam", 0.0)),
            ),
            perturbation=PerturbationConfig(
                operator=p.get("operator", "2opt_kick"),
                kick_strength=int(p.get("kick_strength", 1)),
            ),
        )
    elif backbone == "aco":
        mech = AcoMechanism(
            alpha=float(m["alpha"]),
            beta=float(m["beta"]),
            rho=float(m["rho"]),
            n_ants=int(m["n_ants"]),
            deposit=m.get("deposit", "best_of_iter"),
            heuristic=m.get("heuristic", "auto"),
        )
    elif backbone == "goa":
        mech = GoaMechanism(
            rule=m.get("rule", "best_fit"),
            sliver_threshold=int(m.get("sliver_threshold", 10)),
        )
    else:
        raise ValueError(f"unknown backbone {backbone!r}")
    s = obj["schedule"]
    trigger = s.get("perturbation_trigger", {})
    schedule = ScheduleConfig(
        time_limit_s=float(s["time_limit_s"]),
        loop_max=int(s["loop_max"]),
        max_no_improve=int(s["max_no_improve"]),
        guidance_update_every=int(s.get("guidance_update_every", 1)),
        perturbation_mode=trigger.get("mode", "stagnation_mod"),
        perturbation_period=int(trigger.get("period", 8)),
        ls_move_cap=int(s.get("ls_move_cap", 1_000_000)),
    )
    config = SolverConfig(backbone=backbone, mechanism=mech, schedule=schedule)
    config.validate()
    return config


def config_id(config: SolverConfig) -> str:
    """Short content hash of the canonical JSON form."""
    blob = json.dumps(config_to_json(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# canonicalization (behavior-preserving simplification in config space)
# ---------------------------------------------------------------------------


def canonicalize(config: SolverConfig) -> SolverConfig:
    """Clamp fields to catalog bounds, disable guidance whose penalty weight
    rounds to zero, and reset parameters of disabled blocks to defaults.
    Idempotent; never changes behavior of a valid config."""
    mech = config.mechanism
    if isinstance(mech, TspMechanism):
        g = mech.guidance
        enabled = g.enabled and round(g.weight) != 0
        if enabled:
            g = GuidanceConfig(
                enabled=True,
                top_k=int(_clamp("top_k", g.top_k)),
                gls_lambda=float(_clamp("gls_lambda", g.gls_lambda)),
                weight=float(_clamp("weight", g.weight)),
                lam=float(_clamp("lam", g.lam)),
            )
        else:
            g = GuidanceConfig(enabled=False)  # unused params reset to defaults
        mech = TspMechanism(
            knn_k=int(_clamp("knn_k", mech.knn_k)),
            operator=mech.operator,
            scan=mech.scan,
            acceptance=mech.acceptance,
            guidance=g,
            perturbation=PerturbationConfig(
                operator=mech.perturbation.operator,
                kick_strength=int(_clamp("kick_strength", mech.perturbation.kick_strength)),
            ),
        )
    elif isinstance(mech, AcoMechanism):
        mech = AcoMechanism(
            alpha=float(_clamp("alpha", mech.alpha)),
            beta=float(_clamp("beta", mech.beta)),
            rho=float(_clamp("rho", mech.rho)),
            n_ants=int(_clamp("n_ants", mech.n_ants)),
            deposit=mech.deposit,
            heuristic=mech.heuristic,
        )
    else:
        mech = GoaMechanism(
            rule=mech.rule,
            sliver_threshold=int(_clamp("sliver_threshold", mech.sliver_threshold)),
        )
    return replace(config, mechanism=mech)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def seed_config(task: str, time_limit_s: float = 10.0) -> SolverConfig:
    """The fixed task-specific starting configuration for evolution."""
    schedule = ScheduleConfig(time_limit_s=time_limit_s)
    if task == "tsp":
        return SolverConfig(backbone="gls", mechanism=TspMechanism(), schedule=schedule)
    if task in ("cvrp", "mkp"):
        return SolverConfig(backbone="aco", mechanism=AcoMechanism(), schedule=schedule)
    if task == "bpp":
        return SolverConfig(backbone="goa", mechanism=GoaMechanism(), schedule=schedule)
    raise ValueError(f"unknown task {task!r}")


def ils_config(time_limit_s: float = 10.0) -> SolverConfig:
    """Iterated-local-search variant: guidance off, double-bridge kicks."""
    return SolverConfig(
        backbone="gls",
        mechanism=TspMechanism(
            guidance=GuidanceConfig(enabled=False),
            perturbation=PerturbationConfig(operator="double_bridge", kick_strength=1),
        ),
        schedule=ScheduleConfig(time_limit_s=time_limit_s),
    )


def tsplib_specialist_config() -> SolverConfig:
    """The early-terminating TSPLIB specialist configuration: tight kNN
    first-improvement 2-opt with strong multi-edge guidance under a
    compressed 4 s cap."""
    return SolverConfig(
        backbone="gls",
        mechanism=TspMechanism(
            knn_k=16,
            operator="2opt",
            scan="first",
            guidance=GuidanceConfig(enabled=True, top_k=4, gls_lambda=1.2, weight=1.0, lam=0.5),
            perturbation=PerturbationConfig(operator="2opt_kick", kick_strength=1),
        ),
        schedule=ScheduleConfig(
            time_limit_s=4.0,
            loop_max=150,
            max_no_improve=30,
            guidance_update_every=1,
            perturbation_period=8,
        ),
    )

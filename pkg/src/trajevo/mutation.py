"""Layer-constrained configuration proposals.

Four evolution layers edit a parent configuration, each confined to one half:
the two mechanism layers (``discover`` mutates search logic, ``consolidate``
canonicalizes it) must leave the schedule bit-identical, and the two schedule
layers (``compress`` shrinks budgets, ``enhance`` reallocates them without
raising the time cap) must leave the mechanism bit-identical.

Two providers implement the same interface: a deterministic seeded stub
(default, fully offline) and an HTTP provider speaking a chat-completions
JSON contract whose replies are schema-validated before leaving this module
(falling back to the stub after repeated invalid replies).
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import requests

from .solvers.config import (
    AcoMechanism,
    GoaMechanism,
    GuidanceConfig,
    PerturbationConfig,
    SolverConfig,
    TspMechanism,
    canonicalize,
    config_from_json,
    config_to_json,
)


class Layer(str, Enum):
    DISCOVER = "discover"  # mechanism discovery: one exploratory edit
    CONSOLIDATE = "consolidate"  # mechanism consolidation: canonicalize
    COMPRESS = "compress"  # schedule compression: shrink budgets
    ENHANCE = "enhance"  # schedule enhancement: reallocate within the cap

    @property
    def edits_mechanism(self) -> bool:
        return self in (Layer.DISCOVER, Layer.CONSOLIDATE)


@dataclass(frozen=True)
class Feedback:
    """Batch-mean evaluation summary forwarded to providers."""

    terminal_log_residual: float
    decay_rate: float
    runtime: float
    phase_shares: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MutationRequest:
    layer: Layer
    parent: SolverConfig
    feedback: Feedback | None
    seed: int


@dataclass(frozen=True)
class MutationResponse:
    candidate: SolverConfig
    provenance: str


class ProviderError(RuntimeError):
    """Provider could not produce a valid candidate; the caller skips the step."""


def check_layer_constraint(layer: Layer, parent: SolverConfig, candidate: SolverConfig) -> None:
    """Raise unless the non-editable half is bit-identical to the parent."""
    parent_obj = config_to_json(parent)
    cand_obj = config_to_json(candidate)
    if layer.edits_mechanism:
        if cand_obj["schedule"] != parent_obj["schedule"]:
            raise ValueError(f"{layer.value} proposal modified the schedule")
    else:
        if cand_obj["mechanism"] != parent_obj["mechanism"]:
            raise ValueError(f"{layer.value} proposal modified the mechanism")
    if layer is Layer.ENHANCE:
        if candidate.schedule.time_limit_s > parent.schedule.time_limit_s:
            raise ValueError("enhance proposal raised the time cap")
    candidate.validate()


# ---------------------------------------------------------------------------
# deterministic stub provider
# ---------------------------------------------------------------------------

_SHRINK_FACTORS = (0.8, 0.9)
_SCALE_FACTORS = (0.8, 1.25)


def _discover_tsp(mech: TspMechanism, rng: np.random.Generator) -> TspMechanism:
    edit = rng.integers(0, 4)
    if edit == 0:
        step = int(rng.choice([2, 4]) * rng.choice([-1, 1]))
        return replace(mech, knn_k=max(2, mech.knn_k + step))
    if edit == 1:
        return replace(mech, scan="best" if mech.scan == "first" else "first")
    if edit == 2:
        step = int(rng.choice([-1, 1]))
        strength = max(1, mech.perturbation.kick_strength + step)
        return replace(mech, perturbation=replace(mech.perturbation, kick_strength=strength))
    factor = float(rng.choice(_SCALE_FACTORS))
    which = int(rng.integers(0, 3))
    g = mech.guidance
    if which == 0:
        g = replace(g, gls_lambda=max(0.01, g.gls_lambda * factor))
    elif which == 1:
        g = replace(g, weight=g.weight * factor)
    else:
        g = replace(g, lam=g.lam * factor)
    return replace(mech, guidance=g)


def _discover_aco(mech: AcoMechanism, rng: np.random.Generator) -> AcoMechanism:
    edit = rng.integers(0, 4)
    factor = float(rng.choice(_SCALE_FACTORS))
    if edit == 0:
        return replace(mech, alpha=min(8.0, max(0.1, mech.alpha * factor)))
    if edit == 1:
        return replace(mech, beta=min(8.0, max(0.1, mech.beta * factor)))
    if edit == 2:
        return replace(mech, rho=min(0.9, max(0.01, mech.rho * factor)))
    step = int(rng.choice([2, 4]) * rng.choice([-1, 1]))
    return replace(mech, n_ants=max(2, mech.n_ants + step))


def _discover_goa(mech: GoaMechanism, rng: np.random.Generator) -> GoaMechanism:
    edit = rng.integers(0, 2)
    if edit == 0:
        order = ("best_fit", "first_fit", "scored")
        nxt = order[(order.index(mech.rule) + 1) % len(order)]
        return replace(mech, rule=nxt)
    factor = float(rng.choice(_SCALE_FACTORS))
    return replace(mech, sliver_threshold=max(1, int(round(mech.sliver_threshold * factor))))


class StubProvider:
    """Seeded, fully offline proposal generator with fixed factor menus."""

    name = "stub"

    def propose(self, request: MutationRequest) -> MutationResponse:
        parent = request.parent
        rng = np.random.default_rng(request.seed)
        layer = request.layer
        if layer is Layer.DISCOVER:
            mech = parent.mechanism
            if isinstance(mech, TspMechanism):
                mech = _discover_tsp(mech, rng)
            elif isinstance(mech, AcoMechanism):
                mech = _discover_aco(mech, rng)
            else:
                mech = _discover_goa(mech, rng)
            candidate = canonicalize(replace(parent, mechanism=mech))
            # canonicalization bounds the edit; the schedule half stays intact
            candidate = replace(candidate, schedule=parent.schedule)
        elif layer is Layer.CONSOLIDATE:
            candidate = replace(canonicalize(parent), schedule=parent.schedule)
        elif layer is Layer.COMPRESS:
            sched = parent.schedule
            factor = float(rng.choice(_SHRINK_FACTORS))
            candidate = replace(
                parent,
                schedule=replace(
                    sched,
                    time_limit_s=sched.time_limit_s * factor,
                    loop_max=max(1, int(np.ceil(sched.loop_max * 0.8))),
                    max_no_improve=max(1, int(np.ceil(sched.max_no_improve * 0.8))),
                ),
            )
        else:  # ENHANCE: reallocate under the same cap
            sched = parent.schedule
            if rng.integers(0, 2) == 0:
                sched = replace(
                    sched, max_no_improve=max(1, int(np.ceil(sched.max_no_improve * 1.25)))
                )
            else:
                step = int(rng.choice([-1, 1]))
                sched = replace(sched, perturbation_period=max(1, sched.perturbation_period + step))
            candidate = replace(parent, schedule=sched)
        check_layer_constraint(layer, parent, candidate)
        return MutationResponse(candidate=candidate, provenance=f"stub:{layer.value}:{request.seed}")


# ---------------------------------------------------------------------------
# HTTP provider (chat-completions style JSON)
# ---------------------------------------------------------------------------

_LAYER_INSTRUCTIONS = {
    Layer.DISCOVER: (
        "Propose one exploratory edit to the mechanism object only. "
        "The schedule object must be returned unchanged."
    ),
    Layer.CONSOLIDATE: (
        "Simplify/normalize the mechanism object without changing behavior "
        "(clamp to bounds, drop inert blocks). The schedule must be unchanged."
    ),
    Layer.COMPRESS: (
        "Edit the schedule object only, reducing runtime budgets "
        "(time_limit_s, loop_max, max_no_improve). The mechanism must be unchanged."
    ),
    Layer.ENHANCE: (
        "Edit the schedule object only, reallocating effort without "
        "increasing time_limit_s. The mechanism must be unchanged."
    ),
}


@dataclass
class LlmSettings:
    base_url: str
    model: str
    temperature: float = 0.7
    api_key_env: str = "TRAJEVO_API_KEY"
    timeout_s: float = 60.0
    max_retries: int = 3
    max_inflight: int = 4
    audit_path: str | None = None


class LlmProvider:
    """Talks to a chat-completions endpoint; replies must be a JSON solver
    configuration. Invalid replies are retried up to ``max_retries`` times and
    then delegated to the stub; transport failures surface as ProviderError.
    """

    name = "llm"

    def __init__(self, settings: LlmSettings, post_fn=None) -> None:
        self.settings = settings
        self._post = post_fn or requests.post
        self._stub = StubProvider()
        self._gate = threading.Semaphore(settings.max_inflight)
        self._audit_lock = threading.Lock()

    def _audit(self, record: dict) -> None:
        if not self.settings.audit_path:
            return
        with self._audit_lock:
            with open(self.settings.audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")

    def _prompt(self, request: MutationRequest) -> list[dict]:
        payload = {
            "layer": request.layer.value,
            "instruction": _LAYER_INSTRUCTIONS[request.layer],
            "parent_config": config_to_json(request.parent),
            "feedback": None,
        }
        if request.feedback is not None:
            payload["feedback"] = {
                "terminal_log_residual": request.feedback.terminal_log_residual,
                "decay_rate": request.feedback.decay_rate,
                "runtime": request.feedback.runtime,
                "phase_shares": request.feedback.phase_shares,
            }
        system = (
            "You tune metaheuristic solver configurations. Reply with a single "
            "JSON object: the full revised configuration in exactly the same "
            "schema as parent_config. No prose."
        )
        return [
            {"role": "system", "content": system},
            {"role": "user", "content": json.dumps(payload)},
        ]

    def propose(self, request: MutationRequest) -> MutationResponse:
        key = os.environ.get(self.settings.api_key_env, "")
        if not key:
            raise ProviderError(
                f"missing API key (set ${self.settings.api_key_env}) for the LLM provider"
            )
        url = self.settings.base_url.rstrip("/") + "/chat/completions"
        body = {
            "model": self.settings.model,
            "temperature": self.settings.temperature,
            "messages": self._prompt(request),
        }
        last_error = "invalid reply"
        for attempt in range(self.settings.max_retries):
            with self._gate:
                try:
                    resp = self._post(
                        url,
                        json=body,
                        headers={"Authorization": f"Bearer {key}"},
                        timeout=self.settings.timeout_s,
                    )
                except Exception as exc:
                    self._audit({"ts": time.time(), "request": body, "error": str(exc)})
                    raise ProviderError(f"endpoint unreachable: {exc}") from exc
            self._audit({"ts": time.time(), "request": body, "status": resp.status_code,
                         "response": resp.text[:20000]})
            if resp.status_code != 200:
                last_error = f"HTTP {resp.status_code}"
                continue
            try:
                content = resp.json()["choices"][0]["message"]["content"]
                candidate = config_from_json(json.loads(content))
                check_layer_constraint(request.layer, request.parent, candidate)
            except Exception as exc:  # schema-invalid reply; retry
                last_error = str(exc)
                continue
            return MutationResponse(
                candidate=candidate, provenance=f"llm:{self.settings.model}:{request.layer.value}"
            )
        # validation kept failing: fall back to the deterministic stub
        fallback = self._stub.propose(request)
        return MutationResponse(
            candidate=fallback.candidate,
            provenance=f"stub-fallback({last_error[:80]}):{request.layer.value}",
        )


def make_provider(kind: str, settings: LlmSettings | None = None, post_fn=None):
    if kind == "stub":
        return StubProvider()
    if kind == "llm":
        if settings is None:
            raise ValueError("LLM provider requires settings")
        return LlmProvider(settings, post_fn=post_fn)
    raise ValueError(f"unknown provider kind {kind!r}")

"""Discrete planning over sampled values.

A problem couples three ingredients:

* action schemas with static preconditions (facts that never change and
  gate grounding) and fluent preconditions/effects (facts the plan edits),
* streams, which sample new typed values (grasps, configurations, paths)
  and certify static facts about them,
* an initial fluent state and a ground conjunctive goal.

Solving alternates grounding-plus-search with one round of stream
invocations, so cheap plans that need few sampled values are found before
the fact database grows.  Search is uniform cost over fluent states; every
action pays its own cost plus a small per-step constant, which breaks cost
ties toward shorter plans.

Everything is deterministic for a fixed seed.  Values are numbered in
creation order, stream invocations seed their generators from the seed,
the stream name, the input binding, and a persistent attempt counter, and
search breaks remaining ties by heap insertion order.  Two runs with the
same seed produce identical plans and identical serialized output.

Streams are responsible for not re-emitting a value they already produced
for the same inputs: exhaustive streams should return everything at
attempt zero and nothing afterwards, while incremental streams should make
attempt ``n`` produce only its own candidates.
"""

from __future__ import annotations

import heapq
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "STEP_COST",
    "Value",
    "ValueRegistry",
    "ActionSchema",
    "Stream",
    "Problem",
    "GroundAction",
    "SolveResult",
    "solve",
    "validate_plan",
    "plan_to_dict",
    "format_plan",
    "serialize_payload",
]

STEP_COST = 1e-3


class Value:
    """A sampled object; identity is its creation index, payload is opaque."""

    __slots__ = ("index", "kind", "payload")

    def __init__(self, index: int, kind: str, payload):
        self.index = index
        self.kind = kind
        self.payload = payload

    @property
    def name(self) -> str:
        return f"v{self.index}"

    def __repr__(self) -> str:
        return f"<{self.kind} {self.name}>"


class ValueRegistry:
    """Creation-ordered registry; the order fixes value names across runs."""

    def __init__(self):
        self._items: list[Value] = []

    def add(self, kind: str, payload) -> Value:
        v = Value(len(self._items), kind, payload)
        self._items.append(v)
        return v

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)


def _is_var(term) -> bool:
    return isinstance(term, str) and term.startswith("?")


def _arg_key(arg) -> str:
    return arg if isinstance(arg, str) else arg.name


def _fact_key(fact) -> tuple:
    return (fact[0],) + tuple(_arg_key(a) for a in fact[1:])


def _pretty(fact) -> str:
    return "(" + " ".join([fact[0]] + [_arg_key(a) for a in fact[1:]]) + ")"


def _collect_vars(patterns):
    out = []
    for pat in patterns:
        for term in pat[1:]:
            if _is_var(term) and term not in out:
                out.append(term)
    return out


@dataclass(frozen=True)
class ActionSchema:
    """Lifted action.  ``params`` must all be bound by ``static_pre``."""

    name: str
    params: tuple
    static_pre: tuple
    fluent_pre: tuple
    add: tuple
    delete: tuple
    neq: tuple = ()
    cost_fn: object = None

    def __post_init__(self):
        bound = set(self.params) | set(_collect_vars(self.static_pre))
        for group in (self.fluent_pre, self.add, self.delete):
            for var in _collect_vars(group):
                if var not in bound:
                    raise ValueError(f"{self.name}: unbound variable {var}")
        for a, b in self.neq:
            if a not in bound or b not in bound:
                raise ValueError(f"{self.name}: neq over unknown variables")


@dataclass(frozen=True)
class Stream:
    """Value sampler.  ``sample(binding, attempt, rng)`` returns output tuples."""

    name: str
    inputs: tuple
    domain_facts: tuple
    outputs: tuple
    certified: tuple
    sample: object

    def __post_init__(self):
        bound = set(self.inputs) | set(self.outputs)
        for var in _collect_vars(self.domain_facts):
            if var not in set(self.inputs):
                raise ValueError(f"{self.name}: domain over unknown input {var}")
        for var in _collect_vars(self.certified):
            if var not in bound:
                raise ValueError(f"{self.name}: certifies unknown variable {var}")


@dataclass
class Problem:
    statics: list
    init: list
    goal: list
    schemas: list
    streams: list
    registry: ValueRegistry = field(default_factory=ValueRegistry)


class GroundAction:
    __slots__ = ("schema", "args", "binding", "fluent_pre", "add", "delete", "cost", "key")

    def __init__(self, schema: ActionSchema, binding: dict, cost: float):
        self.schema = schema
        self.binding = binding
        self.args = tuple(binding[p] for p in schema.params)
        self.key = (schema.name, tuple(_arg_key(a) for a in self.args))
        self.fluent_pre = frozenset(_instantiate(f, binding) for f in schema.fluent_pre)
        self.add = frozenset(_instantiate(f, binding) for f in schema.add)
        self.delete = frozenset(_instantiate(f, binding) for f in schema.delete)
        self.cost = cost

    def __repr__(self) -> str:
        return f"{self.schema.name}({', '.join(_arg_key(a) for a in self.args)})"


@dataclass
class SolveResult:
    plan: list | None
    cost: float
    levels: int
    expansions: int
    diagnostic: str | None = None

    @property
    def solved(self) -> bool:
        return self.plan is not None


def _instantiate(pattern, binding):
    return (pattern[0],) + tuple(
        binding[t] if _is_var(t) else t for t in pattern[1:]
    )


def _match(pattern, fact, binding):
    if pattern[0] != fact[0] or len(pattern) != len(fact):
        return None
    b = binding
    for pat, val in zip(pattern[1:], fact[1:]):
        if _is_var(pat):
            seen = b.get(pat)
            if seen is None:
                if b is binding:
                    b = dict(binding)
                b[pat] = val
            elif seen is not val and seen != val:
                return None
        elif pat is not val and pat != val:
            return None
    return b if b is not binding else dict(binding)


def _bindings(static_db, patterns, binding):
    if not patterns:
        yield binding
        return
    first = patterns[0]
    for fact in static_db.get(first[0], ()):
        b = _match(first, fact, binding)
        if b is not None:
            yield from _bindings(static_db, patterns[1:], b)


def _ground_all(schemas, static_db, cost_cache):
    grounded = []
    seen = set()
    for schema in schemas:
        for b in _bindings(static_db, schema.static_pre, {}):
            if any(p not in b for p in schema.params):
                missing = [p for p in schema.params if p not in b]
                raise ValueError(f"{schema.name}: params {missing} not bound by static preconditions")
            if any(_arg_key(b[x]) == _arg_key(b[y]) for x, y in schema.neq):
                continue
            key = (schema.name, tuple(_arg_key(b[p]) for p in schema.params))
            if key in seen:
                continue
            seen.add(key)
            if key not in cost_cache:
                cost_cache[key] = 0.0 if schema.cost_fn is None else float(schema.cost_fn(b))
            grounded.append(GroundAction(schema, b, cost_cache[key]))
    return grounded


def _search(grounded, init, goal, max_expansions):
    start = frozenset(init)
    goal_set = frozenset(goal)
    heap = [(0.0, 0, start)]
    counter = 1
    best = {start: 0.0}
    parent = {start: None}
    closed = set()
    expansions = 0
    while heap:
        cost, _, state = heapq.heappop(heap)
        if state in closed:
            continue
        closed.add(state)
        expansions += 1
        if goal_set <= state:
            plan = []
            cur = state
            while parent[cur] is not None:
                prev, action = parent[cur]
                plan.append(action)
                cur = prev
            plan.reverse()
            return plan, cost, expansions
        if expansions >= max_expansions:
            break
        for action in grounded:
            if math.isinf(action.cost):
                continue
            if not action.fluent_pre <= state:
                continue
            nxt = frozenset((state - action.delete) | action.add)
            ncost = cost + action.cost + STEP_COST
            if ncost < best.get(nxt, math.inf):
                best[nxt] = ncost
                parent[nxt] = (state, action)
                counter += 1
                heapq.heappush(heap, (ncost, counter, nxt))
    return None, math.inf, expansions


def _add_fact(static_db, static_keys, fact):
    key = _fact_key(fact)
    if key in static_keys:
        return False
    static_keys.add(key)
    static_db.setdefault(fact[0], []).append(fact)
    return True


def _invoke_streams(problem, static_db, static_keys, attempts, seed):
    progressed = False
    # Snapshot bindings for every stream first: facts certified during this
    # level only become visible to streams at the next level.
    snapshots = [
        (stream, list(_bindings(static_db, stream.domain_facts, {})))
        for stream in problem.streams
    ]
    for stream, pending in snapshots:
        invoked = set()
        for b in pending:
            inputs = tuple(b.get(v) for v in stream.inputs)
            if any(v is None for v in inputs):
                raise ValueError(f"{stream.name}: inputs not bound by domain facts")
            key = (stream.name, tuple(_arg_key(a) for a in inputs))
            if key in invoked:
                continue
            invoked.add(key)
            attempt = attempts.get(key, 0)
            attempts[key] = attempt + 1
            rng = np.random.default_rng(
                np.random.SeedSequence(
                    (
                        seed,
                        zlib.crc32(stream.name.encode()),
                        zlib.crc32("/".join(key[1]).encode()),
                        attempt,
                    )
                )
            )
            binding = {v: a for v, a in zip(stream.inputs, inputs)}
            for result in stream.sample(binding, attempt, rng):
                if len(result) != len(stream.outputs):
                    raise ValueError(f"{stream.name}: result arity mismatch")
                full = dict(binding)
                for var, payload in zip(stream.outputs, result):
                    full[var] = problem.registry.add(var.lstrip("?"), payload)
                for cert in stream.certified:
                    if _add_fact(static_db, static_keys, _instantiate(cert, full)):
                        progressed = True
    return progressed


def _diagnose(problem, static_db, grounded):
    notes = []
    for schema in problem.schemas:
        for pat in schema.static_pre:
            if not any(_match(pat, f, {}) is not None for f in static_db.get(pat[0], ())):
                notes.append(f"{schema.name}: no fact matches {_pretty(pat)}")
                break
    achievable = set()
    for ga in grounded:
        achievable |= {_fact_key(f) for f in ga.add}
    init_keys = {_fact_key(f) for f in problem.init}
    for g in problem.goal:
        if _fact_key(g) not in achievable | init_keys:
            notes.append(f"goal {_pretty(g)} is not added by any grounded action")
    return "; ".join(notes) if notes else "search exhausted the reachable states"


def solve(
    problem: Problem,
    seed: int = 0,
    max_levels: int = 8,
    max_expansions: int = 200_000,
) -> SolveResult:
    """Incremental solve: search, then widen the fact database, repeat."""
    static_db: dict = {}
    static_keys: set = set()
    for f in problem.statics:
        _add_fact(static_db, static_keys, f)
    attempts: dict = {}
    cost_cache: dict = {}
    total_expansions = 0
    grounded = []
    for level in range(max_levels + 1):
        grounded = _ground_all(problem.schemas, static_db, cost_cache)
        plan, cost, expansions = _search(
            grounded, problem.init, problem.goal, max_expansions
        )
        total_expansions += expansions
        if plan is not None:
            return SolveResult(plan, cost, level, total_expansions)
        if not problem.streams:
            break
        if level < max_levels:
            _invoke_streams(problem, static_db, static_keys, attempts, seed)
    return SolveResult(
        None, math.inf, min(level, max_levels), total_expansions,
        _diagnose(problem, static_db, grounded),
    )


def validate_plan(problem: Problem, plan, expected_cost=None):
    """Re-simulate a plan and recompute its cost from scratch.

    Returns (ok, message).  Costs are recomputed through each schema's cost
    function, so a stale or tampered cost shows up as a mismatch.
    """
    state = frozenset(problem.init)
    total = 0.0
    for i, ga in enumerate(plan):
        missing = ga.fluent_pre - state
        if missing:
            facts = ", ".join(sorted(_pretty(f) for f in missing))
            return False, f"step {i} ({ga!r}): unsatisfied precondition {facts}"
        state = frozenset((state - ga.delete) | ga.add)
        fresh = 0.0 if ga.schema.cost_fn is None else float(ga.schema.cost_fn(ga.binding))
        if not math.isclose(fresh, ga.cost, rel_tol=0.0, abs_tol=1e-9):
            return False, f"step {i} ({ga!r}): cost {ga.cost} does not recompute ({fresh})"
        total += fresh + STEP_COST
    missing_goal = frozenset(problem.goal) - state
    if missing_goal:
        facts = ", ".join(sorted(_pretty(f) for f in missing_goal))
        return False, f"goal not reached: {facts}"
    if expected_cost is not None and not math.isclose(
        total, expected_cost, rel_tol=0.0, abs_tol=1e-9
    ):
        return False, f"plan cost {expected_cost} does not recompute ({total})"
    return True, None


def serialize_payload(payload):
    """JSON-ready form of a sampled payload; arrays and to_dict objects tagged."""
    if payload is None or isinstance(payload, (bool, int, float, str)):
        return payload
    if isinstance(payload, np.generic):
        return payload.item()
    if isinstance(payload, np.ndarray):
        return {"array": payload.tolist()}
    if isinstance(payload, (list, tuple)):
        return [serialize_payload(p) for p in payload]
    if hasattr(payload, "to_dict"):
        return {"type": type(payload).__name__, "data": payload.to_dict()}
    raise TypeError(f"cannot serialize payload of type {type(payload).__name__}")


def plan_to_dict(result: SolveResult, seed=None) -> dict:
    steps = []
    for ga in result.plan or []:
        args = []
        for a in ga.args:
            if isinstance(a, str):
                args.append({"const": a})
            else:
                args.append(
                    {
                        "value": a.name,
                        "kind": a.kind,
                        "payload": serialize_payload(a.payload),
                    }
                )
        steps.append({"action": ga.schema.name, "args": args, "cost": ga.cost})
    out = {
        "solved": result.solved,
        "cost": result.cost,
        "steps": steps,
        "levels": result.levels,
        "expansions": result.expansions,
    }
    if seed is not None:
        out["seed"] = seed
    if result.diagnostic:
        out["diagnostic"] = result.diagnostic
    return out


def format_plan(result: SolveResult) -> str:
    if not result.solved:
        return f"no plan: {result.diagnostic}"
    lines = []
    for i, ga in enumerate(result.plan, start=1):
        args = ", ".join(_arg_key(a) for a in ga.args)
        lines.append(f"{i}. {ga.schema.name}({args})  cost={ga.cost:.6g}")
    lines.append(f"total cost {result.cost:.6g} over {len(result.plan)} steps")
    return "\n".join(lines)

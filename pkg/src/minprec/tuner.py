"""Precision tuning by delta debugging against a stochastic-arithmetic reference.

Starting with every variable at the top of the precision lattice, each level
is processed top-down: ddmin searches for a minimal set of variables that
must stay at the current level, and all others drop one level. The accuracy
test compares each output against the reference value validated by
three-sample stochastic arithmetic.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

from .precision import BINARY64, DEFAULT_LATTICE, PrecisionError, PrecisionSpec
from .program import EvaluationError, Program, TypeConfig, eval_dsa, eval_mixed, op_trace
from .stochastic import DigitEstimate, common_digits

DEFAULT_SEED = 0x5EED

_ADD_WEIGHT_OPS = {"add", "sub"}
_MUL_WEIGHT_OPS = {"mul", "div", "sqrt", "fma"}


class AccuracyUnachievableError(Exception):
    """The validated reference itself is less accurate than requested."""


class TuneTarget(Protocol):
    """Anything with tunable precision knobs and named scalar outputs."""

    @property
    def variables(self) -> list[str]: ...

    def evaluate(self, cfg: TypeConfig) -> dict[str, float]: ...

    def reference(self, prec: PrecisionSpec, seed: int) -> dict[str, tuple[float, DigitEstimate]]: ...

    def cost(self, cfg: TypeConfig) -> float: ...


def estimate_cost(p: Program, cfg: TypeConfig, literal_prec: PrecisionSpec = BINARY64) -> float:
    """Silicon-cost proxy: adders scale linearly with significand width,
    multipliers (and div/sqrt/fma) quadratically, plus a storage term."""
    cost = 0.0
    for op, spec in op_trace(p, cfg, literal_prec):
        s = spec.significand_bits
        if op in _ADD_WEIGHT_OPS:
            cost += s
        elif op in _MUL_WEIGHT_OPS:
            cost += s * s / 53
    cost += sum((spec.significand_bits + spec.exponent_bits + 1) / 64 for spec in cfg.values())
    return cost


class ProgramTarget:
    def __init__(self, program: Program, literal_prec: PrecisionSpec = BINARY64):
        self.program = program
        self.literal_prec = literal_prec

    @property
    def variables(self) -> list[str]:
        return self.program.variables

    def evaluate(self, cfg: TypeConfig) -> dict[str, float]:
        return eval_mixed(self.program, cfg, self.literal_prec)

    def reference(self, prec: PrecisionSpec, seed: int) -> dict[str, tuple[float, DigitEstimate]]:
        return {name: (sv.mean, est) for name, (sv, est) in eval_dsa(self.program, prec, seed).items()}

    def cost(self, cfg: TypeConfig) -> float:
        return estimate_cost(self.program, cfg, self.literal_prec)


@dataclass(frozen=True)
class TuneRequest:
    program: Program | TuneTarget
    requested_digits: float
    lattice: tuple[PrecisionSpec, ...] = DEFAULT_LATTICE
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        lattice = tuple(self.lattice)
        object.__setattr__(self, "lattice", lattice)
        if not lattice:
            raise ValueError("lattice must not be empty")
        if any(a.significand_bits >= b.significand_bits for a, b in zip(lattice, lattice[1:])):
            raise ValueError("lattice must be strictly increasing in significand bits")
        if not self.requested_digits > 0:
            raise ValueError("requested_digits must be positive")
        if self.requested_digits > lattice[-1].digits_cap:
            raise ValueError(
                f"requested {self.requested_digits} digits exceeds the {lattice[-1].digits_cap:.2f} "
                f"carried by {lattice[-1]}"
            )

    @property
    def target(self) -> TuneTarget:
        if isinstance(self.program, Program):
            return ProgramTarget(self.program, self.lattice[-1])
        return self.program


@dataclass(frozen=True)
class Reference:
    value: float
    estimate: DigitEstimate


@dataclass
class TuneReport:
    config: TypeConfig
    achieved_digits: dict[str, float]
    reference: dict[str, Reference]
    cost: float
    trials: int
    seed: int
    lattice: tuple[PrecisionSpec, ...]
    requested_digits: float
    rejected_by_error: int = 0

    def to_dict(self) -> dict:
        return {
            "config": {v: str(s) for v, s in sorted(self.config.items())},
            "achieved_digits": dict(sorted(self.achieved_digits.items())),
            "reference": {
                name: {
                    "value": ref.value,
                    "digits": ref.estimate.digits,
                    "computational_zero": ref.estimate.is_computational_zero,
                }
                for name, ref in sorted(self.reference.items())
            },
            "cost": self.cost,
            "trials": self.trials,
            "seed": self.seed,
            "lattice": [str(s) for s in self.lattice],
            "requested_digits": self.requested_digits,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def compute_reference(r: TuneRequest, target: TuneTarget | None = None) -> dict[str, Reference]:
    """Stochastic evaluation at the lattice maximum; the mean is the reference."""
    target = target or r.target
    refs = {name: Reference(v, est) for name, (v, est) in target.reference(r.lattice[-1], r.seed).items()}
    short = {name: ref.estimate.digits for name, ref in refs.items() if ref.estimate.digits < r.requested_digits}
    if short:
        detail = ", ".join(f"{n}: {d:.2f}" for n, d in sorted(short.items()))
        raise AccuracyUnachievableError(
            f"requested accuracy exceeds validated digits ({detail} < {r.requested_digits})"
        )
    return refs


def achieved_digits(outputs: dict[str, float], ref: dict[str, Reference]) -> dict[str, float]:
    return {name: common_digits(outputs[name], ref[name].value) for name in ref}


def accept(
    cfg: TypeConfig,
    r: TuneRequest,
    ref: dict[str, Reference],
    target: TuneTarget | None = None,
    errors: list[Exception] | None = None,
) -> bool:
    """True iff every output agrees with the reference on the requested digits."""
    target = target or r.target
    try:
        outputs = target.evaluate(cfg)
    except (EvaluationError, PrecisionError, ArithmeticError) as exc:
        if errors is not None:
            errors.append(exc)
        return False
    return all(d >= r.requested_digits for d in achieved_digits(outputs, ref).values())


class _Trials:
    """Memoized accuracy test; counts each distinct configuration once.

    Speculative results from parallel prefetching are kept aside and only
    counted when the sequential search actually asks for them, so the trial
    count does not depend on the number of workers.
    """

    def __init__(self, check: Callable[[tuple[int, ...]], bool], jobs: int):
        self.check = check
        self.jobs = jobs
        self.counted: dict[tuple[int, ...], bool] = {}
        self.speculative: dict[tuple[int, ...], bool] = {}

    def __call__(self, key: tuple[int, ...]) -> bool:
        if key not in self.counted:
            if key in self.speculative:
                self.counted[key] = self.speculative.pop(key)
            else:
                self.counted[key] = self.check(key)
        return self.counted[key]

    def prefetch(self, keys: Sequence[tuple[int, ...]]) -> None:
        todo = [k for k in dict.fromkeys(keys) if k not in self.counted and k not in self.speculative]
        if self.jobs <= 1 or len(todo) < 2:
            return
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            for k, ok in zip(todo, pool.map(self.check, todo)):
                self.speculative[k] = ok

    @property
    def count(self) -> int:
        return len(self.counted)


def _partition(items: list, n: int) -> list[list]:
    """Split into n contiguous, near-equal chunks (earlier chunks not smaller)."""
    size, extra = divmod(len(items), n)
    out, start = [], 0
    for i in range(n):
        end = start + size + (1 if i < extra else 0)
        out.append(items[start:end])
        start = end
    return [c for c in out if c]


def ddmin_keep(
    candidates: list[str],
    passes: Callable[[list[str]], bool],
    prefetch: Callable[[list[list[str]]], None] | None = None,
) -> list[str]:
    """Shrink the set of variables kept at the current level to a 1-minimal one.

    ``passes(keep)`` must hold for the full candidate list. Complements are
    tried in declaration order, starting at granularity 2 and doubling when no
    complement passes.
    """
    keep = list(candidates)
    n = 2
    while len(keep) >= 2:
        parts = _partition(keep, n)
        complements = [[v for v in keep if v not in part] for part in parts]
        if prefetch is not None:
            prefetch(complements)
        for comp in complements:
            if passes(comp):
                keep = comp
                n = max(n - 1, 2)
                break
        else:
            if n >= len(keep):
                break
            n = min(2 * n, len(keep))
    if len(keep) == 1 and passes([]):
        keep = []
    return keep


def tune(r: TuneRequest, jobs: int = 1) -> TuneReport:
    """Find a feasible, 1-minimal precision assignment for the request."""
    target = r.target
    ref = compute_reference(r, target)
    variables = list(target.variables)
    lattice = r.lattice
    errors: list[Exception] = []

    def to_cfg(levels: tuple[int, ...]) -> TypeConfig:
        return {v: lattice[i] for v, i in zip(variables, levels)}

    trials = _Trials(lambda key: accept(to_cfg(key), r, ref, target, errors), jobs)
    levels = [len(lattice) - 1] * len(variables)

    for j in range(len(lattice) - 1, 0, -1):
        cand_idx = [i for i, lv in enumerate(levels) if lv == j]
        if not cand_idx:
            continue
        names = [variables[i] for i in cand_idx]

        def key_for(keep: list[str]) -> tuple[int, ...]:
            kept = set(keep)
            return tuple(
                (j - 1) if (v in names and v not in kept) else lv for v, lv in zip(variables, levels)
            )

        def passes(keep: list[str]) -> bool:
            return trials(key_for(keep))

        def prefetch(options: list[list[str]]) -> None:
            trials.prefetch([key_for(k) for k in options])

        keep = [] if passes([]) else ddmin_keep(names, passes, prefetch)
        kept = set(keep)
        for i in cand_idx:
            if variables[i] not in kept:
                levels[i] = j - 1

    # Guard 1-minimality when the accuracy test is not monotone in precision.
    changed = True
    while changed:
        changed = False
        for i in range(len(variables)):
            if levels[i] > 0:
                trial = list(levels)
                trial[i] -= 1
                if trials(tuple(trial)):
                    levels = trial
                    changed = True

    cfg = to_cfg(tuple(levels))
    outputs = target.evaluate(cfg)
    return TuneReport(
        config=cfg,
        achieved_digits=achieved_digits(outputs, ref),
        reference=ref,
        cost=target.cost(cfg),
        trials=trials.count,
        seed=r.seed,
        lattice=lattice,
        requested_digits=r.requested_digits,
        rejected_by_error=len(errors),
    )


def is_one_minimal(cfg: TypeConfig, r: TuneRequest, ref: dict[str, Reference]) -> bool:
    """No single one-level demotion keeps the request satisfied."""
    target = r.target
    for v, spec in cfg.items():
        i = r.lattice.index(spec)
        if i == 0:
            continue
        trial = dict(cfg)
        trial[v] = r.lattice[i - 1]
        if accept(trial, r, ref, target):
            return False
    return True


def trial_bound(n_vars: int, n_levels: int) -> int:
    """Worst-case ddmin trial count summed over lattice levels."""
    return 4 * n_levels * n_vars * n_vars


__all__ = [
    "AccuracyUnachievableError",
    "ProgramTarget",
    "Reference",
    "TuneReport",
    "TuneRequest",
    "accept",
    "achieved_digits",
    "compute_reference",
    "ddmin_keep",
    "estimate_cost",
    "is_one_minimal",
    "trial_bound",
    "tune",
]

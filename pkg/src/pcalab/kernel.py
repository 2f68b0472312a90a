"""Fuel-bounded partial computation over combinatory models.

This module fixes the vocabulary the rest of the package builds on: the
model interface (application, order, filter membership), the three-valued
outcome of a bounded computation, and the definedness-aware comparison
predicates.  Nothing here knows what elements look like; concrete models
live in :mod:`pcalab.models` and :mod:`pcalab.funcpca`.

Definedness is semi-decidable, so a bounded run can end three ways:

* ``Defined(value)``       - the computation converged;
* ``DefinitelyUndefined``  - divergence is provable at this point (an
  oracle had no value at a queried argument, a case scrutinee was not a
  boolean code, or the model itself got stuck);
* ``FuelExhausted``        - the budget ran out; no claim either way.

Pure non-termination always surfaces as ``FuelExhausted``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Iterator, Protocol, runtime_checkable

Element = Any
Fuel = int

DEFAULT_FUEL: Fuel = 100_000


class UndefinedReason(Enum):
    """Why a computation is provably divergent, as opposed to merely slow."""

    NOT_A_BOOLEAN = "not-a-boolean"
    ORACLE_UNDEFINED = "oracle-undefined"
    MODEL_STUCK = "model-stuck"


@dataclass(frozen=True)
class Defined:
    value: Element

    def __repr__(self) -> str:
        return f"Defined({self.value!r})"


@dataclass(frozen=True)
class DefinitelyUndefined:
    reason: UndefinedReason

    def __repr__(self) -> str:
        return f"DefinitelyUndefined({self.reason.value})"


@dataclass(frozen=True)
class FuelExhausted:
    spent: int

    def __repr__(self) -> str:
        return f"FuelExhausted({self.spent})"


Outcome = Any  # Defined | DefinitelyUndefined | FuelExhausted


def is_defined(o: Outcome) -> bool:
    return isinstance(o, Defined)


class OutOfFuel(Exception):
    """Internal control flow: the shared meter hit zero."""


class ProvablyUndefined(Exception):
    """Internal control flow: divergence is forced at this point."""

    def __init__(self, reason: UndefinedReason):
        super().__init__(reason.value)
        self.reason = reason


class EvalError(Exception):
    """A malformed request (unbound variable, missing constant, bad input)."""


class FuelMeter:
    """A mutable step budget threaded through one computation.

    Every primitive application step costs at least one unit.  The meter is
    an implementation detail of a single bounded run; public operations take
    a plain integer budget and return an Outcome.
    """

    __slots__ = ("budget", "remaining", "scratch")

    def __init__(self, budget: Fuel):
        if budget < 0:
            raise ValueError("fuel budget must be non-negative")
        self.budget = budget
        self.remaining = budget
        # per-run scratch area for layers that amortize repeated work;
        # never consulted by the kernel itself
        self.scratch = None

    def spend(self, n: int = 1) -> None:
        if self.remaining < n:
            self.remaining = 0
            raise OutOfFuel()
        self.remaining -= n

    @property
    def spent(self) -> int:
        return self.budget - self.remaining


def run_bounded(fuel: Fuel, body: Callable[[FuelMeter], Element]) -> Outcome:
    """Run ``body`` under a fresh meter and package the three-valued result."""
    meter = FuelMeter(fuel)
    try:
        return Defined(body(meter))
    except OutOfFuel:
        return FuelExhausted(fuel)
    except ProvablyUndefined as exc:
        return DefinitelyUndefined(exc.reason)


@runtime_checkable
class PcaModel(Protocol):
    """A partial applicative structure with distinguished combinators.

    ``apply`` is deterministic: the same arguments and fuel give the same
    Outcome, and a Defined result is stable under larger budgets.  ``leq``
    is the partial order (structural equality in discrete models) and
    ``in_filter`` the distinguished-subalgebra predicate.
    """

    name: str

    @property
    def k(self) -> Element: ...

    @property
    def s(self) -> Element: ...

    def apply(self, a: Element, b: Element, fuel: Fuel = DEFAULT_FUEL) -> Outcome: ...

    def apply_metered(self, a: Element, b: Element, meter: FuelMeter) -> Element: ...

    def leq(self, a: Element, b: Element) -> bool: ...

    def in_filter(self, a: Element) -> bool: ...


def apply_chain_metered(model: PcaModel, e: Element, args, meter: FuelMeter) -> Element:
    for a in args:
        e = model.apply_metered(e, a, meter)
    return e


def apply_chain(model: PcaModel, e: Element, *args: Element, fuel: Fuel = DEFAULT_FUEL) -> Outcome:
    """Left-associated application e a0 a1 ... under one shared budget."""
    return run_bounded(fuel, lambda m: apply_chain_metered(model, e, args, m))


def kleene_leq(o1: Outcome, o2: Outcome, model: PcaModel) -> bool:
    """Definedness-aware order: if o2 is Defined then o1 is Defined and below it.

    FuelExhausted on the right is vacuous truth; FuelExhausted on the left of
    a Defined right side cannot be confirmed and reports False.  The
    approximation is sound within the declared budget, not complete.
    """
    if isinstance(o2, (FuelExhausted, DefinitelyUndefined)):
        return True
    if not isinstance(o2, Defined):
        raise TypeError(f"not an Outcome: {o2!r}")
    return isinstance(o1, Defined) and model.leq(o1.value, o2.value)


def kleene_eq(o1: Outcome, o2: Outcome, model: PcaModel) -> bool:
    """kleene_leq in both directions."""
    return kleene_leq(o1, o2, model) and kleene_leq(o2, o1, model)


def no_claim(o1: Outcome, o2: Outcome) -> bool:
    """True when either side ran out of fuel, so a comparison proves nothing."""
    return isinstance(o1, FuelExhausted) or isinstance(o2, FuelExhausted)


# =====================================================================
# Downsets and generated filters
# =====================================================================


@dataclass(frozen=True)
class Downset:
    """A downward-closed set presented finitely or by a predicate.

    ``elements`` is a frozenset for the finite presentation, or None when
    the set is given by ``predicate`` alone.
    """

    elements: Any = None
    predicate: Any = None

    @staticmethod
    def finite(elems) -> "Downset":
        return Downset(elements=frozenset(elems))

    @staticmethod
    def of(pred: Callable[[Element], bool]) -> "Downset":
        return Downset(predicate=pred)

    def __contains__(self, x: Element) -> bool:
        if self.elements is not None:
            return x in self.elements
        return bool(self.predicate(x))


@dataclass(frozen=True)
class GenWitness:
    """A constant-free applicative term together with a leaf assignment.

    ``shape`` is an int (generator index at a leaf) or a pair of shapes.
    Rendering names one variable per distinct generator index, so repeated
    leaves show as repeated variables.
    """

    shape: Any
    generators: tuple

    def leaf_indices(self) -> list:
        out: list = []

        def walk(sh):
            if isinstance(sh, int):
                out.append(sh)
            else:
                walk(sh[0])
                walk(sh[1])

        walk(self.shape)
        return out

    def render(self, fmt: Callable[[Element], str]) -> str:
        order: dict = {}
        for ix in self.leaf_indices():
            order.setdefault(ix, len(order))

        def walk(sh, top: bool) -> str:
            if isinstance(sh, int):
                return f"x{order[sh]}"
            left = walk(sh[0], True)
            right = walk(sh[1], False)
            s = f"{left} {right}"
            return s if top else f"({s})"

        body = walk(self.shape, True)
        assign = ", ".join(fmt(self.generators[ix]) for ix in sorted(order, key=order.get))
        return f"{body} with ({assign})"


class GeneratedFilter:
    """Semi-decidable membership in the filter generated by finite elements.

    Enumerates values of constant-free terms with leaves drawn from the
    generators, by increasing leaf count.  A query either returns a concrete
    witness or 'unknown within bound'; absence of a witness is never claimed.
    """

    def __init__(self, model: PcaModel, generators, fuel: Fuel = DEFAULT_FUEL,
                 max_leaves: int = 6):
        self.model = model
        self.generators = tuple(generators)
        self.fuel = fuel
        self.max_leaves = max_leaves

    def _shapes(self, leaves: int) -> Iterator[Any]:
        if leaves == 1:
            yield from range(len(self.generators))
            return
        for left in range(1, leaves):
            for ls in self._shapes(left):
                for rs in self._shapes(leaves - left):
                    yield (ls, rs)

    def _value(self, shape) -> Outcome:
        if isinstance(shape, int):
            return Defined(self.generators[shape])
        lo = self._value(shape[0])
        ro = self._value(shape[1])
        if not (is_defined(lo) and is_defined(ro)):
            return lo if not is_defined(lo) else ro
        return self.model.apply(lo.value, ro.value, self.fuel)

    def enumerate(self) -> Iterator[tuple]:
        """Yield (element, witness) pairs in enumeration order."""
        for leaves in range(1, self.max_leaves + 1):
            for shape in self._shapes(leaves):
                o = self._value(shape)
                if is_defined(o):
                    yield o.value, GenWitness(shape, self.generators)

    def find(self, x: Element) -> GenWitness | None:
        """A witness putting x in the filter, or None (unknown within bound)."""
        for value, witness in self.enumerate():
            if self.model.leq(value, x):
                return witness
        return None


def filter_generate(model: PcaModel, generators, bound: Fuel = DEFAULT_FUEL,
                    max_leaves: int = 6) -> GeneratedFilter:
    """Witness enumerator for the filter generated by ``generators``.

    ``bound`` is the per-evaluation fuel; ``max_leaves`` caps the size of
    enumerated terms.  Membership is a semi-decision: positive answers come
    with witnesses, negative answers only mean 'not found within bound'.
    """
    return GeneratedFilter(model, generators, fuel=bound, max_leaves=max_leaves)

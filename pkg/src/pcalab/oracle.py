"""Oracle application: interrogation protocol, traces, relativized models.

A program applied to an argument under an oracle runs a stateless
question-answer loop.  The program only ever sees a coded sequence whose
head is the argument and whose tail is the answers so far; it returns a
pair whose flag says "done" (true, second component is the result) or
"ask" (false, second component is the next query).  The oracle answers,
the sequence grows by one, and the program is consulted again from
scratch.  A non-boolean flag is definitely undefined, as is a query the
oracle has no answer for; running out of fuel is no claim either way.

The loop itself is model-generic: anything with apply_metered can play
the program side, which is how the relativized model below and the
function algebra reuse one engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

from .kernel import (
    DEFAULT_FUEL,
    Defined,
    DefinitelyUndefined,
    Element,
    EvalError,
    Fuel,
    FuelExhausted,
    FuelMeter,
    GeneratedFilter,
    Outcome,
    OutOfFuel,
    ProvablyUndefined,
    UndefinedReason,
    run_bounded,
)
from .models import OracleTable, table_to_code
from .terms import (
    Kit,
    classify_boolean,
    compile_src,
    format_element,
    seq_code,
    strict_apply,
)


# =====================================================================
# Partial functions usable as oracles
# =====================================================================


class TableFn:
    """A finite table (plus optional default) as an oracle."""

    def __init__(self, table: OracleTable, name: str = "table"):
        self.table = table
        self.name = name

    def query_metered(self, x: Element, meter: FuelMeter) -> Element:
        v = self.table.lookup(x)
        if v is None:
            raise ProvablyUndefined(UndefinedReason.ORACLE_UNDEFINED)
        return v


class HostFn:
    """A host procedure as an oracle.  Returning None means no answer."""

    def __init__(self, proc: Callable, name: str = "host"):
        self.proc = proc
        self.name = name

    def query_metered(self, x: Element, meter: FuelMeter) -> Element:
        v = self.proc(x, meter)
        if v is None:
            raise ProvablyUndefined(UndefinedReason.ORACLE_UNDEFINED)
        return v


# =====================================================================
# The interrogation engine
# =====================================================================


@dataclass
class OracleTrace:
    """One interrogation run: the dialogue plus how it ended."""

    rounds: List[Tuple[Element, Element]] = field(default_factory=list)
    verdict: str = "fuel-exhausted"
    value: Optional[Element] = None


def interrogate_metered(step: Callable, oracle, b: Element, kit: Kit,
                        meter: FuelMeter,
                        rounds: Optional[List[Tuple[Element, Element]]] = None,
                        max_rounds: Optional[int] = None) -> Element:
    """Run the protocol loop; `step(seq, meter)` consults the program.

    Raises ProvablyUndefined for a non-boolean flag or an oracle gap and
    OutOfFuel when the meter runs dry.  The flag and both projections are
    taken in the base model of `kit`.
    """
    model = kit.model
    seq = [b]
    n = 0
    while True:
        r = step(seq_code(seq, kit), meter)
        flag = model.apply_metered(kit.p0, r, meter)
        verdict = classify_boolean(model, kit, flag, meter)
        if verdict is None:
            raise ProvablyUndefined(UndefinedReason.NOT_A_BOOLEAN)
        payload = model.apply_metered(kit.p1, r, meter)
        if verdict:
            return payload
        answer = oracle.query_metered(payload, meter)
        if rounds is not None:
            rounds.append((payload, answer))
        seq.append(answer)
        n += 1
        if max_rounds is not None and n >= max_rounds:
            raise OutOfFuel()


def oracle_apply_metered(model, kit: Kit, a: Element, b: Element, oracle,
                         meter: FuelMeter,
                         rounds: Optional[list] = None) -> Element:
    step = lambda seq, m: model.apply_metered(a, seq, m)
    return interrogate_metered(step, oracle, b, kit, meter, rounds=rounds)


def oracle_apply(model, kit: Kit, a: Element, b: Element, oracle,
                 fuel: Fuel = DEFAULT_FUEL) -> Tuple[Outcome, OracleTrace]:
    """Apply a to b under the oracle; the trace records the dialogue."""
    trace = OracleTrace()
    out = run_bounded(
        fuel,
        lambda m: oracle_apply_metered(model, kit, a, b, oracle, m,
                                       rounds=trace.rounds))
    if isinstance(out, Defined):
        trace.verdict = "defined"
        trace.value = out.value
    elif isinstance(out, DefinitelyUndefined):
        trace.verdict = out.reason.value
    else:
        trace.verdict = "fuel-exhausted"
    return out, trace


def format_trace(trace: OracleTrace, kit: Kit, machine: bool = False) -> str:
    """One line per round `? query => answer`, then `= value` or `! reason`."""
    lines = [f"? {format_element(q, kit, machine)} => {format_element(a, kit, machine)}"
             for q, a in trace.rounds]
    if trace.verdict == "defined":
        lines.append(f"= {format_element(trace.value, kit, machine)}")
    else:
        lines.append(f"! {trace.verdict}")
    return "\n".join(lines) + "\n"


# =====================================================================
# Relativized combinators
# =====================================================================


def build_kf(kit: Kit) -> Element:
    """Constant combinator for the interrogative application."""
    return compile_src(r"\x. #p #top (\y. #p #top (#fst x))", kit)


def build_tf(kit: Kit) -> Element:
    """Internalized plain application: consume two protocol arguments."""
    return compile_src(r"\x. #p #top (\y. #p #top ((#fst x) (#fst y)))", kit)


def build_rf(kit: Kit) -> Element:
    """The oracle-consulting program: ask about the argument, return the answer."""
    return compile_src(
        r"\x. #ifte (#one (#lh x)) (\w. #p #kbar (#fst x)) (\w. #p #top (#read x 1))",
        kit)


def build_S(kit: Kit) -> Element:
    """The substitution program for interrogative application.

    Stateless rescan: on each consultation it replays its argument history
    from scratch.  The first phase scans prefixes of the history until the
    first program finishes; the second phase feeds the remaining history
    to the second program, prefixed by the shared argument; the final
    phase applies result to result with whatever history is left.  Any
    still-unanswered query from either phase bubbles out as this
    program's own query.
    """
    resp = compile_src(r"\a b u. #concat (#unit (#fst u)) (#subseq a b u)", kit)
    w_ys = compile_src(
        r"\f x y u a b."
        r" #ifte (#p0 (y (#RESP a b u)))"
        r" (\w. (#p1 (x (#take a u)))"
        r"      (#concat (#unit (#p1 (y (#RESP a b u)))) (#drop b u)))"
        r" (\w. #ifte (#nat_eq b (#lh u))"
        r"      (\v. y (#RESP a b u))"
        r"      (\v. f x y u a (#suc b)))",
        kit, extra={"RESP": resp})
    ys = strict_apply(kit.model, kit.z, w_ys)
    w_xs = compile_src(
        r"\f x y u a."
        r" #ifte (#p0 (x (#take a u)))"
        r" (\w. #YS x y u a a)"
        r" (\w. #ifte (#nat_eq a (#lh u))"
        r"      (\v. x u)"
        r"      (\v. f x y u (#suc a)))",
        kit, extra={"YS": ys})
    xs = strict_apply(kit.model, kit.z, w_xs)
    return compile_src(r"\x y u. #XS x y u 1", kit, extra={"XS": xs})


def build_sf(kit: Kit, s_elem: Optional[Element] = None) -> Element:
    """Protocol wrapper handing two arguments to the substitution program."""
    if s_elem is None:
        s_elem = build_S(kit)
    return compile_src(
        r"\x. #p #top (\y. #p #top (#SS (#fst x) (#fst y)))",
        kit, extra={"SS": s_elem})


def register_oracle_kit(kit: Kit) -> Kit:
    """Register the relativized combinators under surface names."""
    if "kf" not in kit.names:
        kit.register("kf", build_kf(kit))
        kit.register("tf", build_tf(kit))
        kit.register("rf", build_rf(kit))
        s_elem = build_S(kit)
        kit.register("subst", s_elem)
        kit.register("sf", build_sf(kit, s_elem))
    return kit


# =====================================================================
# The relativized model
# =====================================================================


class OracleModel:
    """The base model with application replaced by oracle interrogation.

    Satisfies the combinator axioms with the protocol constant / protocol
    substitution programs as its k and s, so everything built generically
    over a model (kits, filters, abstraction) works immediately over it.
    """

    def __init__(self, base, base_kit: Kit, oracle, name: Optional[str] = None):
        self.base = base
        self.base_kit = base_kit
        self.oracle = oracle
        self.name = name or f"{base.name}+oracle"
        self._k: Optional[Element] = None
        self._s: Optional[Element] = None

    @property
    def k(self) -> Element:
        if self._k is None:
            self._k = build_kf(self.base_kit)
        return self._k

    @property
    def s(self) -> Element:
        if self._s is None:
            self._s = build_sf(self.base_kit)
        return self._s

    def apply_metered(self, a: Element, b: Element, meter: FuelMeter) -> Element:
        return oracle_apply_metered(self.base, self.base_kit, a, b,
                                    self.oracle, meter)

    def apply(self, a: Element, b: Element, fuel: Fuel = DEFAULT_FUEL) -> Outcome:
        return run_bounded(fuel, lambda m: self.apply_metered(a, b, m))

    def leq(self, a: Element, b: Element) -> bool:
        return self.base.leq(a, b)

    def in_filter(self, a: Element) -> bool:
        return self.base.in_filter(a)

    # Structure is inherited: elements are base elements.

    def pair_parts(self, e: Element):
        return self.base.pair_parts(e)

    def numeral_value(self, e: Element):
        return self.base.numeral_value(e)

    def seq_elements(self, e: Element):
        return self.base.seq_elements(e)

    def format_element(self, e: Element) -> str:
        return self.base.format_element(e)

    def parse_element(self, text: str) -> Element:
        return self.base.parse_element(text)

    def random_element(self, rng, max_size: int = 10) -> Element:
        return self.base.random_element(rng, max_size)


def relativized_filter(model: OracleModel, extra_generators: Sequence[Element] = (),
                       fuel: Fuel = DEFAULT_FUEL, max_leaves: int = 4) -> GeneratedFilter:
    """The filter of the relativized model generated by its combinators."""
    gens = [model.k, model.s] + list(extra_generators)
    return GeneratedFilter(model, gens, fuel=fuel, max_leaves=max_leaves)


# =====================================================================
# Universal tracking
# =====================================================================


@dataclass(frozen=True)
class WitnessPack:
    """Everything needed to emulate interrogation inside an algebra.

    app applies one tracked element to another; decide turns a tracked
    boolean into a plain one; represent maps a query to the tracked
    answer.  The images are the tracked versions of the pairing
    projections, the singleton constructor, the extension operator, and
    the identity.
    """

    app: Element
    decide: Element
    represent: Element
    p0_img: Element
    p1_img: Element
    unit_img: Element
    ext_img: Element
    i_img: Element


def universal_tracker(kit: Kit, pack: WitnessPack) -> Element:
    """One program that runs the protocol loop through a witness pack.

    Applied (plain application) to a program and an argument it simulates
    their interrogative application, consulting the pack's representer
    instead of a live oracle.
    """
    extra = {
        "t": pack.app, "d": pack.decide, "sRep": pack.represent,
        "p0i": pack.p0_img, "p1i": pack.p1_img, "uniti": pack.unit_img,
        "exti": pack.ext_img,
    }
    p0p = compile_src(r"\x. #t #p0i x", kit, extra=extra)
    p1p = compile_src(r"\x. #t #p1i x", kit, extra=extra)
    extp = compile_src(r"\u v. #t (#t #exti u) v", kit, extra=extra)
    unitp = compile_src(r"\y. #t #uniti y", kit, extra=extra)
    extra.update({"p0p": p0p, "p1p": p1p, "extp": extp, "unitp": unitp})
    w_loop = compile_src(
        r"\f b v."
        r" #ifte (#d (#p0p (#t b v)))"
        r" (\w. #p1p (#t b v))"
        r" (\w. f b (#extp v (#sRep (#p1p (#t b v)))))",
        kit, extra=extra)
    loop = strict_apply(kit.model, kit.z, w_loop)
    return compile_src(r"\x y. #LOOP x (#unitp y)", kit, extra={"LOOP": loop, "unitp": unitp})


def identity_pack(kit: Kit, table: OracleTable,
                  fuel: Fuel = DEFAULT_FUEL) -> WitnessPack:
    """The trivial pack: tracked elements are the elements themselves.

    The representer is the table compiled to a program, so the simulation
    diverges exactly where the table has no claim.
    """
    return WitnessPack(
        app=compile_src(r"\x y. x y", kit),
        decide=kit.i,
        represent=table_to_code(table, kit, fuel=fuel),
        p0_img=kit.p0,
        p1_img=kit.p1,
        unit_img=kit.unit,
        ext_img=kit.ext,
        i_img=kit.i,
    )

"""Elements and time-slabs: construction, sweep order, cutting and extension.

A time-slab holds the active elements of all components between the
finalized trajectory and the slab end-point.  It is iterated to convergence,
the elements that are fully covered are cut off and finalized, and new
elements are appended so that the slab crawls forward in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .tableau import MethodTableau

__all__ = [
    "ACTIVE",
    "CONVERGED",
    "DYADIC",
    "FINALIZED",
    "FREE",
    "RATIONAL",
    "STRATEGIES",
    "Element",
    "EmptySlab",
    "TimeSlab",
    "build_slab",
    "cut_covered",
    "extend_slab",
    "quantize_steps",
    "sweep_order",
]

DYADIC = "dyadic"
RATIONAL = "rational"
FREE = "free"
STRATEGIES = (DYADIC, RATIONAL, FREE)

ACTIVE = "active"
CONVERGED = "converged"
FINALIZED = "finalized"

# remainders shorter than this fraction of the slab are merged into the
# previous element instead of producing a sliver
_SLIVER = 1e-9


class EmptySlab(Exception):
    """Every component has reached the final time."""


class Element:
    """One component on one local interval (t0, t1] with its nodal values.

    ``dofs`` holds all q + 1 nodal values.  For cG, ``dofs[0]`` is the value
    inherited from the predecessor; for dG the incoming value is read from
    ``prev`` (or the initial value when ``prev`` is None).
    """

    __slots__ = ("i", "t0", "t1", "k", "tab", "dofs", "state", "prev", "res", "r", "j", "tnodes")

    def __init__(self, i: int, t0: float, t1: float, tab: MethodTableau, dofs=None, prev=None):
        k = t1 - t0
        if not k > 0.0:
            raise ValueError(f"element of component {i} has nonpositive length {k!r}")
        self.i = i
        self.t0 = t0
        self.t1 = t1
        self.k = k
        self.tab = tab
        if dofs is None:
            dofs = [0.0] * tab.ndofs
        elif len(dofs) != tab.ndofs:
            raise ValueError(f"element of component {i} needs {tab.ndofs} dofs, got {len(dofs)}")
        self.dofs = list(dofs)
        self.state = ACTIVE
        self.prev = prev
        self.res = math.inf
        self.r = 0.0
        self.j = -1
        self.tnodes = [t0 + s * k for s in tab.nodes_list]
        self.tnodes[-1] = t1

    @property
    def family(self) -> str:
        return self.tab.family

    @property
    def q(self) -> int:
        return self.tab.q

    def value(self, t: float) -> float:
        """Local polynomial at time t (extrapolated outside the interval)."""
        if t == self.t1:
            return self.dofs[-1]
        return self.tab.evaluate(self.dofs, (t - self.t0) / self.k)

    def end_value(self) -> float:
        return self.dofs[-1]

    def __repr__(self) -> str:
        return f"Element(i={self.i}, ({self.t0!r}, {self.t1!r}], {self.tab.family}({self.tab.q}), {self.state})"


@dataclass
class SlabStats:
    sweeps: int = 0
    max_residual: float = math.inf
    converged: bool = False


@dataclass
class TimeSlab:
    """The live working set.

    ``elements[i]`` lists the active elements of component i in time order;
    ``frontiers[i]`` is the end of component i's finalized trajectory.
    """

    elements: list[list[Element]]
    frontiers: list[float]
    slab_end: float
    strategy: str
    stats: SlabStats = field(default_factory=SlabStats)

    @property
    def N(self) -> int:
        return len(self.frontiers)

    def all_elements(self) -> list[Element]:
        return [e for els in self.elements for e in els]

    def __len__(self) -> int:
        return sum(len(els) for els in self.elements)

    def tops(self) -> list[float]:
        """End of the last element (slab or finalized) of every component."""
        return [els[-1].t1 if els else f for els, f in zip(self.elements, self.frontiers)]


def quantize_steps(length: float, proposed: float, strategy: str) -> int:
    """Number of equal elements used to cover ``length`` (dyadic/rational).

    Lengths within a relative 1e-9 of the proposed step count as equal, so
    rounding in the slab end-point does not double the element count.
    """
    proposed *= 1.0 + _SLIVER
    if strategy == DYADIC:
        n = 1
        while length / n > proposed:
            n *= 2
        return n
    if strategy == RATIONAL:
        n = max(1, math.ceil(length / proposed))
        # guard against ceil rounding one short or one long
        while length / n > proposed:
            n += 1
        while n > 1 and length / (n - 1) <= proposed:
            n -= 1
        return n
    raise ValueError(f"quantize_steps is not defined for strategy {strategy!r}")


def _partition(start: float, end: float, proposed: float, strategy: str) -> list[tuple[float, float]]:
    length = end - start
    if strategy == FREE:
        out = []
        t = start
        while True:
            t_next = t + proposed
            if t_next >= end or end - t_next <= _SLIVER * length:
                out.append((t, end))
                return out
            out.append((t, t_next))
            t = t_next
    n = quantize_steps(length, proposed, strategy)
    h = length / n
    pts = [start + j * h for j in range(n)] + [end]
    return list(zip(pts[:-1], pts[1:]))


def _check_inputs(frontiers: Sequence[float], proposed: Sequence[float], global_T: float) -> None:
    if len(frontiers) != len(proposed):
        raise ValueError("frontiers and proposed steps differ in length")
    for i, k in enumerate(proposed):
        if not k > 0.0:
            raise ValueError(f"proposed step for component {i} must be positive, got {k!r}")
    if min(frontiers) >= global_T:
        raise EmptySlab()


def _slab_end(tops: Sequence[float], proposed: Sequence[float], global_T: float, k_max: float) -> float:
    t_min = min(tops)
    at_min = [k for t, k in zip(tops, proposed) if t == t_min]
    K = min(max(at_min), k_max, global_T - t_min)
    end = max(tops) + K
    return global_T if end >= global_T - _SLIVER * K else end


def build_slab(
    frontiers: Sequence[float],
    proposed_steps: Sequence[float],
    strategy: str,
    global_T: float,
    make_element: Callable[..., Element] | None = None,
    k_max: float = math.inf,
) -> TimeSlab:
    """Form a new slab on top of ``frontiers``.

    The slab length K is the largest proposed step among the components that
    sit at the minimum frontier, capped by ``k_max`` and the final time.
    Every component is partitioned from its frontier to the common end-point.
    ``make_element(i, t0, t1, prev)`` creates the elements, where ``prev`` is
    the preceding slab element of the component or None; the default creates
    bare dG(0) placeholders, which is enough for partition bookkeeping.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown slab strategy {strategy!r}")
    _check_inputs(frontiers, proposed_steps, global_T)
    slab = TimeSlab([[] for _ in frontiers], list(frontiers), 0.0, strategy)
    _fill(slab, proposed_steps, global_T, make_element, k_max)
    return slab


def _default_maker():
    from .tableau import DG, get_tableau

    tab = get_tableau(DG, 0)
    return lambda i, t0, t1, prev: Element(i, t0, t1, tab, prev=prev)


def _fill(slab, proposed, global_T, make_element, k_max) -> None:
    if make_element is None:
        make_element = _default_maker()
    tops = slab.tops()
    end = _slab_end(tops, proposed, global_T, k_max)
    slab.slab_end = end
    for i, top in enumerate(tops):
        if top >= end:
            continue
        els = slab.elements[i]
        prev = els[-1] if els else None
        for t0, t1 in _partition(top, end, proposed[i], slab.strategy):
            e = make_element(i, t0, t1, prev)
            els.append(e)
            prev = e


def sweep_order(slab: TimeSlab) -> list[Element]:
    """Elements by end time, then start time, then component: the last component steps first."""
    return sorted(slab.all_elements(), key=lambda e: (e.t1, e.t0, e.i))


def _converged_reach(slab: TimeSlab) -> float:
    reach = math.inf
    for els, f in zip(slab.elements, slab.frontiers):
        t = f
        for e in els:
            if e.state != CONVERGED:
                break
            t = e.t1
        reach = min(reach, t)
    return reach


def cut_covered(slab: TimeSlab) -> list[Element]:
    """Remove and return the elements covered by all other components.

    An element is cut when its end time does not exceed the smallest
    converged reach over all components, where a component's reach is how
    far its trajectory is contiguous from 0 and converged.  Frontiers advance
    to the end of the cut elements; the cut list is in sweep order.
    """
    reach = _converged_reach(slab)
    cut: list[Element] = []
    for i, els in enumerate(slab.elements):
        n = 0
        while n < len(els) and els[n].t1 <= reach:
            n += 1
        if n:
            cut.extend(els[:n])
            slab.frontiers[i] = els[n - 1].t1
            del els[:n]
    for e in cut:
        e.state = FINALIZED
    cut.sort(key=lambda e: (e.t1, e.t0, e.i))
    return cut


def extend_slab(
    slab: TimeSlab,
    new_steps: Sequence[float],
    strategy: str,
    global_T: float,
    make_element: Callable[..., Element] | None = None,
    k_max: float = math.inf,
) -> TimeSlab:
    """Append new elements so that all retained elements are covered.

    The new end-point is measured from the tops of the components (end of
    their last element), so every retained element ends before it.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown slab strategy {strategy!r}")
    tops = slab.tops()
    if min(tops) >= global_T and len(slab):
        # final time reached; the retained elements still need iterating
        return slab
    _check_inputs(tops, new_steps, global_T)
    slab.strategy = strategy
    slab.stats = SlabStats()
    _fill(slab, new_steps, global_T, make_element, k_max)
    return slab

"""Dependency-aware implementation order via SCC condensation."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Mapping


@dataclass(frozen=True)
class ImplementationOrder:
    order: tuple[str, ...]
    cycle_groups: tuple[tuple[str, ...], ...] = ()

    def index(self, path: str) -> int:
        return self.order.index(path)


def strongly_connected_components(nodes: Iterable[str], succ: Mapping[str, Iterable[str]]) -> list[list[str]]:
    """Tarjan's algorithm, iterative so deep chains don't hit the recursion limit."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    comps: list[list[str]] = []
    counter = 0

    for start in nodes:
        if start in index:
            continue
        work = [(start, iter(sorted(succ.get(start, ()))))]
        index[start] = low[start] = counter
        counter += 1
        stack.append(start)
        on_stack.add(start)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(succ.get(w, ())))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    return comps


def order_nodes(nodes: Iterable[str], edges: Iterable[tuple[str, str]]) -> ImplementationOrder:
    """Order files so every dependee precedes its dependents.

    `edges` are (dependent, dependee) pairs. Mutually dependent files are
    kept together and listed lexicographically; among components that are
    ready at the same time the one with the smallest path goes first.
    """
    nodes = sorted(set(nodes))
    succ: dict[str, set[str]] = {n: set() for n in nodes}
    for a, b in edges:
        if a not in succ or b not in succ:
            raise ValueError(f"edge ({a!r}, {b!r}) references an unknown node")
        if a != b:
            succ[a].add(b)
    comps = strongly_connected_components(nodes, succ)
    comp_of = {n: i for i, c in enumerate(comps) for n in c}

    # condensation edge dependee-comp -> dependent-comp
    blockers = [0] * len(comps)
    unlocks: list[set[int]] = [set() for _ in comps]
    for a in nodes:
        for b in succ[a]:
            ca, cb = comp_of[a], comp_of[b]
            if ca != cb and ca not in unlocks[cb]:
                unlocks[cb].add(ca)
                blockers[ca] += 1

    ready = [(comps[i][0], i) for i in range(len(comps)) if blockers[i] == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        _, i = heapq.heappop(ready)
        order.extend(comps[i])
        for j in unlocks[i]:
            blockers[j] -= 1
            if blockers[j] == 0:
                heapq.heappush(ready, (comps[j][0], j))
    cycles = tuple(sorted(tuple(c) for c in comps if len(c) > 1))
    return ImplementationOrder(tuple(order), cycles)

"""Random session generator.

Produces deterministic, replayable traces with tunable alias density,
serialization hazards, annotations, and cell runtimes. Generated cells are
disciplined: every object an op touches is reachable from the cell's declared
reads or was created by the cell itself, so replaying the trace reproduces
the session exactly. Also hosts the false-dependency injector used to stress
the reconstruction superset guarantee.
"""

from __future__ import annotations

import random
from bisect import insort
from dataclasses import dataclass
from itertools import count

from .cost import CostProfile
from .heap import HeapOp, SimHeap
from .history import HistoryGraph, VariableSnapshot
from .monitor import CellProgram
from .trace import TraceFile


@dataclass
class GenParams:
    """Knobs for random session generation."""

    cells: int = 8
    variables: int = 6
    alias_density: float = 0.3
    unserializable_rate: float = 0.1
    undeserializable_rate: float = 0.0
    unhashable_rate: float = 0.05
    never_rerun_rate: float = 0.0
    nondet_rate: float = 0.0
    delete_rate: float = 0.05
    bandwidth_bytes_per_s: float = 1e6
    latency_s: float = 1e-4
    alpha: float = 1.0


class _TraceBuilder:
    def __init__(self, params: GenParams, rng: random.Random):
        self.params = params
        self.rng = rng
        self.heap = SimHeap()  # scratch replica kept in lockstep with the ops
        self.ids = count(1)
        self.pool = [f"v{i}" for i in range(params.variables)]
        self.frozen: set[str] = set()  # nondeterministic outputs; never mutated
        self.annotations: dict[str, str] = {}

    def bound(self, mutable_only: bool = False) -> list[str]:
        names = sorted(self.heap.namespace)
        if mutable_only:
            names = [n for n in names if n not in self.frozen]
        return names

    def _create_scalar(self, ops: list[HeapOp], value=None) -> int:
        oid = next(self.ids)
        ops.append(HeapOp(
            op="create", id=oid, kind="scalar",
            value=self.rng.randint(0, 10**9) if value is None else value,
            size_bytes=self.rng.randint(8, 64),
        ))
        return oid

    def _create_opaque(self, ops: list[HeapOp]) -> int:
        rng = self.rng
        oid = next(self.ids)
        serializable = rng.random() >= self.params.unserializable_rate
        deserializable = serializable and rng.random() >= self.params.undeserializable_rate
        ops.append(HeapOp(
            op="create", id=oid, kind="opaque",
            size_bytes=rng.randint(10_000, 10_000_000),
            serializable=serializable,
            deserializable=deserializable,
            hashable=rng.random() >= self.params.unhashable_rate,
        ))
        return oid

    def _act_create(self, ops: list[HeapOp], reads: set[str]) -> None:
        rng = self.rng
        names = [n for n in self.pool if n not in self.frozen]
        if not names:
            return
        name = rng.choice(names)
        self.annotations.pop(name, None)
        shape = rng.choices(["scalar", "container", "opaque"], weights=[3, 4, 3])[0]
        if shape == "scalar":
            root = self._create_scalar(ops)
        elif shape == "opaque":
            root = self._create_opaque(ops)
        else:
            root = next(self.ids)
            ops.append(HeapOp(
                op="create", id=root, kind="container",
                size_bytes=rng.randint(32, 256),
            ))
            for j in range(rng.randint(1, 3)):
                owners = self.bound()
                if owners and rng.random() < self.params.alias_density:
                    owner = rng.choice(owners)
                    reads.add(owner)
                    child = rng.choice(sorted(self.heap.reachable(owner)))
                else:
                    child = self._create_scalar(ops)
                ops.append(HeapOp(op="set_slot", parent_id=root, slot=f"s{j}", child_id=child))
        ops.append(HeapOp(op="bind", name=name, id=root))

    def _act_mutate(self, ops: list[HeapOp], reads: set[str]) -> None:
        rng = self.rng
        names = self.bound(mutable_only=True)
        if not names:
            return
        name = rng.choice(names)
        reads.add(name)
        closure = sorted(self.heap.reachable(name))
        scalars = [o for o in closure if self.heap.objects[o].kind == "scalar"]
        containers = [o for o in closure if self.heap.objects[o].kind == "container"]
        if scalars and (not containers or rng.random() < 0.6):
            ops.append(HeapOp(op="set_value", id=rng.choice(scalars), value=rng.randint(0, 10**9)))
        elif containers:
            parent = rng.choice(containers)
            slots = list(self.heap.objects[parent].slots)
            roll = rng.random()
            if slots and roll < 0.4:
                # reference swap: replace a child with a value-equal fresh object
                slot = rng.choice(slots)
                old_child = self.heap.objects[parent].slots[slot]
                old = self.heap.objects[old_child]
                if old.kind == "scalar":
                    fresh = self._create_scalar(ops, value=old.value)
                    ops.append(HeapOp(op="set_slot", parent_id=parent, slot=slot, child_id=fresh))
            elif slots and roll < 0.6:
                ops.append(HeapOp(op="clear_slot", parent_id=parent, slot=rng.choice(slots)))
            elif roll < 0.7:
                # back reference, possibly closing a cycle
                child = rng.choice(closure)
                ops.append(HeapOp(op="set_slot", parent_id=parent, slot=f"s{len(slots)}", child_id=child))
            else:
                child = self._create_scalar(ops)
                ops.append(HeapOp(op="set_slot", parent_id=parent, slot=f"s{len(slots)}", child_id=child))

    def _act_delete(self, ops: list[HeapOp]) -> None:
        # annotated nondeterministic outputs stay bound: dropping the name
        # would orphan the always-copy protection of values still aliased
        # elsewhere
        names = self.bound(mutable_only=True)
        if names:
            name = self.rng.choice(names)
            ops.append(HeapOp(op="unbind", name=name))
            self.annotations.pop(name, None)

    def _nondet_cell(self, index: int) -> CellProgram | None:
        rng = self.rng
        names = [n for n in self.pool if n not in self.frozen]
        if not names:
            return None
        name = rng.choice(names)
        oid = next(self.ids)
        size = rng.randint(8, 64)
        value = rng.randint(0, 10**9)
        alt_value = value + rng.randint(1, 10**6)
        make = lambda v: [
            HeapOp(op="create", id=oid, kind="scalar", value=v, size_bytes=size),
            HeapOp(op="bind", name=name, id=oid),
        ]
        self.annotations[name] = "always_copy"
        self.frozen.add(name)
        return CellProgram(
            code_ref=f"cell_{index}",
            ops=make(value),
            alt_ops=make(alt_value),
            declared_runtime_s=round(rng.uniform(0.1, 10.0), 3),
            nondeterministic=True,
        )

    def build_cell(self, index: int) -> CellProgram:
        rng = self.rng
        program = None
        if rng.random() < self.params.nondet_rate:
            program = self._nondet_cell(index)
        if program is not None:
            self.heap.apply(program.ops)
        else:
            ops: list[HeapOp] = []
            reads: set[str] = set()
            for _ in range(rng.randint(1, 3)):
                fragment: list[HeapOp] = []
                roll = rng.random()
                if roll < self.params.delete_rate:
                    self._act_delete(fragment)
                elif roll < 0.55 or not self.bound(mutable_only=True):
                    self._act_create(fragment, reads)
                else:
                    self._act_mutate(fragment, reads)
                # keep the scratch heap current so later actions in this
                # cell build against the state their ops will replay in
                self.heap.apply(fragment)
                ops.extend(fragment)
            program = CellProgram(
                code_ref=f"cell_{index}",
                direct_reads=reads,
                ops=ops,
                declared_runtime_s=round(rng.uniform(0.1, 10.0), 3),
                never_rerun=rng.random() < self.params.never_rerun_rate,
            )
        self.heap.collect_garbage()
        return program


def generate_trace(params: GenParams, seed: int) -> TraceFile:
    """Deterministically generate a replayable random session trace."""
    rng = random.Random(seed)
    builder = _TraceBuilder(params, rng)
    cells = [builder.build_cell(i) for i in range(1, params.cells + 1)]
    bound = set(builder.heap.namespace)
    return TraceFile(
        profile=CostProfile(
            bandwidth_bytes_per_s=params.bandwidth_bytes_per_s,
            latency_s=params.latency_s,
            alpha=params.alpha,
        ),
        cells=cells,
        variable_annotations={
            n: a for n, a in builder.annotations.items() if n in bound
        },
    )


def inject_false_edges(
    history: HistoryGraph,
    rng: random.Random,
    reads: int = 3,
    writes: int = 2,
) -> None:
    """Add false-positive dependencies to a lineage graph in place.

    Injected read edges claim a cell consumed a snapshot it never touched;
    injected writes add a spurious snapshot paired with a read of the prior
    version, the way an over-cautious modified-on-access call would. The
    graph stays well-formed, and reconstruction must stay correct, only
    potentially costlier.
    """
    all_vs = [vs for versions in history.snapshots.values() for vs in versions]
    if not history.cells:
        return
    for _ in range(reads):
        cell = rng.choice(history.cells)
        candidates = [vs for vs in all_vs if vs.t < cell.t]
        if candidates:
            history.reads[cell.t].add(rng.choice(candidates))
    for _ in range(writes):
        cell = rng.choice(history.cells)
        names = [
            name
            for name, versions in sorted(history.snapshots.items())
            if versions
            and versions[0].t < cell.t
            and all(vs.t != cell.t for vs in versions)
            and (name not in history.deleted or cell.t < history.deleted[name])
        ]
        if not names:
            continue
        name = rng.choice(names)
        prev = history.latest_snapshot(name, before=cell.t)
        fake = VariableSnapshot(name, cell.t)
        insort(history.snapshots[name], fake)
        history.writes[cell.t].add(fake)
        history.reads[cell.t].add(prev)

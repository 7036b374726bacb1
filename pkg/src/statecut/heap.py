"""Simulated kernel state.

A ``SimHeap`` stands in for an interpreter namespace: named variables bind to
objects, objects reference each other through labelled slots, and per-object
metadata (size, serializability, hashability) drives everything downstream.
ID graphs fingerprint the reference structure reachable from a variable so
aliases and reference swaps can be detected independently of values; value
hashes fingerprint values independently of object identity.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import InvalidHeapOp, RootMismatch, UnknownObject, UnknownVariable

ObjectId = int

KINDS = ("scalar", "container", "opaque")


@dataclass
class HeapObject:
    """One live object: a scalar value, a container of slots, or an opaque blob."""

    id: ObjectId
    kind: str
    value: object = None
    slots: dict[str, ObjectId] = field(default_factory=dict)  # insertion-ordered
    size_bytes: int = 0
    serializable: bool = True
    deserializable: bool = True
    hashable: bool = True

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidHeapOp(f"unknown object kind {self.kind!r}")
        if self.size_bytes < 0:
            raise InvalidHeapOp("size_bytes must be non-negative")
        if self.deserializable and not self.serializable:
            # An undeserializable object serializes but fails on load; a
            # non-serializable object never gets that far.
            raise InvalidHeapOp("deserializable object must be serializable")
        if self.kind != "container" and self.slots:
            raise InvalidHeapOp("only containers hold slots")


@dataclass(frozen=True)
class HeapOp:
    """One trace-level mutation of the heap.

    ``op`` is one of: create, bind, unbind, set_slot, clear_slot, set_value.
    Unused fields stay at their defaults.
    """

    op: str
    id: ObjectId | None = None
    name: str | None = None
    kind: str | None = None
    value: object = None
    size_bytes: int = 0
    serializable: bool = True
    deserializable: bool = True
    hashable: bool = True
    parent_id: ObjectId | None = None
    slot: str | None = None
    child_id: ObjectId | None = None


@dataclass
class MutationRecord:
    """Names and objects touched by one batch of heap ops."""

    bound: set[str] = field(default_factory=set)
    unbound: set[str] = field(default_factory=set)
    created: set[ObjectId] = field(default_factory=set)
    touched: set[ObjectId] = field(default_factory=set)


class SimHeap:
    """Object heap plus variable namespace for one simulated session."""

    def __init__(self) -> None:
        self.objects: dict[ObjectId, HeapObject] = {}
        self.namespace: dict[str, ObjectId] = {}
        self._next_id: ObjectId = 1

    def allocate_id(self) -> ObjectId:
        """Return a fresh object id (never reused within this heap)."""
        oid = self._next_id
        self._next_id += 1
        return oid

    def get(self, oid: ObjectId) -> HeapObject:
        try:
            return self.objects[oid]
        except KeyError:
            raise UnknownObject(f"no object with id {oid}") from None

    def root(self, name: str) -> ObjectId:
        try:
            return self.namespace[name]
        except KeyError:
            raise UnknownVariable(f"variable {name!r} is not bound") from None

    def add_object(self, obj: HeapObject) -> HeapObject:
        if obj.id in self.objects:
            raise InvalidHeapOp(f"object id {obj.id} already live")
        self.objects[obj.id] = obj
        self._next_id = max(self._next_id, obj.id + 1)
        return obj

    def bind(self, name: str, oid: ObjectId) -> None:
        self.get(oid)
        self.namespace[name] = oid

    def unbind(self, name: str) -> None:
        if name not in self.namespace:
            raise UnknownVariable(f"variable {name!r} is not bound")
        del self.namespace[name]

    def reachable(self, name: str) -> set[ObjectId]:
        """Transitive closure over slots from the variable's root, root included."""
        return self.reachable_from(self.root(name))

    def reachable_from(self, oid: ObjectId) -> set[ObjectId]:
        self.get(oid)
        seen = {oid}
        frontier = [oid]
        while frontier:
            obj = self.objects[frontier.pop()]
            for child in obj.slots.values():
                if child not in seen:
                    seen.add(child)
                    frontier.append(child)
        return seen

    def apply(self, ops: list[HeapOp]) -> MutationRecord:
        """Apply ops in order; on error, the raised exception carries the
        partial MutationRecord as ``.partial``."""
        record = MutationRecord()
        for op in ops:
            try:
                self._apply_one(op, record)
            except (UnknownVariable, UnknownObject, InvalidHeapOp) as err:
                err.partial = record
                raise
        return record

    def _apply_one(self, op: HeapOp, record: MutationRecord) -> None:
        if op.op == "create":
            obj = HeapObject(
                id=op.id,
                kind=op.kind,
                value=op.value,
                size_bytes=op.size_bytes,
                serializable=op.serializable,
                deserializable=op.deserializable,
                hashable=op.hashable,
            )
            self.add_object(obj)
            record.created.add(op.id)
        elif op.op == "bind":
            self.bind(op.name, op.id)
            record.bound.add(op.name)
        elif op.op == "unbind":
            self.unbind(op.name)
            record.unbound.add(op.name)
        elif op.op == "set_slot":
            parent = self.get(op.parent_id)
            if parent.kind != "container":
                raise InvalidHeapOp(f"object {op.parent_id} is not a container")
            self.get(op.child_id)
            parent.slots[op.slot] = op.child_id
            record.touched.add(op.parent_id)
        elif op.op == "clear_slot":
            parent = self.get(op.parent_id)
            if op.slot not in parent.slots:
                raise InvalidHeapOp(f"object {op.parent_id} has no slot {op.slot!r}")
            del parent.slots[op.slot]
            record.touched.add(op.parent_id)
        elif op.op == "set_value":
            obj = self.get(op.id)
            if obj.kind == "container":
                raise InvalidHeapOp("containers carry values through slots")
            obj.value = op.value
            record.touched.add(op.id)
        else:
            raise InvalidHeapOp(f"unknown op {op.op!r}")

    def collect_garbage(self) -> set[ObjectId]:
        """Mark-and-sweep from the namespace; returns the ids swept away."""
        live: set[ObjectId] = set()
        for oid in self.namespace.values():
            if oid not in live:
                live |= self.reachable_from(oid)
        dead = set(self.objects) - live
        for oid in dead:
            del self.objects[oid]
        return dead


@dataclass(frozen=True)
class IdGraph:
    """Reference-structure fingerprint of one variable.

    Nodes are the object ids reachable from the root; edges are the labelled
    slot references among them. Equality of two snapshots over the same heap
    means the variable's reference structure did not change.
    """

    root_name: str
    root_id: ObjectId
    nodes: frozenset[ObjectId]
    edges: frozenset[tuple[ObjectId, str, ObjectId]]


def build_id_graph(heap: SimHeap, name: str) -> IdGraph:
    """Snapshot the reference structure reachable from ``name``."""
    root = heap.root(name)
    nodes = heap.reachable_from(root)
    edges = set()
    for oid in nodes:
        for label, child in heap.objects[oid].slots.items():
            edges.add((oid, label, child))
    return IdGraph(name, root, frozenset(nodes), frozenset(edges))


def id_graphs_overlap(g1: IdGraph, g2: IdGraph) -> bool:
    """True iff the two variables share at least one object."""
    small, large = (g1.nodes, g2.nodes) if len(g1.nodes) <= len(g2.nodes) else (g2.nodes, g1.nodes)
    return any(n in large for n in small)


def id_graph_changed(old: IdGraph, new: IdGraph) -> bool:
    """True iff a reference swap occurred between the two snapshots.

    Compares node and edge sets only; value mutations leave both unchanged.
    """
    if old.root_name != new.root_name:
        raise RootMismatch(f"{old.root_name!r} vs {new.root_name!r}")
    return old.root_id != new.root_id or old.nodes != new.nodes or old.edges != new.edges


def _canon(value: object) -> bytes:
    return json.dumps(value, sort_keys=True, separators=(",", ":")).encode()


def _digest(parts: list[bytes]) -> bytes:
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(len(part).to_bytes(4, "little"))
        h.update(part)
    return h.digest()


FrozenObject = tuple  # (kind, value, slot items tuple, size_bytes, hashable)


def freeze_object(obj: HeapObject) -> FrozenObject:
    """Immutable view of an object's hash-relevant state at this instant."""
    return (obj.kind, obj.value, tuple(obj.slots.items()), obj.size_bytes, obj.hashable)


def subgraph_hash(root: ObjectId, get) -> int | None:
    """Stable 64-bit hash over the values and shape reachable from ``root``.

    ``get(oid)`` supplies a FrozenObject, so the hash can run against either
    the live heap or a pre-execution snapshot. Identity-blind: relabeling
    every object id leaves the hash unchanged. Children fold in sorted
    slot-label order; cycles are cut by hashing a back-edge marker carrying
    the DFS discovery index of the target. Returns None if any reachable
    object is unhashable.
    """
    order: dict[ObjectId, int] = {}
    memo: dict[ObjectId, bytes] = {}
    stack: list[tuple[ObjectId, bool]] = [(root, False)]
    while stack:
        oid, finalize = stack.pop()
        kind, value, slots, size_bytes, hashable = get(oid)
        if not hashable:
            return None
        labels = sorted(label for label, _ in slots)
        children = dict(slots)
        if not finalize:
            if oid in order:
                continue
            order[oid] = len(order)
            stack.append((oid, True))
            for label in reversed(labels):
                child = children[label]
                if child not in order:
                    stack.append((child, False))
            continue
        parts = [kind.encode(), _canon(value)]
        if kind == "opaque":
            parts.append(str(size_bytes).encode())
        for label in labels:
            child = children[label]
            parts.append(label.encode())
            if child in memo:
                parts.append(memo[child])
            else:
                # back edge to an ancestor still on the DFS stack
                parts.append(b"^" + str(order[child]).encode())
        memo[oid] = _digest(parts)
    return int.from_bytes(memo[root], "little")


def value_hash(heap: SimHeap, name: str) -> int | None:
    """Hash the live heap's subgraph reachable from ``name``."""
    root = heap.root(name)
    return subgraph_hash(root, lambda oid: freeze_object(heap.objects[oid]))

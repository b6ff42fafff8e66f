"""Collective data movement between the host and the cores.

Host-to-core primitives (broadcast / scatter / gather) and core-to-core
collectives (allreduce / allgather).  The cores have no direct link to each
other, so the core-to-core collectives are host-mediated: gather to the host,
combine there, push back out.

Parallel transfer commands require the same slice size on every core, so the
planner pads every chunk up to an alignment multiple and never splits an
element across cores.  Pad bytes are zero-filled, which keeps roundtrips and
log assertions exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .device import TO_HOST, TO_PIM, round_up
from .errors import DuplicateArrayId, HandleKindMismatch, WrongLayout
from .management import (
    LAYOUT_REPLICATED,
    LAYOUT_SCATTERED,
    ArrayMetadata,
    ManagementContext,
)


@dataclass(frozen=True)
class TransferPlan:
    """How one host array is split into equal-sized padded per-core chunks."""

    num_cores: int
    len: int
    type_size: int
    per_core_elems: tuple[int, ...]
    padded_chunk_bytes: int
    pad_fill: int = 0


def plan_scatter(length: int, type_size: int, num_cores: int,
                 dma_alignment: int = 8) -> TransferPlan:
    """Split ``length`` elements almost evenly across cores.

    Each chunk boundary falls on a whole-element *and* alignment boundary:
    counts are rounded up to multiples of ``lcm(type_size, alignment) /
    type_size`` elements, leading cores take the rounded-up base count, one
    core takes the remainder, trailing cores may take zero.
    """
    if length < 0 or type_size < 1 or num_cores < 1:
        raise ValueError("length >= 0, type_size >= 1, num_cores >= 1 required")
    group = math.lcm(type_size, dma_alignment) // type_size
    base = 0
    if length:
        base = round_up(-(-length // num_cores), group)
    counts = []
    remaining = length
    for _ in range(num_cores):
        take = min(base, remaining)
        counts.append(take)
        remaining -= take
    padded = round_up(max(counts, default=0) * type_size, dma_alignment)
    return TransferPlan(num_cores, length, type_size, tuple(counts), padded)


def _as_flat_bytes(host, length: int, type_size: int) -> np.ndarray:
    if isinstance(host, (bytes, bytearray, memoryview)):
        flat = np.frombuffer(host, np.uint8)
    else:
        flat = np.ascontiguousarray(host).view(np.uint8).ravel()
    if flat.size != length * type_size:
        raise ValueError(
            f"host buffer holds {flat.size} bytes, expected {length * type_size}")
    return flat


def broadcast(mgmt: ManagementContext, array_id: str, host, length: int,
              type_size: int) -> None:
    """Copy one host array to every core and register it as replicated."""
    device = mgmt.device
    if array_id in mgmt.registry:
        raise DuplicateArrayId(array_id)
    flat = _as_flat_bytes(host, length, type_size)
    padded = round_up(flat.size, device.config.dma_alignment)
    offset = device.alloc(padded)
    if padded:
        buf = np.zeros((device.config.num_cores, padded), np.uint8)
        buf[:, :flat.size] = flat
        device.host_parallel_transfer(TO_PIM, buf, offset, padded)
    mgmt.register(ArrayMetadata(
        id=array_id, len=length, type_size=type_size, bank_offset=offset,
        per_core_elems=(length,) * device.config.num_cores,
        padded_chunk_bytes=padded, layout=LAYOUT_REPLICATED))


def scatter(mgmt: ManagementContext, array_id: str, host, length: int,
            type_size: int) -> None:
    """Split a host array into per-core chunks with one parallel transfer."""
    device = mgmt.device
    if array_id in mgmt.registry:
        raise DuplicateArrayId(array_id)
    flat = _as_flat_bytes(host, length, type_size)
    plan = plan_scatter(length, type_size, device.config.num_cores,
                        device.config.dma_alignment)
    offset = device.alloc(plan.padded_chunk_bytes)
    if plan.padded_chunk_bytes:
        buf = np.zeros((device.config.num_cores, plan.padded_chunk_bytes), np.uint8)
        pos = 0
        for core, count in enumerate(plan.per_core_elems):
            nbytes = count * type_size
            buf[core, :nbytes] = flat[pos:pos + nbytes]
            pos += nbytes
        device.host_parallel_transfer(TO_PIM, buf, offset, plan.padded_chunk_bytes)
    mgmt.register(ArrayMetadata(
        id=array_id, len=length, type_size=type_size, bank_offset=offset,
        per_core_elems=plan.per_core_elems,
        padded_chunk_bytes=plan.padded_chunk_bytes, layout=LAYOUT_SCATTERED))


def gather(mgmt: ManagementContext, array_id: str) -> np.ndarray:
    """Reassemble a scattered array, stripping the padding.

    Returns the raw bytes as a uint8 array of ``len * type_size`` entries;
    callers reinterpret with ``.view(dtype)``.
    """
    device = mgmt.device
    meta = mgmt.lookup(array_id)
    if meta.layout != LAYOUT_SCATTERED:
        raise WrongLayout(f"{array_id} is {meta.layout}, gather needs scattered")
    if meta.len == 0:
        return np.empty(0, np.uint8)
    buf = np.zeros((device.config.num_cores, meta.padded_chunk_bytes), np.uint8)
    device.host_parallel_transfer(TO_HOST, buf, meta.bank_offset,
                                  meta.padded_chunk_bytes)
    parts = [buf[core, :count * meta.type_size]
             for core, count in enumerate(meta.per_core_elems) if count]
    return np.concatenate(parts)


def allreduce(mgmt: ManagementContext, array_id: str, handle) -> None:
    """Combine equal-length per-core copies in place.

    Every core's copy is pulled to the host, folded elementwise with the
    handle's accumulation function, and the combined array is pushed back to
    all cores at the same address.
    """
    device = mgmt.device
    meta = mgmt.lookup(array_id)
    if meta.layout != LAYOUT_REPLICATED:
        raise WrongLayout(f"{array_id} is {meta.layout}, allreduce needs replicated")
    if getattr(handle, "acc_func", None) is None:
        raise HandleKindMismatch("allreduce needs a handle with an acc_func")
    if meta.len == 0:
        return
    nbytes = meta.len * meta.type_size
    buf = np.zeros((device.config.num_cores, meta.padded_chunk_bytes), np.uint8)
    device.host_parallel_transfer(TO_HOST, buf, meta.bank_offset,
                                  meta.padded_chunk_bytes)
    combined = buf[0, :nbytes].copy().reshape(meta.len, meta.type_size)
    for core in range(1, device.config.num_cores):
        handle.acc_func(combined, buf[core, :nbytes].reshape(meta.len, meta.type_size))
    out = np.zeros_like(buf)
    out[:, :nbytes] = combined.reshape(-1)
    device.host_parallel_transfer(TO_PIM, out, meta.bank_offset,
                                  meta.padded_chunk_bytes)


def allgather(mgmt: ManagementContext, array_id: str, new_id: str) -> None:
    """Give every core the full concatenation of a scattered array, registered
    as a new replicated array."""
    meta = mgmt.lookup(array_id)
    full = gather(mgmt, array_id)
    broadcast(mgmt, new_id, full, meta.len, meta.type_size)

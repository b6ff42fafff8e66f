"""Iterators over device-resident arrays: map, keyed reduction, and zip.

Execution strategy: inputs stream through per-tasklet scratchpad buffers in
aligned batches, sized dynamically from the element sizes, the DMA command
limit and the remaining scratchpad budget.  Reductions keep their
accumulators in the scratchpad in one of two variants (one shared array
behind per-entry locks, or one private array per tasklet merged ring-style
with barriers).  Zip is lazy: it records the two source arrays and the next
iterator streams both of them, combining batches in the scratchpad; zipping
an already-lazy array forces physical materialization (laziness is one level
deep).

Callback contract.  All buffers are uint8 views of scratchpad rows; callbacks
reinterpret them with ``.view(dtype)``:

``map_func(src, dst, ctx)``
    ``src`` is ``(m, in_size)``, ``dst`` is ``(m, out_size)``; fill ``dst``
    elementwise.  ``ctx`` is the broadcast context bytes or None.

``init_func(accum)``
    ``accum`` is ``(entries, entry_size)``.  Must write the identity of
    ``acc_func``: per-tasklet and per-core partial results are merged with
    ``acc_func`` afterwards.

``map_to_val_func(src, ctx) -> (vals, keys)``
    ``vals`` is any C-contiguous array of ``m * entry_size`` bytes (one entry
    per input element), ``keys`` is ``m`` output indices.

``acc_func(dst, src)``
    ``dst[i] ⊕= src[i]`` over entry rows, in place.  ``⊕`` must be commutative
    and associative; results are then independent of how work was split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import comm
from .device import TaskletContext, round_up
from .errors import (
    DuplicateArrayId,
    ElementTooLarge,
    DistributionMismatch,
    HandleKindMismatch,
    InvalidHandleKind,
    LengthMismatch,
    MissingCallback,
    NoFeasiblePlan,
    ScratchpadOverflow,
    WrongLayout,
)
from .management import (
    LAYOUT_LAZY_ZIP,
    LAYOUT_REPLICATED,
    LAYOUT_SCATTERED,
    ArrayMetadata,
    ManagementContext,
)

MAP = "map"
REDUCE = "reduce"
ZIP = "zip"

VARIANT_SHARED = "shared_accumulator"
VARIANT_PRIVATE = "thread_private"

# tasklet counts tried when throttling; 12 keeps the core pipeline saturated
TASKLET_CANDIDATES = (12, 8, 4, 2, 1)
# per-tasklet streaming-buffer constant used by the occupancy cost model
DEFAULT_INPUT_BUFFER_BYTES = 2048


@dataclass
class Handle:
    """A registered bundle of user callbacks plus optional broadcast context.

    The context bytes are pushed to every core the first time an iterator
    uses the handle and can be refreshed in place with ``update_context``.
    """

    kind: str
    map_func: object = None
    init_func: object = None
    map_to_val_func: object = None
    acc_func: object = None
    context: np.ndarray | None = None
    context_size: int = 0
    input_type_size: int | None = None
    output_type_size: int | None = None
    id: str = ""
    ctx_array_id: str | None = None


def _as_context_bytes(context) -> np.ndarray | None:
    if context is None:
        return None
    if isinstance(context, (bytes, bytearray, memoryview)):
        return np.frombuffer(bytes(context), np.uint8).copy()
    return np.ascontiguousarray(context).view(np.uint8).ravel().copy()


def create_handle(mgmt: ManagementContext, kind: str, *, map_func=None,
                  init_func=None, map_to_val_func=None, acc_func=None,
                  context=None, input_type_size: int | None = None,
                  output_type_size: int | None = None) -> Handle:
    """Validate the callback bundle for ``kind`` and register it."""
    if kind not in (MAP, REDUCE, ZIP):
        raise InvalidHandleKind(f"kind must be map/reduce/zip, got {kind!r}")
    if kind == MAP and map_func is None:
        raise MissingCallback("map handle needs map_func")
    if kind == REDUCE:
        for name, fn in (("init_func", init_func),
                         ("map_to_val_func", map_to_val_func),
                         ("acc_func", acc_func)):
            if fn is None:
                raise MissingCallback(f"reduce handle needs {name}")
    ctx = _as_context_bytes(context)
    handle = Handle(kind=kind, map_func=map_func, init_func=init_func,
                    map_to_val_func=map_to_val_func, acc_func=acc_func,
                    context=ctx, context_size=0 if ctx is None else ctx.size,
                    input_type_size=input_type_size,
                    output_type_size=output_type_size,
                    id=mgmt.new_handle_id())
    mgmt.handles[handle.id] = handle
    return handle


def update_context(mgmt: ManagementContext, handle: Handle, context) -> None:
    """Replace the handle's context; re-broadcast in place if already resident."""
    ctx = _as_context_bytes(context)
    if ctx is None:
        raise ValueError("context must not be None")
    if handle.ctx_array_id is not None:
        if ctx.size != handle.context_size:
            raise ValueError("resident context can only be replaced same-size")
        meta = mgmt.lookup(handle.ctx_array_id)
        buf = np.zeros((mgmt.device.config.num_cores, meta.padded_chunk_bytes),
                       np.uint8)
        buf[:, :ctx.size] = ctx
        mgmt.device.host_parallel_transfer(comm.TO_PIM, buf, meta.bank_offset,
                                           meta.padded_chunk_bytes)
    handle.context = ctx
    handle.context_size = ctx.size


def _ensure_context(mgmt: ManagementContext, handle: Handle):
    """Broadcast the handle context on first use; returns (bank_offset,
    true_bytes, padded_bytes) or None."""
    if handle.context is None or handle.context_size == 0:
        return None
    if handle.ctx_array_id is None:
        cid = f"__ctx_{handle.id}"
        comm.broadcast(mgmt, cid, handle.context, handle.context_size, 1)
        handle.ctx_array_id = cid
    meta = mgmt.lookup(handle.ctx_array_id)
    return (meta.bank_offset, handle.context_size, meta.padded_chunk_bytes)


# --- batch sizing --------------------------------------------------------------


def _dma_batch_bound(type_sizes, dma_max_bytes: int, dma_alignment: int):
    """Largest element count whose per-stream transfer is legal for every
    stream, plus the granularity all batch counts must keep."""
    group = 1
    for ts in type_sizes:
        group = math.lcm(group, math.lcm(ts, dma_alignment) // ts)
    cap = min(dma_max_bytes // ts for ts in type_sizes)
    batch = (cap // group) * group
    if batch <= 0:
        raise ElementTooLarge(
            f"no aligned batch of element sizes {tuple(type_sizes)} fits in a "
            f"{dma_max_bytes}-byte command")
    return batch, group


def compute_batch_elems(type_size: int, dma_max_bytes: int = 2048,
                        dma_alignment: int = 8) -> int:
    """Largest element count per DMA command: the batch byte size must stay
    within the command limit and on an alignment boundary."""
    if type_size < 1:
        raise ValueError("type_size must be >= 1")
    batch, _ = _dma_batch_bound([type_size], dma_max_bytes, dma_alignment)
    return batch


def _fit_batch(batch: int, group: int, buffer_type_sizes, avail_bytes: int,
               num_tasklets: int, align: int) -> int:
    """Shrink ``batch`` (keeping it a multiple of ``group``) until the
    per-tasklet buffers fit in ``avail_bytes``; 0 when even one group does not."""
    def claim(b: int) -> int:
        return num_tasklets * sum(round_up(b * ts, align) for ts in buffer_type_sizes)

    per_elem = num_tasklets * sum(buffer_type_sizes)
    if per_elem:
        est = (avail_bytes // per_elem // group) * group
        batch = min(batch, max(est, 0))
    while batch > 0 and claim(batch) > avail_bytes:
        batch -= group
    return max(batch, 0)


def _tasklet_candidates(max_tasklets: int) -> list[int]:
    cands = [t for t in TASKLET_CANDIDATES if t <= max_tasklets]
    if not cands or cands[0] != max_tasklets:
        cands.insert(0, max_tasklets)
    return cands


# --- reduction planning ---------------------------------------------------------


@dataclass(frozen=True)
class ReductionPlan:
    variant: str
    num_tasklets: int
    output_len: int
    output_elem_bytes: int
    input_buffer_bytes: int
    occupancy_bytes: int


def _canon_variant(variant: str) -> str:
    table = {"auto": "auto",
             "private": VARIANT_PRIVATE, VARIANT_PRIVATE: VARIANT_PRIVATE,
             "shared": VARIANT_SHARED, VARIANT_SHARED: VARIANT_SHARED}
    try:
        return table[variant]
    except KeyError:
        raise ValueError(f"variant must be auto/shared/private, got {variant!r}") from None


def select_reduction_plan(output_len: int, output_elem_bytes: int, config,
                          variant: str = "auto") -> ReductionPlan:
    """Choose the accumulator variant and tasklet count for a reduction.

    Occupancy model: thread-private needs ``t * (n*d + buffer)`` bytes of
    scratchpad, the shared variant ``n*d + t * buffer``.  The auto policy
    prefers thread-private accumulators, throttling the tasklet count down
    the candidate list until the copies fit; the shared variant is the
    fallback once even a single private copy is too large.
    """
    n, d = output_len, output_elem_bytes
    if n < 1 or d < 1:
        raise ValueError("output_len and output_elem_bytes must be >= 1")
    usable = config.usable_scratchpad_bytes
    buffer = DEFAULT_INPUT_BUFFER_BYTES
    want = _canon_variant(variant)
    if want in ("auto", VARIANT_PRIVATE):
        for t in _tasklet_candidates(config.max_tasklets):
            occ = t * (n * d + buffer)
            if occ <= usable:
                return ReductionPlan(VARIANT_PRIVATE, t, n, d, buffer, occ)
        if want == VARIANT_PRIVATE:
            raise NoFeasiblePlan(
                f"one private accumulator of {n}x{d} B plus a buffer exceeds "
                f"{usable} B of scratchpad")
    if want in ("auto", VARIANT_SHARED):
        for t in _tasklet_candidates(config.max_tasklets):
            occ = n * d + t * buffer
            if occ <= usable:
                return ReductionPlan(VARIANT_SHARED, t, n, d, buffer, occ)
    raise NoFeasiblePlan(
        f"accumulator of {n}x{d} B does not fit {usable} B of scratchpad "
        f"in any variant (DRAM-resident accumulators are not supported)")


# --- shared kernel machinery -----------------------------------------------------


@dataclass(frozen=True)
class _Stream:
    bank_offset: int
    type_size: int
    rel_slot: int = 0


def _physical_streams(mgmt: ManagementContext, meta: ArrayMetadata) -> list[_Stream]:
    if meta.layout == LAYOUT_LAZY_ZIP:
        parts = [mgmt.lookup(src) for src in meta.zip_sources]
        assert all(p.layout != LAYOUT_LAZY_ZIP for p in parts), "zip nesting escaped"
        return [_Stream(p.bank_offset, p.type_size) for p in parts]
    if meta.layout == LAYOUT_REPLICATED:
        raise WrongLayout(f"{meta.id} is replicated; iterators need scattered input")
    return [_Stream(meta.bank_offset, meta.type_size)]


def _as_entry_rows(arr, m: int, entry_bytes: int) -> np.ndarray:
    flat = np.ascontiguousarray(arr).view(np.uint8).ravel()
    if flat.size != m * entry_bytes:
        raise ValueError(
            f"callback returned {flat.size} bytes, expected {m}x{entry_bytes}")
    return flat.reshape(m, entry_bytes)


def _scatter_accumulate(accum: np.ndarray, vals: np.ndarray, keys: np.ndarray,
                        acc_func) -> None:
    """Fold value rows into ``accum[key]`` using only the binary combiner.

    Duplicate keys are pair-reduced in log rounds (sort by key, combine each
    survivor with its right neighbour of the same key) so every ``acc_func``
    call stays vectorized; valid because the combiner is commutative and
    associative.
    """
    if keys.size == 0:
        return
    order = np.argsort(keys, kind="stable")
    k = keys[order]
    v = vals[order]
    while True:
        dup_next = np.zeros(k.size, bool)
        dup_next[:-1] = k[:-1] == k[1:]
        if not dup_next.any():
            break
        first = np.ones(k.size, bool)
        first[1:] = k[1:] != k[:-1]
        starts = np.flatnonzero(first)
        rank = np.arange(k.size) - starts[np.cumsum(first) - 1]
        keep = rank % 2 == 0
        left = keep & dup_next
        left_idx = np.flatnonzero(left)
        merged = v[left_idx]  # fancy index -> fresh writable copy
        acc_func(merged, v[left_idx + 1])
        kept_idx = np.flatnonzero(keep)
        v = v[kept_idx]
        v[left[kept_idx]] = merged
        k = k[kept_idx]
    slot = accum[k]
    acc_func(slot, v)
    accum[k] = slot


def _load_batch_views(tctx: TaskletContext, job, base: int, lo: int, m: int):
    """DMA the current batch of every input stream and return per-stream views,
    combining multi-stream elements into the zip slot when present."""
    align = tctx.device.config.dma_alignment
    views = []
    for s in job.in_streams:
        slot = base + s.rel_slot
        tctx.dma_read(s.bank_offset + lo * s.type_size, slot,
                      round_up(m * s.type_size, align))
        views.append(tctx.scratch[slot:slot + m * s.type_size]
                     .reshape(m, s.type_size))
    if job.combine_rel is None:
        return views[0]
    total = sum(s.type_size for s in job.in_streams)
    cslot = base + job.combine_rel
    z = tctx.scratch[cslot:cslot + m * total].reshape(m, total)
    col = 0
    for view in views:
        z[:, col:col + view.shape[1]] = view
        col += view.shape[1]
    return z


# --- map / zip-materialize kernel -------------------------------------------------


@dataclass
class _StreamJob:
    per_core_elems: tuple[int, ...]
    batch_elems: int
    in_streams: tuple[_Stream, ...]
    combine_rel: int | None
    out_rel: int
    out_bank_offset: int
    out_type_size: int
    blocks_base: int
    block_bytes: int
    ctx: tuple[int, int, int] | None
    map_func: object


def _stream_kernel(tctx: TaskletContext, job: _StreamJob):
    align = tctx.device.config.dma_alignment
    if job.ctx is not None and tctx.tasklet_id == 0:
        tctx.stream_read(job.ctx[0], 0, job.ctx[2])
    yield  # context resident before anyone computes
    ctx_view = tctx.scratch[:job.ctx[1]] if job.ctx is not None else None
    local = job.per_core_elems[tctx.core_id]
    b = job.batch_elems
    num_batches = -(-local // b) if local else 0
    base = job.blocks_base + tctx.tasklet_id * job.block_bytes
    for k in range(tctx.tasklet_id, num_batches, tctx.num_tasklets):
        lo = k * b
        m = min(b, local - lo)
        src = _load_batch_views(tctx, job, base, lo, m)
        oslot = base + job.out_rel
        if job.map_func is not None:
            out = tctx.scratch[oslot:oslot + m * job.out_type_size] \
                .reshape(m, job.out_type_size)
            job.map_func(src, out, ctx_view)
        tctx.dma_write(oslot, job.out_bank_offset + lo * job.out_type_size,
                       round_up(m * job.out_type_size, align))


def _plan_stream_layout(mgmt, in_streams, out_type_size, has_map_func, ctx_info):
    """Pick (tasklets, batch) and lay out per-tasklet scratch slots for a
    streaming job; returns the job skeleton pieces plus the total claim."""
    cfg = mgmt.device.config
    align = cfg.dma_alignment
    in_sizes = [s.type_size for s in in_streams]
    multi = len(in_streams) > 1
    combined = sum(in_sizes)
    # zip materialization writes the combined buffer itself; a map needs its
    # own output slot
    buffer_sizes = list(in_sizes)
    if multi:
        buffer_sizes.append(combined)
    if has_map_func:
        buffer_sizes.append(out_type_size)
    dma_sizes = in_sizes + [out_type_size]
    batch0, group = _dma_batch_bound(dma_sizes, cfg.dma_max_bytes, align)
    ctx_pad = ctx_info[2] if ctx_info else 0
    for tasklets in _tasklet_candidates(cfg.max_tasklets):
        batch = _fit_batch(batch0, group, buffer_sizes,
                           cfg.usable_scratchpad_bytes - ctx_pad, tasklets, align)
        if batch:
            break
    else:
        raise ScratchpadOverflow(
            "streaming buffers do not fit the scratchpad even with one tasklet")
    streams = []
    cursor = 0
    for s in in_streams:
        streams.append(replace(s, rel_slot=cursor))
        cursor += round_up(batch * s.type_size, align)
    combine_rel = None
    if multi:
        combine_rel = cursor
        cursor += round_up(batch * combined, align)
    if has_map_func:
        out_rel = cursor
        cursor += round_up(batch * out_type_size, align)
    else:
        out_rel = combine_rel
    claim = ctx_pad + tasklets * cursor
    return tuple(streams), combine_rel, out_rel, cursor, batch, tasklets, claim


def array_map(mgmt: ManagementContext, src_id: str, dest_id: str,
              output_type_size: int, handle: Handle) -> None:
    """Apply the handle's map function to every element of ``src_id`` and
    register the result under ``dest_id`` with the same distribution."""
    meta = mgmt.lookup(src_id)
    if dest_id in mgmt.registry:
        raise DuplicateArrayId(dest_id)
    if handle.kind != MAP:
        raise HandleKindMismatch(f"array_map needs a map handle, got {handle.kind}")
    if output_type_size < 1:
        raise ValueError("output_type_size must be >= 1")
    if handle.output_type_size not in (None, output_type_size):
        raise ValueError("output_type_size disagrees with the handle declaration")
    in_streams = _physical_streams(mgmt, meta)
    elem_size = sum(s.type_size for s in in_streams)
    if handle.input_type_size not in (None, elem_size):
        raise ValueError("input element size disagrees with the handle declaration")
    ctx_info = _ensure_context(mgmt, handle)
    streams, combine_rel, out_rel, block, batch, tasklets, claim = \
        _plan_stream_layout(mgmt, in_streams, output_type_size, True, ctx_info)
    device = mgmt.device
    dest_padded = round_up(max(meta.per_core_elems, default=0) * output_type_size,
                           device.config.dma_alignment)
    dest_offset = device.alloc(dest_padded)
    job = _StreamJob(per_core_elems=meta.per_core_elems, batch_elems=batch,
                     in_streams=streams, combine_rel=combine_rel, out_rel=out_rel,
                     out_bank_offset=dest_offset, out_type_size=output_type_size,
                     blocks_base=(ctx_info[2] if ctx_info else 0),
                     block_bytes=block, ctx=ctx_info, map_func=handle.map_func)
    device.launch_kernel(_stream_kernel, tasklets, job, scratch_bytes=claim)
    mgmt.register(ArrayMetadata(
        id=dest_id, len=meta.len, type_size=output_type_size,
        bank_offset=dest_offset, per_core_elems=meta.per_core_elems,
        padded_chunk_bytes=dest_padded, layout=LAYOUT_SCATTERED))


def array_zip(mgmt: ManagementContext, src1_id: str, src2_id: str, dest_id: str,
              materialize: bool = False) -> None:
    """Combine two equally distributed arrays element by element.

    Normally this is lazy: no device traffic, the result just names its two
    sources.  When an input is itself lazy (laziness is one level deep) or
    ``materialize`` is set, the combined array is built physically by
    streaming batches and interleaving elements.
    """
    a = mgmt.lookup(src1_id)
    b = mgmt.lookup(src2_id)
    if dest_id in mgmt.registry:
        raise DuplicateArrayId(dest_id)
    if a.len != b.len:
        raise LengthMismatch(f"{src1_id} has {a.len} elements, {src2_id} {b.len}")
    if a.per_core_elems != b.per_core_elems:
        raise DistributionMismatch(
            f"{src1_id} and {src2_id} are split differently across cores")
    out_type_size = a.type_size + b.type_size
    if not materialize and LAYOUT_LAZY_ZIP not in (a.layout, b.layout):
        mgmt.register(ArrayMetadata(
            id=dest_id, len=a.len, type_size=out_type_size, bank_offset=None,
            per_core_elems=a.per_core_elems, padded_chunk_bytes=0,
            layout=LAYOUT_LAZY_ZIP, zip_sources=(src1_id, src2_id)))
        return
    in_streams = _physical_streams(mgmt, a) + _physical_streams(mgmt, b)
    streams, combine_rel, out_rel, block, batch, tasklets, claim = \
        _plan_stream_layout(mgmt, in_streams, out_type_size, False, None)
    device = mgmt.device
    dest_padded = round_up(max(a.per_core_elems, default=0) * out_type_size,
                           device.config.dma_alignment)
    dest_offset = device.alloc(dest_padded)
    job = _StreamJob(per_core_elems=a.per_core_elems, batch_elems=batch,
                     in_streams=streams, combine_rel=combine_rel, out_rel=out_rel,
                     out_bank_offset=dest_offset, out_type_size=out_type_size,
                     blocks_base=0, block_bytes=block, ctx=None, map_func=None)
    device.launch_kernel(_stream_kernel, tasklets, job, scratch_bytes=claim)
    mgmt.register(ArrayMetadata(
        id=dest_id, len=a.len, type_size=out_type_size, bank_offset=dest_offset,
        per_core_elems=a.per_core_elems, padded_chunk_bytes=dest_padded,
        layout=LAYOUT_SCATTERED))


# --- keyed reduction ---------------------------------------------------------------


@dataclass
class _RedJob:
    per_core_elems: tuple[int, ...]
    batch_elems: int
    in_streams: tuple[_Stream, ...]
    combine_rel: int | None
    blocks_base: int
    block_bytes: int
    ctx: tuple[int, int, int] | None
    n: int
    d: int
    variant: str
    accum_base: int
    accum_slot: int
    seg_bounds: tuple[int, ...]
    staging_bank_offset: int
    init_func: object
    map_to_val_func: object
    acc_func: object


def _red_kernel(tctx: TaskletContext, job: _RedJob):
    t, num_t = tctx.tasklet_id, tctx.num_tasklets
    align = tctx.device.config.dma_alignment
    private = job.variant == VARIANT_PRIVATE
    if job.ctx is not None and t == 0:
        tctx.stream_read(job.ctx[0], 0, job.ctx[2])
    my_off = job.accum_base + (t * job.accum_slot if private else 0)
    mine = tctx.scratch[my_off:my_off + job.n * job.d].reshape(job.n, job.d)
    if private or t == 0:
        job.init_func(mine)
    yield  # context + accumulators ready
    ctx_view = tctx.scratch[:job.ctx[1]] if job.ctx is not None else None
    local = job.per_core_elems[tctx.core_id]
    b = job.batch_elems
    num_batches = -(-local // b) if local else 0
    base = job.blocks_base + t * job.block_bytes
    for k in range(t, num_batches, num_t):
        lo = k * b
        m = min(b, local - lo)
        src = _load_batch_views(tctx, job, base, lo, m)
        vals, keys = job.map_to_val_func(src, ctx_view)
        rows = _as_entry_rows(vals, m, job.d)
        ks = np.asarray(keys, np.int64).ravel()
        if ks.size != m:
            raise ValueError(f"callback returned {ks.size} keys for {m} elements")
        if m and (ks.min() < 0 or ks.max() >= job.n):
            raise IndexError(f"reduction key outside [0, {job.n})")
        if private:
            _scatter_accumulate(mine, rows, ks, job.acc_func)
        else:
            uniq = np.unique(ks)
            tctx.locks.acquire(t, uniq)
            _scatter_accumulate(mine, rows, ks, job.acc_func)
            tctx.locks.release(t, uniq)
    yield  # all inputs consumed
    if private:
        # ring merge: after num_t-1 barrier-separated steps each tasklet owns
        # one fully reduced segment, then segments are assembled into the
        # first copy for a single writer
        bounds = job.seg_bounds
        for step in range(num_t - 1):
            neighbor = (t - 1) % num_t
            seg = (t - 1 - step) % num_t
            lo_e, hi_e = bounds[seg], bounds[seg + 1]
            if hi_e > lo_e:
                noff = job.accum_base + neighbor * job.accum_slot
                other = tctx.scratch[noff:noff + job.n * job.d] \
                    .reshape(job.n, job.d)
                job.acc_func(mine[lo_e:hi_e], other[lo_e:hi_e])
            yield
        own = (t + 1) % num_t
        if t:
            lo_e, hi_e = bounds[own], bounds[own + 1]
            first = tctx.scratch[job.accum_base:job.accum_base + job.n * job.d] \
                .reshape(job.n, job.d)
            first[lo_e:hi_e] = mine[lo_e:hi_e]
        yield
    if t == 0:
        tctx.stream_write(job.accum_base, job.staging_bank_offset,
                          round_up(job.n * job.d, align))


def array_red(mgmt: ManagementContext, src_id: str, dest_id: str,
              output_type_size: int, output_len: int, handle: Handle,
              variant: str = "auto") -> ReductionPlan:
    """Keyed reduction: every input element maps to (value, output index) and
    is accumulated into that entry.

    Per-core partial results are gathered to the host, folded with the
    handle's accumulation function, and the combined output array is placed
    on core 0 under ``dest_id``.  Returns the plan that was executed.
    """
    meta = mgmt.lookup(src_id)
    if dest_id in mgmt.registry:
        raise DuplicateArrayId(dest_id)
    if handle.kind != REDUCE:
        raise HandleKindMismatch(f"array_red needs a reduce handle, got {handle.kind}")
    n, d = output_len, output_type_size
    if handle.output_type_size not in (None, d):
        raise ValueError("output_type_size disagrees with the handle declaration")
    plan = select_reduction_plan(n, d, mgmt.device.config, variant)
    in_streams = _physical_streams(mgmt, meta)
    if handle.input_type_size not in (None, sum(s.type_size for s in in_streams)):
        raise ValueError("input element size disagrees with the handle declaration")
    ctx_info = _ensure_context(mgmt, handle)

    device = mgmt.device
    cfg = device.config
    align = cfg.dma_alignment
    in_sizes = [s.type_size for s in in_streams]
    multi = len(in_streams) > 1
    buffer_sizes = in_sizes + ([sum(in_sizes)] if multi else [])
    batch0, group = _dma_batch_bound(in_sizes, cfg.dma_max_bytes, align)
    ctx_pad = ctx_info[2] if ctx_info else 0
    accum_slot = round_up(n * d, align)
    private = plan.variant == VARIANT_PRIVATE

    chosen = None
    for tasklets in [t for t in _tasklet_candidates(cfg.max_tasklets)
                     if t <= plan.num_tasklets]:
        accum_claim = accum_slot * (tasklets if private else 1)
        avail = cfg.usable_scratchpad_bytes - ctx_pad - accum_claim
        batch = _fit_batch(batch0, group, buffer_sizes, avail, tasklets, align)
        if batch:
            chosen = (tasklets, batch, accum_claim)
            break
    if chosen is None:
        raise ScratchpadOverflow(
            f"accumulators plus streaming buffers for {n}x{d} B output do not "
            f"fit the scratchpad (DRAM-resident accumulators are not supported)")
    tasklets, batch, accum_claim = chosen
    if tasklets != plan.num_tasklets:
        plan = replace(plan, num_tasklets=tasklets)

    streams = []
    cursor = 0
    for s in in_streams:
        streams.append(replace(s, rel_slot=cursor))
        cursor += round_up(batch * s.type_size, align)
    combine_rel = None
    if multi:
        combine_rel = cursor
        cursor += round_up(batch * sum(in_sizes), align)
    blocks_base = ctx_pad + accum_claim
    claim = blocks_base + tasklets * cursor

    staging_offset = device.alloc(accum_slot)
    job = _RedJob(per_core_elems=meta.per_core_elems, batch_elems=batch,
                  in_streams=tuple(streams), combine_rel=combine_rel,
                  blocks_base=blocks_base, block_bytes=cursor, ctx=ctx_info,
                  n=n, d=d, variant=plan.variant, accum_base=ctx_pad,
                  accum_slot=accum_slot,
                  seg_bounds=tuple(i * n // tasklets for i in range(tasklets + 1)),
                  staging_bank_offset=staging_offset,
                  init_func=handle.init_func,
                  map_to_val_func=handle.map_to_val_func,
                  acc_func=handle.acc_func)
    device.launch_kernel(_red_kernel, tasklets, job, scratch_bytes=claim,
                         lock_entries=0 if private else n)

    # fold the per-core partials on the host
    partials = np.zeros((cfg.num_cores, accum_slot), np.uint8)
    device.host_parallel_transfer(comm.TO_HOST, partials, staging_offset,
                                  accum_slot)
    device.dealloc(staging_offset, accum_slot)
    combined = partials[0, :n * d].copy().reshape(n, d)
    for core in range(1, cfg.num_cores):
        handle.acc_func(combined, partials[core, :n * d].reshape(n, d))

    # the final output lives on core 0; later gathers stay trivial
    dest_offset = device.alloc(accum_slot)
    padded_out = np.zeros(accum_slot, np.uint8)
    padded_out[:n * d] = combined.reshape(-1)
    device.host_serial_transfer(0, comm.TO_PIM, padded_out, dest_offset,
                                accum_slot)
    mgmt.register(ArrayMetadata(
        id=dest_id, len=n, type_size=d, bank_offset=dest_offset,
        per_core_elems=(n,) + (0,) * (cfg.num_cores - 1),
        padded_chunk_bytes=accum_slot, layout=LAYOUT_SCATTERED))
    return plan

"""Deterministic software model of a banked processing-in-memory machine.

The machine is a set of identical cores, each owning a private DRAM bank and
a small scratchpad.  A core only ever touches its own bank, and only through
explicit DMA commands that must be 8-byte aligned and at most 2048 bytes.
The host reaches the banks through serial (one core) or parallel (all cores,
equal-sized slices) transfer commands.  There is no core-to-core channel:
anything collective has to go through the host.

Tasklets, the per-core hardware threads, are modelled as cooperatively
scheduled generators.  A kernel function receives a :class:`TaskletContext`
and may ``yield`` to wait at the per-core barrier; the scheduler resumes every
live tasklet once per round, in tasklet order, so runs are bit-reproducible.

There is no timing model.  Traffic counters (bytes moved and commands issued)
are the only performance proxy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import (
    AlignmentViolation,
    OutOfBankMemory,
    OutOfBounds,
    ScratchpadOverflow,
    SizeLimitViolation,
    TaskletCountInvalid,
    UnequalSliceSizes,
)

TO_PIM = "to_pim"
TO_HOST = "to_host"


def round_up(n: int, align: int) -> int:
    return -(-n // align) * align


@dataclass(frozen=True)
class DeviceConfig:
    """Geometry and hardware limits of the simulated machine.

    ``scratchpad_reserve_bytes`` is headroom kept free for the runtime/stack;
    kernels may claim at most ``scratchpad_bytes - scratchpad_reserve_bytes``.
    """

    num_cores: int
    dram_bank_bytes: int = 64 << 20
    scratchpad_bytes: int = 64 << 10
    max_tasklets: int = 12
    dma_max_bytes: int = 2048
    dma_alignment: int = 8
    scratchpad_reserve_bytes: int = 8 << 10
    log_transfers: bool = False

    def __post_init__(self) -> None:
        if self.num_cores < 1:
            raise ValueError("num_cores must be >= 1")
        if self.max_tasklets < 1:
            raise ValueError("max_tasklets must be >= 1")
        if self.dma_max_bytes % self.dma_alignment != 0:
            raise ValueError("dma_alignment must divide dma_max_bytes")
        if self.dma_max_bytes > self.scratchpad_bytes:
            raise ValueError("dma_max_bytes must not exceed scratchpad_bytes")
        if self.scratchpad_reserve_bytes >= self.scratchpad_bytes:
            raise ValueError("reserve leaves no usable scratchpad")

    @property
    def usable_scratchpad_bytes(self) -> int:
        return self.scratchpad_bytes - self.scratchpad_reserve_bytes


@dataclass
class TrafficStats:
    """Cumulative byte/command counters; the model's performance proxy."""

    host_to_pim_bytes: int = 0
    pim_to_host_bytes: int = 0
    dram_to_scratch_bytes: int = 0
    scratch_to_dram_bytes: int = 0
    dma_commands: int = 0
    parallel_transfers: int = 0
    serial_transfers: int = 0
    kernel_launches: int = 0

    def copy(self) -> "TrafficStats":
        return replace(self)

    @property
    def bank_scratch_bytes(self) -> int:
        """Total bytes moved between DRAM banks and scratchpads."""
        return self.dram_to_scratch_bytes + self.scratch_to_dram_bytes


@dataclass(frozen=True)
class TransferRecord:
    """One mutation-log entry; written only when ``log_transfers`` is set."""

    op: str  # dma_read | dma_write | parallel | serial
    direction: str
    core: int  # -1 means all cores (parallel command)
    bank_offset: int
    scratch_offset: int | None
    nbytes: int  # per-core bytes for parallel commands

    def as_line(self) -> str:
        scratch = "-" if self.scratch_offset is None else str(self.scratch_offset)
        return (
            f"{self.op}\t{self.direction}\tcore={self.core}\t"
            f"offset={self.bank_offset}\tscratch={scratch}\tsize={self.nbytes}"
        )


class LockTable:
    """One mutex per output entry.

    Under the cooperative scheduler a tasklet never suspends while holding a
    lock, so acquisition cannot block; the table still tracks ownership to
    catch double-acquires and counts acquisitions for inspection.
    """

    def __init__(self, num_entries: int):
        self._owner = np.full(num_entries, -1, np.int32)
        self.acquisitions = 0

    def __len__(self) -> int:
        return len(self._owner)

    def acquire(self, tasklet_id: int, indices: np.ndarray) -> None:
        if (self._owner[indices] != -1).any():
            raise RuntimeError("entry lock already held; tasklet yielded while locked?")
        self._owner[indices] = tasklet_id
        self.acquisitions += int(len(indices))

    def release(self, tasklet_id: int, indices: np.ndarray) -> None:
        if (self._owner[indices] != tasklet_id).any():
            raise RuntimeError("releasing a lock that is not held by this tasklet")
        self._owner[indices] = -1


@dataclass
class TaskletContext:
    """Execution context handed to a kernel, one per (core, tasklet).

    All tasklets of a core share that core's scratchpad and lock table.
    """

    device: "PimDevice"
    core_id: int
    tasklet_id: int
    num_tasklets: int
    locks: LockTable | None = None

    @property
    def scratch(self) -> np.ndarray:
        return self.device.scratchpads[self.core_id]

    def dma_read(self, dram_offset: int, scratch_offset: int, nbytes: int) -> None:
        self.device.dma_read(self.core_id, dram_offset, scratch_offset, nbytes)

    def dma_write(self, scratch_offset: int, dram_offset: int, nbytes: int) -> None:
        self.device.dma_write(self.core_id, scratch_offset, dram_offset, nbytes)

    def stream_read(self, dram_offset: int, scratch_offset: int, nbytes: int) -> None:
        """Read ``nbytes`` (any aligned size) as a sequence of legal commands."""
        step = self.device.config.dma_max_bytes
        done = 0
        while done < nbytes:
            n = min(step, nbytes - done)
            self.dma_read(dram_offset + done, scratch_offset + done, n)
            done += n

    def stream_write(self, scratch_offset: int, dram_offset: int, nbytes: int) -> None:
        step = self.device.config.dma_max_bytes
        done = 0
        while done < nbytes:
            n = min(step, nbytes - done)
            self.dma_write(scratch_offset + done, dram_offset + done, n)
            done += n


Kernel = Callable[[TaskletContext, object], object]


class PimDevice:
    """The simulated machine: banks, scratchpads, DMA engine, tasklet runner.

    The host-side API (alloc, transfers, launch) is meant to be driven from a
    single control thread.  Everything is deterministic: the same sequence of
    calls produces bit-identical bank contents and identical counters.
    """

    def __init__(self, config: DeviceConfig):
        self.config = config
        self.banks = np.zeros((config.num_cores, config.dram_bank_bytes), np.uint8)
        self.scratchpads = np.zeros((config.num_cores, config.scratchpad_bytes), np.uint8)
        self.cursors = [0] * config.num_cores
        self.stats = TrafficStats()
        self.transfer_log: list[TransferRecord] = []

    # -- symmetric bump allocation --------------------------------------------

    def alloc(self, nbytes: int) -> int:
        """Reserve ``nbytes`` (rounded up to alignment) at the same offset in
        every bank and return that offset."""
        if nbytes < 0:
            raise ValueError("nbytes must be non-negative")
        aligned = round_up(nbytes, self.config.dma_alignment)
        offset = self.cursors[0]
        assert all(c == offset for c in self.cursors), "allocator lost symmetry"
        if offset + aligned > self.config.dram_bank_bytes:
            raise OutOfBankMemory(
                f"request of {aligned} bytes at cursor {offset} exceeds "
                f"bank size {self.config.dram_bank_bytes}"
            )
        self.cursors = [offset + aligned] * self.config.num_cores
        return offset

    def dealloc(self, offset: int, nbytes: int) -> bool:
        """Roll the cursor back if this is the most recent allocation.

        Returns True when the space was reclaimed.  Non-top regions are left
        in place (bump-allocator discipline).
        """
        aligned = round_up(nbytes, self.config.dma_alignment)
        if self.cursors[0] == offset + aligned:
            self.cursors = [offset] * self.config.num_cores
            return True
        return False

    # -- DMA between a core's bank and its scratchpad --------------------------

    def _check_dma(self, core: int, dram_offset: int, scratch_offset: int, nbytes: int) -> None:
        cfg = self.config
        if not 0 <= core < cfg.num_cores:
            raise OutOfBounds(f"core {core} out of range")
        if nbytes <= 0 or nbytes > cfg.dma_max_bytes:
            raise SizeLimitViolation(
                f"DMA size {nbytes} outside (0, {cfg.dma_max_bytes}]"
            )
        for name, value in (("size", nbytes), ("dram offset", dram_offset),
                            ("scratch offset", scratch_offset)):
            if value % cfg.dma_alignment != 0:
                raise AlignmentViolation(
                    f"DMA {name} {value} not a multiple of {cfg.dma_alignment}"
                )
        if dram_offset < 0 or dram_offset + nbytes > cfg.dram_bank_bytes:
            raise OutOfBounds(f"bank range [{dram_offset}, +{nbytes}) out of bounds")
        if scratch_offset < 0 or scratch_offset + nbytes > cfg.scratchpad_bytes:
            raise OutOfBounds(f"scratch range [{scratch_offset}, +{nbytes}) out of bounds")

    def dma_read(self, core: int, dram_offset: int, scratch_offset: int, nbytes: int) -> None:
        """Copy bank -> scratchpad, one hardware command."""
        self._check_dma(core, dram_offset, scratch_offset, nbytes)
        self.scratchpads[core, scratch_offset:scratch_offset + nbytes] = \
            self.banks[core, dram_offset:dram_offset + nbytes]
        self.stats.dram_to_scratch_bytes += nbytes
        self.stats.dma_commands += 1
        if self.config.log_transfers:
            self.transfer_log.append(TransferRecord(
                "dma_read", "dram_to_scratch", core, dram_offset, scratch_offset, nbytes))

    def dma_write(self, core: int, scratch_offset: int, dram_offset: int, nbytes: int) -> None:
        """Copy scratchpad -> bank, one hardware command."""
        self._check_dma(core, dram_offset, scratch_offset, nbytes)
        self.banks[core, dram_offset:dram_offset + nbytes] = \
            self.scratchpads[core, scratch_offset:scratch_offset + nbytes]
        self.stats.scratch_to_dram_bytes += nbytes
        self.stats.dma_commands += 1
        if self.config.log_transfers:
            self.transfer_log.append(TransferRecord(
                "dma_write", "scratch_to_dram", core, dram_offset, scratch_offset, nbytes))

    # -- host <-> bank transfers ------------------------------------------------

    def _as_slice_matrix(self, host, nbytes_per_core: int) -> np.ndarray:
        if isinstance(host, np.ndarray) and host.ndim == 2:
            mat = host
        else:
            rows = [np.frombuffer(bytes(s), np.uint8) if not isinstance(s, np.ndarray) else s
                    for s in host]
            sizes = {r.size for r in rows}
            if len(sizes) > 1:
                raise UnequalSliceSizes(f"slice sizes differ: {sorted(sizes)}")
            mat = np.stack(rows) if rows else np.zeros((0, 0), np.uint8)
        if mat.shape[0] != self.config.num_cores:
            raise UnequalSliceSizes(
                f"need one slice per core ({self.config.num_cores}), got {mat.shape[0]}")
        if mat.shape[1] != nbytes_per_core:
            raise UnequalSliceSizes(
                f"slice size {mat.shape[1]} != declared {nbytes_per_core}")
        return mat

    def _check_host_transfer(self, bank_offset: int, nbytes: int) -> None:
        cfg = self.config
        if nbytes < 0:
            raise SizeLimitViolation("negative transfer size")
        if nbytes % cfg.dma_alignment or bank_offset % cfg.dma_alignment:
            raise AlignmentViolation(
                f"host transfer offset {bank_offset} / size {nbytes} not "
                f"{cfg.dma_alignment}-byte aligned")
        if bank_offset < 0 or bank_offset + nbytes > cfg.dram_bank_bytes:
            raise OutOfBounds(f"bank range [{bank_offset}, +{nbytes}) out of bounds")

    def host_parallel_transfer(self, direction: str, host, bank_offset: int,
                               nbytes_per_core: int) -> None:
        """Move equal-sized slices between the host and every core's bank in
        one parallel command.

        ``host`` is a (num_cores, nbytes_per_core) uint8 array (or a sequence
        of equal-sized buffers for the to-pim direction).  For ``to_host`` the
        array is filled in place.
        """
        self._check_host_transfer(bank_offset, nbytes_per_core)
        mat = self._as_slice_matrix(host, nbytes_per_core)
        span = self.banks[:, bank_offset:bank_offset + nbytes_per_core]
        if direction == TO_PIM:
            span[:] = mat
            self.stats.host_to_pim_bytes += self.config.num_cores * nbytes_per_core
        elif direction == TO_HOST:
            mat[:] = span
            self.stats.pim_to_host_bytes += self.config.num_cores * nbytes_per_core
        else:
            raise ValueError(f"unknown direction {direction!r}")
        self.stats.parallel_transfers += 1
        if self.config.log_transfers:
            self.transfer_log.append(TransferRecord(
                "parallel", direction, -1, bank_offset, None, nbytes_per_core))

    def host_serial_transfer(self, core: int, direction: str, host_slice,
                             bank_offset: int, nbytes: int) -> None:
        """Single-core variant of the host transfer; same alignment rules."""
        if not 0 <= core < self.config.num_cores:
            raise OutOfBounds(f"core {core} out of range")
        self._check_host_transfer(bank_offset, nbytes)
        buf = (host_slice if isinstance(host_slice, np.ndarray)
               else np.frombuffer(bytes(host_slice), np.uint8))
        if buf.size != nbytes:
            raise UnequalSliceSizes(f"slice size {buf.size} != declared {nbytes}")
        span = self.banks[core, bank_offset:bank_offset + nbytes]
        if direction == TO_PIM:
            span[:] = buf
            self.stats.host_to_pim_bytes += nbytes
        elif direction == TO_HOST:
            buf[:] = span
            self.stats.pim_to_host_bytes += nbytes
        else:
            raise ValueError(f"unknown direction {direction!r}")
        self.stats.serial_transfers += 1
        if self.config.log_transfers:
            self.transfer_log.append(TransferRecord(
                "serial", direction, core, bank_offset, None, nbytes))

    # -- kernel execution ---------------------------------------------------------

    def launch_kernel(self, kernel: Kernel, num_tasklets: int, params: object = None,
                      scratch_bytes: int = 0, lock_entries: int = 0) -> None:
        """Run ``kernel`` once per (core, tasklet), barrier-synchronized per core.

        ``kernel(ctx, params)`` may return a generator; each ``yield`` waits at
        the per-core barrier.  ``scratch_bytes`` is the kernel's declared
        scratchpad footprint (buffers + accumulators) and must fit the usable
        budget.  ``lock_entries`` sizes the per-core entry lock table.
        """
        cfg = self.config
        if not 1 <= num_tasklets <= cfg.max_tasklets:
            raise TaskletCountInvalid(
                f"num_tasklets {num_tasklets} outside 1..{cfg.max_tasklets}")
        if scratch_bytes > cfg.usable_scratchpad_bytes:
            raise ScratchpadOverflow(
                f"kernel claims {scratch_bytes} B, usable scratchpad is "
                f"{cfg.usable_scratchpad_bytes} B")
        for core in range(cfg.num_cores):
            locks = LockTable(lock_entries) if lock_entries else None
            live = []
            for t in range(num_tasklets):
                ctx = TaskletContext(self, core, t, num_tasklets, locks)
                r = kernel(ctx, params)
                if hasattr(r, "__next__"):
                    live.append(r)
            # one scheduler round per barrier epoch, tasklets in id order
            while live:
                nxt = []
                for gen in live:
                    try:
                        next(gen)
                        nxt.append(gen)
                    except StopIteration:
                        pass
                live = nxt
        self.stats.kernel_launches += 1

    # -- debugging ---------------------------------------------------------------

    def dump_log(self, path) -> None:
        with open(path, "w") as f:
            for rec in self.transfer_log:
                f.write(rec.as_line() + "\n")

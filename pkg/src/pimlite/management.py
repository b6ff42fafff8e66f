"""Host-side registry of device-resident arrays.

Arrays live at the same bank offset on every core (symmetric allocation).
A metadata record tracks how the elements are split across cores and how much
padded space each per-core chunk occupies.  Lazily zipped arrays own no
storage of their own; they only name their two constituents.
"""

from __future__ import annotations

from dataclasses import dataclass

from .device import PimDevice
from .errors import DuplicateArrayId, UnknownArrayId

LAYOUT_SCATTERED = "scattered"
LAYOUT_REPLICATED = "replicated"
LAYOUT_LAZY_ZIP = "lazy_zip"


@dataclass
class ArrayMetadata:
    """Everything the framework needs to find and move one array.

    ``per_core_elems`` holds whole element counts (no element is ever split
    across cores).  For scattered arrays the counts sum to ``len``; replicated
    arrays hold all ``len`` elements on every core.  ``padded_chunk_bytes`` is
    the aligned per-core footprint used by parallel transfers.
    """

    id: str
    len: int
    type_size: int
    bank_offset: int | None
    per_core_elems: tuple[int, ...]
    padded_chunk_bytes: int
    layout: str = LAYOUT_SCATTERED
    zip_sources: tuple[str, str] | None = None

    def validate(self, dma_alignment: int) -> None:
        if self.len < 0 or self.type_size < 1:
            raise ValueError(f"{self.id}: bad len/type_size")
        if self.padded_chunk_bytes % dma_alignment != 0:
            raise ValueError(f"{self.id}: padded chunk not aligned")
        if self.layout == LAYOUT_SCATTERED:
            if sum(self.per_core_elems) != self.len:
                raise ValueError(f"{self.id}: per-core counts do not sum to len")
        elif self.layout == LAYOUT_REPLICATED:
            if any(c != self.len for c in self.per_core_elems):
                raise ValueError(f"{self.id}: replicated copies must be full length")
        elif self.layout == LAYOUT_LAZY_ZIP:
            if self.zip_sources is None or self.bank_offset is not None:
                raise ValueError(f"{self.id}: lazy zip owns no storage")
            if sum(self.per_core_elems) != self.len:
                raise ValueError(f"{self.id}: per-core counts do not sum to len")
        else:
            raise ValueError(f"{self.id}: unknown layout {self.layout!r}")
        if any(c * self.type_size > self.padded_chunk_bytes
               for c in self.per_core_elems if self.layout != LAYOUT_LAZY_ZIP):
            raise ValueError(f"{self.id}: per-core bytes exceed padded chunk")


class ManagementContext:
    """Registry of arrays and handles, bound to one device.

    Meant to be driven from a single control thread; nothing here is
    concurrency-safe and nothing persists across processes.
    """

    def __init__(self, device: PimDevice):
        self.device = device
        self.registry: dict[str, ArrayMetadata] = {}
        self.handles: dict[str, object] = {}
        self._handle_counter = 0

    def lookup(self, array_id: str) -> ArrayMetadata:
        try:
            return self.registry[array_id]
        except KeyError:
            raise UnknownArrayId(array_id) from None

    def register(self, meta: ArrayMetadata) -> None:
        if meta.id in self.registry:
            raise DuplicateArrayId(meta.id)
        if len(meta.per_core_elems) != self.device.config.num_cores:
            raise ValueError(f"{meta.id}: need one count per core")
        meta.validate(self.device.config.dma_alignment)
        self.registry[meta.id] = meta

    def free(self, array_id: str) -> None:
        """Drop the id.  Bank space is reclaimed only when the array was the
        most recent allocation (LIFO discipline)."""
        meta = self.registry.pop(array_id, None)
        if meta is None:
            raise UnknownArrayId(array_id)
        if meta.layout != LAYOUT_LAZY_ZIP and meta.bank_offset is not None:
            self.device.dealloc(meta.bank_offset, meta.padded_chunk_bytes)

    def new_handle_id(self) -> str:
        self._handle_counter += 1
        return f"h{self._handle_counter}"

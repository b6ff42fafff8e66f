# Walk through the machine model and the collective communication layer:
# banks, scratchpads, DMA limits, then scatter/gather/broadcast and the
# host-mediated allreduce/allgather.

import numpy as np

from pimlite import (
    DeviceConfig,
    PimDevice,
    ManagementContext,
    AlignmentViolation,
    broadcast,
    scatter,
    gather,
    allgather,
    allreduce,
    create_handle,
    plan_scatter,
)

# A machine with 4 cores. Banks default to 64 MB; we shrink them here so the
# demo stays light. Scratchpads are 64 KB with an 8 KB runtime reserve.
device = PimDevice(DeviceConfig(num_cores=4, dram_bank_bytes=1 << 20))
mgmt = ManagementContext(device)
print(f"cores={device.config.num_cores}  "
      f"usable scratchpad={device.config.usable_scratchpad_bytes} B  "
      f"DMA limit={device.config.dma_max_bytes} B, "
      f"{device.config.dma_alignment}-byte aligned")

# DMA commands obey hardware rules; a 12-byte transfer is simply illegal.
try:
    device.dma_read(0, 0, 0, 12)
except AlignmentViolation as e:
    print("rejected as expected:", e)

# The planner splits arrays without ever cutting an element in half, even for
# awkward element sizes. Five 12-byte elements on two cores become 4 + 1,
# with both chunks padded to the same 48-byte parallel transfer.
plan = plan_scatter(5, 12, 2)
print("scatter plan for 5 x 12 B on 2 cores:", plan.per_core_elems,
      f"chunk={plan.padded_chunk_bytes} B")

# Scatter, then gather: the roundtrip is byte-exact, padding stripped.
data = np.arange(1000, dtype=np.uint32)
scatter(mgmt, "vec", data, len(data), 4)
print("per-core split:", mgmt.lookup("vec").per_core_elems)
assert np.array_equal(gather(mgmt, "vec").view(np.uint32), data)
print("scatter -> gather roundtrip OK")

# Broadcast puts a full copy on every core (model weights, lookup tables...).
weights = np.arange(10, dtype=np.uint32)
broadcast(mgmt, "weights", weights, len(weights), 4)
meta = mgmt.lookup("weights")
for core in range(4):
    local = device.banks[core, meta.bank_offset:meta.bank_offset + 40]
    assert np.array_equal(local.view(np.uint32), weights)
print("broadcast: all cores hold the same copy")

# allgather: every core ends up with the whole scattered array.
allgather(mgmt, "vec", "vec_everywhere")
print("allgather:", mgmt.lookup("vec_everywhere").layout,
      "len", mgmt.lookup("vec_everywhere").len)

# allreduce combines per-core arrays in place. The cores have no link to each
# other, so the fold runs through the host: gather, combine, push back.
def init(a):
    a[:] = 0

def to_val(src, ctx):
    v = src.view(np.uint32).ravel()
    return v, np.zeros(v.size, np.int64)

def acc(dst, src):
    a = dst.view(np.uint32)
    np.add(a, src.view(np.uint32), out=a)

add_handle = create_handle(mgmt, "reduce", init_func=init,
                           map_to_val_func=to_val, acc_func=acc)

broadcast(mgmt, "partial", np.zeros(4, np.uint32), 4, 4)
meta = mgmt.lookup("partial")
for core in range(4):  # pretend each core computed its own partial vector
    row = np.full(4, core + 1, np.uint32)
    device.host_serial_transfer(core, "to_pim", row.view(np.uint8),
                                meta.bank_offset, 16)
allreduce(mgmt, "partial", add_handle)
combined = device.banks[0, meta.bank_offset:meta.bank_offset + 16].view(np.uint32)
print("allreduce of [1..1],[2..2],[3..3],[4..4]:", combined)
assert (combined == 10).all()

print("\ntraffic so far:", device.stats)

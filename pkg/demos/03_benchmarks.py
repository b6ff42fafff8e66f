# Run the six benchmark workloads against their sequential host oracles and
# show what each one costs in data movement. Everything is integer or
# fixed-point, so "correct" means bit-identical.

import numpy as np

from pimlite import BenchmarkSpec, DeviceConfig, PimDevice, ManagementContext
from pimlite import apps

CORES = 8
ELEMS_PER_CORE = 10_000

WORKLOADS = [
    ("reduction", {}),                 # sum of u32 into one u64 accumulator
    ("vecadd", {}),                    # lazy zip + elementwise map
    ("histogram", {"bins": 256}),      # keyed reduction, 12-bit inputs
    ("linreg", {"iterations": 3}),     # fixed-point gradient descent
    ("logreg", {"iterations": 3}),     # same, polynomial sigmoid
    ("kmeans", {"iterations": 3}),     # Lloyd steps, integer centroids
]

print(f"{'benchmark':<10} {'elems':>8} {'host->pim':>10} {'pim->host':>10} "
      f"{'bank<->pad':>10} {'DMA cmds':>9} {'launches':>8}  result")
for name, overrides in WORKLOADS:
    total = ELEMS_PER_CORE * CORES if name not in ("linreg", "logreg", "kmeans") \
        else 1000 * CORES
    spec = BenchmarkSpec(name=name, total_elems=total, seed=1, **overrides)
    device = PimDevice(DeviceConfig(num_cores=CORES, dram_bank_bytes=4 << 20))
    mgmt = ManagementContext(device)
    runner = getattr(apps, f"run_{name}")
    oracle = getattr(apps, f"oracle_{name}")
    result = runner(mgmt, spec)
    expected = oracle(spec)
    assert np.array_equal(np.asarray(result), np.asarray(expected)), name
    s = device.stats
    summary = {
        "reduction": lambda: f"sum={result}",
        "vecadd": lambda: f"out[0..2]={result[:3].tolist()}",
        "histogram": lambda: f"max bin={int(result.max())}",
        "linreg": lambda: f"w[0..2]={result[-1][:3].tolist()}",
        "logreg": lambda: f"w[0..2]={result[-1][:3].tolist()}",
        "kmeans": lambda: f"centroid0={result[-1][0][:2].tolist()}...",
    }[name]()
    print(f"{name:<10} {total:>8} {s.host_to_pim_bytes:>10} "
          f"{s.pim_to_host_bytes:>10} {s.bank_scratch_bytes:>10} "
          f"{s.dma_commands:>9} {s.kernel_launches:>8}  {summary}")

print("\nall six benchmarks bit-identical to their sequential oracles")

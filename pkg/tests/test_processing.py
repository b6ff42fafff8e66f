import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_mgmt
from pimlite import comm, processing
from pimlite.device import DeviceConfig
from pimlite.errors import (
    DistributionMismatch,
    ElementTooLarge,
    HandleKindMismatch,
    InvalidHandleKind,
    LengthMismatch,
    MissingCallback,
    NoFeasiblePlan,
    ScratchpadOverflow,
)
from pimlite.processing import (
    MAP,
    REDUCE,
    VARIANT_PRIVATE,
    VARIANT_SHARED,
    compute_batch_elems,
    select_reduction_plan,
)


def scatter_u32(mgmt, name, values):
    arr = np.asarray(values, np.uint32)
    comm.scatter(mgmt, name, arr, arr.size, 4)
    return arr


def u32_map(fn):
    def map_func(src, dst, ctx):
        out = dst.view(np.uint32).ravel()
        out[:] = fn(src.view(np.uint32).ravel())
    return map_func


def sum_reduce_handle(mgmt, key_fn, entries, entry_dtype=np.uint32):
    """Keyed u32 reduction handle with the given key function."""
    width = np.dtype(entry_dtype).itemsize

    def init(a):
        a[:] = 0

    def to_val(src, ctx):
        v = src.view(np.uint32).ravel().astype(entry_dtype)
        return v, key_fn(src.view(np.uint32).ravel())

    def acc(dst, src):
        a = dst.view(entry_dtype)
        np.add(a, src.view(entry_dtype), out=a)

    handle = processing.create_handle(mgmt, REDUCE, init_func=init,
                                      map_to_val_func=to_val, acc_func=acc)
    return handle, width


class TestHandles:
    def test_invalid_kind(self, mgmt):
        with pytest.raises(InvalidHandleKind):
            processing.create_handle(mgmt, "fold")

    def test_map_requires_map_func(self, mgmt):
        with pytest.raises(MissingCallback):
            processing.create_handle(mgmt, MAP)

    def test_reduce_requires_all_three(self, mgmt):
        with pytest.raises(MissingCallback):
            processing.create_handle(mgmt, REDUCE, init_func=lambda a: None,
                                     map_to_val_func=lambda s, c: None)

    def test_kind_mismatch_at_call_site(self, mgmt):
        scatter_u32(mgmt, "x", range(8))
        map_handle = processing.create_handle(mgmt, MAP, map_func=u32_map(lambda v: v))
        with pytest.raises(HandleKindMismatch):
            processing.array_red(mgmt, "x", "y", 4, 1, map_handle)
        red_handle, _ = sum_reduce_handle(mgmt, lambda v: np.zeros(v.size, np.int64), 1)
        with pytest.raises(HandleKindMismatch):
            processing.array_map(mgmt, "x", "y", 4, red_handle)


class TestBatchSizing:
    def brute_force(self, type_size, dma_max=2048, align=8):
        for b in range(dma_max // type_size, 0, -1):
            if (b * type_size) % align == 0:
                return b
        return None

    @pytest.mark.parametrize("type_size,expected", [(4, 512), (12, 170), (40, 51)])
    def test_reference_sizes(self, type_size, expected):
        assert self.brute_force(type_size) == expected  # oracle agrees
        assert compute_batch_elems(type_size) == expected

    @settings(max_examples=200, deadline=None)
    @given(type_size=st.integers(1, 4096))
    def test_matches_enumeration(self, type_size):
        expected = self.brute_force(type_size)
        if expected is None:
            with pytest.raises(ElementTooLarge):
                compute_batch_elems(type_size)
        else:
            assert compute_batch_elems(type_size) == expected

    def test_element_too_large(self):
        with pytest.raises(ElementTooLarge):
            compute_batch_elems(4096)
        with pytest.raises(ElementTooLarge):
            compute_batch_elems(1500)  # no aligned multiple fits 2048


class TestReductionPlan:
    @pytest.mark.parametrize("bins,tasklets", [
        (256, 12), (512, 12), (1024, 8), (2048, 4), (4096, 2)])
    def test_histogram_throttling(self, bins, tasklets):
        plan = select_reduction_plan(bins, 4, DeviceConfig(num_cores=1))
        assert plan.variant == VARIANT_PRIVATE
        assert plan.num_tasklets == tasklets

    def test_tiny_accumulator_uses_all_tasklets(self):
        plan = select_reduction_plan(1, 8, DeviceConfig(num_cores=1))
        assert plan.variant == VARIANT_PRIVATE
        assert plan.num_tasklets == 12

    def test_occupancy_formulas(self):
        cfg = DeviceConfig(num_cores=1)
        private = select_reduction_plan(1024, 4, cfg, variant="private")
        assert private.occupancy_bytes == 8 * (1024 * 4 + 2048)
        shared = select_reduction_plan(1024, 4, cfg, variant="shared")
        assert shared.occupancy_bytes == 1024 * 4 + 12 * 2048
        assert shared.num_tasklets == 12

    def test_shared_keeps_more_tasklets_for_large_outputs(self):
        cfg = DeviceConfig(num_cores=1)
        assert select_reduction_plan(4096, 4, cfg, variant="private").num_tasklets == 2
        assert select_reduction_plan(4096, 4, cfg, variant="shared").num_tasklets == 12

    def test_no_feasible_plan(self):
        cfg = DeviceConfig(num_cores=1)
        with pytest.raises(NoFeasiblePlan):
            select_reduction_plan(20_000, 4, cfg)

    @settings(max_examples=150, deadline=None)
    @given(n1=st.integers(1, 8192), n2=st.integers(1, 8192),
           d=st.sampled_from([1, 2, 4, 8]))
    def test_tasklets_monotone_in_accumulator_size(self, n1, n2, d):
        cfg = DeviceConfig(num_cores=1)

        def tasklets(n):
            try:
                return select_reduction_plan(n, d, cfg).num_tasklets
            except NoFeasiblePlan:
                return 0

        lo, hi = sorted((n1, n2))
        assert tasklets(lo) >= tasklets(hi)


class TestMap:
    def test_square(self):
        mgmt = make_mgmt(cores=2)
        scatter_u32(mgmt, "x", [1, 2, 3, 4])
        handle = processing.create_handle(mgmt, MAP, map_func=u32_map(lambda v: v * v))
        processing.array_map(mgmt, "x", "y", 4, handle)
        assert np.array_equal(comm.gather(mgmt, "y").view(np.uint32), [1, 4, 9, 16])
        assert mgmt.lookup("y").per_core_elems == mgmt.lookup("x").per_core_elems

    def test_identity(self):
        mgmt = make_mgmt(cores=3)
        data = scatter_u32(mgmt, "x", np.arange(1000))
        handle = processing.create_handle(mgmt, MAP, map_func=u32_map(lambda v: v))
        processing.array_map(mgmt, "x", "y", 4, handle)
        assert np.array_equal(comm.gather(mgmt, "y").view(np.uint32), data)

    def test_widening_output(self):
        mgmt = make_mgmt(cores=2)
        data = scatter_u32(mgmt, "x", np.arange(777))

        def widen(src, dst, ctx):
            out = dst.view(np.uint64).ravel()
            out[:] = src.view(np.uint32).ravel().astype(np.uint64) * 3

        handle = processing.create_handle(mgmt, MAP, map_func=widen)
        processing.array_map(mgmt, "x", "y", 8, handle)
        assert np.array_equal(comm.gather(mgmt, "y").view(np.uint64),
                              data.astype(np.uint64) * 3)

    def test_context_reaches_every_core(self):
        # 40 bytes of model data broadcast once, read by the kernel on all cores
        mgmt = make_mgmt(cores=4)
        data = scatter_u32(mgmt, "x", np.arange(100))
        weights = np.arange(10, dtype=np.uint32)  # 40 bytes

        def add_ctx_sum(src, dst, ctx):
            bias = ctx.view(np.uint32).sum(dtype=np.uint32)
            out = dst.view(np.uint32).ravel()
            np.add(src.view(np.uint32).ravel(), bias, out=out)

        handle = processing.create_handle(mgmt, MAP, map_func=add_ctx_sum,
                                          context=weights)
        processing.array_map(mgmt, "x", "y", 4, handle)
        expected = data + np.uint32(weights.sum())
        assert np.array_equal(comm.gather(mgmt, "y").view(np.uint32), expected)

    def test_pure_function_pool(self):
        rng = np.random.default_rng(7)
        pool = [lambda v: v + 1, lambda v: v * 17, lambda v: v ^ 0xDEAD,
                lambda v: np.maximum(v, 1000), lambda v: v >> 3]
        for i, fn in enumerate(pool):
            mgmt = make_mgmt(cores=int(rng.integers(1, 6)))
            data = scatter_u32(mgmt, "x", rng.integers(0, 1 << 32, 257, dtype=np.uint32))
            handle = processing.create_handle(mgmt, MAP, map_func=u32_map(fn))
            processing.array_map(mgmt, "x", "y", 4, handle)
            assert np.array_equal(comm.gather(mgmt, "y").view(np.uint32), fn(data))


class TestZip:
    def test_lazy_zip_moves_no_data(self):
        mgmt = make_mgmt(cores=2)
        scatter_u32(mgmt, "a", range(16))
        scatter_u32(mgmt, "b", range(16))
        before = mgmt.device.stats.copy()
        processing.array_zip(mgmt, "a", "b", "ab")
        after = mgmt.device.stats
        assert after.bank_scratch_bytes == before.bank_scratch_bytes
        assert after.host_to_pim_bytes == before.host_to_pim_bytes

    def test_map_over_lazy_zip(self):
        mgmt = make_mgmt(cores=3)
        a = scatter_u32(mgmt, "a", np.arange(100))
        b = scatter_u32(mgmt, "b", np.arange(100) * 7)
        processing.array_zip(mgmt, "a", "b", "ab")
        before = mgmt.device.stats.bank_scratch_bytes

        def add(src, dst, ctx):
            pairs = src.view(np.uint32).reshape(-1, 2)
            out = dst.view(np.uint32).ravel()
            np.add(pairs[:, 0], pairs[:, 1], out=out)

        handle = processing.create_handle(mgmt, MAP, map_func=add)
        processing.array_map(mgmt, "ab", "s", 4, handle)
        assert np.array_equal(comm.gather(mgmt, "s").view(np.uint32), a + b)
        # kernel traffic is exactly read A + read B + write out; no zipped
        # intermediate ever touches the banks (all splits land 8-aligned here)
        assert mgmt.device.stats.bank_scratch_bytes - before == 3 * 100 * 4

    def test_length_mismatch(self, mgmt):
        scatter_u32(mgmt, "a", range(5))
        scatter_u32(mgmt, "b", range(6))
        with pytest.raises(LengthMismatch):
            processing.array_zip(mgmt, "a", "b", "ab")

    def test_distribution_mismatch(self):
        mgmt = make_mgmt(cores=4)
        scatter_u32(mgmt, "a", range(10))  # (4, 4, 2, 0)
        comm.scatter(mgmt, "b", np.zeros(10 * 40, np.uint8), 10, 40)  # (3, 3, 3, 1)
        assert mgmt.lookup("a").per_core_elems != mgmt.lookup("b").per_core_elems
        with pytest.raises(DistributionMismatch):
            processing.array_zip(mgmt, "a", "b", "ab")

    def test_zip_of_lazy_materializes(self):
        mgmt = make_mgmt(cores=2)
        a = scatter_u32(mgmt, "a", np.arange(50))
        b = scatter_u32(mgmt, "b", np.arange(50) + 100)
        c = scatter_u32(mgmt, "c", np.arange(50) + 900)
        processing.array_zip(mgmt, "a", "b", "ab")
        before = mgmt.device.stats.copy()
        processing.array_zip(mgmt, "ab", "c", "abc")
        after = mgmt.device.stats
        meta = mgmt.lookup("abc")
        assert meta.layout == "scattered"
        assert meta.type_size == 12
        # materialization streamed all three inputs and wrote the combined array
        assert after.dram_to_scratch_bytes - before.dram_to_scratch_bytes >= 50 * 12
        assert after.scratch_to_dram_bytes - before.scratch_to_dram_bytes >= 50 * 12
        combined = comm.gather(mgmt, "abc").view(np.uint32).reshape(50, 3)
        assert np.array_equal(combined,
                              np.stack([a, b, c], axis=1))

    def test_eager_traffic_exceeds_lazy_by_two(self):
        def vecadd_traffic(eager):
            mgmt = make_mgmt(cores=2)
            a = scatter_u32(mgmt, "a", np.arange(5000))
            b = scatter_u32(mgmt, "b", np.arange(5000) * 3)
            processing.array_zip(mgmt, "a", "b", "ab", materialize=eager)

            def add(src, dst, ctx):
                pairs = src.view(np.uint32).reshape(-1, 2)
                out = dst.view(np.uint32).ravel()
                np.add(pairs[:, 0], pairs[:, 1], out=out)

            handle = processing.create_handle(mgmt, MAP, map_func=add)
            processing.array_map(mgmt, "ab", "s", 4, handle)
            assert np.array_equal(comm.gather(mgmt, "s").view(np.uint32), a + b)
            return mgmt.device.stats.bank_scratch_bytes

        ratio = vecadd_traffic(True) / vecadd_traffic(False)
        assert 2.0 <= ratio <= 2.5


def sequential_reduction_oracle(values, keys, entries, dtype):
    """Literal element-by-element general reduction on the host."""
    modulus = int(np.iinfo(dtype).max) + 1
    out = [0] * entries
    for v, k in zip(values.tolist(), keys.tolist()):
        out[k] = (out[k] + int(v)) % modulus
    return np.array(out, dtype)


class TestReduce:
    def test_sum_closed_form(self):
        mgmt = make_mgmt(cores=2)
        scatter_u32(mgmt, "x", np.arange(1, 101))
        handle, width = sum_reduce_handle(
            mgmt, lambda v: np.zeros(v.size, np.int64), 1, np.uint64)
        processing.array_red(mgmt, "x", "total", width, 1, handle)
        assert comm.gather(mgmt, "total").view(np.uint64)[0] == 5050

    def test_result_placed_on_core_zero(self):
        mgmt = make_mgmt(cores=4)
        scatter_u32(mgmt, "x", np.arange(100))
        handle, width = sum_reduce_handle(
            mgmt, lambda v: np.zeros(v.size, np.int64), 1, np.uint64)
        processing.array_red(mgmt, "x", "total", width, 1, handle)
        assert mgmt.lookup("total").per_core_elems == (1, 0, 0, 0)

    def test_histogram_key_rule_extremes(self):
        # value * bins >> 12 sends 1 to bin 0 and 4095 to the last bin; the
        # handle sums values per bin, which pins where each element landed
        mgmt = make_mgmt(cores=2)
        scatter_u32(mgmt, "x", [1, 4095])
        handle, width = sum_reduce_handle(
            mgmt, lambda v: (v.astype(np.int64) * 256) >> 12, 256)
        processing.array_red(mgmt, "x", "h", width, 256, handle)
        bins = comm.gather(mgmt, "h").view(np.uint32)
        assert bins[0] == 1 and bins[255] == 4095 and bins.sum() == 4096

    @pytest.mark.parametrize("variant", ["shared", "private"])
    def test_matches_sequential_oracle(self, variant):
        rng = np.random.default_rng(13)
        for cores in (1, 3, 8):
            mgmt = make_mgmt(cores=cores)
            data = rng.integers(0, 1 << 32, 1234, dtype=np.uint32)
            comm.scatter(mgmt, "x", data, data.size, 4)
            entries = 37
            handle, width = sum_reduce_handle(
                mgmt, lambda v: (v % entries).astype(np.int64), entries)
            processing.array_red(mgmt, "x", "out", width, entries, handle,
                                 variant=variant)
            got = comm.gather(mgmt, "out").view(np.uint32)
            expected = sequential_reduction_oracle(
                data, data % entries, entries, np.uint32)
            assert np.array_equal(got, expected)

    def test_variants_agree_bitwise(self):
        rng = np.random.default_rng(5)
        data = rng.integers(0, 1 << 32, 4096, dtype=np.uint32)
        results = {}
        for variant in ("shared", "private"):
            mgmt = make_mgmt(cores=4)
            comm.scatter(mgmt, "x", data, data.size, 4)
            handle, width = sum_reduce_handle(
                mgmt, lambda v: (v % 512).astype(np.int64), 512)
            plan = processing.array_red(mgmt, "x", "out", width, 512, handle,
                                        variant=variant)
            assert plan.variant == (VARIANT_SHARED if variant == "shared"
                                    else VARIANT_PRIVATE)
            results[variant] = comm.gather(mgmt, "out").view(np.uint32)
        assert np.array_equal(results["shared"], results["private"])

    def test_reduce_over_lazy_zip(self):
        mgmt = make_mgmt(cores=3)
        a = scatter_u32(mgmt, "a", np.arange(500))
        b = scatter_u32(mgmt, "b", np.arange(500) * 11)
        processing.array_zip(mgmt, "a", "b", "ab")

        def init(x):
            x[:] = 0

        def to_val(src, ctx):
            pairs = src.view(np.uint32).reshape(-1, 2)
            return (pairs[:, 0] + pairs[:, 1]).astype(np.uint64), \
                (pairs[:, 0] % 4).astype(np.int64)

        def acc(dst, src):
            x = dst.view(np.uint64)
            np.add(x, src.view(np.uint64), out=x)

        handle = processing.create_handle(mgmt, REDUCE, init_func=init,
                                          map_to_val_func=to_val, acc_func=acc)
        processing.array_red(mgmt, "ab", "out", 8, 4, handle)
        got = comm.gather(mgmt, "out").view(np.uint64)
        expected = sequential_reduction_oracle(
            (a + b).astype(np.uint64), a % 4, 4, np.uint64)
        assert np.array_equal(got, expected)

    def test_accumulator_too_large(self):
        mgmt = make_mgmt(cores=1)
        scatter_u32(mgmt, "x", range(8))
        handle, width = sum_reduce_handle(
            mgmt, lambda v: np.zeros(v.size, np.int64), 20_000)
        with pytest.raises((ScratchpadOverflow, NoFeasiblePlan)):
            processing.array_red(mgmt, "x", "out", width, 20_000, handle)


class TestBatchLegality:
    def test_streaming_commands_follow_the_batch_rule(self):
        mgmt = make_mgmt(cores=2, log_transfers=True)
        data = np.arange(5000, dtype=np.uint32)
        comm.scatter(mgmt, "x", data, 5000, 4)
        meta = mgmt.lookup("x")
        handle = processing.create_handle(mgmt, MAP, map_func=u32_map(lambda v: v + 1))
        processing.array_map(mgmt, "x", "y", 4, handle)
        cfg = mgmt.device.config
        reads = [rec for rec in mgmt.device.transfer_log if rec.op == "dma_read"]
        assert reads, "map must stream its input"
        batch_bytes = {rec.nbytes for rec in reads}
        for rec in reads:
            assert rec.nbytes % cfg.dma_alignment == 0
            assert 0 < rec.nbytes <= cfg.dma_max_bytes
        # full batches share one size; only the final partial batch differs
        full = max(batch_bytes)
        assert full % (compute_batch_elems(4) * 4) == 0 or full <= compute_batch_elems(4) * 4
        assert sum(1 for b in batch_bytes if b != full) <= 1

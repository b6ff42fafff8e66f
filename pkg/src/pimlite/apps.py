"""Benchmark workloads built purely from the framework API, with sequential
host oracles to verify them against.

Every workload is integer or fixed-point, so device results must match the
oracle bit for bit.  Both sides share the same arithmetic definitions (exact
int64 / wrapping uint32/uint64 numpy operations) but compute through
completely different paths: the runners go through scatter, scratchpad
streaming and keyed reduction, while the oracles are single straight-line
passes over the host arrays.

Datasets come from a seeded PCG64 generator so any two runs (or two
implementations) can reproduce them exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import comm, processing
from .management import ManagementContext
from .processing import MAP, REDUCE

FIXED_POINT_SHIFT = 12


@dataclass(frozen=True)
class BenchmarkSpec:
    """Workload parameters; ``seed`` pins the dataset."""

    name: str = ""
    total_elems: int = 0
    dims: int = 10
    bins: int = 256
    clusters: int = 10
    iterations: int = 3
    seed: int = 0
    scale_shift: int = FIXED_POINT_SHIFT

    def __post_init__(self) -> None:
        if self.dims < 1 or self.bins < 2 or self.clusters < 1 or self.iterations < 1:
            raise ValueError("dims >= 1, bins >= 2, clusters >= 1, iterations >= 1")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# --- shared fixed-point arithmetic ------------------------------------------------


def approx_sigmoid_fixed(z: np.ndarray, shift: int) -> np.ndarray:
    """Cubic-polynomial sigmoid 1/2 + z/4 - z^3/48 on fixed-point int64.

    Shifts are arithmetic (floor), division is floor division; at z=0 the
    result is exactly 1/2 in fixed point, i.e. ``1 << (shift - 1)``.
    """
    z = np.asarray(z, np.int64)
    z2 = (z * z) >> shift
    z3 = (z2 * z) >> shift
    return (np.int64(1) << (shift - 1)) + (z >> 2) - z3 // 48


def trunc_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Integer division rounding toward zero (b must be positive)."""
    q = np.abs(a) // b
    return np.where(np.asarray(a) < 0, -q, q)


# --- shared callbacks ---------------------------------------------------------------


def _init_zero(accum: np.ndarray) -> None:
    accum[:] = 0


def _acc_u32(dst: np.ndarray, src: np.ndarray) -> None:
    a = dst.view(np.uint32)
    np.add(a, src.view(np.uint32), out=a)


def _acc_u64(dst: np.ndarray, src: np.ndarray) -> None:
    a = dst.view(np.uint64)
    np.add(a, src.view(np.uint64), out=a)


def _acc_i64(dst: np.ndarray, src: np.ndarray) -> None:
    a = dst.view(np.int64)
    np.add(a, src.view(np.int64), out=a)


# --- reduction: sum of a u32 vector into one u64 accumulator -------------------------


def make_reduction_input(spec: BenchmarkSpec) -> np.ndarray:
    return _rng(spec.seed).integers(0, 1 << 32, spec.total_elems, dtype=np.uint32)


def run_reduction(mgmt: ManagementContext, spec: BenchmarkSpec,
                  variant: str = "auto") -> int:
    data = make_reduction_input(spec)

    def to_val(src, ctx):
        vals = src.view(np.uint32).ravel().astype(np.uint64)
        return vals, np.zeros(vals.size, np.int64)

    comm.scatter(mgmt, "red_in", data, spec.total_elems, 4)
    handle = processing.create_handle(mgmt, REDUCE, init_func=_init_zero,
                                      map_to_val_func=to_val, acc_func=_acc_u64)
    processing.array_red(mgmt, "red_in", "red_out", 8, 1, handle, variant=variant)
    total = int(comm.gather(mgmt, "red_out").view(np.uint64)[0])
    mgmt.free("red_out")
    mgmt.free("red_in")
    return total


def oracle_reduction(spec: BenchmarkSpec) -> int:
    # u64 wrapping addition is associative, so the vectorized fold equals the
    # element-by-element loop exactly
    return int(np.add.reduce(make_reduction_input(spec), dtype=np.uint64))


# --- vector addition: lazy zip + map --------------------------------------------------


def make_vecadd_inputs(spec: BenchmarkSpec) -> tuple[np.ndarray, np.ndarray]:
    rng = _rng(spec.seed)
    a = rng.integers(0, 1 << 32, spec.total_elems, dtype=np.uint32)
    b = rng.integers(0, 1 << 32, spec.total_elems, dtype=np.uint32)
    return a, b


def run_vecadd(mgmt: ManagementContext, spec: BenchmarkSpec,
               eager: bool = False) -> np.ndarray:
    """Elementwise wrapping u32 addition.  ``eager`` forces the zipped input
    to be materialized instead of streamed lazily (used by the traffic study)."""
    a, b = make_vecadd_inputs(spec)

    def add_pairs(src, dst, ctx):
        pairs = src.view(np.uint32).reshape(-1, 2)
        out = dst.view(np.uint32).ravel()
        np.add(pairs[:, 0], pairs[:, 1], out=out)

    comm.scatter(mgmt, "va_a", a, spec.total_elems, 4)
    comm.scatter(mgmt, "va_b", b, spec.total_elems, 4)
    processing.array_zip(mgmt, "va_a", "va_b", "va_ab", materialize=eager)
    handle = processing.create_handle(mgmt, MAP, map_func=add_pairs)
    processing.array_map(mgmt, "va_ab", "va_out", 4, handle)
    out = comm.gather(mgmt, "va_out").view(np.uint32).copy()
    for name in ("va_out", "va_ab", "va_b", "va_a"):
        mgmt.free(name)
    return out


def oracle_vecadd(spec: BenchmarkSpec) -> np.ndarray:
    a, b = make_vecadd_inputs(spec)
    return a + b


# --- histogram: keyed reduction over 12-bit values -------------------------------------


def make_histogram_input(spec: BenchmarkSpec) -> np.ndarray:
    return _rng(spec.seed).integers(0, 4096, spec.total_elems, dtype=np.uint32)


def histogram_key(values: np.ndarray, bins: int) -> np.ndarray:
    """Bin index of a 12-bit value: value * bins >> 12."""
    return (np.asarray(values, np.int64) * bins) >> 12


def run_histogram(mgmt: ManagementContext, spec: BenchmarkSpec,
                  variant: str = "auto") -> np.ndarray:
    data = make_histogram_input(spec)
    bins = spec.bins

    def to_val(src, ctx):
        d = src.view(np.uint32).ravel()
        return np.ones(d.size, np.uint32), histogram_key(d, bins)

    comm.scatter(mgmt, "hist_in", data, spec.total_elems, 4)
    handle = processing.create_handle(mgmt, REDUCE, init_func=_init_zero,
                                      map_to_val_func=to_val, acc_func=_acc_u32)
    processing.array_red(mgmt, "hist_in", "hist_out", 4, bins, handle,
                         variant=variant)
    counts = comm.gather(mgmt, "hist_out").view(np.uint32).copy()
    mgmt.free("hist_out")
    mgmt.free("hist_in")
    return counts


def oracle_histogram(spec: BenchmarkSpec) -> np.ndarray:
    keys = histogram_key(make_histogram_input(spec), spec.bins)
    return np.bincount(keys, minlength=spec.bins).astype(np.uint32)


# --- linear / logistic regression: fixed-point gradient descent -------------------------
#
# Samples are packed rows of dims feature ints plus the label; the gradient is
# accumulated as one dims-wide int64 entry per core and the host applies
#     w <- w - (grad >> 2*shift)
# after folding.  Model weights travel to the cores as handle context.


def make_regression_data(spec: BenchmarkSpec,
                         binary_labels: bool = False) -> tuple[np.ndarray, np.ndarray]:
    rng = _rng(spec.seed)
    x = rng.integers(0, 64, (spec.total_elems, spec.dims), dtype=np.int32)
    if binary_labels:
        y = rng.integers(0, 2, spec.total_elems, dtype=np.int32)
    else:
        w_true = rng.integers(0, 1 << spec.scale_shift, spec.dims, dtype=np.int64)
        y = ((x.astype(np.int64) @ w_true) >> spec.scale_shift).astype(np.int32)
        y += rng.integers(0, 16, spec.total_elems, dtype=np.int32)
    return x, y


def _regression_runner(mgmt, spec, variant, logistic: bool) -> np.ndarray:
    x, y = make_regression_data(spec, binary_labels=logistic)
    dims, shift = spec.dims, spec.scale_shift
    packed = np.concatenate([x, y[:, None]], axis=1).astype(np.int32)

    def to_val(src, ctx):
        rows = src.view(np.int32).reshape(-1, dims + 1).astype(np.int64)
        xs, ys = rows[:, :dims], rows[:, dims]
        w = ctx.view(np.int64)[:dims]
        z = (xs @ w) >> shift
        if logistic:
            err = approx_sigmoid_fixed(z, shift) - (ys << shift)
        else:
            err = z - ys
        return xs * err[:, None], np.zeros(len(rows), np.int64)

    comm.scatter(mgmt, "reg_in", packed, spec.total_elems, 4 * (dims + 1))
    w = np.zeros(dims, np.int64)
    handle = processing.create_handle(mgmt, REDUCE, init_func=_init_zero,
                                      map_to_val_func=to_val, acc_func=_acc_i64,
                                      context=w)
    trajectory = np.zeros((spec.iterations, dims), np.int64)
    for it in range(spec.iterations):
        processing.update_context(mgmt, handle, w)
        processing.array_red(mgmt, "reg_in", "reg_grad", 8 * dims, 1, handle,
                             variant=variant)
        grad = comm.gather(mgmt, "reg_grad").view(np.int64)
        mgmt.free("reg_grad")
        w = w - (grad >> (2 * shift))
        trajectory[it] = w
    mgmt.free("reg_in")
    return trajectory


def _regression_oracle(spec: BenchmarkSpec, logistic: bool) -> np.ndarray:
    x, y = make_regression_data(spec, binary_labels=logistic)
    x64 = x.astype(np.int64)
    y64 = y.astype(np.int64)
    shift = spec.scale_shift
    w = np.zeros(spec.dims, np.int64)
    trajectory = np.zeros((spec.iterations, spec.dims), np.int64)
    for it in range(spec.iterations):
        z = (x64 @ w) >> shift
        if logistic:
            err = approx_sigmoid_fixed(z, shift) - (y64 << shift)
        else:
            err = z - y64
        grad = (x64 * err[:, None]).sum(axis=0)
        w = w - (grad >> (2 * shift))
        trajectory[it] = w
    return trajectory


def run_linreg(mgmt: ManagementContext, spec: BenchmarkSpec,
               variant: str = "auto") -> np.ndarray:
    return _regression_runner(mgmt, spec, variant, logistic=False)


def oracle_linreg(spec: BenchmarkSpec) -> np.ndarray:
    return _regression_oracle(spec, logistic=False)


def run_logreg(mgmt: ManagementContext, spec: BenchmarkSpec,
               variant: str = "auto") -> np.ndarray:
    return _regression_runner(mgmt, spec, variant, logistic=True)


def oracle_logreg(spec: BenchmarkSpec) -> np.ndarray:
    return _regression_oracle(spec, logistic=True)


# --- k-means: Lloyd iterations over quantized points -------------------------------------
#
# One reduction per iteration accumulates, per cluster, the coordinate sums
# and the member count ((dims+1) int64 entries); the host divides to get the
# new centroids.  Ties break toward the lowest cluster index; empty clusters
# keep their previous centroid; division truncates toward zero.


def make_kmeans_points(spec: BenchmarkSpec) -> np.ndarray:
    return _rng(spec.seed).integers(0, 4096, (spec.total_elems, spec.dims),
                                    dtype=np.int32)


def nearest_centroid(points64: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = ((points64[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def run_kmeans(mgmt: ManagementContext, spec: BenchmarkSpec,
               variant: str = "auto") -> np.ndarray:
    points = make_kmeans_points(spec)
    k, dims = spec.clusters, spec.dims
    if spec.total_elems < k:
        raise ValueError("need at least one point per cluster seed")

    def to_val(src, ctx):
        pts = src.view(np.int32).reshape(-1, dims).astype(np.int64)
        cents = ctx.view(np.int64).reshape(k, dims)
        keys = nearest_centroid(pts, cents)
        vals = np.concatenate([pts, np.ones((len(pts), 1), np.int64)], axis=1)
        return vals, keys

    comm.scatter(mgmt, "km_pts", points, spec.total_elems, 4 * dims)
    centroids = points[:k].astype(np.int64).copy()
    handle = processing.create_handle(mgmt, REDUCE, init_func=_init_zero,
                                      map_to_val_func=to_val, acc_func=_acc_i64,
                                      context=centroids)
    trajectory = np.zeros((spec.iterations, k, dims), np.int64)
    for it in range(spec.iterations):
        processing.update_context(mgmt, handle, centroids)
        processing.array_red(mgmt, "km_pts", "km_acc", 8 * (dims + 1), k, handle,
                             variant=variant)
        acc = comm.gather(mgmt, "km_acc").view(np.int64).reshape(k, dims + 1)
        mgmt.free("km_acc")
        sums, counts = acc[:, :dims], acc[:, dims]
        centroids = np.where(counts[:, None] > 0,
                             trunc_div(sums, np.maximum(counts, 1)[:, None]),
                             centroids)
        trajectory[it] = centroids
    mgmt.free("km_pts")
    return trajectory


def oracle_kmeans(spec: BenchmarkSpec) -> np.ndarray:
    points64 = make_kmeans_points(spec).astype(np.int64)
    k = spec.clusters
    centroids = points64[:k].copy()
    trajectory = np.zeros((spec.iterations, k, spec.dims), np.int64)
    for it in range(spec.iterations):
        labels = nearest_centroid(points64, centroids)
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros((k, spec.dims), np.int64)
        np.add.at(sums, labels, points64)
        centroids = np.where(counts[:, None] > 0,
                             trunc_div(sums, np.maximum(counts, 1)[:, None]),
                             centroids)
        trajectory[it] = centroids
    return trajectory

"""Engine selection, run-spec builders, and parallel replica orchestration.

The compiled kernel (rdtorus._speed, Cython) is used when importable; the
pure-Python twin (rdtorus._pyref) otherwise.  Both implement the same event
loop and RNG protocol, so trajectories agree event-for-event under a fixed
(seed, replica) key.  Replicas are keyed by counter-based Philox streams,
which makes ensemble results independent of worker scheduling.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import _pyref
from .dynamics import ModelParams, dynkin_expansion

try:
    from . import _speed
except ImportError:  # pure-Python install
    _speed = None

__all__ = [
    "active_engine",
    "have_compiled",
    "make_field_spec",
    "make_poly_spec",
    "run_chain_raw",
    "sample_product_configuration",
    "worker_count",
    "parallel_map",
    "benchmark_engines",
]

WORKERS_ENV = "RDTORUS_WORKERS"

# Philox key-space split: dynamics streams use (seed, replica); initial
# configurations use (seed, INIT_STREAM_OFFSET + replica).
INIT_STREAM_OFFSET = 1 << 63


def have_compiled() -> bool:
    return _speed is not None


def active_engine() -> str:
    return "compiled" if _speed is not None else "python"


def make_field_spec(params: ModelParams, f_tables) -> dict:
    """Per-mode coefficient tables consumed by the engines (d = 1 only).

    f_tables: array [M, n] of test-function values at the lattice points.
    """
    g = params.geometry
    if g.d != 1:
        raise ValueError("field accumulators are one-dimensional")
    f = np.ascontiguousarray(np.atleast_2d(np.asarray(f_tables, dtype=np.float64)))
    M, n = f.shape
    if n != g.n:
        raise ValueError(f"tables must have {g.n} columns, got {n}")
    grad = np.roll(f, -1, axis=1) - f  # f_{x+1} - f_x
    lin = np.empty_like(f)
    qa = np.empty_like(f)
    qb = np.empty_like(f)
    qc = np.empty_like(f)
    const = np.empty(M)
    for m in range(M):
        dyn = dynkin_expansion(f[m], params)
        lin[m, :] = dyn.laplacian + dyn.linear
        qa[m, :] = dyn.pair_adjacent
        qb[m, :] = dyn.pair_gap2
        qc[m, :] = dyn.triple
        const[m] = dyn.constant
    return {
        "f": f,
        "grad": np.ascontiguousarray(grad),
        "qexc": np.ascontiguousarray(n * grad * grad),
        "qreac": np.ascontiguousarray(f * f / n),
        "lin": np.ascontiguousarray(lin),
        "qa": np.ascontiguousarray(qa),
        "qb": np.ascontiguousarray(qb),
        "qc": np.ascontiguousarray(qc),
        "const": const,
    }


def make_poly_spec(weights, terms) -> dict:
    """Local polynomial observable: sum_x w_x sum_t coeff_t prod_b etabar_{x+b}.

    terms: iterable of (coeff, offsets) with offsets a tuple of distinct
    integer shifts (d = 1).
    """
    coeffs = []
    offsets = []
    for coeff, offs in terms:
        offs = tuple(int(o) for o in offs)
        if len(set(offs)) != len(offs):
            raise ValueError(f"offsets must be distinct, got {offs}")
        if not offs:
            raise ValueError("constant terms are not allowed (center the observable)")
        coeffs.append(float(coeff))
        offsets.append(np.array(offs, dtype=np.int64))
    return {
        "weights": np.ascontiguousarray(np.asarray(weights, dtype=np.float64)),
        "coeffs": np.array(coeffs, dtype=np.float64),
        "offsets": offsets,
    }


def _validate_sample_times(sample_times) -> np.ndarray:
    st = np.asarray(sample_times, dtype=np.float64)
    if st.ndim != 1 or st.size == 0:
        raise ValueError("sample_times must be a nonempty 1-d array")
    if st[0] <= 0 or np.any(np.diff(st) <= 0):
        raise ValueError("sample_times must be strictly increasing and positive")
    return st


def run_chain_raw(
    eta0,
    params: ModelParams,
    sample_times,
    seed_key,
    field_spec=None,
    poly_specs=None,
    record_events=False,
    want_eta_samples=False,
    field_mode="full",
    force_engine=None,
):
    """Run one trajectory to the last sample time; returns the snapshot dict.

    Snapshots at each sample time: fresh field values X, jump sums J, drift
    integrals via the direct transition sum (Ddir) and via the coefficient
    tables (Ddyn), both quadratic-variation component integrals, polynomial
    observable integrals, and particle counts.
    """
    g = params.geometry
    st = _validate_sample_times(sample_times)
    eta0 = np.ascontiguousarray(np.asarray(eta0, dtype=np.uint8))
    if eta0.shape != (g.size,):
        raise ValueError("initial configuration has wrong size")
    if (field_spec is not None or poly_specs) and g.d != 1:
        raise ValueError("field and polynomial accumulators require d = 1")
    nbr = g.neighbor_table()
    impl = {"python": _pyref, "compiled": _speed}.get(force_engine or active_engine())
    if impl is None:
        raise ValueError(f"engine '{force_engine}' is not available")
    key = (int(seed_key[0]), int(seed_key[1]))
    return impl.run_chain(
        eta0,
        nbr,
        g.d,
        g.n,
        float(params.lam),
        float(params.rho),
        st,
        key,
        field_spec=field_spec,
        poly_specs=poly_specs,
        record_events=record_events,
        want_eta_samples=want_eta_samples,
        field_mode=field_mode,
    )


def sample_product_configuration(geometry, rho: float, seed: int, replica: int) -> np.ndarray:
    """Bernoulli(rho) occupancy bits from the replica's init stream."""
    key = np.array([seed, INIT_STREAM_OFFSET + replica], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return (rng.random(geometry.size) < rho).astype(np.uint8)


def worker_count() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def parallel_map(fn, items, workers: int | None = None, initializer=None, initargs=()) -> list:
    """Order-preserving map over items, in processes when workers > 1.

    initializer runs once per worker (and once in-process for the serial
    path), so bulky shared state is shipped a single time.
    """
    workers = worker_count() if workers is None else workers
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [fn(it) for it in items]
    chunk = max(1, len(items) // (8 * workers))
    with ProcessPoolExecutor(
        max_workers=workers, initializer=initializer, initargs=initargs
    ) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def benchmark_engines(n: int = 64, lam: float = 1.0, T: float = 0.02, seed: int = 7) -> dict:
    """Events/second on the same workload for each available engine."""
    from .lattice import build_torus

    g = build_torus(1, n)
    p = ModelParams.at_stationary_density(lam, g)
    eta0 = sample_product_configuration(g, p.rho, seed, 0)
    results = {}
    for name in ("python", "compiled"):
        if name == "compiled" and _speed is None:
            continue
        t0 = time.perf_counter()
        out = run_chain_raw(
            eta0, p, [T], (seed, 0), force_engine=name
        )
        elapsed = time.perf_counter() - t0
        events = out["exchange_count"] + out["flip_up_count"] + out["flip_down_count"]
        results[name] = {
            "events": int(events),
            "seconds": elapsed,
            "events_per_second": events / elapsed if elapsed > 0 else float("inf"),
        }
    return results

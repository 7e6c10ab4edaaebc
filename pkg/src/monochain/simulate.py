"""Block-error-rate simulation and runtime/complexity benchmarks.

Everything here is deterministic given its seed: trial k of a sweep point
always uses seed ``base_seed + k``, chunks only ever reduce integer error
counts, and construction reuses the compensated-sum estimator, so results are
identical at any parallelism level.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .backend import lazy_scl_decode, scl_decode
from .chain import from_gamma
from .construction import (achieved_sum_rate, chain_rates, estimate_step_entropies,
                           scaled_rates, select_frozen)
from .errors import DomainError
from .sc import codeword_from_ublock, replicated_prior
from .source import joint_entropy, loads_joint, sample_block
from .transform import TransformConvention, encode

ENGINES = ("graph", "lazycopy")


def decode_with_engine(engine, spec, prior, chain, frozen, codeword, L,
                       convention, backend=None):
    if engine == "graph":
        return scl_decode(spec, prior, chain, frozen, codeword, L=L,
                          convention=convention, backend=backend)
    if engine == "lazycopy":
        return lazy_scl_decode(spec, prior, chain, frozen, codeword, L=L,
                               convention=convention, backend=backend)
    raise DomainError(f"unknown engine {engine!r}")


def _count_errors(src, chain, frozen_steps, L, engine, perm, base_seed, lo, hi,
                  backend=None):
    conv = TransformConvention(perm)
    prior = replicated_prior(src, chain.N)
    errors = 0
    for k in range(lo, hi):
        block = sample_block(src, chain.N, base_seed + k)
        u = encode(src.spec, block, conv)
        cw = codeword_from_ublock(chain, frozen_steps, u)
        res = decode_with_engine(engine, src.spec, prior, chain, frozen_steps,
                                 cw, L, conv, backend=backend)
        if not np.array_equal(res.x_hat, block):
            errors += 1
    return errors


def _trial_worker(args):
    from .sc import FrozenSpec

    (src_text, gamma, frozen_steps, L, engine, perm, base_seed, lo, hi) = args
    src = loads_joint(src_text)
    chain = from_gamma(list(gamma))
    frozen = FrozenSpec(chain, tuple(frozen_steps))
    return _count_errors(src, chain, frozen, L, engine, perm, base_seed, lo, hi)


def bler_point(src, chain, frozen, L, trials, seed, engine="graph",
               convention=TransformConvention(), workers=1, backend=None):
    """Count block errors over ``trials`` sampled blocks."""
    if trials < 1:
        raise DomainError("need at least one trial")
    if workers is None or workers <= 1:
        return _count_errors(src, chain, frozen, L, engine,
                             convention.permutation, seed, 0, trials,
                             backend=backend)
    from .source import dumps_joint

    payload = dumps_joint(src)
    chunk = max(1, trials // (8 * workers))
    bounds = list(range(0, trials, chunk)) + [trials]
    jobs = [(payload, chain.gamma, tuple(frozen.steps), L, engine,
             convention.permutation, seed, lo, hi)
            for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return sum(ex.map(_trial_worker, jobs))


@dataclass
class SweepRow:
    n: int
    chain_id: str
    sum_rate: float
    L: int
    trials: int
    block_errors: int
    bler: float
    seed: int

    def csv(self):
        return (f"{self.n},{self.chain_id},{self.sum_rate:.10g},{self.L},"
                f"{self.trials},{self.block_errors},{self.bler:.10g},{self.seed}")


SWEEP_HEADER = "n,chain_id,sum_rate,L,trials,block_errors,bler,seed"


def simulate_sweep(src, chain, chain_id, offsets, list_sizes, trials, seed,
                   samples=100, engine="graph", convention=TransformConvention(),
                   workers=1, statistic="entropy", backend=None):
    """BLER rows over sum-rate offsets (construction reused across offsets)."""
    ent = estimate_step_entropies(src, chain, samples, seed, convention,
                                  statistic=statistic, workers=workers)
    base_rates = chain_rates(chain, ent)
    H = joint_entropy(src)
    rows = []
    for d in offsets:
        rates = scaled_rates(base_rates, H + d)
        frozen = select_frozen(chain, ent, rates, src.spec.q)
        rate = achieved_sum_rate(chain, frozen, src.spec.q)
        for L in list_sizes:
            errs = bler_point(src, chain, frozen, L, trials, seed, engine,
                              convention, workers, backend=backend)
            rows.append(SweepRow(chain.N, chain_id, rate, L, trials, errs,
                                 errs / trials, seed))
    return rows


@dataclass
class BenchRow:
    n: int
    engine: str
    mean_runtime_s: float
    tensor_ops: int
    fork_touches: int
    pool_highwater: int

    def csv(self):
        return (f"{self.n},{self.engine},{self.mean_runtime_s:.6e},"
                f"{self.tensor_ops},{self.fork_touches},{self.pool_highwater}")


BENCH_HEADER = "n,engine,mean_runtime_s,tensor_ops,fork_touches,pool_highwater"


def bench_point(src, chain, L, rounds, engine="graph",
                convention=TransformConvention(), backend=None):
    """Average decode runtime with an empty frozen set, plus instrumentation
    counters (which are identical across rounds)."""
    if rounds < 1:
        raise DomainError("need at least one round")
    prior = replicated_prior(src, chain.N)
    res = decode_with_engine(engine, src.spec, prior, chain, (), (), L,
                             convention, backend=backend)
    counters = extract_counters(res)
    start = time.perf_counter()
    for _ in range(rounds):
        decode_with_engine(engine, src.spec, prior, chain, (), (), L,
                           convention, backend=backend)
    mean_rt = (time.perf_counter() - start) / rounds
    return BenchRow(chain.N, engine, mean_rt, counters["tensor_ops"],
                    counters["fork_touches"], counters["pool_highwater"])


def extract_counters(res):
    """Normalize the per-engine counter variants to the bench schema."""
    if hasattr(res, "counters") and isinstance(res.counters, dict):
        c = res.counters
        touches = c.get("fork_touches")
        if touches is None:
            hc = c.get("handle_copies", [])
            touches = sum(hc)
        return {
            "tensor_ops": int(c["tensor_ops"]),
            "fork_touches": int(touches),
            "pool_highwater": int(c.get("pool_highwater", 0)),
        }
    g = res.graph
    return {
        "tensor_ops": int(g.tensor_ops),
        "fork_touches": int(sum(g.fork_touches)),
        "pool_highwater": int(g.pool.total_highwater),
    }

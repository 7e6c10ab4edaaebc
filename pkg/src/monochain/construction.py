"""Monte Carlo code construction and chain-rate computation.

Construction statistic: for each chain step, the average (over sampled
blocks, decoded by a genie that always picks the true symbol) of the
conditional entropy of the step's component marginal. High-entropy steps get
frozen (transmitted). An error-probability ranking is available behind
``statistic="error"`` for tuning.

Construction file format: one line per step, ``t gamma i value frozen``
(``#`` comments allowed).
"""

import math

import numpy as np

from .errors import DomainError, ShapeError
from .sc import FrozenSpec
from .source import sample_block
from .tensor import entropy_bits_of
from .transform import TransformConvention, encode

STATISTICS = ("entropy", "error")


def _genie_sample_stats(src, chain, seed, convention, statistic, decode_fn):
    """Per-step statistic vector for one sampled block."""
    block = sample_block(src, chain.N, seed)
    u = encode(src.spec, block, convention)
    prior = np.tile(src.pmf.entries, (chain.N, 1))
    res = decode_fn(src.spec, prior, chain, u, convention)
    MN = len(chain)
    out = np.empty(MN)
    comp = None
    for t in range(1, MN + 1):
        gamma = chain.gamma[t - 1]
        cond = res.conditionals[t - 1]
        if comp is None:
            from .tensor import component_table

            comp = component_table(src.spec)
        q = src.spec.q[gamma - 1]
        marg = np.bincount(comp[gamma - 1], weights=cond, minlength=q)
        if statistic == "entropy":
            out[t - 1] = entropy_bits_of(marg)
        else:
            true_sym = u[chain.idx[t - 1] - 1, gamma - 1]
            out[t - 1] = 1.0 - float(marg[true_sym])
    return out


def _sample_worker(args):
    from .backend import genie_decode
    from .chain import from_gamma
    from .source import loads_joint

    src_text, gamma, seed, perm, statistic = args
    src = loads_joint(src_text)
    chain = from_gamma(list(gamma))
    conv = TransformConvention(perm)
    return _genie_sample_stats(src, chain, seed, conv, statistic, genie_decode)


def estimate_step_entropies(src, chain, samples, seed, convention=TransformConvention(),
                            statistic="entropy", workers=1, decode_fn=None):
    """Average per-step statistic over ``samples`` genie-decoded blocks.

    Sample k uses seed ``seed + k``. Results are collected in sample order
    and reduced with an exact compensated sum, so the output is identical at
    any worker count.
    """
    if samples < 1:
        raise DomainError("need at least one sample")
    if statistic not in STATISTICS:
        raise DomainError(f"unknown statistic {statistic!r}")
    if workers is None or workers <= 1:
        if decode_fn is None:
            from .backend import genie_decode as decode_fn
        rows = [_genie_sample_stats(src, chain, seed + k, convention, statistic,
                                    decode_fn) for k in range(samples)]
    else:
        from concurrent.futures import ProcessPoolExecutor

        from .source import dumps_joint

        payload = dumps_joint(src)
        jobs = [(payload, chain.gamma, seed + k, convention.permutation, statistic)
                for k in range(samples)]
        chunk = max(1, samples // (8 * workers))
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sample_worker, jobs, chunksize=chunk))
    MN = len(chain)
    out = np.empty(MN)
    for t in range(MN):
        out[t] = math.fsum(float(r[t]) for r in rows)
    return out / samples


def chain_rates(chain, step_values):
    """Per-terminal rates R_g = (1/N) * sum of the terminal's step values."""
    if len(step_values) != len(chain):
        raise ShapeError("need one value per chain step")
    rates = np.zeros(chain.M)
    for t in range(len(chain)):
        rates[chain.gamma[t] - 1] += step_values[t]
    return rates / chain.N


def scaled_rates(rates, target_sum):
    """Rescale a rate vector to a target sum at fixed ratio."""
    s = float(np.sum(rates))
    if s <= 0:
        raise DomainError("cannot scale an all-zero rate vector")
    return np.asarray(rates) * (target_sum / s)


def select_frozen(chain, step_values, rates, q):
    """Freeze, per terminal g, the ceil(N*R_g / log2 q_g) steps with the
    highest statistic (ties to the smaller step index)."""
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (chain.M,):
        raise ShapeError(f"need {chain.M} rates")
    frozen = []
    for g in range(1, chain.M + 1):
        bits = math.log2(q[g - 1])
        if not -1e-12 <= rates[g - 1] <= bits + 1e-12:
            raise DomainError(
                f"rate {rates[g - 1]} for terminal {g} outside [0, {bits}]")
        count = math.ceil(max(0.0, float(rates[g - 1])) * chain.N / bits)
        count = min(count, chain.N)
        steps = [t for t in range(1, len(chain) + 1) if chain.gamma[t - 1] == g]
        steps.sort(key=lambda t: (-step_values[t - 1], t))
        frozen.extend(steps[:count])
    return FrozenSpec(chain, tuple(sorted(frozen)))


def achieved_sum_rate(chain, frozen, q):
    """Transmitted bits per copy: frozen symbols carry log2 q_g bits each."""
    bits = 0.0
    for t in frozen.steps:
        bits += math.log2(q[chain.gamma[t - 1] - 1])
    return bits / chain.N


def dumps_construction(chain, step_values, frozen):
    rows = ["# t gamma i value frozen"]
    fset = set(frozen.steps)
    for t in range(1, len(chain) + 1):
        rows.append(f"{t} {chain.gamma[t - 1]} {chain.idx[t - 1]} "
                    f"{step_values[t - 1]:.12g} {1 if t in fset else 0}")
    return "\n".join(rows) + "\n"


def loads_construction(text):
    """Returns (chain, step_values, FrozenSpec)."""
    from .chain import from_gamma

    gammas, values, flags = [], [], []
    expect_t = 1
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ShapeError(f"malformed construction row: {line!r}")
        t, gamma, _i, value, flag = parts
        if int(t) != expect_t:
            raise ShapeError(f"construction rows out of order at t={t}")
        expect_t += 1
        gammas.append(int(gamma))
        values.append(float(value))
        flags.append(int(flag))
    chain = from_gamma(gammas)
    frozen = FrozenSpec(chain, tuple(t + 1 for t, f in enumerate(flags) if f))
    return chain, np.asarray(values), frozen


def load_construction(path):
    with open(path, "r", encoding="utf-8") as fh:
        return loads_construction(fh.read())

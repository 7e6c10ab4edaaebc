"""Command line harness: construction, coding, BLER simulation, benchmarks.

Exit codes: 0 success, 2 bad input, 3 unsupported configuration, 4 internal
invariant violation. The environment variable MONOCHAIN_THREADS caps trial /
sample parallelism (0 or unset picks a small automatic value); outputs are
byte-identical at any parallelism.
"""

import argparse
import os
import sys

import numpy as np

from . import backend
from .chain import (alternating_chain, corner_chain, k_extend, load_chain,
                    random_chain)
from .construction import (achieved_sum_rate, chain_rates, dumps_construction,
                           estimate_step_entropies, load_construction,
                           scaled_rates, select_frozen)
from .errors import (CapacityError, ContradictionError, DomainError,
                     InternalStateError, ShapeError, UnsupportedChainError)
from .sc import codeword_from_ublock, replicated_prior
from .simulate import (BENCH_HEADER, SWEEP_HEADER, bench_point, decode_with_engine,
                       simulate_sweep)
from .source import joint_entropy, load_joint
from .transform import (CYCLIC, IDENTITY, TransformConvention, dumps_block,
                        load_block)


def worker_count():
    env = os.environ.get("MONOCHAIN_THREADS", "")
    if env.strip():
        v = int(env)
        if v > 0:
            return v
    return min(8, os.cpu_count() or 1)


def _add_chain_args(p, with_n=True):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--chain", help="chain file (one line of terminal ids)")
    g.add_argument("--corner", action="store_true", help="corner chain")
    g.add_argument("--alternating", action="store_true",
                   help="half run / alternating / half run chain (M=2)")
    g.add_argument("--random-seed", type=int, default=None,
                   help="seeded uniformly random monotone chain")
    if with_n:
        p.add_argument("--n", type=int, default=None, help="block length (power of two)")
    p.add_argument("--extend", type=int, default=0, metavar="K",
                   help="apply a k-extension to the selected chain")


def _resolve_chain(args, M):
    if args.chain:
        chain = load_chain(args.chain)
        cid = f"file:{os.path.basename(args.chain)}"
    else:
        if args.n is None:
            raise DomainError("--n is required unless --chain is given")
        if args.corner:
            chain = corner_chain(M, args.n)
            cid = "corner"
        elif args.alternating:
            chain = alternating_chain(args.n)
            cid = "alternating"
        else:
            chain = random_chain(M, args.n, args.random_seed)
            cid = f"random:{args.random_seed}"
    if args.extend:
        chain = k_extend(chain, args.extend)
        cid += f"+ext{args.extend}"
    return chain, cid


def _convention(args):
    return TransformConvention(args.permutation)


def _write(path, text):
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_construct(args):
    src = load_joint(args.source)
    chain, _ = _resolve_chain(args, src.spec.M)
    conv = _convention(args)
    ent = estimate_step_entropies(src, chain, args.samples, args.seed, conv,
                                  statistic=args.statistic, workers=worker_count())
    if args.rates:
        rates = np.array([float(r) for r in args.rates.split(",")])
        if rates.shape != (src.spec.M,):
            raise DomainError(f"need {src.spec.M} rates")
    else:
        base = chain_rates(chain, ent)
        rates = scaled_rates(base, joint_entropy(src) + args.sum_rate_offset)
    frozen = select_frozen(chain, ent, rates, src.spec.q)
    _write(args.out, dumps_construction(chain, ent, frozen))
    return 0


def cmd_encode(args):
    src = load_joint(args.source)
    chain, _, frozen = load_construction(args.construction)
    block = load_block(args.block, src.spec)
    if block.shape[0] != chain.N:
        raise ShapeError(f"block has {block.shape[0]} copies, chain wants {chain.N}")
    from .transform import encode as tf_encode

    u = tf_encode(src.spec, block, _convention(args))
    cw = codeword_from_ublock(chain, frozen, u)
    _write(args.out, "\n".join(str(int(s)) for s in cw) + "\n")
    return 0


def cmd_decode(args):
    src = load_joint(args.source)
    chain, _, frozen = load_construction(args.construction)
    with open(args.codeword, "r", encoding="utf-8") as fh:
        cw = [int(line.split("#")[0]) for line in fh if line.split("#")[0].strip()]
    conv = _convention(args)
    prior = replicated_prior(src, chain.N)
    want = bool(args.dump_candidates)
    if args.engine == "graph":
        res = backend.scl_decode(src.spec, prior, chain, frozen, cw, L=args.list,
                                 convention=conv, want_candidates=want)
    else:
        res = backend.lazy_scl_decode(src.spec, prior, chain, frozen, cw,
                                      L=args.list, convention=conv,
                                      want_candidates=want)
    _write(args.out, dumps_block(res.x_hat))
    if args.dump_candidates:
        rows = ["path_id,loglik," + ",".join(
            f"u_t{t}" for t in range(1, len(chain) + 1))]
        for c in res.candidates:
            useq = [c.u_hat[chain.idx[t - 1] - 1, chain.gamma[t - 1] - 1]
                    for t in range(1, len(chain) + 1)]
            rows.append(f"{c.path_id},{c.loglik:.12g}," +
                        ",".join(str(int(v)) for v in useq))
        _write(args.dump_candidates, "\n".join(rows) + "\n")
    if res.failed:
        print("warning: decode flagged as failed (all paths impossible)",
              file=sys.stderr)
    return 0


def cmd_simulate(args):
    src = load_joint(args.source)
    chain, cid = _resolve_chain(args, src.spec.M)
    conv = _convention(args)
    offsets = [float(d) for d in args.sweep.split(",")]
    lists = [int(v) for v in args.list.split(",")]
    rows = simulate_sweep(src, chain, cid, offsets, lists, args.trials,
                          args.seed, samples=args.samples, engine=args.engine,
                          convention=conv, workers=worker_count())
    _write(args.out, SWEEP_HEADER + "\n" + "\n".join(r.csv() for r in rows) + "\n")
    return 0


def cmd_bench(args):
    src = load_joint(args.source)
    conv = _convention(args)
    engines = ["graph", "lazycopy"] if args.engines == "both" else [args.engines]
    rows = []
    for n_str in args.n_list.split(","):
        N = int(n_str)
        chain = corner_chain(src.spec.M, N) if args.chain_mode == "corner" \
            else alternating_chain(N)
        for engine in engines:
            if engine == "lazycopy" and not chain.is_corner():
                raise UnsupportedChainError("lazycopy benchmarks need corner chains")
            rows.append(bench_point(src, chain, args.list, args.rounds, engine, conv))
    _write(args.out, BENCH_HEADER + "\n" + "\n".join(r.csv() for r in rows) + "\n")
    return 0


def cmd_chain_gen(args):
    if args.mode == "extend":
        if not args.chain:
            raise DomainError("--mode extend needs --chain FILE")
        chain = k_extend(load_chain(args.chain), args.k)
    elif args.mode == "corner":
        chain = corner_chain(args.m, args.n)
    elif args.mode == "alternating":
        chain = alternating_chain(args.n)
    else:
        chain = random_chain(args.m, args.n, args.seed)
    _write(args.out, chain.serialize())
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="monochain",
        description="SC / SC-list coding of correlated sources over monotone chains",
    )
    p.add_argument("--permutation", choices=[IDENTITY, CYCLIC], default=IDENTITY,
                   help="butterfly second-output permutation")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="Monte Carlo code construction")
    c.add_argument("--source", required=True)
    _add_chain_args(c)
    c.add_argument("--samples", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--statistic", choices=["entropy", "error"], default="entropy")
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--rates", help="comma separated per-terminal rates (bits/symbol)")
    g.add_argument("--sum-rate-offset", type=float, dest="sum_rate_offset",
                   help="target sum rate = joint entropy + offset, fixed ratio")
    c.add_argument("--out", required=True)
    c.set_defaults(fn=cmd_construct)

    e = sub.add_parser("encode", help="block + construction -> codeword")
    e.add_argument("--source", required=True)
    e.add_argument("--construction", required=True)
    e.add_argument("--block", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_encode)

    d = sub.add_parser("decode", help="codeword + construction -> reconstruction")
    d.add_argument("--source", required=True)
    d.add_argument("--construction", required=True)
    d.add_argument("--codeword", required=True)
    d.add_argument("--list", type=int, default=1)
    d.add_argument("--engine", choices=["graph", "lazycopy"], default="graph")
    d.add_argument("--dump-candidates", default=None)
    d.add_argument("--out", required=True)
    d.set_defaults(fn=cmd_decode)

    s = sub.add_parser("simulate", help="BLER sweep over sum-rate offsets")
    s.add_argument("--source", required=True)
    _add_chain_args(s)
    s.add_argument("--trials", type=int, required=True)
    s.add_argument("--list", default="1", help="comma separated list sizes")
    s.add_argument("--sweep", required=True, help="comma separated sum-rate offsets")
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--engine", choices=["graph", "lazycopy"], default="graph")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_simulate)

    b = sub.add_parser("bench", help="runtime / instrumentation comparison")
    b.add_argument("--source", required=True)
    b.add_argument("--n-list", required=True)
    b.add_argument("--list", type=int, default=2)
    b.add_argument("--rounds", type=int, default=100)
    b.add_argument("--engines", choices=["both", "graph", "lazycopy"], default="both")
    b.add_argument("--chain-mode", choices=["corner", "alternating"], default="corner")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(fn=cmd_bench)

    cg = sub.add_parser("chain-gen", help="generate or extend chains")
    cg.add_argument("--mode", choices=["corner", "alternating", "random", "extend"],
                    required=True)
    cg.add_argument("--m", type=int, default=2)
    cg.add_argument("--n", type=int, default=None)
    cg.add_argument("--seed", type=int, default=0)
    cg.add_argument("--k", type=int, default=1)
    cg.add_argument("--chain", default=None)
    cg.add_argument("--out", default="-")
    cg.set_defaults(fn=cmd_chain_gen)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UnsupportedChainError as exc:
        print(f"unsupported configuration: {exc}", file=sys.stderr)
        return 3
    except (CapacityError, InternalStateError) as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return 4
    except (DomainError, ShapeError, ContradictionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Engine backend selection.

The hot decode loops exist twice: a compiled extension core
(``monochain._core``, Cython) and the pure-Python reference implementation.
The compiled core is picked at import when present; every entry point also
takes ``backend="compiled" | "python"`` to force one (tests compare the two,
benchmarks report both).
"""

from dataclasses import dataclass

import numpy as np

from . import lazycopy as _pylazy
from . import sc as _pysc
from . import scl as _pyscl
from .errors import DomainError
from .scl import Candidate
from .transform import TransformConvention

try:
    from . import _core

    HAVE_COMPILED = bool(getattr(_core, "CORE_READY", False))
except ImportError:  # pragma: no cover - build-environment dependent
    _core = None
    HAVE_COMPILED = False

DEFAULT_BACKEND = "compiled" if HAVE_COMPILED else "python"


def backend_name():
    return DEFAULT_BACKEND


def _resolve(backend):
    b = backend or DEFAULT_BACKEND
    if b not in ("compiled", "python"):
        raise DomainError(f"unknown backend {b!r}")
    if b == "compiled" and not HAVE_COMPILED:
        raise DomainError("compiled core is not available in this install")
    return b


@dataclass
class CoreResult:
    """Decode result from the compiled core (counters instead of a live
    graph object)."""

    x_hat: np.ndarray
    u_hat: np.ndarray
    loglik: float
    failed: bool
    conditionals: np.ndarray
    candidates: list
    counters: dict


def _wrap(raw):
    x_hat, u_hat, loglik, failed, conds, cands, counters = raw
    candidates = []
    if cands is not None:
        candidates = [Candidate(pid, ll, u) for pid, ll, u in cands]
    return CoreResult(x_hat, u_hat, loglik, failed, conds, candidates, counters)


def _prior64(prior):
    return np.ascontiguousarray(prior, dtype=np.float64)


def sc_decode(spec, prior, chain, frozen=(), codeword=(), convention=TransformConvention(),
              want_conditionals=False, forced_u=None, backend=None):
    if _resolve(backend) == "python":
        return _pysc.sc_decode(spec, prior, chain, frozen, codeword, convention,
                               want_conditionals, forced_u)
    return _wrap(_core.graph_decode_entry(spec, _prior64(prior), chain, frozen,
                                          codeword, 1, convention,
                                          want_conditionals, forced_u, False))


def genie_decode(spec, prior, chain, true_u, convention=TransformConvention(),
                 backend=None):
    if _resolve(backend) == "python":
        return _pysc.genie_decode(spec, prior, chain, true_u, convention)
    return _wrap(_core.graph_decode_entry(spec, _prior64(prior), chain, (), (),
                                          1, convention, True, true_u, False))


def scl_decode(spec, prior, chain, frozen=(), codeword=(), L=1,
               convention=TransformConvention(), want_candidates=False, backend=None):
    if _resolve(backend) == "python":
        return _pyscl.scl_decode(spec, prior, chain, frozen, codeword, L,
                                 convention, want_candidates)
    return _wrap(_core.graph_decode_entry(spec, _prior64(prior), chain, frozen,
                                          codeword, L, convention, False, None,
                                          want_candidates))


def lazy_scl_decode(spec, prior, chain, frozen=(), codeword=(), L=1,
                    convention=TransformConvention(), want_candidates=False,
                    backend=None):
    if _resolve(backend) == "python":
        return _pylazy.lazy_scl_decode(spec, prior, chain, frozen, codeword, L,
                                       convention, want_candidates)
    return _wrap(_core.lazy_decode_entry(spec, _prior64(prior), chain, frozen,
                                         codeword, L, convention, want_candidates))

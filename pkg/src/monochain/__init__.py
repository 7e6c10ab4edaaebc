"""SC / SC-list decoding of monotone chain polar codes for distributed
lossless source coding."""

from .chain import (MonotoneChain, alternating_chain, corner_chain, from_gamma,
                    k_extend, random_chain)
from .errors import (CapacityError, ContradictionError, DomainError,
                     InternalStateError, ShapeError, UnsupportedChainError)
from .source import JointSource, joint_entropy, load_joint, loads_joint, sample_block
from .tensor import AlphabetSpec, ProbTensor, combine, conv, dconv
from .transform import TransformConvention, encode, inverse

__version__ = "0.1.0"

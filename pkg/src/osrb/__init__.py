"""Random-binning uniformity and decoding bounds, exact enumeration oracles,
and second-order rate calculators for point-to-point, broadcast and wiretap
channels."""

from .binning import BinningAssignment, BinningSpec, GuardError
from .prob import Alphabet, Channel, JointPmf, Pmf, PmfError
from .protocols import p2p_simulate, wiretap_simulate_secrecy
from .secondorder import BCSetup, LogTermPolicy, P2PSetup, WiretapSetup, bc_region_membership, p2p_rate, wiretap_rate
from .typeclass import NType, nearest_ntype

__all__ = [
    "Alphabet",
    "BCSetup",
    "BinningAssignment",
    "BinningSpec",
    "Channel",
    "GuardError",
    "JointPmf",
    "LogTermPolicy",
    "NType",
    "P2PSetup",
    "Pmf",
    "PmfError",
    "WiretapSetup",
    "bc_region_membership",
    "nearest_ntype",
    "p2p_rate",
    "p2p_simulate",
    "wiretap_rate",
    "wiretap_simulate_secrecy",
]

__version__ = "0.1.0"

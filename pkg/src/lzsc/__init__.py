"""Unrolled l0 convolutional sparse coding for multi-modal image fusion."""
from . import _backend
from .lzsc_block import LzscBlockParams, lzsc_forward, rho_k, theta_k
from .metrics import evaluate
from .networks import FNetParams, IFNetParams, fnet_forward, ifnet_forward, init_fnet, init_ifnet
from .tensor import ContractError
from .weights_io import load_weights, save_weights

__version__ = "0.1.0"
BACKEND = _backend.NAME

__all__ = [
    "BACKEND", "ContractError", "FNetParams", "IFNetParams", "LzscBlockParams", "evaluate",
    "fnet_forward", "ifnet_forward", "init_fnet", "init_ifnet", "load_weights", "lzsc_forward",
    "rho_k", "save_weights", "theta_k",
]

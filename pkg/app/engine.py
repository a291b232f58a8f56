from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

from app import settings
from app.errors import CheckpointFormatError, ModelUnavailableError
from app.models.geometry import Dictionary, FrequencyGrid
from app.models.network import Network
from app.services.array_geometry import build_dictionary
from app.services.trainer import load_checkpoint


@dataclass(frozen=True)
class Engine:
    """A trained network together with the dictionary of the array it was trained on."""

    network: Network
    D: Dictionary
    checkpoint: Optional[str] = None


def engine_from_network(net: Network, checkpoint: Optional[str] = None) -> Engine:
    if net.layout is None:
        raise CheckpointFormatError("checkpoint carries no array layout and cannot be served")
    return Engine(network=net, D=build_dictionary(net.layout, FrequencyGrid(net.N, net.layout.gamma)),
                  checkpoint=checkpoint)


@lru_cache(maxsize=1)
def _load(path: str) -> Engine:
    return engine_from_network(load_checkpoint(path).network, checkpoint=path)


def get_engine() -> Engine:
    path = settings.CHECKPOINT
    if not path:
        raise ModelUnavailableError("no model served: set THADMM_CHECKPOINT to a checkpoint file")
    if not Path(path).is_file():
        raise ModelUnavailableError(f"checkpoint {path} does not exist")
    return _load(path)

"""Simulator for a sparsity-aware photonic neural-network accelerator.

Pipeline: prune -> cluster -> compress -> schedule on the VDU array -> report.
"""

from .cluster import Codebook, cluster_weights, required_dac_bits
from .container import load_masked, load_model, save_model
from .dataflow import compress_conv, compress_fc, unroll_conv
from .errors import ConfigError, ContainerError, MissingInputError, ModelError, PhotosparseError, StageError
from .explore import ExplorationGrid, explore, sweep_arch
from .model import LayerKind, LayerSpec, ModelIR, count_parameters, reference_forward
from .photonic import DeviceParams, QuantSpec, per_pass_latency, vdu_pass
from .scheduler import SimReport, VduConfig, simulate
from .sparsify import MaskedModel, SparsityPlan, prune

__version__ = "0.1.0"

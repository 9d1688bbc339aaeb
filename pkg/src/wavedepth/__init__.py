"""Haar-wavelet depth decoding with threshold-driven sparse convolutions."""

__version__ = "0.1.0"

from .conv import ConvSpec, WaveHeadSpec, conv2d_dense, conv2d_sparse, wave_head
from .decoder import (
    DecoderRun,
    FeaturePyramid,
    LayerStack,
    default_stack,
    load_stack,
    oracle_stack,
    run_decoder,
    save_stack,
    scene_features,
    sigmoid_to_disparity,
    synth_features,
)
from .flops import MacReport, arch_report, default_arch, mac_dense, mac_sparse
from .haar import (
    CoefficientPyramid,
    WaveletLevel,
    dwt_level,
    dwt_pyramid,
    idwt_level,
    idwt_pyramid,
)
from .metrics import DepthMetrics, EvalConfig, depth_metrics, relative_change
from .sparsity import (
    AbsoluteThreshold,
    KeepTopFraction,
    get_sparse_mask,
    scale_threshold,
    sparsity_level,
    threshold_pyramid,
)
from .tensor import crop_to_dyadic, read_pfm, read_tensor, write_pfm, write_tensor

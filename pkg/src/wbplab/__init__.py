"""Weighted belief-propagation decoding of short linear block codes."""

from .errors import NumericError, ParameterError, StructuralError, WbpError
from .gf2codes import Code, enumerate_min_weight_dual, read_alist, reed_muller, standard_pcm, write_alist
from .tanner import TannerGraph, build_graph
from .wbp import DecoderConfig, WeightModel, channel_llr, decode
from .rrd import AutSampler, RrdConfig, rrd_decode
from .osd import OsdConfig, osd_decode
from .traingrad import DecoderSetup, Pan, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AutSampler", "Code", "DecoderConfig", "DecoderSetup", "NumericError", "OsdConfig", "Pan", "ParameterError",
    "RrdConfig", "StructuralError", "TannerGraph", "TrainConfig", "WbpError", "WeightModel", "build_graph",
    "channel_llr", "decode", "enumerate_min_weight_dual", "osd_decode", "read_alist", "reed_muller", "rrd_decode",
    "standard_pcm", "train", "write_alist",
]

"""Streaming speech-translation engine over unbounded input, with latency metrics."""
from .decoder import Decoder, DecoderConfig, LambdaCache
from .encoder import CHUNK_FRAMES, CHUNK_MS, EncoderConfig, SpeechChunk, StreamEncoder
from .errors import StreamSSTError
from .generation import GenerationConstraints
from .metrics import LatencyReport, RefSegment, laal, latency_report, resegment, rtf, stream_laal
from .session import CostModel, Session, SessionTrace, run_session
from .trajectory import Trajectory, augment_latency, build_robust_segments, build_trajectory

__version__ = "0.1.0"

__all__ = [
    "CHUNK_FRAMES", "CHUNK_MS", "CostModel", "Decoder", "DecoderConfig", "EncoderConfig",
    "GenerationConstraints", "LambdaCache", "LatencyReport", "RefSegment", "Session", "SessionTrace",
    "SpeechChunk", "StreamEncoder", "StreamSSTError", "Trajectory", "augment_latency", "build_robust_segments",
    "build_trajectory", "laal", "latency_report", "resegment", "rtf", "run_session", "stream_laal",
]

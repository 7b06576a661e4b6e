"""Streaming visual loop-closure detection over precomputed descriptors."""

from .frame_store import (
    ConvFoldInput,
    Frame,
    FrameStore,
    GlobalDescriptor,
    LocalDescriptor,
    RawFrame,
    cosine_similarity,
    fold_batchnorm,
)
from .geometry import FundamentalMatrix, RansacParams, eight_point, ransac_verify, sampson_error
from .hashing import BinaryCode, HashFamily, bucket_key, encode, hamming
from .hnsw import HnswIndex, HnswParams, SearchResult
from .matcher import Match, MatchSet, match_frames
from .pipeline import LoopClosureDetector, LoopDetection, PipelineConfig

__version__ = "0.1.0"

__all__ = [
    "BinaryCode",
    "ConvFoldInput",
    "Frame",
    "FrameStore",
    "FundamentalMatrix",
    "GlobalDescriptor",
    "HashFamily",
    "HnswIndex",
    "HnswParams",
    "LocalDescriptor",
    "LoopClosureDetector",
    "LoopDetection",
    "Match",
    "MatchSet",
    "PipelineConfig",
    "RansacParams",
    "RawFrame",
    "SearchResult",
    "bucket_key",
    "cosine_similarity",
    "eight_point",
    "encode",
    "fold_batchnorm",
    "hamming",
    "match_frames",
    "ransac_verify",
    "sampson_error",
]

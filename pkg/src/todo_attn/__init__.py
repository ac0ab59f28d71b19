"""Token-downsampled attention with a token-merging baseline and fidelity tools."""
from .attention import (
    AttentionConfig,
    AttentionOutput,
    attention_weights,
    attention_workload_flops,
    dense_attention,
    todo_attention,
)
from .bench import BenchRecord, MemoryEstimate, estimate_attention_memory, paper_preset_suite, run_bench
from .errors import NonFiniteError, RangeError, ShapeError, TgrdFormatError
from .grid import (
    DownsampleSpec,
    MergeRatio,
    TokenGrid,
    flatten,
    nearest_downsample,
    ratio_to_spec,
    unflatten,
)
from .metrics import (
    ImagePlane,
    SimilarityStats,
    cosine_similarity,
    hpf_magnitude,
    mse,
    neighborhood_stats,
)
from .tome import TomePlan, bipartite_soft_matching, tome_attention, tome_merge, tome_unmerge

__version__ = "0.1.0"

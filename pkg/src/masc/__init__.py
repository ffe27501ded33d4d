"""Hierarchical semantic trees over VQ codebooks and the coarse token vocabularies cut from them."""

from .baselines import KMeansConfig, KMeansResult, kmeans, kmeanspp_seed, partition_ari
from .codebook import Codebook, load_codebook, quantize, save_codebook, synth_blobs, synth_bridge
from .errors import FormatError, MascError, ResourceError, ValidationError, VerificationError
from .linkage import ClusterView, LinkageKind, cluster_distance, lw_update, pairwise_matrix
from .mapping import ClusterMapping, cut, load_mapping, mapping_stats, save_mapping
from .metrics import EntropyReport, compare_priors, normalize_entropy, shannon_entropy
from .sequence import TokenSequence, coarsen, decode_random, empirical_distribution
from .tree import MergeRecord, MergeTrace, build, load_trace, save_trace

__version__ = "0.1.0"

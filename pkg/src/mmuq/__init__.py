"""Uncertainty estimation for large multimodal models.

The toolkit perturbs a prompt with semantic-preserving operators, samples
one response per perturbed variant, clusters the responses by judged
semantic equivalence, and scores disagreement with normalized cluster
entropy. On top of that sit hallucination detection and mitigation,
uncertainty-aware stepwise reasoning, calibration metrics, and a
simulation lab for the distance-variance scaling law.
"""

from ._version import VERSION as __version__
from .backends import (
    BackendConfig,
    BackendRoleSet,
    ModelResponse,
    RetryPolicy,
    RoleClients,
    make_backend,
    normalize_answer,
)
from .config import RunConfig, config_hash, load_config
from .errors import ToolkitError
from .media import (
    AudioContent,
    Content,
    ImageContent,
    Modality,
    PointCloudContent,
    PromptBundle,
    TextContent,
    VideoContent,
    content_hash,
    load_content,
    save_content,
)
from .metrics import (
    DetectionRecord,
    MetricReport,
    aurac,
    auroc,
    compute_report,
    ece,
    reliability_bins,
)
from .perturb import (
    PairingOrder,
    PerturbParams,
    PerturbationPlan,
    PerturbedPrompt,
    build_samples,
    degree_ladder,
    perturb_content,
)
from .proplab import (
    DistanceEstimate,
    ProportionalityFit,
    SyntheticModel,
    fit_proportionality,
    loglog_fit,
    simulate_distance,
)
from .tasks import (
    CoTResult,
    DatasetItem,
    MitigationOutcome,
    cot,
    detect,
    load_manifest,
    mitigate,
)
from .uncertainty import (
    CaptionedSample,
    ClusterDistribution,
    SemanticCluster,
    UncertaintyEstimate,
    cluster_captions,
    entropy,
    estimate,
    lexical_cluster,
)

__all__ = [
    "AudioContent",
    "BackendConfig",
    "BackendRoleSet",
    "CaptionedSample",
    "ClusterDistribution",
    "Content",
    "CoTResult",
    "DatasetItem",
    "DetectionRecord",
    "DistanceEstimate",
    "ImageContent",
    "MetricReport",
    "MitigationOutcome",
    "Modality",
    "ModelResponse",
    "PairingOrder",
    "PerturbParams",
    "PerturbationPlan",
    "PerturbedPrompt",
    "PointCloudContent",
    "PromptBundle",
    "ProportionalityFit",
    "RetryPolicy",
    "RoleClients",
    "RunConfig",
    "SemanticCluster",
    "SyntheticModel",
    "TextContent",
    "ToolkitError",
    "UncertaintyEstimate",
    "VideoContent",
    "__version__",
    "aurac",
    "auroc",
    "build_samples",
    "cluster_captions",
    "compute_report",
    "config_hash",
    "content_hash",
    "cot",
    "degree_ladder",
    "detect",
    "ece",
    "entropy",
    "estimate",
    "fit_proportionality",
    "lexical_cluster",
    "load_config",
    "load_content",
    "load_manifest",
    "loglog_fit",
    "make_backend",
    "mitigate",
    "normalize_answer",
    "perturb_content",
    "reliability_bins",
    "save_content",
    "simulate_distance",
]

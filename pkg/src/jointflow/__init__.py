"""Joint multi-agent trajectory prediction with DAG-factorized conditional flows.

A scene's joint future distribution is factorized along a directed acyclic
interaction graph; each per-agent conditional is a conditional normalizing
flow over autoencoded future displacements. Seven interaction-graph
strategies are implemented and compared under joint minADE/minFDE/NLL.
"""

from .scene import (
    Agent,
    AgentKind,
    AgentType,
    DEFAULT_AGENT_TYPES,
    DisplacementSeq,
    PastScene,
    Scene,
    SceneFormatError,
    SceneValidationError,
    SplitError,
    Trajectory,
    from_displacements,
    load_scenes,
    save_scenes,
    split_dataset,
    to_displacements,
)
from .synth import ConfigError, GeneratorConfig, HORIZON_PRESETS, generate_synthetic
from .geom import (
    ApproachAngle,
    CrossingCell,
    GeometryError,
    approach_angle,
    extrapolate_hypothetical,
    first_crossing,
    heading,
    pairwise_distance_matrix,
    viewing_angle,
)
from .graphs import (
    ClassifierParams,
    CyclicGraphError,
    GraphStrategy,
    InteractionClass,
    InteractionGraph,
    InteractionLabel,
    classify_pair,
    crossing_labels,
    dagify,
    euclidean_graph,
    independence_graph,
    pair_features,
    predicted_graph,
    topological_order,
)
from .neural import (
    Binding,
    GradCheckReport,
    NonFiniteGradientError,
    ParamStore,
    adam_step,
    dense_forward,
    grad_check,
    gru_decode,
    gru_encode,
    load_checkpoint,
    save_checkpoint,
    softmax,
    weighted_cross_entropy,
)
from .flow import (
    FlowNumericsError,
    FlowStack,
    forward_normalize,
    init_flow,
    inverse_generate,
    log_prob,
    nll_loss,
    sample,
)
from .model import (
    ModelBundle,
    ModelConfig,
    ModelVariant,
    TrainingDiverged,
    encode_context,
    joint_scene_nll,
    predict_scene,
    pretrain_autoencoder,
    pretrain_classifier,
    scene_log_likelihood,
    train,
)
from .evaljoint import (
    MetricsReport,
    VariantSummary,
    aggregate_runs,
    evaluate_variant,
    gaussian_kde_logpdf,
    joint_min_ade,
    joint_min_fde,
    joint_nll_metric,
)

__version__ = "0.1.0"

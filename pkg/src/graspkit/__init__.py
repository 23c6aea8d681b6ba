"""graspkit: deterministic building blocks for 6-DoF grasp detection pipelines.

Pose geometry and the bounded vector encoding, multi-view token geometry,
Hungarian-matched loss kernels, the evaluation metric suite (CR@theta, pose
EMD, CFR, EW-CFR), diversity-preserving label pruning, three-stage CoT QA
templates, and the dataset/benchmark file formats tying them together.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateSceneError,
    DimensionError,
    DomainError,
    DuplicateIdError,
    EmptyAssignmentError,
    EmptyGroundTruthError,
    EmptyPredictionError,
    EmptyTargetsError,
    EncodingError,
    FormatError,
    GraspkitError,
    MissingConfidenceError,
    ParseError,
    RangeError,
    SubsetError,
    UnknownDescriptorError,
    UnknownTargetError,
    ValidationError,
)
from .geometry import (
    GraspPose,
    GraspSet,
    PoseVector,
    euler_to_rotation,
    pose_from_vector,
    pose_to_vector,
    poses_from_array,
    poses_to_array,
    se3_distance,
)
from .views import (
    RGBDImage,
    Scene,
    ViewConfig,
    VirtualCamera,
    VisualToken,
    back_project,
    make_virtual_cameras,
    mean_rgb_reducer,
    patchify,
    render_view,
    scene_to_tokens,
    voxel_pool,
)
from .losses import (
    Assignment,
    CostMatrix,
    LossReport,
    build_cost_matrix,
    focal_loss,
    focal_loss_grad,
    hungarian,
    l1_regression_grad,
    l1_regression_loss,
    masked_token_ce,
    total_loss,
)
from .metrics import (
    GripperModel,
    MetricConfig,
    MetricReport,
    OrientedBox,
    cfr,
    collision_free,
    coverage_rate,
    emd,
    evaluate,
    ew_cfr,
    gripper_boxes,
    pairwise_pose_distance,
)
from .pruning import PruneConfig, prune_labels, pruning_coverage
from .cot import (
    DescriptorLibrary,
    Instruction,
    InstructionCheck,
    ParsedAnswer,
    QARecord,
    Slot,
    build_action_qa,
    build_cot_sequence,
    build_instruction_prompt,
    build_property_qa,
    build_target_qa,
    default_library,
    parse_answer,
    validate_instruction,
)
from .dataset import (
    AnnotationRecord,
    PredictionRecord,
    SceneRecord,
    SplitManifest,
    SplitMix64,
    filter_valid_poses,
    load_annotations,
    load_instructions,
    load_predictions,
    load_scene,
    load_split,
    make_split,
    read_ply,
    select_candidates,
    store_scene,
    write_annotations,
    write_instructions,
    write_ply,
    write_predictions,
    write_qa_records,
    write_split,
    write_tokens,
)

from facm.enums import ArchId

CHECKPOINT_FORMAT_VERSION = 1
CHECKPOINT_METADATA_ENTRY = "metadata.json"
CHECKPOINT_SUFFIX = ".facm"

NAMESPACE_BACKBONE = "backbone"
NAMESPACE_AUX = "aux"
NAMESPACE_FA = "fa"
NAMESPACE_CMPD_CORE = "cmpd.core"
NAMESPACE_CMPD_HEAD = "cmpd.head"
NAMESPACE_DECISION = "decision"

MAX_TAP_WIDTH = 4096
LOG_FLOOR = 1e-12

DEFAULT_TAP_NAMES = {
    ArchId.MNISTNET: ["conv_block1", "conv_block2", "fc1"],
    ArchId.SMALLCNN_CIFAR: ["conv_block1", "conv_block2", "conv_block3"],
}
DEFAULT_INPUT_SHAPES = {
    ArchId.MNISTNET: (1, 28, 28),
    ArchId.SMALLCNN_CIFAR: (3, 32, 32),
}

EVAL_REPORT_HEADER = (
    "system_id",
    "setting",
    "attack",
    "eps",
    "accuracy",
    "n_examples",
    "attack_wall_time_s",
    "inference_wall_time_s",
    "seed",
)
TIMINGS_HEADER = ("system_id", "setting", "attack", "eps", "attack_wall_time_s", "inference_wall_time_s")

SQUARE_EVAL_EXAMPLES = 1000
WHITE_BOX_DESK_EXAMPLES = 2000

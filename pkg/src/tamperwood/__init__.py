"""Tree-ensemble security toolkit.

Embedding of interval rules into decision trees and random forests (data
poisoning or structural expansion), extraction of embedded rules via
minimal-edit search over suspected joint paths, and the defence suite
(pruning, loss and activation outlier scores, ROC evaluation).
"""

from .boxes import EMPTY_BOX, Box, Interval
from .dataio import (
    Dataset,
    SplitSpec,
    gen_synthetic,
    load_csv,
    load_libsvm,
    load_model,
    save_csv,
    save_model,
    split,
)
from .defence import (
    DetectionScore,
    RocCurve,
    activation_similarity,
    detection_scores,
    loss_outlier,
    model_loss,
    prune_forest,
    prune_rep,
    roc_auc,
)
from .embed_blackbox import BlackboxReport, embed_forest_blackbox, embed_tree_blackbox
from .embed_whitebox import (
    ExpansionReport,
    candidate_nodes,
    embed_forest_whitebox,
    embed_tree_whitebox,
    expand,
)
from .errors import (
    ConsistencyError,
    FormatError,
    ParseError,
    SchemaError,
    TamperwoodError,
    UsageError,
    ValidationError,
)
from .evaluate import CriteriaReport, TrialConfig, evaluate_criteria, repeated_trial
from .extract import ExtractedKnowledge, SuspectedPaths, extract_knowledge, solve_l0, suspected_paths
from .forest import Forest, JointPath, accuracy, joint_path, predict_forest, train_forest
from .knowledge import (
    Knowledge,
    PathTaxonomy,
    classify_paths,
    clean_collision_rate,
    ke_transform,
    make_ke_testset,
    parse_knowledge,
    split_partial,
)
from .tree import (
    Path,
    TrainParams,
    Tree,
    enumerate_paths,
    format_paths,
    path_box,
    predict_tree,
    train_tree,
    traverse,
)

__version__ = "0.1.0"

"""Distribution-free prediction intervals for sums of labels over index groups."""

from .baselines import (
    bonferroni_predict,
    group_sampling_predict,
    normal_hetero_iqr_predict,
    normal_homoscedastic_predict,
)
from .cia import (
    GroupSplitView,
    StrataSpec,
    cia_predict,
    overlap_delta_avg,
    overlap_delta_max,
    restrict_groups,
    split_groups,
    stratified_cia_predict,
    symmetric_split,
)
from .core import (
    IndexGroup,
    IntervalPrediction,
    LabeledSample,
    SampleSet,
    SplitAssignment,
    Threshold,
    conformal_quantile,
    group_sum,
)
from .experiments import (
    METHOD_IDS,
    ExperimentConfig,
    MethodResult,
    PathSampling,
    TabularDataset,
    build_groups_by_category,
    generate_synthetic,
    load_tabular_csv,
    overlap_gap_study,
    run_experiment,
)
from .graph import (
    Edge,
    PathGroup,
    WeightedGraph,
    dijkstra,
    load_edge_list,
    sample_path_groups,
    save_edge_list,
)
from .models import FittedModel, fit, predict_point, predict_quantiles
from .scoring import cqr_group_score, split_group_score

__version__ = "0.1.0"

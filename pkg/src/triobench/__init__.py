"""triobench: quantify the privacy / fairness / accuracy trade-off on tabular data."""

from .analysis import (
    BayesComparison,
    PathReport,
    SolutionRecord,
    average_rank_solution,
    bayes_sign_test,
    optimization_path,
    percentage_diff,
    read_results,
    select_baseline,
    three_way_comparison,
    write_results,
)
from .datasets import (
    Dataset,
    ProtectedBinarization,
    SchemaConfig,
    Split,
    binarize_protected,
    load_dataset,
    load_schema_config,
    split,
)
from .fairness import (
    EgParams,
    FairnessReport,
    GroupedPredictions,
    UndefinedMetricError,
    demographic_parity_diff,
    equalized_odds_diff,
    exponentiated_gradient,
)
from .harness import ExperimentConfig, RunLedger, evaluate_solution, report, run_experiment
from .learning import (
    Encoder,
    FeatureMatrix,
    FittedModel,
    HyperGrid,
    encode,
    grid_search,
    load_model,
    save_model,
    train_boosting,
    train_logistic,
    train_random_forest,
)
from .privacy import (
    EquivalenceClassIndex,
    LinkageRisk,
    PrivateSmoteParams,
    SyntheticVariant,
    import_variant,
    index_equivalence_classes,
    linkage_risk,
    private_smote,
    single_outs,
)

__version__ = "0.1.0"

"""Behavioral simulator, compiler, and design-space optimizer for analog
content-addressable memories that evaluate decision forests in memory."""

__version__ = "0.1.0"

from .luts import (
    LutError,
    LutSet,
    PulldownLut,
    StepTransfer,
    TechParams,
    TransferLut,
    bound_to_conductance,
    conductance_level,
    gen_synthetic_luts,
    interp2,
    load_luts,
    load_tech,
    quantize_conductance,
    save_luts,
)
from .matchline import (
    CellProgram,
    MlTrace,
    RowProgram,
    SimError,
    row_discharge,
    row_match_ideal,
    sense,
    write_trace_csv,
)
from .arch import (
    ArchConfig,
    ArchError,
    CostWeights,
    DesignPoint,
    expected_depth,
    expected_energy,
    monte_carlo_energy,
    p_mm_par,
    sweep,
    sweep_to_csv,
)
from .forest import (
    CompiledForest,
    IntervalWord,
    MismatchStats,
    SchemaError,
    TreeModel,
    compile_forest,
    energy_reduction_curve,
    extract_paths,
    load_compiled,
    load_dataset_csv,
    load_forest_file,
    make_chain_forest,
    make_synthetic_forest,
    measured_mismatch_stats,
    normalize_queries,
    normalize_word,
    reference_predictions,
    save_compiled,
    save_dataset_csv,
    tile,
    validate_forest_doc,
)
from .inference import (
    DELTA_NEAR_BOUNDARY,
    EvalMode,
    InferenceReport,
    classify,
    evaluate_dataset,
    evaluate_word,
    false_decision_rates,
    make_near_boundary_queries,
    match_matrix,
    query_to_voltages,
    segment_length_sweep,
    seq_evaluate_word,
    write_report_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Step counting from smartphone inertial data with a two-layer LSTM."""

from ._stepcount import (
    AnnotatedWalk,
    LstmModel,
    Segment,
    SensorSequence,
    StepcountError,
    UsableSlice,
    binarize,
    build_square_wave,
    extract_usable_spans,
    generate_cohort,
    generate_walk,
    load_checkpoint,
    metric1,
    metric2,
    metric3,
    parse_ground_truth_xml,
    parse_sensor_csv,
    predicted_steps,
    render_report,
    run_experiment,
    save_checkpoint,
    set_log_level,
    signal_accuracy,
    signal_to_steps,
    train_windows,
)

__all__ = [name for name in dir() if not name.startswith("_")]

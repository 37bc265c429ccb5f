from .spec import DEFAULT_BATCH, TASKS, ExperimentSpec, choose_tokens
from .sweep import (ABLATION_VARIANTS, CellResult, expand_sweep, read_results, run_cell,
                    run_concat_ablation, run_sweep, summary_table, write_results)
from .tasks import ImageTask, SceneTask, Task, build_task, decoder_config
from .train import MetricLog, MetricRow, NonFiniteLossError, run_experiment, train_step

__all__ = [
    "ABLATION_VARIANTS", "CellResult", "DEFAULT_BATCH", "ExperimentSpec", "ImageTask", "MetricLog",
    "MetricRow", "NonFiniteLossError", "SceneTask", "TASKS", "Task", "build_task", "choose_tokens",
    "decoder_config", "expand_sweep", "read_results", "run_cell", "run_concat_ablation", "run_experiment",
    "run_sweep", "summary_table", "train_step", "write_results",
]

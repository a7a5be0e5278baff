"""End-to-end pipeline: configuration, commands, tables and plots."""

from .config import DataSpec, Dataset, ExperimentConfig, class_index, desk_tokenizer, load_dataset
from .tables import SCHEMAS, MetricsRow, read_table, write_table

__all__ = ["SCHEMAS", "DataSpec", "Dataset", "ExperimentConfig", "MetricsRow", "class_index", "desk_tokenizer",
           "load_dataset", "read_table", "write_table"]

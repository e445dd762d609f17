"""Differentiable meta-graph search for heterogeneous graph neural networks."""

from .linalg import BACKEND, SparseMatrix, counter, row_normalize, spmm, spmm_adjoint
from .hin import HinGraph, FeatureSet, NodeClassData, RecData, load_hin, write_hin, task_related_types
from .space import IDENTITY, EMPTY, MetaGraph, SearchSpaceSpec, build_space, cardinality, enumerate_space, export_dot
from .model import Adam, HeteroModel, TrainConfig
from .search import ArchParams, SearchConfig, compute_alpha, derive, lambda_grad, run_search, sample_path
from .evaluate import auc, macro_f1, train_eval
from .synth import synth_planted

__version__ = "0.1.0"

"""Global counterfactual directions for black-box classifiers over a semantic latent space."""

from .attribution import Baseline, LatentPath, NoBaselineFound, bb_ig, bb_lig, find_baseline, latent_path
from .config import RunConfig
from .directions import (AlphaGrid, CFResult, DegenerateDirection, Direction, DirectionReport, Latent,
                         best_of_directions, evaluate_direction, g_direction, h_directions, line_search,
                         mean_abs_diff_map)
from .numerics import MlpNet, grad_input, hessian_input, mlp_forward, sample_nball, sym_eigen
from .proxy import ProxyDataset, TrainConfig, build_dataset, proxy_cf, train_proxy
from .worldmodel import ClassifierSpec, GeneratorSpec, WorldModel, classify, decode, distance, synthetic_world

__version__ = "0.1.0"

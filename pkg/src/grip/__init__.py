"""Learning with noisy labels via class soft labels and global instance purification."""

__version__ = "0.1.0"

from .config import PRESETS, TrainConfig, resolve_config
from .dataset import Dataset, NoiseSpec, generate_blobs, inject_noise, load_csv, make_transition_matrix, save_csv, split
from .losses import LossWeights, ce_loss, gr_loss, me_loss, soft_loss
from .purify import compute_threshold, js_divergence, purify
from .softlabel import EpochAccumulator, SoftLabelMatrix, finalize_epoch, init_soft_labels
from .trainer import EpochLog, evaluate, train, train_ce_baseline

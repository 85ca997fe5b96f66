"""Rollout collection, PPO updates, evaluation and checkpoints."""

from .agents import LEARNED_METHODS, METHODS, Policies, build_policies, hidden_zeros, start_episode
from .buffer import CommanderBuffer, CommanderRecord, ExecutorBuffer
from .checkpoint import CheckpointError, load_checkpoint, read_header, save_checkpoint
from .config import TrainConfig
from .evaluate import EvalReport, eval_seed, evaluate, evaluate_controller, evaluate_random
from .gae import gae
from .loop import TrainingAborted, TrainResult, train
from .normalizer import ReturnScaler, RunningNormalizer
from .ppo import clipped_surrogate, commander_update, executor_update, policy_loss

__all__ = [
    "LEARNED_METHODS", "METHODS", "Policies", "build_policies", "hidden_zeros", "start_episode",
    "CommanderBuffer", "CommanderRecord", "ExecutorBuffer",
    "CheckpointError", "load_checkpoint", "read_header", "save_checkpoint",
    "TrainConfig", "EvalReport", "eval_seed", "evaluate", "evaluate_controller", "evaluate_random",
    "gae", "TrainingAborted", "TrainResult", "train", "ReturnScaler", "RunningNormalizer",
    "clipped_surrogate", "commander_update", "executor_update", "policy_loss",
]

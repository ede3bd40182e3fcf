"""
 Copyright Duel 2025
"""
import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.models.bag import Bag
from src.models.mil_model import LossSettings, MILNetwork
from src.models.model_params import LearnerKind, ModelParams
from src.models.train_config import TrainConfig
from src.nn.optim import OptimizerState, optimizer_step, scheduled_learning_rate
from src.pipeline.train_stats import EpochMetrics, TrainStats
from src.synthdata.augmentation import sample_subset_indices
from src.synthdata.generator import split_indices
from src.utilities.errors import DomainError

logger = logging.getLogger(__name__)

DECISION_THRESHOLD = 0.5


@dataclass
class TrainResult:
    """
    The best-validation-accuracy snapshot, the final weights and the run log.
    """
    best: ModelParams
    final: ModelParams
    stats: TrainStats

    @property
    def history(self) -> List[EpochMetrics]:
        return self.stats.history


class MILTrainer:
    """
    Trains a strong learner on labelled instances or a weak learner on labelled bags.
    """

    def __init__(self, config: TrainConfig, mode: LearnerKind, show_progress: bool = False):
        """
        Constructor
        :param config: Training hyper-parameters.
        :param mode: strong (instance labels) or weak (bag labels).
        :param show_progress: Show a progress bar over epochs.
        """
        self.config = config
        self.mode = LearnerKind(mode)
        self.show_progress = show_progress
        self.settings = LossSettings(alpha=config.alpha, gamma=config.gamma,
                                     feature_dropout=config.feature_dropout,
                                     attention_dropout=config.attention_dropout)
        self.rng = np.random.default_rng(config.seed)

    @staticmethod
    def _instances(bags: Sequence[Bag]) -> Tuple[np.ndarray, np.ndarray]:
        features, labels = [], []
        for bag in bags:
            bag_labels = bag.instance_labels()
            if bag_labels is None:
                raise DomainError(f"strong training needs instance labels; bag {bag.id} has none")
            features.append(bag.stacked())
            labels.append(bag_labels)
        return np.concatenate(features), np.concatenate(labels)

    def _split(self, bags: Sequence[Bag]) -> Tuple[List[Bag], List[Bag]]:
        if self.config.validation_fraction == 0 or len(bags) < 2:
            return list(bags), list(bags)
        labels = np.array([bag.bag_label for bag in bags])
        train_idx, validation_idx = split_indices(labels, self.config.validation_fraction, self.rng)
        if len(validation_idx) == 0 or len(train_idx) == 0:
            return list(bags), list(bags)
        return [bags[i] for i in train_idx], [bags[i] for i in validation_idx]

    def _evaluate(self, network: MILNetwork, validation: Sequence[Bag]) -> Tuple[float, float]:
        """
        Loss and accuracy at threshold 0.5, without dropout.
        Weak learners are scored per bag, strong learners per instance.
        :return: (validation loss, validation accuracy)
        """
        if self.mode == LearnerKind.STRONG:
            x, y = self._instances(validation)
            loss, _, probabilities = network.strong_loss_and_grads(x, y, self.settings, None, training=False)
            accuracy = float(np.mean((probabilities >= DECISION_THRESHOLD) == y))
            return loss, accuracy
        losses, hits = [], []
        for bag in validation:
            loss, _, probability = network.weak_loss_and_grads(bag.stacked(), bag.bag_label, self.settings, None,
                                                               training=False)
            losses.append(loss)
            hits.append((probability >= DECISION_THRESHOLD) == bool(bag.bag_label))
        return float(np.mean(losses)), float(np.mean(hits))

    def _strong_epoch(self, network: MILNetwork, state: OptimizerState, x: np.ndarray, y: np.ndarray,
                      stats: TrainStats) -> float:
        order = self.rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(order), self.config.batch_size):
            batch = order[start:start + self.config.batch_size]
            xb = x[batch]
            if self.config.noise_std > 0:
                xb = xb + self.rng.normal(0.0, self.config.noise_std, size=xb.shape).astype(xb.dtype)
            loss, grads, _ = network.strong_loss_and_grads(xb, y[batch], self.settings, self.rng)
            optimizer_step(network.params.trainable(), grads, state)
            total += loss * len(batch)
            stats.steps += 1
        return total / len(order)

    def _weak_epoch(self, network: MILNetwork, state: OptimizerState, stacked: List[np.ndarray],
                    labels: np.ndarray, stats: TrainStats) -> float:
        total = 0.0
        for i in self.rng.permutation(len(stacked)):
            x = stacked[i]
            if self.config.subsample_min_k:
                x = x[sample_subset_indices(len(x), self.config.subsample_min_k, self.rng)]
            loss, grads, _ = network.weak_loss_and_grads(x, int(labels[i]), self.settings, self.rng)
            optimizer_step(network.params.trainable(), grads, state)
            total += loss
            stats.steps += 1
        return total / len(stacked)

    def train(self, params: ModelParams, bags: Sequence[Bag],
              validation: Optional[Sequence[Bag]] = None) -> TrainResult:
        """
        Run the training loop.

        Without an explicit validation set, a stratified validation_fraction of the bags is held
        out (or, with fraction 0, the training bags themselves are used).
        :param params: Initial weights; never modified.
        :param bags: Training bags.
        :param validation: Optional validation bags.
        :return: Best snapshot, final weights and the per-epoch log.
        """
        if not bags:
            raise DomainError("cannot train on an empty dataset")
        if validation is None:
            bags, validation = self._split(bags)
        working = params.copy(learner_kind=self.mode)
        network = MILNetwork(working)
        stats = TrainStats(mode=self.mode.value)
        config = self.config

        if self.mode == LearnerKind.STRONG:
            x, y = self._instances(bags)
            stats.labels_used = len(y)
        else:
            if config.batch_size != 1:
                logger.info("Weak training uses one bag per step; batch_size=%d ignored", config.batch_size)
            stacked = [bag.stacked() for bag in bags]
            labels = np.array([bag.bag_label for bag in bags])
            stats.labels_used = len(bags)

        state = OptimizerState.create(config.optimizer, working.trainable(), config.learning_rate,
                                      weight_decay=config.weight_decay, momentum=config.momentum)
        best = working.copy()
        stale = 0
        epochs = tqdm(range(config.epochs), desc=f"train[{self.mode.value}]", disable=not self.show_progress)
        for epoch in epochs:
            started = time.perf_counter()
            state.learning_rate = scheduled_learning_rate(config.learning_rate, epoch, config.decay_factor,
                                                          config.decay_period)
            if self.mode == LearnerKind.STRONG:
                train_loss = self._strong_epoch(network, state, x, y, stats)
            else:
                train_loss = self._weak_epoch(network, state, stacked, labels, stats)
            validation_loss, accuracy = self._evaluate(network, validation)

            improved = accuracy > stats.best_validation_accuracy
            if improved:
                stats.best_validation_accuracy = accuracy
                stats.best_epoch = epoch
                best = working.copy()
                stale = 0
            else:
                stale += 1
            stats.history.append(EpochMetrics(epoch=epoch, learning_rate=state.learning_rate, train_loss=train_loss,
                                              validation_loss=validation_loss, validation_accuracy=accuracy,
                                              improved=improved, seconds=time.perf_counter() - started))
            stats.epochs_run = epoch + 1
            logger.info("epoch %d lr=%.3g loss=%.4f val_loss=%.4f val_acc=%.4f", epoch, state.learning_rate,
                        train_loss, validation_loss, accuracy)
            if config.patience is not None and stale > config.patience:
                stats.stopped_early = True
                logger.info("Stopping after %d epochs without improvement", stale)
                break
        return TrainResult(best=best, final=working, stats=stats)


def train(params: ModelParams, dataset: Sequence[Bag], config: TrainConfig, mode: LearnerKind,
          validation: Optional[Sequence[Bag]] = None, show_progress: bool = False) -> TrainResult:
    """
    Train a strong or weak learner; see MILTrainer.train.
    """
    return MILTrainer(config, mode, show_progress=show_progress).train(params, dataset, validation)

"""
 Copyright Duel 2025
"""
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.datastore.datastore_manager import DatastoreManager
from src.metrics.roc import ThresholdCriterion
from src.models.bag import Bag
from src.models.model_params import EncoderSpec, LearnerKind, ModelParams
from src.models.sweep_plan import SweepPlan
from src.models.train_config import TrainConfig
from src.pipeline.evaluation import Evaluator
from src.pipeline.trainer import MILTrainer
from src.synthdata.augmentation import stratified_sample
from src.synthdata.generator import SynthDataset
from src.utilities.errors import DomainError
from src.utilities.svg_plot import LinePlot, Series, SvgPlot

logger = logging.getLogger(__name__)

Z_95 = 1.96
_MODE_CODES = {LearnerKind.STRONG: 0, LearnerKind.WEAK: 1}
SINGLE_REPETITION_NOTE = "single repetition: zero variance, CI omitted"


@dataclass
class SweepRun:
    """
    Outcome of one (mode, budget, repetition) training run.
    """
    mode: str
    budget: int
    repetition: int
    labels_used: int
    bags_used: int
    auc: float
    f1: float
    epochs_run: int
    best_epoch: Optional[int]
    checkpoint: Optional[str] = None

    def as_row(self) -> dict:
        return asdict(self)


@dataclass
class SweepResult:
    runs: pd.DataFrame
    summary: pd.DataFrame
    notes: List[str] = field(default_factory=list)
    eval_bags: int = 0
    mean_bag_length: float = 0.0


def run_seed(seed: int, mode: LearnerKind, budget: int, repetition: int) -> np.random.SeedSequence:
    """
    Seed of one run, independent of the order runs are scheduled in.
    """
    return np.random.SeedSequence([seed, _MODE_CODES[LearnerKind(mode)], budget, repetition])


def sample_budget(bags: List[Bag], mode: LearnerKind, budget: int, rng: np.random.Generator) -> List[Bag]:
    """
    Draw a stratified label sample: bags for weak learners, instances for strong learners. Sampled
    instances stay grouped by their parent bag.
    :param bags: Labelled pool.
    :param mode: Learner kind.
    :param budget: Number of labels.
    :param rng: Random stream.
    :return: Training bags holding exactly ``budget`` labels.
    """
    if LearnerKind(mode) == LearnerKind.WEAK:
        picked = stratified_sample(np.array([bag.bag_label for bag in bags]), budget, rng)
        return [bags[i] for i in picked]

    owners, positions, labels = [], [], []
    for b, bag in enumerate(bags):
        instance_labels = bag.instance_labels()
        if instance_labels is None:
            raise DomainError(f"strong sampling needs instance labels; bag {bag.id} has none")
        owners.extend([b] * len(bag))
        positions.extend(range(len(bag)))
        labels.extend(instance_labels.tolist())
    picked = stratified_sample(np.array(labels), budget, rng)
    grouped: Dict[int, List[int]] = {}
    for i in picked:
        grouped.setdefault(owners[i], []).append(positions[i])
    return [bags[b].subset(sorted(idx)) for b, idx in sorted(grouped.items())]


class LabelComplexitySweep:
    """
    Trains both learners over a ladder of label budgets and evaluates every run on one fixed subset.
    """

    def __init__(self, plan: SweepPlan, seed: int = 0, workers: int = 1, recipe: Literal["desk", "published"] = "desk",
                 train_overrides: Optional[dict] = None, weak_estimator: str = "attention",
                 datastore: Optional[DatastoreManager] = None, show_progress: bool = False):
        """
        Constructor
        :param plan: Budgets, repetitions and learner kinds.
        :param seed: Root seed of the sweep.
        :param workers: Runs trained concurrently.
        :param recipe: Training recipe family.
        :param train_overrides: TrainConfig fields applied to every run.
        :param weak_estimator: Instance estimator scored for weak runs (attention or shapley).
        :param datastore: Where checkpoints go; None keeps them in memory only.
        :param show_progress: Show a progress bar over runs.
        """
        self.plan = plan
        self.seed = seed
        self.workers = workers
        self.recipe = recipe
        self.train_overrides = dict(train_overrides or {})
        self.weak_estimator = weak_estimator
        self.datastore = datastore
        self.show_progress = show_progress

    def split(self, dataset: SynthDataset) -> Tuple[SynthDataset, SynthDataset]:
        """
        (training pool, fixed evaluation subset). The evaluation subset is stratified and drawn from
        the sweep seed only.
        """
        labels = dataset.bag_labels
        if self.plan.eval_size >= len(dataset):
            raise DomainError(f"evaluation subset of {self.plan.eval_size} bags leaves nothing to train on "
                              f"in a dataset of {len(dataset)}")
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 2]))
        eval_idx = stratified_sample(labels, self.plan.eval_size, rng)
        pool_idx = np.setdiff1d(np.arange(len(dataset)), eval_idx)
        return dataset.take(pool_idx), dataset.take(eval_idx)

    def check_budgets(self, pool: SynthDataset) -> None:
        largest = max(self.plan.budgets)
        for mode in self.plan.modes:
            available = len(pool) if LearnerKind(mode) == LearnerKind.WEAK else pool.instance_count
            unit = "bags" if LearnerKind(mode) == LearnerKind.WEAK else "instances"
            if largest > available:
                raise DomainError(f"budget {largest} exceeds the {available} labelled {unit} available to "
                                  f"{LearnerKind(mode).value} learners")

    def _train_config(self, mode: LearnerKind, seed: int) -> TrainConfig:
        factory = TrainConfig.published if self.recipe == "published" else TrainConfig.for_mode
        return factory(mode, **{**self.train_overrides, "seed": seed})

    def run_one(self, pool: SynthDataset, evaluation: SynthDataset, mode: LearnerKind, budget: int,
                repetition: int) -> SweepRun:
        sequence = run_seed(self.seed, mode, budget, repetition)
        init_seed, train_seed, sample_seed = (int(s) for s in sequence.generate_state(3))
        bags = sample_budget(pool.bags, mode, budget, np.random.default_rng(sample_seed))
        architecture = EncoderSpec.for_instances(pool.config.instance_shape)
        params = ModelParams.initialise(architecture, mode, seed=init_seed)
        result = MILTrainer(self._train_config(mode, train_seed), mode).train(params, bags)

        estimator = "strong" if LearnerKind(mode) == LearnerKind.STRONG else self.weak_estimator
        outcome = Evaluator(result.best, [estimator]).evaluate(evaluation, criteria=(ThresholdCriterion.YOUDEN,),
                                                               sweep_lengths=False)
        detection = outcome.summary()["detection"][ThresholdCriterion.YOUDEN.value][estimator]

        checkpoint = None
        if self.datastore is not None:
            checkpoint = f"checkpoints/{LearnerKind(mode).value}_m{budget}_r{repetition}.milb"
            self.datastore.save_checkpoint(checkpoint, result.best)
        logger.info("sweep %s m=%d rep=%d: auc=%.4f f1=%.4f", LearnerKind(mode).value, budget, repetition,
                    outcome.roc.auc, detection["f1"])
        return SweepRun(mode=LearnerKind(mode).value, budget=budget, repetition=repetition,
                        labels_used=result.stats.labels_used, bags_used=len(bags), auc=outcome.roc.auc,
                        f1=detection["f1"], epochs_run=result.stats.epochs_run, best_epoch=result.stats.best_epoch,
                        checkpoint=checkpoint)

    def run(self, dataset: SynthDataset) -> SweepResult:
        """
        Execute every run of the plan, concurrently up to ``workers``.
        :param dataset: Labelled dataset with ground truth.
        :return: Per-run rows and the per-budget summary.
        """
        pool, evaluation = self.split(dataset)
        self.check_budgets(pool)
        runs = self.plan.runs()
        logger.info("Sweep: %d runs over budgets %s, evaluation on %d bags", len(runs), self.plan.budgets,
                    len(evaluation))
        rows: List[dict] = []
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            futures = [executor.submit(self.run_one, pool, evaluation, mode, budget, rep) for mode, budget, rep in runs]
            for future in tqdm(as_completed(futures), total=len(futures), desc="sweep", disable=not self.show_progress):
                rows.append(future.result().as_row())
        runs_frame = pd.DataFrame(rows).sort_values(["mode", "budget", "repetition"]).reset_index(drop=True)
        summary, notes = summarise(runs_frame)
        return SweepResult(runs=runs_frame, summary=summary, notes=notes, eval_bags=len(evaluation),
                           mean_bag_length=pool.instance_count / len(pool))


def summarise(runs: pd.DataFrame) -> Tuple[pd.DataFrame, List[str]]:
    """
    Mean, sd and a normal-approximation 95% CI of AUC and f1 per (mode, budget). Runs are sorted
    first, so the result does not depend on completion order.
    """
    runs = runs.sort_values(["mode", "budget", "repetition"])
    grouped = runs.groupby(["mode", "budget"], sort=True)
    summary = grouped.agg(n=("auc", "size"), auc_mean=("auc", "mean"), auc_sd=("auc", "std"),
                          f1_mean=("f1", "mean"), f1_sd=("f1", "std"),
                          labels_used=("labels_used", "mean")).reset_index()
    notes = []
    single = summary["n"] == 1
    for metric in ("auc", "f1"):
        summary[f"{metric}_sd"] = summary[f"{metric}_sd"].fillna(0.0)
        half = Z_95 * summary[f"{metric}_sd"] / np.sqrt(summary["n"])
        summary[f"{metric}_ci_low"] = (summary[f"{metric}_mean"] - half).where(~single)
        summary[f"{metric}_ci_high"] = (summary[f"{metric}_mean"] + half).where(~single)
    summary["note"] = np.where(single, SINGLE_REPETITION_NOTE, "")
    if single.any():
        notes.append(f"{int(single.sum())} budget(s) ran once: {SINGLE_REPETITION_NOTE}")
    return summary, notes


def render_plots(summary: pd.DataFrame) -> Dict[str, str]:
    """
    AUC-vs-m and f1-vs-m line plots with CI bands, one line per learner kind.
    """
    plots = {}
    for metric, title, name in (("auc", "Bag-level AUC vs label budget", "auc_vs_m.svg"),
                                ("f1", "Sequence f1 vs label budget", "f1_vs_m.svg")):
        plot = LinePlot(title=title, x_label="labels m (instances for strong, bags for weak)",
                        y_label=metric.upper() if metric == "auc" else "f1", log_x=True, y_range=(0.0, 1.0))
        for mode, rows in summary.groupby("mode", sort=True):
            plot.add(Series(label=f"{mode} learner", x=rows["budget"].tolist(), y=rows[f"{metric}_mean"].tolist(),
                            lower=rows[f"{metric}_ci_low"].tolist(), upper=rows[f"{metric}_ci_high"].tolist()))
        if (summary["n"] == 1).any():
            plot.notes.append(SINGLE_REPETITION_NOTE)
        plots[name] = SvgPlot.render(plot)
    return plots

"""
 Copyright Duel 2025
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.datastore.datastore_manager import DatastoreManager
from src.datastore.filesystem import FilesystemDatastore
from src.explain.attribution import AttributionResult
from src.explain.saliency import SpatialExplainConfig, hshap_pixels, instance_batch_predictor
from src.explain.shapley import BRUTE_FORCE_LIMIT, BagGame, compare_with_brute_force, hshap_instances
from src.metrics.delong import delong_one_sided
from src.metrics.detection import pixel_f1, recall_by_sequence_length, reports_frame
from src.metrics.roc import roc_auc
from src.models.model_params import EncoderSpec, LearnerKind, ModelParams
from src.models.run_config import RunConfig
from src.pipeline.evaluation import Evaluator, default_estimators, mean_instance
from src.pipeline.sweep import LabelComplexitySweep, render_plots, sample_budget
from src.pipeline.trainer import MILTrainer
from src.synthdata.augmentation import DEFAULT_MIN_K, estimate_dataset_pflip
from src.synthdata.generator import SynthDataset, generate_bags, split_dataset
from src.utilities.errors import CheckpointError, ConfigError, DatasetError, DomainError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

RESOLVED_CONFIG = "resolved_config.json"

# command -> flags that override keys of the command's config section
SECTION_FLAGS: Dict[str, List[str]] = {
    "synth": ["bags", "positive_rate", "kind", "min_length", "max_length", "dimension", "image_side"],
    "train": ["dataset", "mode", "labels", "recipe", "init", "epochs", "patience", "show_progress"],
    "eval": ["dataset", "checkpoint", "compare", "split", "estimators", "pixel_images"],
    "explain": ["dataset", "checkpoint", "oracle", "max_bags", "tolerance", "pixels"],
    "sweep": ["dataset", "budgets", "repetitions", "modes", "eval_size", "published_schedule", "epochs",
              "show_progress"],
}


class _ArgumentParser(argparse.ArgumentParser):
    """
    Usage errors surface as ConfigError so they share the JSON error path.
    """

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


class MILPipeline:
    """
    Command-line front end: synth, train, eval, explain and sweep.
    """

    def __init__(self, argv: Optional[Sequence[str]] = None):
        """
        Constructor
        :param argv: Arguments without the program name; defaults to sys.argv[1:].
        """
        self.argv = argv

    @staticmethod
    def _configure_logging(verbosity: int) -> None:
        """
        Configures the logging system for the application based on the provided verbosity level.
        This method determines the log level and sets up the logging format accordingly.

        :param verbosity: An integer representing the verbosity level for logging.
        """
        level = logging.WARNING
        if verbosity == 1:
            level = logging.INFO
        elif verbosity >= 2:
            level = logging.DEBUG

        logging.basicConfig(
            level=level,
            format="%(asctime)s [%(levelname)s] %(name)s - %(message)s",
        )

    @staticmethod
    def _build_parser() -> argparse.ArgumentParser:
        common = _ArgumentParser(add_help=False)
        common.add_argument("--config", type=Path, default=None, help="JSON5 config file with one object per section.")
        common.add_argument("--out", type=Path, default=None, help="Output directory (must be new or empty).")
        common.add_argument("--seed", type=int, default=None, help="Root seed (default: 0).")
        common.add_argument("--workers", type=int, default=None, help="Worker threads (default: 1).")
        common.add_argument("--force", action="store_true", help="Write into an existing non-empty output directory.")
        common.add_argument("-v", "--verbose", action="count", default=0,
                            help="Increase log verbosity (use -vv for debug).")

        parser = _ArgumentParser(prog="mil-toolkit",
                                 description="Train, evaluate and explain strong and weak multiple-instance learners.")
        commands = parser.add_subparsers(dest="command", required=True)

        synth = commands.add_parser("synth", parents=[common], help="Generate a synthetic MIL dataset.")
        synth.add_argument("--bags", type=int, default=None)
        synth.add_argument("--positive-rate", type=float, default=None)
        synth.add_argument("--kind", choices=["vector", "image"], default=None)
        synth.add_argument("--min-length", type=int, default=None)
        synth.add_argument("--max-length", type=int, default=None)
        synth.add_argument("--dimension", type=int, default=None)
        synth.add_argument("--image-side", type=int, default=None)

        train = commands.add_parser("train", parents=[common], help="Train a strong or weak learner.")
        train.add_argument("--dataset", default=None, help="Dataset directory written by synth.")
        train.add_argument("--mode", choices=[k.value for k in LearnerKind], default=None)
        train.add_argument("--labels", type=int, default=None,
                           help="Label budget: instances for strong, bags for weak learners.")
        train.add_argument("--recipe", choices=["desk", "published"], default=None)
        train.add_argument("--init", default=None, help="Checkpoint to start from.")
        train.add_argument("--epochs", type=int, default=None)
        train.add_argument("--patience", type=int, default=None)
        train.add_argument("--progress", dest="show_progress", action="store_true", default=None)

        evaluate = commands.add_parser("eval", parents=[common], help="Evaluate a checkpoint.")
        evaluate.add_argument("--dataset", default=None)
        evaluate.add_argument("--checkpoint", default=None)
        evaluate.add_argument("--compare", default=None,
                              help="Second checkpoint; one-sided DeLong tests AUC(compare) > AUC(checkpoint).")
        evaluate.add_argument("--split", choices=["all", "validation"], default=None)
        evaluate.add_argument("--estimators", nargs="+", default=None)
        evaluate.add_argument("--pixel-images", type=int, default=None)

        explain = commands.add_parser("explain", parents=[common], help="Explain weak-learner predictions.")
        explain.add_argument("--dataset", default=None)
        explain.add_argument("--checkpoint", default=None)
        explain.add_argument("--oracle", action="store_true", default=None,
                             help=f"Compare with brute-force Shapley (bags of at most {BRUTE_FORCE_LIMIT} instances).")
        explain.add_argument("--max-bags", type=int, default=None)
        explain.add_argument("--tolerance", type=float, default=None)
        explain.add_argument("--no-pixels", dest="pixels", action="store_false", default=None)

        sweep = commands.add_parser("sweep", parents=[common], help="Label-complexity sweep.")
        sweep.add_argument("--dataset", default=None)
        sweep.add_argument("--budgets", type=int, nargs="+", default=None)
        sweep.add_argument("--repetitions", type=int, default=None)
        sweep.add_argument("--modes", nargs="+", choices=[k.value for k in LearnerKind], default=None)
        sweep.add_argument("--eval-size", type=int, default=None)
        sweep.add_argument("--published-schedule", action="store_true", default=None)
        sweep.add_argument("--epochs", type=int, default=None)
        sweep.add_argument("--progress", dest="show_progress", action="store_true", default=None)
        return parser

    @staticmethod
    def _parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
        """
        Parses command-line arguments.
        :return: Parsed command-line arguments
        """
        return MILPipeline._build_parser().parse_args(argv)

    @staticmethod
    def _resolve(args: argparse.Namespace) -> RunConfig:
        document = RunConfig.load_file(args.config)
        out = args.out if args.out is not None else document.get("out")
        if out is None:
            raise ConfigError("an output directory is required (--out)")
        overrides = {name: getattr(args, name) for name in SECTION_FLAGS[args.command]}
        return RunConfig.resolve(args.command, str(out), document, seed=args.seed, workers=args.workers,
                                 force=args.force or bool(document.get("force", False)),
                                 section_overrides=overrides)

    @staticmethod
    def _fail(exc: BaseException, code: int) -> int:
        payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        sys.stderr.write(json.dumps(payload) + "\n")
        return code

    def run(self) -> int:
        """
        Parses command-line arguments, configures logging, resolves the configuration and runs
        the requested command.
        :return: Process exit code.
        """
        try:
            args = MILPipeline._parse_args(self.argv)
            MILPipeline._configure_logging(args.verbose)
            config = MILPipeline._resolve(args)
            getattr(self, f"cmd_{config.command}")(config)
        except (ConfigError, DomainError) as exc:
            return MILPipeline._fail(exc, EXIT_USAGE)
        except ValidationError as exc:
            return MILPipeline._fail(ConfigError(str(exc)), EXIT_USAGE)
        except (CheckpointError, DatasetError) as exc:
            return MILPipeline._fail(exc, EXIT_RUNTIME)
        except Exception as exc:
            logger.debug("Unhandled failure", exc_info=True)
            return MILPipeline._fail(exc, EXIT_RUNTIME)
        return EXIT_OK

    # Helpers

    @staticmethod
    def _output(config: RunConfig) -> DatastoreManager:
        return DatastoreManager(FilesystemDatastore(config.out, force=config.force))

    @staticmethod
    def _load_dataset(path: Optional[str]) -> SynthDataset:
        if not path:
            raise ConfigError("a dataset directory is required (--dataset)")
        with DatastoreManager(FilesystemDatastore(path, read_only=True)) as store:
            return store.load_dataset(".")

    @staticmethod
    def _load_checkpoint(path: Optional[str], learner_kind: Optional[LearnerKind] = None) -> ModelParams:
        if not path:
            raise ConfigError("a checkpoint file is required (--checkpoint)")
        path = Path(path)
        with DatastoreManager(FilesystemDatastore(path.parent, read_only=True)) as store:
            return store.load_checkpoint(path.name, learner_kind)

    @staticmethod
    def _check_instance_shape(params: ModelParams, dataset: SynthDataset) -> None:
        if tuple(params.architecture.input_shape) != tuple(dataset.config.instance_shape):
            raise ConfigError(f"checkpoint takes instances of shape {tuple(params.architecture.input_shape)}, "
                              f"the dataset holds {tuple(dataset.config.instance_shape)}")

    # Commands

    def cmd_synth(self, config: RunConfig) -> None:
        """
        Generate a dataset, write it with its class-balance table and print the table.
        """
        with MILPipeline._output(config) as store:
            store.write_json(RESOLVED_CONFIG, config.snapshot())
            dataset = generate_bags(config.synth, max_workers=config.workers)
            store.save_dataset(".", dataset)
            balance = class_balance(dataset)
            store.write_table("class_balance.csv", balance)
            pflip = estimate_dataset_pflip(dataset.bags, DEFAULT_MIN_K)
            store.write_json("synth_report.json", {
                "bags": len(dataset), "positive_bags": dataset.positive_count, "instances": dataset.instance_count,
                "pflip": {"max": pflip.max, "mean": pflip.mean, "positive_bags": pflip.bags, "min_k": pflip.min_k,
                          "averaging": pflip.averaging},
            })
        print(balance.to_string(index=False))
        logger.info("Dataset written to %s", config.out)

    def cmd_train(self, config: RunConfig) -> None:
        """
        Train one learner on an optional label budget and report its held-out AUC.
        """
        section = config.train
        train_config = section.train_config(config.seed)
        dataset = MILPipeline._load_dataset(section.dataset)
        mode = LearnerKind(section.mode)
        rng = np.random.default_rng(config.seed)
        if section.holdout_fraction > 0:
            pool, holdout = split_dataset(dataset, section.holdout_fraction, rng)
        else:
            pool, holdout = dataset, dataset.take([])
        bags = pool.bags
        available = len(pool) if mode == LearnerKind.WEAK else pool.instance_count
        if section.labels is not None:
            if section.labels > available:
                unit = "bags" if mode == LearnerKind.WEAK else "instances"
                raise DomainError(f"label budget {section.labels} exceeds the {available} labelled {unit} "
                                  f"available for training")
            bags = sample_budget(pool.bags, mode, section.labels, rng)

        if section.init:
            params = MILPipeline._load_checkpoint(section.init, mode)
            MILPipeline._check_instance_shape(params, dataset)
        else:
            params = ModelParams.initialise(EncoderSpec.for_instances(dataset.config.instance_shape), mode,
                                            seed=config.seed)

        with MILPipeline._output(config) as store:
            store.write_json(RESOLVED_CONFIG, config.snapshot())
            result = MILTrainer(train_config, mode, show_progress=section.show_progress).train(params, bags)
            store.save_checkpoint("best.milb", result.best)
            store.save_checkpoint("final.milb", result.final)
            store.write_table("metrics.csv", pd.DataFrame([m.as_row() for m in result.history]))

            report = {
                "mode": mode.value,
                "labels_used": result.stats.labels_used,
                "bags_used": len(bags),
                "epochs_run": result.stats.epochs_run,
                "best_epoch": result.stats.best_epoch,
                "best_validation_accuracy": result.stats.best_validation_accuracy,
                "stopped_early": result.stats.stopped_early,
                "steps": result.stats.steps,
                "train_config": train_config.model_dump(mode="json"),
                "holdout_bags": len(holdout),
                "holdout_auc": None,
            }
            labels = holdout.bag_labels
            if len(holdout) and 0 < labels.sum() < len(labels):
                report["holdout_auc"] = roc_auc(Evaluator(result.best).bag_scores(holdout), labels).auc
            else:
                logger.warning("Held-out split lacks one of the classes; AUC not reported")
            store.write_json("train_report.json", report)
        logger.info("Training done: %d epochs, held-out AUC %s", result.stats.epochs_run, report["holdout_auc"])

    def cmd_eval(self, config: RunConfig) -> None:
        """
        Bag ROC and thresholds, sequence detection per estimator, the minimal-length sweep, pixel f1
        and an optional one-sided DeLong comparison with a second checkpoint.
        """
        section = config.eval
        dataset = MILPipeline._load_dataset(section.dataset)
        params = MILPipeline._load_checkpoint(section.checkpoint)
        MILPipeline._check_instance_shape(params, dataset)
        evaluator = Evaluator(params, section.estimators)
        calibration = None
        if section.split == "validation":
            calibration, dataset = split_dataset(dataset, section.validation_fraction,
                                                 np.random.default_rng(config.seed))

        spatial = SpatialExplainConfig(min_size=section.min_size, n_rho=section.n_rho, n_alpha=section.n_alpha,
                                       max_workers=config.workers)
        with MILPipeline._output(config) as store:
            store.write_json(RESOLVED_CONFIG, config.snapshot())
            result = evaluator.evaluate(dataset, criteria=section.criteria, min_lengths=section.min_lengths(),
                                        pixel_images=section.pixel_images, spatial=spatial,
                                        calibration=calibration)
            report = {"checkpoint": section.checkpoint, "learner": params.learner_kind.value,
                      "estimators": evaluator.estimators, "bags": len(dataset), **result.summary()}

            store.write_table("roc.csv", result.roc.to_frame())
            recall_frames = []
            for criterion, per_estimator in result.detection.items():
                for name, reports in per_estimator.items():
                    store.write_table(f"detection_{criterion}_{name}.csv", reports_frame(reports))
                    frame = recall_by_sequence_length(reports)
                    frame.insert(0, "estimator", name)
                    frame.insert(0, "criterion", criterion)
                    recall_frames.append(frame)
            if recall_frames:
                store.write_table("recall_by_length.csv", pd.concat(recall_frames, ignore_index=True))
            if result.sweep is not None:
                store.write_table("min_length_sweep.csv", result.sweep)
            if result.pixel_scores:
                store.write_table("pixel_f1.csv", pd.DataFrame(result.pixel_scores))

            if section.compare:
                other = MILPipeline._load_checkpoint(section.compare)
                MILPipeline._check_instance_shape(other, dataset)
                scores_a = evaluator.bag_scores(dataset)
                scores_b = Evaluator(other, default_estimators(other.learner_kind)).bag_scores(dataset)
                report["delong"] = {"compare": section.compare,
                                    **delong_one_sided(scores_a, scores_b, dataset.bag_labels).as_dict()}
            store.write_json("eval_report.json", report)
        logger.info("Evaluation done: AUC %.4f", result.roc.auc)

    def cmd_explain(self, config: RunConfig) -> None:
        """
        Attention and hierarchical Shapley attributions for every positive-predicted bag, with pixel
        saliency of the selected instances on image datasets.
        """
        section = config.explain
        dataset = MILPipeline._load_dataset(section.dataset)
        params = MILPipeline._load_checkpoint(section.checkpoint)
        if params.learner_kind != LearnerKind.WEAK:
            raise ConfigError("explain needs a weak-learner checkpoint")
        MILPipeline._check_instance_shape(params, dataset)

        indices = list(range(len(dataset)))[:section.max_bags]
        if section.oracle:
            too_long = [(dataset.bags[i].id, len(dataset.bags[i])) for i in indices
                        if len(dataset.bags[i]) > BRUTE_FORCE_LIMIT]
            if too_long:
                bag_id, r = max(too_long, key=lambda item: item[1])
                raise DomainError(f"--oracle refused: {len(too_long)} bag(s) exceed r = {BRUTE_FORCE_LIMIT} "
                                  f"(largest {bag_id} with r = {r} needs 2^{r} = {1 << r:,} predictor calls)")

        evaluator = Evaluator(params, ["attention"])
        pixels = section.pixels and dataset.config.kind == "image"
        spatial = None
        if pixels:
            spatial = SpatialExplainConfig(min_size=section.min_size, tolerance=section.pixel_tolerance,
                                           n_rho=section.n_rho, n_alpha=section.n_alpha,
                                           baseline=mean_instance(dataset), max_workers=config.workers)
            predictor = instance_batch_predictor(params)

        explained, rows = [], []
        with MILPipeline._output(config) as store:
            store.write_json(RESOLVED_CONFIG, config.snapshot())
            for i in indices:
                bag, truth = dataset.bags[i], dataset.truth.bags[i]
                outputs = evaluator.score_bag(bag, with_shapley=False)
                if outputs.probability < section.bag_threshold:
                    logger.info("Skipping bag %s: predicted negative (p=%.4f)", bag.id, outputs.probability)
                    continue
                attention = AttributionResult.from_scores(bag.id, "attention", outputs.attention)
                game = BagGame.from_network(params, bag.stacked())
                shapley = hshap_instances(None, bag, tolerance=section.tolerance, game=game)
                entry = {"bag_id": bag.id, "probability": outputs.probability, "bag_label": bag.bag_label,
                         "attention": attention.model_dump(), "shapley": shapley.model_dump()}
                row = {"bag_id": bag.id, "probability": outputs.probability, "r": len(bag),
                       "attention_selected": len(attention.selected), "shapley_selected": len(shapley.selected),
                       "shapley_groups": shapley.groups_evaluated, "exact": shapley.exact}
                if section.oracle:
                    row["oracle_max_diff"] = entry["oracle_max_diff"] = compare_with_brute_force(game, shapley)
                if pixels:
                    entry["saliency"] = []
                    for k in shapley.selected:
                        saliency = hshap_pixels(predictor, bag.instances[k].features, spatial)
                        name = f"saliency/{bag.id}_{k}"
                        store.write_json(f"{name}.json", saliency.to_json())
                        if section.pgm:
                            store.write_image(f"{name}.pgm", saliency.grid)
                        score = pixel_f1(saliency.mask, truth.masks[k]) if k in truth.masks else None
                        entry["saliency"].append({"instance": k, "file": f"{name}.json", "pixel_f1": score})
                explained.append(entry)
                rows.append(row)
            store.write_json("attributions.json", explained)
            store.write_table("explain_summary.csv", pd.DataFrame(rows))
        logger.info("Explained %d of %d bags", len(explained), len(indices))

    def cmd_sweep(self, config: RunConfig) -> None:
        """
        Label-complexity sweep with per-run rows, a per-budget summary and two SVG plots.
        """
        section = config.sweep
        dataset = MILPipeline._load_dataset(section.dataset)
        overrides = {"patience": section.patience}
        if section.epochs is not None:
            overrides["epochs"] = section.epochs
        with MILPipeline._output(config) as store:
            store.write_json(RESOLVED_CONFIG, config.snapshot())
            sweep = LabelComplexitySweep(section.plan(), seed=config.seed, workers=config.workers,
                                         recipe=section.recipe, train_overrides=overrides,
                                         weak_estimator=section.weak_estimator, datastore=store,
                                         show_progress=section.show_progress)
            result = sweep.run(dataset)
            store.write_table("runs.csv", result.runs)
            store.write_table("summary.csv", result.summary)
            for name, svg in render_plots(result.summary).items():
                store.write_text(name, svg)
            store.write_json("sweep_report.json", {"runs": len(result.runs), "eval_bags": result.eval_bags,
                                                   "mean_bag_length": result.mean_bag_length,
                                                   "notes": result.notes})
        for note in result.notes:
            logger.warning(note)


def class_balance(dataset: SynthDataset) -> pd.DataFrame:
    """
    Positive/negative counts of bags and instances.
    """
    instance_labels = np.concatenate([np.asarray(t.instance_labels) for t in dataset.truth.bags])
    rows = []
    for level, labels in (("bags", dataset.bag_labels), ("instances", instance_labels)):
        positive = int(labels.sum())
        rows.append({"level": level, "positive": positive, "negative": len(labels) - positive, "total": len(labels),
                     "positive_rate": positive / len(labels) if len(labels) else 0.0})
    return pd.DataFrame(rows)


def main(argv: Optional[Sequence[str]] = None):
    sys.exit(MILPipeline(argv).run())


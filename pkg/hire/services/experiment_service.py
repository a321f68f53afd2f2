from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from hire.config import Config
from hire.middleware.errors import handle_errors
from hire.models.checkpoint import Checkpoint
from hire.models.configs import DISTILL_GRIDS, TRAINING_GRIDS, ExperimentConfig
from hire.models.graph import HetGraph
from hire.services.eval_service import EvalService
from hire.services.graph_service import GraphService
from hire.services.trainer_service import TrainerService
from hire.utils.errors import ConfigError
from hire.utils.helpers import log_line, read_json, write_csv, write_json

ALL_GRIDS = {**DISTILL_GRIDS, **TRAINING_GRIDS}
ABLATION_HEADER = ["variant", "seed", "test_micro_f1", "test_macro_f1", "nmi", "ari"]


def _load_experiment(config_path, **overrides) -> ExperimentConfig:
    doc = read_json(config_path)
    # a relative dataset path resolves against the config file
    if isinstance(doc, dict) and isinstance(doc.get("dataset"), str) and not Path(doc["dataset"]).is_absolute():
        doc = {**doc, "dataset": str(Path(config_path).resolve().parent / doc["dataset"])}
    if not isinstance(doc, dict):
        raise ConfigError("experiment config must be a JSON object")
    return ExperimentConfig.from_doc(doc).with_overrides(**overrides)


def _resolve_graph(exp: ExperimentConfig) -> HetGraph:
    if exp.dataset is not None:
        return GraphService.load_graph(exp.dataset)
    schema = GraphService.load_schema(exp.schema, scale=exp.scale, seed=exp.graph_seed)
    return GraphService.generate_synthetic(schema)


def _load_checkpoint(path, g: HetGraph) -> Checkpoint:
    ckpt = Checkpoint.from_doc(read_json(path))
    ckpt.check_schema(GraphService.schema_fingerprint(g), g)
    return ckpt


class ExperimentService:
    @staticmethod
    @handle_errors("GEN")
    def gen(schema_source: str, out_path, seed: Optional[int] = None, scale: float = 1.0):
        schema = GraphService.load_schema(schema_source, scale=scale, seed=seed)
        g = GraphService.generate_synthetic(schema)
        path = GraphService.save_graph(g, out_path)
        log_line("GEN", f"{schema.name} seed={schema.seed} types={list(g.node_types)} -> {path}", "ok")
        return {
            "status": "success",
            "path": str(path),
            "node_types": list(g.node_types),
            "num_classes": g.num_classes,
            "splits": g.splits.sizes(),
            "fingerprint": GraphService.schema_fingerprint(g),
        }

    @staticmethod
    @handle_errors("TRAIN")
    def train_teacher(config_path, **overrides):
        exp = _load_experiment(config_path, **overrides)
        g = _resolve_graph(exp)
        cfg = exp.train
        log_line("TRAIN", f"teacher seed={cfg.seed} epochs={cfg.epochs} train_fraction={cfg.train_fraction}")

        params, history = TrainerService.pretrain_teacher(g, cfg)
        report = EvalService.evaluate_model(g, params, "test", seed=cfg.seed, cluster_nodes=exp.cluster_nodes)

        out = Path(exp.out) / "teacher"
        fingerprint = GraphService.schema_fingerprint(g)
        ckpt = Checkpoint("teacher", fingerprint, params, cfg, cfg.seed, metrics=report)
        ckpt_path = write_json(out / "teacher.ckpt.json", ckpt.create_checkpoint_doc())
        write_json(out / "metrics.json", report.to_doc())
        write_csv(out / "history.csv", history.history_header(), history.history_rows())

        log_line("TRAIN", f"teacher done best_epoch={history.best_epoch} test_micro_f1={report.micro_f1:.4f}", "ok")
        return {
            "status": "success",
            "checkpoint": str(ckpt_path),
            "out": str(out),
            "best_epoch": history.best_epoch,
            "metrics": report.to_doc(),
        }

    @staticmethod
    @handle_errors("DISTILL")
    def distill(config_path, teacher_checkpoint, **overrides):
        exp = _load_experiment(config_path, **overrides)
        g = _resolve_graph(exp)
        teacher = _load_checkpoint(teacher_checkpoint, g)
        cfg = exp.train
        variant = cfg.distill.variant
        alpha, beta = cfg.distill.effective()
        log_line("DISTILL", f"variant={variant} alpha={alpha} beta={beta} tau={cfg.distill.tau} seed={cfg.seed}")

        student, att, history = TrainerService.distill_student(g, teacher.params, cfg)
        report = EvalService.evaluate_model(g, student, "test", seed=cfg.seed, cluster_nodes=exp.cluster_nodes)

        out = Path(exp.out) / f"student-{variant.lower()}"
        ckpt = Checkpoint("student", teacher.schema_fingerprint, student, cfg, cfg.seed, attention=att, metrics=report)
        ckpt_path = write_json(out / "student.ckpt.json", ckpt.create_checkpoint_doc())
        write_json(out / "metrics.json", report.to_doc())
        write_csv(out / "history.csv", history.history_header(), history.history_rows())
        write_csv(out / "attention_trace.csv", ["epoch", "type", "coefficient"], EvalService.attention_trace(history))

        final = history.records[-1].attention
        log_line("DISTILL", f"final attention {dict(zip(g.node_types, [round(a, 4) for a in final]))}")
        log_line("DISTILL", f"done best_epoch={history.best_epoch} test_micro_f1={report.micro_f1:.4f}", "ok")
        return {
            "status": "success",
            "checkpoint": str(ckpt_path),
            "out": str(out),
            "variant": variant,
            "best_epoch": history.best_epoch,
            "metrics": report.to_doc(),
        }

    @staticmethod
    @handle_errors("EVAL")
    def eval(checkpoint, graph_path, split: str = "test", cluster_nodes: str = "test",
             out: Optional[str] = None, seed: Optional[int] = None):
        g = GraphService.load_graph(graph_path)
        ckpt = _load_checkpoint(checkpoint, g)
        seed = ckpt.seed if seed is None else seed
        report = EvalService.evaluate_model(g, ckpt.params, split, seed=seed, cluster_nodes=cluster_nodes)
        path = write_json(Path(out or Config.OUT_DIR) / "eval" / "metrics.json", report.to_doc())
        log_line("EVAL", f"{ckpt.kind} on {split}: micro_f1={report.micro_f1:.4f} macro_f1={report.macro_f1:.4f}", "ok")
        return {"status": "success", "path": str(path), "metrics": report.to_doc()}

    @staticmethod
    @handle_errors("SWEEP")
    def sweep(config_path, teacher_checkpoint, axes: Optional[Sequence[str]] = None, **overrides):
        seed = overrides.get("seed")
        exp = _load_experiment(config_path, **overrides)
        g = _resolve_graph(exp)
        teacher = _load_checkpoint(teacher_checkpoint, g)

        if axes:
            unknown = sorted(set(axes) - set(ALL_GRIDS))
            if unknown:
                raise ConfigError(f"unknown sweep axes {unknown}")
            grids = {axis: exp.grids.get(axis, ALL_GRIDS[axis]) for axis in axes}
        else:
            grids = exp.grids
        seeds = [seed] if seed is not None else list(exp.seeds)

        table = TrainerService.grid_sweep(g, teacher.params, exp.train, grids, seeds, Config.SWEEP_WORKERS)
        path = write_csv(Path(exp.out) / "sweep.csv", table.header, table.rows)
        log_line("SWEEP", f"{len(table.rows)} rows -> {path}", "ok")
        return {"status": "success", "path": str(path), "rows": len(table.rows), "columns": table.header}

    @staticmethod
    @handle_errors("ABLATE")
    def ablate(config_path, teacher_checkpoint, **overrides):
        seed = overrides.get("seed")
        exp = _load_experiment(config_path, **overrides)
        g = _resolve_graph(exp)
        teacher = _load_checkpoint(teacher_checkpoint, g)
        seeds = [seed] if seed is not None else list(exp.seeds)
        variants = [v.upper() for v in exp.variants]

        tasks = [
            (g, teacher.params, replace(exp.train.with_distill(variant=variant), seed=s), variant, s, exp.cluster_nodes)
            for variant in variants
            for s in seeds
        ]
        rows = TrainerService.run_cells(_ablation_cell, tasks, Config.SWEEP_WORKERS)

        table = list(rows)
        for variant in variants:
            per_seed = [row for row in rows if row[0] == variant]
            means, stds = [], []
            for column in range(2, len(ABLATION_HEADER)):
                mean, std = EvalService.summarize([row[column] for row in per_seed])
                means.append(mean)
                stds.append(std)
            table.append([variant, "mean", *means])
            table.append([variant, "std", *stds])
            log_line("ABLATE", f"{variant}: test_micro_f1 {means[0]:.4f} ± {stds[0]:.4f}")

        path = write_csv(Path(exp.out) / "ablation.csv", ABLATION_HEADER, table)
        log_line("ABLATE", f"{len(rows)} runs -> {path}", "ok")
        return {"status": "success", "path": str(path), "rows": len(rows)}


def _ablation_cell(task) -> list:
    g, teacher, cfg, variant, seed, cluster_nodes = task
    student, _, _ = TrainerService.distill_student(g, teacher, cfg)
    report = EvalService.evaluate_model(g, student, "test", seed=seed, cluster_nodes=cluster_nodes)
    return [variant, seed, report.micro_f1, report.macro_f1, report.nmi, report.ari]

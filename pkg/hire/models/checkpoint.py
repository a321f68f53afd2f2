from dataclasses import dataclass
from typing import Optional

from hire.config import Config
from hire.models.configs import TrainConfig
from hire.models.params import AttentionParams, ModelParams
from hire.models.reports import MetricsReport
from hire.utils.errors import CompatibilityError, SchemaMismatchError, ValidationError

CHECKPOINT_KINDS = ("teacher", "student")


@dataclass
class Checkpoint:
    kind: str
    schema_fingerprint: str
    params: ModelParams
    train_config: TrainConfig
    seed: int
    attention: Optional[AttentionParams] = None
    metrics: Optional[MetricsReport] = None

    def create_checkpoint_doc(self) -> dict:
        return {
            "format_version": Config.CHECKPOINT_VERSION,
            "kind": self.kind,
            "schema_fingerprint": self.schema_fingerprint,
            "seed": self.seed,
            "train_config": self.train_config.to_doc(),
            "params": self.params.to_doc(),
            "attention": self.attention.to_doc() if self.attention is not None else None,
            "metrics": self.metrics.to_doc() if self.metrics is not None else None,
        }

    @staticmethod
    def from_doc(doc: dict) -> "Checkpoint":
        if not isinstance(doc, dict):
            raise ValidationError("checkpoint must be a JSON object")
        version = doc.get("format_version")
        if version != Config.CHECKPOINT_VERSION:
            raise CompatibilityError(
                f"checkpoint format_version {version!r} is not supported (expected {Config.CHECKPOINT_VERSION})"
            )
        try:
            kind = doc["kind"]
            fingerprint = doc["schema_fingerprint"]
            params = ModelParams.from_doc(doc["params"])
            train_config = TrainConfig.from_doc(doc["train_config"])
            seed = int(doc["seed"])
        except KeyError as e:
            raise ValidationError(f"checkpoint is missing {e}") from e
        if kind not in CHECKPOINT_KINDS:
            raise ValidationError(f"unknown checkpoint kind {kind!r}")
        attention = AttentionParams.from_doc(doc["attention"]) if doc.get("attention") else None
        metrics = MetricsReport.from_doc(doc["metrics"]) if doc.get("metrics") else None
        return Checkpoint(kind, fingerprint, params, train_config, seed, attention, metrics)

    def check_schema(self, fingerprint: str, g=None):
        if fingerprint != self.schema_fingerprint:
            raise SchemaMismatchError(
                f"checkpoint was trained on schema {self.schema_fingerprint}, graph has {fingerprint}"
            )
        if g is not None:
            self.params.check_compatible(g)

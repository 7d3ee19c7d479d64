from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TrainSchedule(BaseModel):
    initial_lr: float = Field(1e-3, gt=0)
    decay_factor: float = Field(10.0, gt=0)
    decay_period: int = Field(10, ge=1)   # epochs
    epochs: int = Field(75, ge=1)
    batch_size: int = Field(256, ge=1)
    val_fraction: float = Field(0.2, ge=0, lt=1)
    seed: int = 0
    # Items per forward/backward chunk inside a batch
    chunk_size: int = Field(32, ge=1)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def period_within_epochs(self):
        if self.decay_period > self.epochs:
            raise ValueError("decay_period must not exceed epochs")
        return self

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a zero-based epoch index."""
        return self.initial_lr / (self.decay_factor ** (epoch // self.decay_period))


BNET_SCHEDULE = TrainSchedule(decay_period=10, epochs=75)
ENET_SCHEDULE = TrainSchedule(decay_period=5, epochs=30)


class HistoryRow(BaseModel):
    epoch: int
    lr: float
    train_loss: float
    val_loss: Optional[float] = None
    val_acc: Optional[float] = None

    model_config = ConfigDict(
        json_schema_extra={
            "example": {"epoch": 0, "lr": 0.001, "train_loss": 3.1, "val_loss": 3.0, "val_acc": 0.07}
        }
    )


class ArchitectureWidths(BaseModel):
    """Layer widths of the network assemblies; defaults are the production sizes."""
    f1: int = Field(32, ge=1)
    f2: int = Field(32, ge=1)
    deep: int = Field(64, ge=1)
    hidden1: int = Field(300, ge=1)
    hidden2: int = Field(150, ge=1)

    model_config = ConfigDict(frozen=True)

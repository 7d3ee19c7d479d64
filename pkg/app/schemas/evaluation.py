import csv
import io
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field


class ImageScore(BaseModel):
    name: str
    mae_raw: float
    mae_relative: float


class PrPoint(BaseModel):
    alpha: float
    precision: float
    recall: float
    accuracy: float
    f_measure: float


class EvalReport(BaseModel):
    images: list[ImageScore] = Field(default_factory=list)
    mae_raw_mean: Optional[float] = None
    mae_raw_std: Optional[float] = None
    mae_relative_mean: Optional[float] = None
    mae_relative_std: Optional[float] = None
    relative_mode: str = "global"
    pr_curve: list[PrPoint] = Field(default_factory=list)
    best_alpha: Optional[float] = None
    best_accuracy: Optional[float] = None
    best_f_alpha: Optional[float] = None
    best_f_measure: Optional[float] = None

    @classmethod
    def from_scores(cls, scores: list[ImageScore], relative_mode: str = "global") -> "EvalReport":
        raw = np.array([s.mae_raw for s in scores])
        rel = np.array([s.mae_relative for s in scores])
        return cls(
            images=scores,
            mae_raw_mean=float(raw.mean()), mae_raw_std=float(raw.std()),
            mae_relative_mean=float(rel.mean()), mae_relative_std=float(rel.std()),
            relative_mode=relative_mode,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if self.images:
            writer.writerow(["image", "mae_raw", "mae_relative"])
            for s in self.images:
                writer.writerow([s.name, f"{s.mae_raw:.6f}", f"{s.mae_relative:.6f}"])
        if self.pr_curve:
            writer.writerow(["alpha", "precision", "recall", "accuracy", "f_measure"])
            for p in self.pr_curve:
                writer.writerow([f"{p.alpha:.2f}", f"{p.precision:.6f}", f"{p.recall:.6f}",
                                 f"{p.accuracy:.6f}", f"{p.f_measure:.6f}"])
        return buf.getvalue()

    def to_table(self) -> str:
        lines = []
        if self.images:
            width = max(len("image"), *(len(s.name) for s in self.images))
            lines.append(f"{'image':<{width}}  {'raw MAE':>8}  {'rel MAE':>8}")
            for s in self.images:
                lines.append(f"{s.name:<{width}}  {s.mae_raw:>8.3f}  {s.mae_relative:>8.3f}")
            lines.append(f"raw MAE {self.mae_raw_mean:.3f} +/- {self.mae_raw_std:.3f}; "
                         f"relative ({self.relative_mode}) {self.mae_relative_mean:.3f} +/- {self.mae_relative_std:.3f}")
        if self.pr_curve:
            lines.append(f"best accuracy {self.best_accuracy:.3f} at alpha {self.best_alpha:.2f}; "
                         f"best F {self.best_f_measure:.3f} at alpha {self.best_f_alpha:.2f}")
        return "\n".join(lines)

"""Parameter and multiply-accumulate counters.

Conventions:
  * one MAC = one multiply-accumulate; biases are free
  * convolutions: kernel_elements * C_in * C_out * output_positions
  * linear maps: C_in * C_out per application
  * activations, pooling and batchnorm count zero
  * batchnorm running statistics are buffers, not parameters; scale and
    shift are parameters and are counted
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .layers import Module

__all__ = ["count_params", "count_macs", "ComplexityReport", "ReportPart", "REFERENCE_FRAMES"]

REFERENCE_FRAMES = 300


def count_params(module: Module) -> int:
    """Total learnable parameter elements in the module tree."""
    return sum(p.data.size for p in module.parameters())


def count_macs(model, frames: int) -> int:
    """Multiply-accumulates for one forward pass over ``frames`` feature frames.

    The model must expose ``complexity(frames)`` returning a ComplexityReport;
    the embedding models in this package all do.
    """
    return model.complexity(frames).total_macs


@dataclass
class ReportPart:
    name: str
    params: int
    macs: int


@dataclass
class ComplexityReport:
    variant: str
    frames: int
    parts: list[ReportPart] = field(default_factory=list)

    def add(self, name: str, params: int, macs: int) -> None:
        self.parts.append(ReportPart(name, int(params), int(macs)))

    @property
    def total_params(self) -> int:
        return sum(p.params for p in self.parts)

    @property
    def total_macs(self) -> int:
        return sum(p.macs for p in self.parts)

    def lines(self) -> list[str]:
        out = [f"variant={self.variant} frames={self.frames}"]
        for p in self.parts:
            out.append(f"  part={p.name} params={p.params} macs={p.macs}")
        out.append(f"  total params={self.total_params} macs={self.total_macs}")
        return out

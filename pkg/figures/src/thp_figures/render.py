"""File-level rendering: CSV in, image out."""

from dataclasses import dataclass

from .data import read_result_csv
from .plots import build_figure


@dataclass(frozen=True)
class FigureSpec:
    """One rendering job.

    kind may be None, in which case it is taken from the CSV metadata
    written by the experiment runner.
    """

    input: str
    output: str
    kind: str = None


def resolve_kind(spec, data):
    if spec.kind is not None:
        return spec.kind
    kind = data.metadata.get("kind")
    if kind is None:
        raise ValueError(
            f"{spec.input} has no 'kind' metadata; pass the figure kind explicitly")
    return kind


def render(spec):
    """Render one figure and return the output path."""
    data = read_result_csv(spec.input)
    kind = resolve_kind(spec, data)
    fig = build_figure(data, kind)
    fig.savefig(spec.output)
    return spec.output

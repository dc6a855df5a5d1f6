"""Reader for experiment result CSVs.

The experiment runner writes files of the form::

    # robust-thp experiment
    # kind: sweep-power
    # seed: 201
    ...
    power_db,robust_smse,robust_stderr,...
    5,0.1234,...

Leading ``#`` lines carry metadata, the first plain line is the column
header, and every following line is a row of ``%.12g``-formatted floats.
"""

from dataclasses import dataclass


class MissingColumnError(ValueError):
    """A column required by the requested figure kind is absent."""

    def __init__(self, column, kind):
        self.column = column
        self.kind = kind
        super().__init__(f"missing column '{column}' for kind '{kind}'")


class EmptyDataError(ValueError):
    """The CSV holds a header but no data rows."""


@dataclass(frozen=True)
class ResultData:
    """Parsed result file: metadata dict, column order, and float rows."""

    metadata: dict
    columns: tuple
    rows: tuple

    def column(self, name, kind):
        """All values of one column, raising a named error if absent."""
        if name not in self.columns:
            raise MissingColumnError(name, kind)
        return [row[name] for row in self.rows]


def _parse_metadata(lines):
    meta = {}
    for line in lines:
        body = line.lstrip("#").strip()
        if ":" in body:
            key, value = body.split(":", 1)
            meta[key.strip()] = value.strip()
    return meta


def read_result_csv(path):
    """Load a result CSV into a ResultData."""
    meta_lines, header, rows = [], None, []
    with open(path) as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                meta_lines.append(line)
            elif header is None:
                header = line.split(",")
            else:
                cells = line.split(",")
                if len(cells) != len(header):
                    raise ValueError(
                        f"row has {len(cells)} cells, expected {len(header)}: {line!r}")
                rows.append(dict(zip(header, map(float, cells))))
    if header is None:
        raise ValueError(f"no column header in {path}")
    return ResultData(metadata=_parse_metadata(meta_lines),
                      columns=tuple(header), rows=tuple(rows))

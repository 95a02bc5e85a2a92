"""
CSV ingestion and train/test splitting.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.utils.exceptions import (
    InsufficientDataError,
    MissingInputError,
    NonNumericCellError,
    RaggedRowError,
    UnknownColumnError,
)
from src.utils.logger import get_application_logger

logger = get_application_logger(__name__)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    x_names: Tuple[str, ...]
    y_names: Tuple[str, ...]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.X[rows], self.Y[rows], self.x_names, self.y_names)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=list(self.x_names))
        for l, name in enumerate(self.y_names):
            frame[name] = self.Y[:, l]
        return frame


def parse_columns(columns: Union[str, Sequence[str], None]) -> List[str]:
    if columns is None:
        return []
    if isinstance(columns, str):
        return [c.strip() for c in columns.split(",") if c.strip()]
    return [str(c).strip() for c in columns]


def _resolve(tokens: List[str], header: List[str], path: Path) -> List[str]:
    names = []
    for token in tokens:
        if token in header:
            names.append(token)
        elif token.isdigit() and int(token) < len(header):
            names.append(header[int(token)])
        else:
            raise UnknownColumnError(f"{path}: unknown column {token!r}")
    return names


def ingest_csv(path: Union[str, Path], response_cols: Union[str, Sequence[str], None]) -> Dataset:
    """
    Parse a numeric CSV with a header row.

    Args:
        path: CSV file
        response_cols: Response columns by name or 0-based index, comma-separated;
            every other column is a covariate

    Returns:
        Dataset with X (n x p) and Y (n x m)

    Raises:
        MissingInputError: File does not exist
        RaggedRowError: A row has the wrong number of fields (line number in message)
        NonNumericCellError: A cell is empty or not a number
        UnknownColumnError: A response column is not in the header
    """
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"input file not found: {path}")
    # header=None keeps pandas from turning a long first row into an index
    try:
        table = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.ParserError as e:
        raise RaggedRowError(f"{path}: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise InsufficientDataError(f"{path}: no header row") from e

    raw = table.iloc[1:].reset_index(drop=True)
    raw.columns = [str(c).strip() for c in table.iloc[0]]
    short = raw.isna().any(axis=1).to_numpy()
    if short.any():
        line = int(np.flatnonzero(short)[0]) + 2
        raise RaggedRowError(f"{path}: line {line} has fewer fields than the header")

    numeric = raw.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad = numeric.isna().to_numpy() | ~np.isfinite(numeric.to_numpy(dtype=float, na_value=np.nan))
    if bad.any():
        row, col = map(int, np.argwhere(bad)[0])
        raise NonNumericCellError(
            f"{path}: line {row + 2}, column {raw.columns[col]!r}: {raw.iat[row, col]!r} is not a number"
        )

    header = [str(c) for c in raw.columns]
    y_names = _resolve(parse_columns(response_cols), header, path)
    x_names = [c for c in header if c not in y_names]
    if numeric.shape[0] < 1:
        raise InsufficientDataError(f"{path}: no data rows")
    logger.info(f"Read {numeric.shape[0]} rows from {path}: {len(x_names)} covariates, {len(y_names)} responses")
    return Dataset(
        numeric[x_names].to_numpy(dtype=float),
        numeric[y_names].to_numpy(dtype=float).reshape(numeric.shape[0], len(y_names)),
        tuple(x_names),
        tuple(y_names),
    )


def train_test_split(
    data: Dataset,
    test_count: int,
    rng: np.random.Generator,
    train_size: Optional[int] = None,
    test_size: Optional[int] = None,
) -> Tuple[Dataset, Dataset]:
    """
    Seeded uniform split into train and test rows, each optionally subsampled
    uniformly afterwards. Row order within each part follows the file.
    """
    if not 1 <= test_count < data.n:
        raise InsufficientDataError(f"cannot hold out {test_count} of {data.n} rows")
    perm = rng.permutation(data.n)
    test_rows = np.sort(perm[:test_count])
    train_rows = np.sort(perm[test_count:])
    if train_size is not None and train_size < train_rows.size:
        train_rows = np.sort(rng.choice(train_rows, size=train_size, replace=False))
    if test_size is not None and test_size < test_rows.size:
        test_rows = np.sort(rng.choice(test_rows, size=test_size, replace=False))
    return data.subset(train_rows), data.subset(test_rows)

"""
Trajectory CSV parser.

Reads NGSIM-style CSV exports through a configurable column mapping,
normalizes lengths and speeds to SI units and yields frames grouped by
vehicle and ordered by frame index.
"""

import logging
from pathlib import Path
from typing import Dict, Iterator, Optional, Union

import pandas as pd

from drivercal.models.trajectory_models import (
    OPTIONAL_COLUMNS,
    REQUIRED_COLUMNS,
    ColumnSchema,
    TrajectoryFrame,
    UnitSystem,
    VehicleClass,
)

logger = logging.getLogger(__name__)

FEET_TO_METERS = 0.3048

# Columns measured in feet (or ft/s, ft/s^2) in the raw exports
LENGTH_COLUMNS = ("local_x", "local_y", "velocity", "acceleration", "vehicle_length")

VEHICLE_CLASS_CODES: Dict[int, VehicleClass] = {
    1: VehicleClass.MOTORCYCLE,
    2: VehicleClass.AUTO,
    3: VehicleClass.TRUCK,
}


class SchemaError(Exception):
    """Raised when a required column is missing from the CSV header."""

    pass


class TrajectoryParseError(Exception):
    """Raised when a cell cannot be parsed or a row violates frame invariants."""

    pass


def to_meters(value: float, unit: Union[UnitSystem, str]) -> float:
    """Convert a length (or speed/acceleration) from unit to SI."""
    if UnitSystem(unit) is UnitSystem.FEET:
        return value * FEET_TO_METERS
    return value


def from_meters(value: float, unit: Union[UnitSystem, str]) -> float:
    """Convert an SI length (or speed/acceleration) into unit."""
    if UnitSystem(unit) is UnitSystem.FEET:
        return value / FEET_TO_METERS
    return value


class TrajectoryParser:
    """Parser for trajectory CSV files.

    The parser never guesses column order: every field is looked up through
    the ColumnSchema so the slightly different exports of each site can be
    read with a config change only.
    """

    def __init__(
        self,
        schema: Optional[ColumnSchema] = None,
        unit_system: Union[UnitSystem, str] = UnitSystem.FEET,
        delimiter: str = ",",
    ):
        """Initialize parser.

        Args:
            schema: Column mapping (defaults to the NGSIM export header)
            unit_system: Length unit of the raw file
            delimiter: Field separator
        """
        self.schema = schema or ColumnSchema()
        self.unit_system = UnitSystem(unit_system)
        self.delimiter = delimiter
        self.logger = logging.getLogger(__name__)

    def parse_file(self, file_path: Union[str, Path]) -> Iterator[TrajectoryFrame]:
        """Parse a CSV file into normalized frames.

        Args:
            file_path: Path to the CSV file

        Returns:
            Iterator of TrajectoryFrame grouped by vehicle, sorted by frame index

        Raises:
            FileNotFoundError: If file doesn't exist
            SchemaError: If a required column is missing
            TrajectoryParseError: If a cell is non-numeric or a row is invalid
        """
        file_path = Path(file_path)
        if not file_path.exists():
            raise FileNotFoundError(f"Trajectory file not found: {file_path}")

        try:
            raw = pd.read_csv(
                file_path,
                sep=self.delimiter,
                dtype=str,
                keep_default_na=False,
                skipinitialspace=True,
            )
        except pd.errors.EmptyDataError:
            self.logger.info(f"{file_path.name} is empty, no frames produced")
            return iter(())

        raw.columns = [str(column).strip() for column in raw.columns]
        table = self._select_columns(raw)
        numeric = self._to_numeric(table)
        if numeric.empty:
            return iter(())

        numeric = self._normalize_units(numeric)
        numeric = numeric.sort_values(
            ["vehicle_id", "frame_index"], kind="mergesort"
        )
        duplicated = numeric.duplicated(["vehicle_id", "frame_index"], keep="first")
        if duplicated.any():
            self.logger.warning(
                f"Dropping {int(duplicated.sum())} duplicate (vehicle, frame) rows"
            )
            numeric = numeric[~duplicated]

        self.logger.info(
            f"Parsed {len(numeric)} frames for "
            f"{numeric['vehicle_id'].nunique()} vehicles from {file_path.name}"
        )
        return self._iter_frames(numeric)

    def _select_columns(self, raw: pd.DataFrame) -> pd.DataFrame:
        """Rename mapped columns to frame field names, enforcing required ones."""
        mapping = self.schema.model_dump()
        selected = {}
        for field in REQUIRED_COLUMNS:
            column = mapping[field]
            if column not in raw.columns:
                raise SchemaError(
                    f"Missing required column '{column}' (for field '{field}')"
                )
            selected[field] = raw[column]
        for field in OPTIONAL_COLUMNS:
            column = mapping.get(field)
            if column and column in raw.columns:
                selected[field] = raw[column]
            elif column:
                self.logger.debug(f"Optional column '{column}' not present")
        return pd.DataFrame(selected, index=raw.index)

    def _to_numeric(self, table: pd.DataFrame) -> pd.DataFrame:
        numeric = pd.DataFrame(index=table.index)
        for field in table.columns:
            text = table[field].str.strip()
            values = pd.to_numeric(text, errors="coerce")
            bad = values.isna()
            if bad.any():
                position = int(bad.to_numpy().nonzero()[0][0])
                # +2: 1-based rows and the header line
                row_number = position + 2
                raise TrajectoryParseError(
                    f"Row {row_number}: non-numeric value "
                    f"'{table[field].iloc[position]}' in column for '{field}'"
                )
            numeric[field] = values
        numeric["source_row"] = range(2, len(table) + 2)
        return numeric

    def _normalize_units(self, numeric: pd.DataFrame) -> pd.DataFrame:
        if self.unit_system is UnitSystem.FEET:
            for field in LENGTH_COLUMNS:
                if field in numeric.columns:
                    numeric[field] = numeric[field] * FEET_TO_METERS
        return numeric

    def _iter_frames(self, numeric: pd.DataFrame) -> Iterator[TrajectoryFrame]:
        has_acc = "acceleration" in numeric.columns
        has_following = "following_id" in numeric.columns
        has_class = "vehicle_class" in numeric.columns
        for row in numeric.itertuples(index=False):
            if row.velocity < 0:
                raise TrajectoryParseError(
                    f"Row {row.source_row}: negative velocity {row.velocity}"
                )
            if row.vehicle_length <= 0:
                raise TrajectoryParseError(
                    f"Row {row.source_row}: non-positive vehicle length {row.vehicle_length}"
                )
            vehicle_class = VehicleClass.AUTO
            if has_class:
                vehicle_class = VEHICLE_CLASS_CODES.get(
                    int(row.vehicle_class), VehicleClass.AUTO
                )
            yield TrajectoryFrame(
                vehicle_id=int(row.vehicle_id),
                frame_index=int(row.frame_index),
                local_x=float(row.local_x),
                local_y=float(row.local_y),
                velocity=float(row.velocity),
                acceleration=float(row.acceleration) if has_acc else 0.0,
                lane_id=int(row.lane_id),
                preceding_id=int(row.preceding_id),
                following_id=int(row.following_id) if has_following else 0,
                vehicle_length=float(row.vehicle_length),
                vehicle_class=vehicle_class,
            )


def parse_csv(
    path: Union[str, Path],
    schema: Optional[ColumnSchema] = None,
    unit_system: Union[UnitSystem, str] = UnitSystem.FEET,
    delimiter: str = ",",
) -> Iterator[TrajectoryFrame]:
    """Parse a trajectory CSV into SI frames grouped by vehicle.

    An empty file yields no frames.
    """
    return TrajectoryParser(schema, unit_system, delimiter).parse_file(path)
